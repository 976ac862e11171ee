#pragma once

/// Umbrella header for the cvrnn library.

#include "cvrnn/common.hpp"
#include "cvrnn/config.hpp"
#include "cvrnn/data.hpp"
#include "cvrnn/dynamics.hpp"
#include "cvrnn/lattice.hpp"
#include "cvrnn/manifest.hpp"
#include "cvrnn/pipeline.hpp"
#include "cvrnn/render.hpp"
#include "cvrnn/similarity.hpp"
#include "cvrnn/spectral.hpp"
