#pragma once

///
/// \file render.hpp
///
/// Rendering of phase fields and label maps to PGM/PPM. The phase-to-gray
/// map is a stable contract: g = round(255·(θ+π)/(2π)).
///

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "cvrnn/common.hpp"
#include "cvrnn/data.hpp"

namespace cvrnn {

inline int phase_to_gray(double theta) {
    double g = std::floor(255.0 * (theta + kPi) / (2.0 * kPi) + 0.5);
    return static_cast<int>(std::clamp(g, 0.0, 255.0));
}

/// Reshapes one recorded phase row to an N×N gray frame.
inline Eigen::MatrixXi phase_frame_gray(const Eigen::VectorXd& phases, int side) {
    if (phases.size() != static_cast<Eigen::Index>(side) * side)
        throw std::invalid_argument("phase_frame_gray: row length does not match side");
    Eigen::MatrixXi frame(side, side);
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c)
            frame(r, c) = phase_to_gray(phases[static_cast<Eigen::Index>(r) * side + c]);
    return frame;
}

inline void save_phase_frame_pgm(const Eigen::VectorXd& phases, int side,
                                 const std::string& path) {
    save_pgm(phase_frame_gray(phases, side), path);
}

/// Label map rendered with labels spread over distinct gray levels
/// (g = round(255·label/k), background stays black).
inline Eigen::MatrixXi labels_to_gray(const Eigen::MatrixXi& labels) {
    int k = labels.maxCoeff();
    Eigen::MatrixXi gray(labels.rows(), labels.cols());
    for (Eigen::Index i = 0; i < labels.size(); ++i)
        gray(i) = k > 0 ? static_cast<int>(std::lround(255.0 * labels(i) / k)) : 0;
    return gray;
}

namespace detail {

inline void hsv_to_rgb(double h, double s, double v, int& r, int& g, int& b) {
    h = h - std::floor(h);  // wrap hue to [0, 1)
    double hh = h * 6.0;
    int sector = static_cast<int>(hh) % 6;
    double f = hh - std::floor(hh);
    double p = v * (1.0 - s);
    double q = v * (1.0 - s * f);
    double t = v * (1.0 - s * (1.0 - f));
    double rr = 0, gg = 0, bb = 0;
    switch (sector) {
        case 0: rr = v; gg = t; bb = p; break;
        case 1: rr = q; gg = v; bb = p; break;
        case 2: rr = p; gg = v; bb = t; break;
        case 3: rr = p; gg = q; bb = v; break;
        case 4: rr = t; gg = p; bb = v; break;
        default: rr = v; gg = p; bb = q; break;
    }
    r = static_cast<int>(std::lround(rr * 255.0));
    g = static_cast<int>(std::lround(gg * 255.0));
    b = static_cast<int>(std::lround(bb * 255.0));
}

}  // namespace detail

/// Phase field as a hue wheel (hue = phase, full saturation), binary PPM.
inline void save_phase_frame_ppm(const Eigen::VectorXd& phases, int side,
                                 const std::string& path) {
    if (phases.size() != static_cast<Eigen::Index>(side) * side)
        throw std::invalid_argument("save_phase_frame_ppm: row length mismatch");
    std::ostringstream out;
    out << "P6\n" << side << " " << side << "\n255\n";
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) {
            double theta = phases[static_cast<Eigen::Index>(r) * side + c];
            int rr, gg, bb;
            detail::hsv_to_rgb((theta + kPi) / (2.0 * kPi), 1.0, 1.0, rr, gg, bb);
            out.put(static_cast<char>(rr));
            out.put(static_cast<char>(gg));
            out.put(static_cast<char>(bb));
        }
    write_text_file_atomic(path, out.str());
}

}  // namespace cvrnn
