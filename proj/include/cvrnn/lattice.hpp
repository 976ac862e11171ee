#pragma once

///
/// \file lattice.hpp
///
/// Square lattice geometry and the Gaussian distance-decayed weighted
/// adjacency, plus node masking (disconnecting subsets of the network).
///

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cvrnn/common.hpp"

namespace cvrnn {

/// Geometry of an N×N node grid with row-major index ↔ (row, col) maps.
struct LatticeSpec {
    int side = 0;

    int node_count() const noexcept { return side * side; }

    int row_of(int index) const noexcept { return index / side; }
    int col_of(int index) const noexcept { return index % side; }
    int index_of(int row, int col) const noexcept { return row * side + col; }

    bool valid_index(int index) const noexcept {
        return index >= 0 && index < node_count();
    }

    bool on_border(int index) const noexcept {
        int r = row_of(index), c = col_of(index);
        return r == 0 || c == 0 || r == side - 1 || c == side - 1;
    }
};

inline LatticeSpec build_lattice(int side_length) {
    if (side_length < 2)
        throw std::invalid_argument("build_lattice: side_length must be >= 2, got " +
                                    std::to_string(side_length));
    return LatticeSpec{side_length};
}

/// Squared Euclidean distance between lattice nodes. Integer-exact, which
/// makes downstream weights bitwise symmetric.
inline long squared_distance(int i, int j, const LatticeSpec& spec) {
    if (!spec.valid_index(i) || !spec.valid_index(j))
        throw std::invalid_argument("squared_distance: node index out of range");
    long dr = spec.row_of(i) - spec.row_of(j);
    long dc = spec.col_of(i) - spec.col_of(j);
    return dr * dr + dc * dc;
}

inline double euclidean_distance(int i, int j, const LatticeSpec& spec) {
    return std::sqrt(static_cast<double>(squared_distance(i, j, spec)));
}

/// Nonnegative symmetric weights a_ij = peak · exp(−d²/(2·scale²)).
/// Self-weights a_ii = peak are kept.
struct AdjacencyMatrix {
    Eigen::MatrixXd entries;
    double peak = 0.0;   // weight at distance zero
    double scale = 0.0;  // Gaussian falloff scale

    Eigen::Index size() const noexcept { return entries.rows(); }
};

inline AdjacencyMatrix gaussian_adjacency(const LatticeSpec& spec, double alpha,
                                          double sigma) {
    if (!(sigma > 0.0))
        throw std::invalid_argument("gaussian_adjacency: sigma must be > 0");
    const int n = spec.node_count();
    AdjacencyMatrix adj;
    adj.peak = alpha;
    adj.scale = sigma;
    adj.entries.resize(n, n);
    const double inv = -1.0 / (2.0 * sigma * sigma);
    parallel_for(static_cast<std::size_t>(n), 0, [&](std::size_t i_) {
        const int i = static_cast<int>(i_);
        for (int j = i; j < n; ++j) {
            double w = alpha * std::exp(inv * static_cast<double>(
                                                  squared_distance(i, j, spec)));
            adj.entries(i, j) = w;
            adj.entries(j, i) = w;
        }
    });
    return adj;
}

/// Zeroes every weight touching a dropped node; kept entries are unchanged.
inline AdjacencyMatrix mask_adjacency(const AdjacencyMatrix& adj,
                                      const std::vector<bool>& keep) {
    const Eigen::Index n = adj.size();
    if (static_cast<Eigen::Index>(keep.size()) != n)
        throw std::invalid_argument("mask_adjacency: keep vector has length " +
                                    std::to_string(keep.size()) + ", expected " +
                                    std::to_string(n));
    AdjacencyMatrix out = adj;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!keep[static_cast<std::size_t>(i)]) {
            out.entries.row(i).setZero();
            out.entries.col(i).setZero();
        }
    }
    return out;
}

}  // namespace cvrnn
