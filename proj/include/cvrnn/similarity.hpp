#pragma once

///
/// \file similarity.hpp
///
/// Hermitian phase-similarity between node trajectories, its 3-D spectral
/// embedding, and K-means clustering of the embedded points.
///

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cvrnn/common.hpp"
#include "cvrnn/dynamics.hpp"
#include "cvrnn/spectral.hpp"

namespace cvrnn {

/// Half-open range of recorded rows of a PhaseRecord.
struct StepWindow {
    Eigen::Index begin = 0;
    Eigen::Index end = 0;

    Eigen::Index length() const noexcept { return end - begin; }
};

/// Window covering the trailing `fraction` of recorded rows (burn-in skip).
inline StepWindow window_from_fraction(const PhaseRecord& rec, double fraction) {
    if (!(fraction > 0.0) || fraction > 1.0)
        throw std::invalid_argument("window_from_fraction: fraction must be in (0, 1]");
    const Eigen::Index rows = rec.rows();
    Eigen::Index begin = rows - static_cast<Eigen::Index>(
                                    std::ceil(fraction * static_cast<double>(rows)));
    begin = std::clamp<Eigen::Index>(begin, 0, rows > 0 ? rows - 1 : 0);
    return StepWindow{begin, rows};
}

/// Window covering recorded rows whose step index lies in [first, last].
inline StepWindow window_from_steps(const PhaseRecord& rec, int first_step,
                                    int last_step) {
    Eigen::Index begin = -1, end = -1;
    for (std::size_t t = 0; t < rec.step_indices.size(); ++t) {
        int s = rec.step_indices[t];
        if (s >= first_step && begin < 0) begin = static_cast<Eigen::Index>(t);
        if (s <= last_step) end = static_cast<Eigen::Index>(t) + 1;
    }
    if (begin < 0 || end <= begin)
        throw std::invalid_argument("window_from_steps: no recorded steps in [" +
                                    std::to_string(first_step) + ", " +
                                    std::to_string(last_step) + "]");
    return StepWindow{begin, end};
}

/// Hermitian pairwise phase similarity over the retained nodes,
///   s_jk = (1/T) Σ_t e^{i(θ_j(t) − θ_k(t))},
/// diagonal exactly 1, |s| ≤ 1. `window` lists the step indices used.
struct SimilarityMatrix {
    Eigen::MatrixXcd entries;
    std::vector<int> node_ids;  // lattice index per row
    std::vector<int> window;    // step indices the average ran over
};

inline SimilarityMatrix phase_similarity_matrix(const PhaseRecord& rec,
                                                const std::vector<int>& node_ids,
                                                const StepWindow& window) {
    if (window.begin < 0 || window.end > rec.rows() || window.length() < 1)
        throw std::invalid_argument("phase_similarity_matrix: empty window");
    if (node_ids.empty())
        throw std::invalid_argument("phase_similarity_matrix: no nodes retained");
    for (int id : node_ids)
        if (id < 0 || id >= rec.nodes())
            throw std::invalid_argument("phase_similarity_matrix: node id " +
                                        std::to_string(id) + " out of range");

    const Eigen::Index T = window.length();
    const Eigen::Index M = static_cast<Eigen::Index>(node_ids.size());

    // Unit-phasor trajectories of the retained nodes (amplitudes discarded).
    Eigen::MatrixXcd Z(T, M);
    for (Eigen::Index c = 0; c < M; ++c) {
        const int id = node_ids[static_cast<std::size_t>(c)];
        for (Eigen::Index t = 0; t < T; ++t) {
            double theta = rec.phases(window.begin + t, id);
            Z(t, c) = std::polar(1.0, theta);
        }
    }

    SimilarityMatrix sim;
    sim.node_ids = node_ids;
    sim.window.assign(rec.step_indices.begin() + window.begin,
                      rec.step_indices.begin() + window.end);
    sim.entries.resize(M, M);
    const double inv_T = 1.0 / static_cast<double>(T);
    parallel_for(static_cast<std::size_t>(M), 0, [&](std::size_t j_) {
        const Eigen::Index j = static_cast<Eigen::Index>(j_);
        sim.entries(j, j) = Complex(1.0, 0.0);
        for (Eigen::Index k = j + 1; k < M; ++k) {
            // a.dot(b) conjugates a, so this is Σ_t e^{i(θ_j − θ_k)}.
            Complex s = Z.col(k).dot(Z.col(j)) * inv_T;
            sim.entries(j, k) = s;
            sim.entries(k, j) = std::conj(s);
        }
    });
    return sim;
}

/// 3-D embedding of nodes: P = Re(S) · [Re(z₁) Re(z₂) Re(z₃)] with z_i the
/// leading eigenvectors of S (descending |λ|).
struct ProjectionPoints {
    Eigen::MatrixXd coordinates;  // M × 3
    std::vector<int> node_ids;
};

/// Projection from already-computed leading eigenpairs (first 3 used).
inline ProjectionPoints similarity_projection(const SimilarityMatrix& S,
                                              const HermitianEigenpairs& eig) {
    if (eig.eigenvalues.size() < 3)
        throw std::invalid_argument("similarity_projection: need 3 eigenpairs");
    Eigen::MatrixXd Z(S.entries.rows(), 3);
    for (int c = 0; c < 3; ++c) Z.col(c) = eig.eigenvectors.col(c).real();
    ProjectionPoints out;
    out.node_ids = S.node_ids;
    out.coordinates = S.entries.real() * Z;
    return out;
}

inline ProjectionPoints similarity_projection(const SimilarityMatrix& S,
                                              const SolverOptions& opt = {}) {
    return similarity_projection(
        S, hermitian_leading_eigenpairs(S.entries, 3, 1e-8, opt));
}

/// K-means labels over the projected points.
struct ClusterAssignment {
    std::vector<int> labels;      // in [0, k), every index used
    Eigen::MatrixXd centroids;    // k × dim
    double inertia = 0.0;
};

namespace detail {

inline double squared_dist(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
    return (a - b).squaredNorm();
}

struct LloydRun {
    std::vector<int> labels;
    Eigen::MatrixXd centroids;
    double inertia = std::numeric_limits<double>::infinity();
};

inline LloydRun lloyd_once(const Eigen::MatrixXd& points, int k, Rng& rng) {
    const Eigen::Index M = points.rows();
    const Eigen::Index dim = points.cols();
    Eigen::MatrixXd centroids(k, dim);

    // k-means++ seeding.
    centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.index(
        static_cast<std::size_t>(M))));
    Eigen::VectorXd d2(M);
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < M; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (int j = 0; j < c; ++j)
                best = std::min(best,
                                squared_dist(points.row(i), centroids.row(j)));
            d2[i] = best;
            total += best;
        }
        if (total <= 0.0) {
            centroids.row(c) = points.row(static_cast<Eigen::Index>(
                rng.index(static_cast<std::size_t>(M))));
            continue;
        }
        double pick = rng.uniform() * total;
        Eigen::Index chosen = M - 1;
        double acc = 0.0;
        for (Eigen::Index i = 0; i < M; ++i) {
            acc += d2[i];
            if (acc >= pick) {
                chosen = i;
                break;
            }
        }
        centroids.row(c) = points.row(chosen);
    }

    std::vector<int> labels(static_cast<std::size_t>(M), 0);
    for (int iter = 0; iter < 100; ++iter) {
        // Assignment.
        for (Eigen::Index i = 0; i < M; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int arg = 0;
            for (int j = 0; j < k; ++j) {
                double d = squared_dist(points.row(i), centroids.row(j));
                if (d < best) {
                    best = d;
                    arg = j;
                }
            }
            labels[static_cast<std::size_t>(i)] = arg;
        }
        // Update. Empty clusters steal the point that fits its own cluster
        // worst (largest distance, then lowest index), keeping every
        // cluster non-empty.
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, dim);
        std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < M; ++i) {
            int owner = labels[static_cast<std::size_t>(i)];
            sums.row(owner) += points.row(i);
            ++counts[static_cast<std::size_t>(owner)];
        }
        for (int j = 0; j < k; ++j) {
            if (counts[static_cast<std::size_t>(j)] > 0) continue;
            Eigen::Index worst = -1;
            double worst_d = -1.0;
            for (Eigen::Index i = 0; i < M; ++i) {
                int owner = labels[static_cast<std::size_t>(i)];
                if (counts[static_cast<std::size_t>(owner)] <= 1) continue;
                double d = squared_dist(points.row(i), centroids.row(owner));
                if (d > worst_d) {
                    worst_d = d;
                    worst = i;
                }
            }
            if (worst < 0) continue;  // cannot happen while M >= k
            int former = labels[static_cast<std::size_t>(worst)];
            sums.row(former) -= points.row(worst);
            --counts[static_cast<std::size_t>(former)];
            labels[static_cast<std::size_t>(worst)] = j;
            sums.row(j) = points.row(worst);
            counts[static_cast<std::size_t>(j)] = 1;
        }
        Eigen::MatrixXd next(k, dim);
        for (int j = 0; j < k; ++j) {
            if (counts[static_cast<std::size_t>(j)] > 0)
                next.row(j) = sums.row(j) /
                              static_cast<double>(counts[static_cast<std::size_t>(j)]);
            else
                next.row(j) = centroids.row(j);
        }
        double shift = (next - centroids).rowwise().norm().maxCoeff();
        centroids = next;
        if (shift < 1e-8) break;
    }

    LloydRun run;
    run.labels = std::move(labels);
    run.centroids = std::move(centroids);
    run.inertia = 0.0;
    for (Eigen::Index i = 0; i < M; ++i)
        run.inertia += squared_dist(points.row(i),
                                    run.centroids.row(run.labels[static_cast<std::size_t>(i)]));
    return run;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding; best of `restarts` runs by
/// inertia. Deterministic for a fixed seed.
inline ClusterAssignment kmeans(const ProjectionPoints& points, int k,
                                std::uint64_t seed, int restarts = 10) {
    const Eigen::Index M = points.coordinates.rows();
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    if (M < k)
        throw std::invalid_argument("kmeans: " + std::to_string(M) +
                                    " points cannot fill " + std::to_string(k) +
                                    " clusters");
    if (restarts < 1) throw std::invalid_argument("kmeans: restarts must be >= 1");

    detail::LloydRun best;
    for (int r = 0; r < restarts; ++r) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(r)));
        detail::LloydRun run = detail::lloyd_once(points.coordinates, k, rng);
        if (run.inertia < best.inertia) best = std::move(run);
    }
    ClusterAssignment out;
    out.labels = std::move(best.labels);
    out.centroids = std::move(best.centroids);
    out.inertia = best.inertia;
    return out;
}

/// Auto-k heuristic: argmax over consecutive-gap ratios of the eigenvalue
/// moduli (descending), ties broken toward the smallest k.
inline int eigengap_estimate(const Eigen::VectorXd& eigenvalues) {
    const Eigen::Index n = eigenvalues.size();
    if (n < 2)
        throw std::invalid_argument("eigengap_estimate: need at least 2 eigenvalues");
    int best_k = 1;
    double best_ratio = -1.0;
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        double hi = std::abs(eigenvalues[i]);
        double lo = std::abs(eigenvalues[i + 1]);
        double ratio = hi / std::max(lo, 1e-300);
        if (ratio > best_ratio + 1e-12) {
            best_ratio = ratio;
            best_k = static_cast<int>(i) + 1;
        }
    }
    return best_k;
}

}  // namespace cvrnn
