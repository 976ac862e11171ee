#pragma once

///
/// \file pipeline.hpp
///
/// The two-layer segmentation pipeline: layer 1 separates background from
/// foreground, layer 2 runs object-wave dynamics on masked connectivity,
/// and phase similarity + K-means yield per-pixel object labels. Also the
/// permutation-matched accuracy metric and the hyperparameter sweep.
///

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cvrnn/common.hpp"
#include "cvrnn/config.hpp"
#include "cvrnn/data.hpp"
#include "cvrnn/dynamics.hpp"
#include "cvrnn/lattice.hpp"
#include "cvrnn/similarity.hpp"
#include "cvrnn/spectral.hpp"

namespace cvrnn {

// Seed streams derived from the pipeline master seed (documented contract).
inline constexpr std::uint64_t kSeedStreamLayer1 = 1;
inline constexpr std::uint64_t kSeedStreamLayer2 = 2;
inline constexpr std::uint64_t kSeedStreamKmeans = 3;

/// Affine, monotone pixel → frequency map: ω = ω_min + (ω_max − ω_min)·p,
/// row-major flattening matching the lattice index map.
inline FrequencyVector pixels_to_frequencies(const Eigen::MatrixXd& image,
                                             const LayerConfig& layer) {
    const int N = static_cast<int>(image.rows());
    if (image.cols() != N)
        throw std::invalid_argument("pixels_to_frequencies: image not square");
    if (!image.allFinite())
        throw std::invalid_argument("pixels_to_frequencies: image has non-finite values");
    FrequencyVector omega(static_cast<Eigen::Index>(N) * N);
    const double span = layer.omega_max - layer.omega_min;
    for (int r = 0; r < N; ++r)
        for (int c = 0; c < N; ++c)
            omega[static_cast<Eigen::Index>(r) * N + c] =
                layer.omega_min + span * image(r, c);
    return omega;
}

/// Immutable per-config state shared across images: the lattice and both
/// unmasked adjacencies. Safe for concurrent readers.
struct PipelineContext {
    LatticeSpec lattice;
    AdjacencyMatrix adjacency_layer1;
    AdjacencyMatrix adjacency_layer2;
};

inline PipelineContext make_context(const PipelineConfig& cfg) {
    PipelineContext ctx;
    ctx.lattice = build_lattice(cfg.side);
    ctx.adjacency_layer1 =
        gaussian_adjacency(ctx.lattice, cfg.layer1.alpha, cfg.layer1.sigma);
    ctx.adjacency_layer2 =
        gaussian_adjacency(ctx.lattice, cfg.layer2.alpha, cfg.layer2.sigma);
    return ctx;
}

namespace detail {

inline void check_image_side(const Eigen::MatrixXd& image, const PipelineConfig& cfg) {
    if (image.rows() != cfg.side || image.cols() != cfg.side)
        throw std::invalid_argument(
            "image is " + std::to_string(image.rows()) + "x" +
            std::to_string(image.cols()) + " but the configured lattice side is " +
            std::to_string(cfg.side));
}

}  // namespace detail

/// Layer-1 dynamics: broad connectivity, renormalized propagation.
inline PhaseRecord layer1_run(const Eigen::MatrixXd& image, const PipelineConfig& cfg,
                              const PipelineContext& ctx) {
    detail::check_image_side(image, cfg);
    FrequencyVector omega = pixels_to_frequencies(image, cfg.layer1);
    SystemMatrix B = build_system_matrix(ctx.adjacency_layer1, omega,
                                         cfg.layer1.epsilon);
    ComplexState x0 = sample_initial_state(B.size(),
                                           mix_seed(cfg.seed, kSeedStreamLayer1));
    return propagate(B, x0, cfg.layer1.steps, true, cfg.layer1.record_every);
}

inline PhaseRecord layer1_run(const Eigen::MatrixXd& image,
                              const PipelineConfig& cfg) {
    return layer1_run(image, cfg, make_context(cfg));
}

/// Outcome of the layer-1 thresholding step.
struct BackgroundSplit {
    std::vector<bool> foreground;
    bool degenerate = false;     // phases formed a single cluster
    double separation = 0.0;     // circular distance between cluster centers
    double within_deviation = 0.0;  // pooled within-cluster circular RMS
};

namespace detail {

struct CircularTwoMeans {
    double center[2] = {0.0, 0.0};
    std::vector<int> labels;
    bool collapsed = false;
};

/// Deterministic 2-means on the circle: seeded with the most-separated
/// pair of angles, Lloyd iterations with circular means.
inline CircularTwoMeans circular_two_means(const Eigen::VectorXd& angles) {
    const Eigen::Index M = angles.size();
    CircularTwoMeans out;
    out.labels.assign(static_cast<std::size_t>(M), 0);

    double best = -1.0;
    Eigen::Index pa = 0, pb = 0;
    for (Eigen::Index i = 0; i < M; ++i)
        for (Eigen::Index j = i + 1; j < M; ++j) {
            double d = circular_distance(angles[i], angles[j]);
            if (d > best) {
                best = d;
                pa = i;
                pb = j;
            }
        }
    if (best <= 0.0) {
        out.center[0] = out.center[1] = angles.size() > 0 ? angles[0] : 0.0;
        out.collapsed = true;
        return out;
    }
    out.center[0] = angles[pa];
    out.center[1] = angles[pb];

    for (int iter = 0; iter < 64; ++iter) {
        bool changed = false;
        double sin_sum[2] = {0.0, 0.0}, cos_sum[2] = {0.0, 0.0};
        Eigen::Index counts[2] = {0, 0};
        for (Eigen::Index i = 0; i < M; ++i) {
            int pick = circular_distance(angles[i], out.center[0]) <=
                               circular_distance(angles[i], out.center[1])
                           ? 0
                           : 1;
            if (out.labels[static_cast<std::size_t>(i)] != pick) {
                out.labels[static_cast<std::size_t>(i)] = pick;
                changed = true;
            }
            sin_sum[pick] += std::sin(angles[i]);
            cos_sum[pick] += std::cos(angles[i]);
            ++counts[pick];
        }
        if (counts[0] == 0 || counts[1] == 0) {
            out.collapsed = true;
            return out;
        }
        for (int c = 0; c < 2; ++c)
            out.center[c] = std::atan2(sin_sum[c], cos_sum[c]);
        if (!changed && iter > 0) break;
    }
    return out;
}

}  // namespace detail

/// Splits nodes into background vs foreground by circular 2-means on the
/// phases at `at_step`; the cluster holding the majority of image-border
/// nodes is background. Degenerate single-cluster phase fields come back
/// all-background with the degenerate flag set.
inline BackgroundSplit background_split(const PhaseRecord& rec, int at_step,
                                        const LatticeSpec& spec) {
    Eigen::Index row = rec.row_for_step(at_step);
    if (row < 0)
        throw std::invalid_argument("background_split: step " +
                                    std::to_string(at_step) + " was not recorded");
    if (rec.nodes() != spec.node_count())
        throw std::invalid_argument("background_split: record/lattice size mismatch");

    const Eigen::Index M = rec.nodes();
    Eigen::VectorXd angles = rec.phases.row(row).transpose();
    detail::CircularTwoMeans km = detail::circular_two_means(angles);

    BackgroundSplit split;
    split.foreground.assign(static_cast<std::size_t>(M), false);
    if (km.collapsed) {
        split.degenerate = true;
        return split;
    }

    split.separation = circular_distance(km.center[0], km.center[1]);
    double sq = 0.0;
    for (Eigen::Index i = 0; i < M; ++i) {
        double d = circular_distance(
            angles[i], km.center[km.labels[static_cast<std::size_t>(i)]]);
        sq += d * d;
    }
    split.within_deviation = std::sqrt(sq / static_cast<double>(M));

    // Single diffuse cluster: 2-means splits it down the middle, but the
    // centers stay within the cloud's own spread.
    if (split.separation < std::max(0.02, 2.0 * split.within_deviation)) {
        split.degenerate = true;
        return split;
    }

    Eigen::Index border_votes[2] = {0, 0};
    for (Eigen::Index i = 0; i < M; ++i)
        if (spec.on_border(static_cast<int>(i)))
            ++border_votes[km.labels[static_cast<std::size_t>(i)]];
    int background = border_votes[1] > border_votes[0] ? 1 : 0;
    for (Eigen::Index i = 0; i < M; ++i)
        split.foreground[static_cast<std::size_t>(i)] =
            km.labels[static_cast<std::size_t>(i)] != background;
    return split;
}

/// Layer-2 dynamics: background nodes disconnected, tighter connectivity,
/// fresh seeded initial condition.
inline PhaseRecord layer2_run(const Eigen::MatrixXd& image,
                              const std::vector<bool>& foreground,
                              const PipelineConfig& cfg,
                              const PipelineContext& ctx) {
    detail::check_image_side(image, cfg);
    if (std::none_of(foreground.begin(), foreground.end(), [](bool b) { return b; }))
        throw std::invalid_argument("layer2_run: empty foreground");
    AdjacencyMatrix masked = mask_adjacency(ctx.adjacency_layer2, foreground);
    FrequencyVector omega = pixels_to_frequencies(image, cfg.layer2);
    SystemMatrix B = build_system_matrix(masked, omega, cfg.layer2.epsilon);
    ComplexState x0 = sample_initial_state(B.size(),
                                           mix_seed(cfg.seed, kSeedStreamLayer2));
    return propagate(B, x0, cfg.layer2.steps, true, cfg.layer2.record_every);
}

inline PhaseRecord layer2_run(const Eigen::MatrixXd& image,
                              const std::vector<bool>& foreground,
                              const PipelineConfig& cfg) {
    return layer2_run(image, foreground, cfg, make_context(cfg));
}

struct StageTimings {
    double normalize_s = 0.0;
    double layer1_s = 0.0;
    double split_s = 0.0;
    double layer2_s = 0.0;
    double similarity_s = 0.0;
    double cluster_s = 0.0;
    double total_s = 0.0;
};

/// Per-pixel labels (0 = background, 1..k = objects) plus provenance.
struct SegmentationResult {
    Eigen::MatrixXi labels;
    PhaseRecord phase_record_layer1;
    PhaseRecord phase_record_layer2;
    ProjectionPoints projection;
    PipelineConfig config;
    StageTimings timings;
    bool degenerate_background = false;
    int cluster_count = 0;
};

namespace detail {

class StageClock {
public:
    StageClock() : last_(std::chrono::steady_clock::now()), start_(last_) {}

    double lap() {
        auto now = std::chrono::steady_clock::now();
        double s = std::chrono::duration<double>(now - last_).count();
        last_ = now;
        return s;
    }

    double total() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point last_, start_;
};

template <typename Fn>
auto run_stage(const char* stage, Fn&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string(stage) + ": " + e.what());
    }
}

}  // namespace detail

/// End-to-end segmentation. Stage errors are rethrown with the stage name
/// attached. Constant (blank) images and degenerate layer-1 splits yield an
/// all-background labeling rather than an error.
inline SegmentationResult segment_image(const Eigen::MatrixXd& image,
                                        const PipelineConfig& cfg,
                                        const PipelineContext& ctx) {
    detail::check_image_side(image, cfg);
    validate(cfg);
    detail::StageClock clock;
    SegmentationResult result;
    result.config = cfg;
    result.labels = Eigen::MatrixXi::Zero(cfg.side, cfg.side);

    const bool constant_image = !(image.maxCoeff() > image.minCoeff());
    Eigen::MatrixXd normalized =
        constant_image
            ? image
            : detail::run_stage("normalize", [&] { return zscore_image(image); });
    result.timings.normalize_s = clock.lap();

    result.phase_record_layer1 = detail::run_stage(
        "layer1", [&] { return layer1_run(normalized, cfg, ctx); });
    result.timings.layer1_s = clock.lap();

    BackgroundSplit split = detail::run_stage("background_split", [&] {
        return background_split(result.phase_record_layer1, cfg.background_step,
                                ctx.lattice);
    });
    result.timings.split_s = clock.lap();

    std::vector<int> node_ids;
    for (std::size_t i = 0; i < split.foreground.size(); ++i)
        if (split.foreground[i]) node_ids.push_back(static_cast<int>(i));

    if (split.degenerate || node_ids.empty()) {
        result.degenerate_background = true;
        result.timings.total_s = clock.total();
        return result;
    }

    result.phase_record_layer2 = detail::run_stage("layer2", [&] {
        return layer2_run(normalized, split.foreground, cfg, ctx);
    });
    result.timings.layer2_s = clock.lap();

    const Eigen::Index M = static_cast<Eigen::Index>(node_ids.size());
    if (M < 4) {
        // Too few nodes to embed; call the whole foreground one object.
        for (int id : node_ids)
            result.labels(id / cfg.side, id % cfg.side) = 1;
        result.cluster_count = 1;
        result.timings.total_s = clock.total();
        return result;
    }

    SimilarityMatrix S = detail::run_stage("similarity", [&] {
        StepWindow window =
            cfg.window_first >= 0
                ? window_from_steps(result.phase_record_layer2, cfg.window_first,
                                    cfg.window_last)
                : window_from_fraction(result.phase_record_layer2,
                                       cfg.window_fraction);
        return phase_similarity_matrix(result.phase_record_layer2, node_ids, window);
    });
    result.timings.similarity_s = clock.lap();

    detail::run_stage("cluster", [&] {
        const Eigen::Index spectrum = std::min<Eigen::Index>(8, M);
        HermitianEigenpairs eig =
            hermitian_leading_eigenpairs(S.entries, spectrum, 1e-8);
        result.projection = similarity_projection(S, eig);
        int k = cfg.clusters > 0 ? cfg.clusters
                                 : eigengap_estimate(eig.eigenvalues);
        k = static_cast<int>(std::min<Eigen::Index>(k, M));
        ClusterAssignment assignment =
            kmeans(result.projection, k, mix_seed(cfg.seed, kSeedStreamKmeans), 10);
        for (std::size_t i = 0; i < node_ids.size(); ++i) {
            int id = node_ids[i];
            result.labels(id / cfg.side, id % cfg.side) = assignment.labels[i] + 1;
        }
        result.cluster_count = k;
        return 0;
    });
    result.timings.cluster_s = clock.lap();
    result.timings.total_s = clock.total();
    return result;
}

inline SegmentationResult segment_image(const Eigen::MatrixXd& image,
                                        const PipelineConfig& cfg) {
    return segment_image(image, cfg, make_context(cfg));
}

// ---------------------------------------------------------------------------
// Permutation-matched accuracy
// ---------------------------------------------------------------------------

namespace detail {

/// Hungarian algorithm (potentials + augmenting paths), minimizing cost
/// over a square matrix. Returns the column matched to each row.
inline std::vector<int> hungarian_min(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<int> match(static_cast<std::size_t>(n) + 1, 0);
    std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n) + 1,
                                 std::numeric_limits<double>::infinity());
        std::vector<bool> used(static_cast<std::size_t>(n) + 1, false);
        do {
            used[static_cast<std::size_t>(j0)] = true;
            int i0 = match[static_cast<std::size_t>(j0)], j1 = 0;
            double delta = std::numeric_limits<double>::infinity();
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                             v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] +=
                        delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (match[static_cast<std::size_t>(j0)] != 0);
        do {
            int j1 = way[static_cast<std::size_t>(j0)];
            match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= n; ++j)
        if (match[static_cast<std::size_t>(j)] > 0)
            row_to_col[static_cast<std::size_t>(match[static_cast<std::size_t>(j)]) - 1] =
                j - 1;
    return row_to_col;
}

}  // namespace detail

/// Pixel accuracy maximized over permutations of nonzero labels; background
/// (label 0) is matched to background directly. Exhaustive for up to 6
/// labels, Hungarian assignment on the confusion matrix above that.
inline double permutation_matched_accuracy(const Eigen::MatrixXi& pred,
                                           const Eigen::MatrixXi& truth) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
        throw std::invalid_argument("permutation_matched_accuracy: dimension mismatch");
    const Eigen::Index total = pred.size();
    if (total == 0)
        throw std::invalid_argument("permutation_matched_accuracy: empty maps");

    std::map<int, int> pred_ids, truth_ids;
    for (Eigen::Index i = 0; i < total; ++i) {
        int p = pred(i), t = truth(i);
        if (p > 0 && !pred_ids.count(p))
            pred_ids.emplace(p, static_cast<int>(pred_ids.size()));
        if (t > 0 && !truth_ids.count(t))
            truth_ids.emplace(t, static_cast<int>(truth_ids.size()));
    }
    const int P = static_cast<int>(pred_ids.size());
    const int T = static_cast<int>(truth_ids.size());
    const int n = std::max(P, T);

    long bg_agree = 0;
    Eigen::MatrixXd confusion = Eigen::MatrixXd::Zero(std::max(n, 1), std::max(n, 1));
    for (Eigen::Index i = 0; i < total; ++i) {
        int p = pred(i), t = truth(i);
        if (p == 0 && t == 0) {
            ++bg_agree;
        } else if (p > 0 && t > 0) {
            confusion(pred_ids[p], truth_ids[t]) += 1.0;
        }
    }

    double matched = 0.0;
    if (n > 0) {
        if (n <= 6) {
            std::vector<int> perm(static_cast<std::size_t>(n));
            std::iota(perm.begin(), perm.end(), 0);
            do {
                double sum = 0.0;
                for (int i = 0; i < n; ++i)
                    sum += confusion(i, perm[static_cast<std::size_t>(i)]);
                matched = std::max(matched, sum);
            } while (std::next_permutation(perm.begin(), perm.end()));
        } else {
            double peak = confusion.maxCoeff();
            Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(n, n, peak) - confusion;
            std::vector<int> assign = detail::hungarian_min(cost);
            for (int i = 0; i < n; ++i)
                if (assign[static_cast<std::size_t>(i)] >= 0)
                    matched += confusion(i, assign[static_cast<std::size_t>(i)]);
        }
    }
    return (static_cast<double>(bg_agree) + matched) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Dataset evaluation and hyperparameter sweep
// ---------------------------------------------------------------------------

struct EvaluationRow {
    std::size_t index = 0;
    double accuracy = 0.0;
    int clusters = 0;
    bool ok = false;
    std::string error;
};

struct EvaluationReport {
    std::vector<EvaluationRow> rows;
    double mean_accuracy = 0.0;
    std::size_t evaluated = 0;
    std::size_t failed = 0;
};

/// Evaluates a config over labeled images: per-image seeds are derived from
/// the config seed by index, and the true cluster count is taken from each
/// image's ground truth (the paper's K-means knows the object count).
inline EvaluationReport evaluate_dataset(const std::vector<LabeledImage>& images,
                                         const PipelineConfig& cfg, unsigned jobs = 0,
                                         bool truth_clusters = true) {
    EvaluationReport report;
    report.rows.resize(images.size());
    if (images.empty()) return report;
    PipelineContext ctx = make_context(cfg);
    parallel_for(images.size(), jobs, [&](std::size_t i) {
        EvaluationRow& row = report.rows[i];
        row.index = i;
        try {
            const LabeledImage& img = images[i];
            PipelineConfig local = cfg;
            local.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(i));
            if (truth_clusters) {
                int k = img.truth.maxCoeff();
                if (k > 0) local.clusters = k;
            }
            SegmentationResult seg = segment_image(img.pixels, local, ctx);
            row.accuracy = permutation_matched_accuracy(seg.labels, img.truth);
            row.clusters = seg.cluster_count;
            row.ok = true;
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
    });
    double sum = 0.0;
    for (const auto& row : report.rows) {
        if (row.ok) {
            sum += row.accuracy;
            ++report.evaluated;
        } else {
            ++report.failed;
        }
    }
    report.mean_accuracy = report.evaluated > 0
                               ? sum / static_cast<double>(report.evaluated)
                               : 0.0;
    return report;
}

struct SweepPoint {
    PipelineConfig config;
    double score = 0.0;
};

struct SweepResult {
    PipelineConfig best;
    double best_score = -1.0;
    std::vector<SweepPoint> table;
};

/// Scores every grid point on the given training images and returns the
/// argmax config plus the full table. `precomputed` short-circuits already
/// completed points (resume support); `on_point` observes fresh scores.
inline SweepResult hyperparameter_sweep(
    const std::vector<LabeledImage>& train_images,
    const std::vector<PipelineConfig>& grid_points, unsigned jobs = 0,
    const std::map<std::size_t, double>* precomputed = nullptr,
    const std::function<void(std::size_t, const PipelineConfig&, double)>& on_point =
        nullptr) {
    if (train_images.empty())
        throw std::invalid_argument("hyperparameter_sweep: empty dataset");
    if (grid_points.empty())
        throw std::invalid_argument("hyperparameter_sweep: empty grid");
    SweepResult result;
    result.table.reserve(grid_points.size());
    for (std::size_t g = 0; g < grid_points.size(); ++g) {
        const PipelineConfig& cfg = grid_points[g];
        double score;
        if (precomputed && precomputed->count(g)) {
            score = precomputed->at(g);
        } else {
            score = evaluate_dataset(train_images, cfg, jobs).mean_accuracy;
            if (on_point) on_point(g, cfg, score);
        }
        result.table.push_back({cfg, score});
        if (score > result.best_score) {
            result.best_score = score;
            result.best = cfg;
        }
    }
    return result;
}

}  // namespace cvrnn
