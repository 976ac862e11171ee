// cvrnn command-line tool: generate shape datasets, segment images with the
// two-layer complex-valued recurrent network, evaluate datasets, dump the
// system-matrix spectrum, reconstruct low-rank dynamics, and run
// hyperparameter sweeps.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cvrnn/cvrnn.hpp"

namespace fs = std::filesystem;
using namespace cvrnn;

namespace {

/// Command-line level misuse that CLI11 cannot catch itself.
class usage_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string join_command_line(int argc, char** argv) {
    std::string out;
    for (int i = 0; i < argc; ++i) {
        if (i) out += ' ';
        out += argv[i];
    }
    return out;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw usage_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

PipelineConfig load_config_file(const std::string& path) {
    return pipeline_config_from_text(read_text_file(path));
}

int parse_clusters_flag(const std::string& value) {
    if (value == "auto") return 0;
    try {
        std::size_t used = 0;
        int k = std::stoi(value, &used);
        if (used != value.size() || k < 1) throw std::invalid_argument("");
        return k;
    } catch (const std::exception&) {
        throw usage_error("--clusters must be 'auto' or a positive integer, got '" +
                          value + "'");
    }
}

std::string path_in(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + dir + "'");
}

std::string format_index_name(const char* stem, int index, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%04d.%s", stem, index, ext);
    return buf;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

/// Loads a square image and adapts it to the configured lattice side by box
/// averaging (larger inputs only).
Eigen::MatrixXd load_image_for_config(const std::string& path,
                                      const PipelineConfig& cfg) {
    Eigen::MatrixXd img = load_pgm(path);
    if (img.rows() == cfg.side) return img;
    if (img.rows() > cfg.side) return resample_box_average(img, cfg.side);
    throw usage_error("image '" + path + "' is " + std::to_string(img.rows()) +
                      "x" + std::to_string(img.cols()) +
                      " but the configured lattice side is " +
                      std::to_string(cfg.side) + " (upscaling is not supported)");
}

struct DatasetOnDisk {
    std::vector<LabeledImage> images;
    std::vector<std::string> image_paths;
    std::vector<std::string> skipped;  // images without truth maps
};

/// Loads a dataset directory: via its index.txt when present, otherwise by
/// scanning for img_*.pgm / truth_*.pgm pairs.
DatasetOnDisk load_dataset_dir(const std::string& dir, int limit) {
    if (!fs::is_directory(dir)) throw usage_error("'" + dir + "' is not a directory");
    std::vector<std::pair<std::string, std::string>> pairs;
    const std::string index_path = path_in(dir, "index.txt");
    if (fs::exists(index_path)) {
        for (const auto& e : parse_dataset_index(read_text_file(index_path)))
            pairs.emplace_back(path_in(dir, e.image_path), path_in(dir, e.truth_path));
    } else {
        std::vector<std::string> names;
        for (const auto& entry : fs::directory_iterator(dir)) {
            std::string name = entry.path().filename().string();
            if (name.rfind("img_", 0) == 0 && name.size() > 4 &&
                entry.path().extension() == ".pgm")
                names.push_back(name);
        }
        std::sort(names.begin(), names.end());
        for (const auto& name : names) {
            std::string truth = "truth" + name.substr(3);
            pairs.emplace_back(path_in(dir, name), path_in(dir, truth));
        }
    }
    if (pairs.empty())
        throw usage_error("no dataset images found in '" + dir + "'");
    DatasetOnDisk out;
    for (const auto& [img_path, truth_path] : pairs) {
        if (limit > 0 && static_cast<int>(out.images.size()) >= limit) break;
        if (!fs::exists(truth_path)) {
            out.skipped.push_back(img_path);
            continue;
        }
        LabeledImage img;
        img.pixels = load_pgm(img_path);
        img.truth = load_pgm_labels(truth_path);
        out.images.push_back(std::move(img));
        out.image_paths.push_back(img_path);
    }
    if (out.images.empty())
        throw usage_error("no usable image/truth pairs in '" + dir + "'");
    return out;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateOpts {
    std::string out;
    int count = 10;
    int shapes = 2;
    std::string overlap = "forbid";
    std::uint64_t seed = 1;
    int side = 28;
    int min_size = 8;
    int max_size = 12;
    std::vector<double> intensities;
    std::vector<std::string> kinds;
};

int run_generate(const GenerateOpts& opt, const std::string& command_line) {
    auto t0 = std::chrono::steady_clock::now();
    ensure_out_dir(opt.out);

    ShapeRecipe recipe;
    recipe.count = opt.shapes;
    recipe.min_size = opt.min_size;
    recipe.max_size = opt.max_size;
    recipe.intensities = opt.intensities;
    recipe.overlap =
        opt.overlap == "allow" ? OverlapPolicy::Allow : OverlapPolicy::Forbid;
    for (const auto& k : opt.kinds) recipe.kinds.push_back(shape_kind_from_string(k));

    Dataset ds = generate_dataset(opt.count, opt.side, recipe, opt.seed);
    if (ds.placement_failures > 0)
        std::cerr << "warning: " << ds.placement_failures
                  << " image(s) skipped after placement failures\n";

    RunManifest manifest;
    manifest.command = "generate";
    manifest.command_line = command_line;
    manifest.master_seed = opt.seed;

    std::vector<DatasetIndexEntry> index;
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        const LabeledImage& img = ds.images[i];
        DatasetIndexEntry entry;
        entry.image_path = format_index_name("img", static_cast<int>(i), "pgm");
        entry.truth_path = format_index_name("truth", static_cast<int>(i), "pgm");
        entry.seed = img.meta.seed;
        entry.shapes = img.meta.shapes;
        save_pgm(img.pixels, path_in(opt.out, entry.image_path));
        save_pgm(img.truth, path_in(opt.out, entry.truth_path));
        manifest.outputs.push_back(path_in(opt.out, entry.image_path));
        manifest.outputs.push_back(path_in(opt.out, entry.truth_path));
        index.push_back(std::move(entry));
    }
    std::string index_text = format_dataset_index(index);
    if (ds.placement_failures > 0)
        index_text += "# placement_failures = " +
                      std::to_string(ds.placement_failures) + "\n";
    write_text_file_atomic(path_in(opt.out, "index.txt"), index_text);
    manifest.outputs.push_back(path_in(opt.out, "index.txt"));

    manifest.timings_s.emplace_back("total", seconds_since(t0));
    write_run_manifest(path_in(opt.out, "run_manifest.txt"), manifest);
    std::cout << "generated " << ds.images.size() << " images in " << opt.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// segment
// ---------------------------------------------------------------------------

struct SegmentOpts {
    std::string image;
    std::string config;
    std::string out = ".";
    std::string clusters;  // empty = use config
    std::optional<std::uint64_t> seed;
    bool frames = false;
    bool ppm = false;
    bool projection = false;
};

int run_segment(const SegmentOpts& opt, const std::string& command_line) {
    PipelineConfig cfg = load_config_file(opt.config);
    if (!opt.clusters.empty()) cfg.clusters = parse_clusters_flag(opt.clusters);
    if (opt.seed) cfg.seed = *opt.seed;
    ensure_out_dir(opt.out);

    Eigen::MatrixXd image = load_image_for_config(opt.image, cfg);
    SegmentationResult seg = segment_image(image, cfg);

    RunManifest manifest;
    manifest.command = "segment";
    manifest.command_line = command_line;
    manifest.config_digest = config_digest(cfg);
    manifest.master_seed = cfg.seed;
    manifest.inputs = {opt.image, opt.config};

    const std::string labels_path = path_in(opt.out, "labels.pgm");
    save_pgm(labels_to_gray(seg.labels), labels_path);
    manifest.outputs.push_back(labels_path);

    if (opt.frames) {
        const std::string frame_dir = path_in(opt.out, "frames");
        ensure_out_dir(frame_dir);
        const PhaseRecord& rec = seg.phase_record_layer2.rows() > 0
                                     ? seg.phase_record_layer2
                                     : seg.phase_record_layer1;
        for (Eigen::Index t = 0; t < rec.rows(); ++t) {
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%05d.pgm",
                          rec.step_indices[static_cast<std::size_t>(t)]);
            std::string frame_path = path_in(frame_dir, name);
            save_phase_frame_pgm(rec.phases.row(t), cfg.side, frame_path);
            manifest.outputs.push_back(frame_path);
            if (opt.ppm) {
                std::snprintf(name, sizeof(name), "frame_%05d.ppm",
                              rec.step_indices[static_cast<std::size_t>(t)]);
                std::string ppm_path = path_in(frame_dir, name);
                save_phase_frame_ppm(rec.phases.row(t), cfg.side, ppm_path);
                manifest.outputs.push_back(ppm_path);
            }
        }
    }

    if (opt.projection) {
        std::ostringstream table;
        table << std::setprecision(12);
        table << "node\trow\tcol\tx\ty\tz\n";
        for (Eigen::Index i = 0; i < seg.projection.coordinates.rows(); ++i) {
            int id = seg.projection.node_ids[static_cast<std::size_t>(i)];
            table << id << '\t' << id / cfg.side << '\t' << id % cfg.side;
            for (int d = 0; d < 3; ++d)
                table << '\t' << seg.projection.coordinates(i, d);
            table << '\n';
        }
        const std::string proj_path = path_in(opt.out, "projection.tsv");
        write_text_file_atomic(proj_path, table.str());
        manifest.outputs.push_back(proj_path);
    }

    manifest.timings_s.emplace_back("layer1", seg.timings.layer1_s);
    manifest.timings_s.emplace_back("layer2", seg.timings.layer2_s);
    manifest.timings_s.emplace_back("similarity", seg.timings.similarity_s);
    manifest.timings_s.emplace_back("cluster", seg.timings.cluster_s);
    manifest.timings_s.emplace_back("total", seg.timings.total_s);
    write_run_manifest(path_in(opt.out, "run_manifest.txt"), manifest);

    std::cout << "clusters: " << seg.cluster_count
              << (seg.degenerate_background ? " (degenerate background)" : "")
              << "\nlabels: " << labels_path << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateOpts {
    std::string dataset;
    std::string config;
    std::string out;  // report path; defaults inside dataset dir
    std::string clusters = "truth";
    unsigned jobs = 0;
    int limit = 0;
};

int run_evaluate(const EvaluateOpts& opt, const std::string& command_line) {
    auto t0 = std::chrono::steady_clock::now();
    PipelineConfig cfg = load_config_file(opt.config);
    if (opt.clusters != "truth" && opt.clusters != "auto")
        throw usage_error("--clusters must be 'truth' or 'auto'");
    DatasetOnDisk ds = load_dataset_dir(opt.dataset, opt.limit);
    for (const auto& s : ds.skipped)
        std::cerr << "warning: skipping '" << s << "' (no truth map)\n";

    EvaluationReport report =
        evaluate_dataset(ds.images, cfg, opt.jobs, opt.clusters == "truth");

    std::ostringstream table;
    table << std::setprecision(12);
    table << "index\timage\taccuracy\tclusters\tstatus\n";
    for (const auto& row : report.rows) {
        table << row.index << '\t' << ds.image_paths[row.index] << '\t';
        if (row.ok)
            table << row.accuracy << '\t' << row.clusters << "\tok\n";
        else
            table << "nan\t0\terror: " << row.error << "\n";
    }
    char summary[256];
    std::snprintf(summary, sizeof(summary),
                  "SUMMARY\tmean_accuracy=%.6f\timages=%zu\tfailed=%zu\tskipped=%zu\n",
                  report.mean_accuracy, report.evaluated, report.failed,
                  ds.skipped.size());
    table << summary;

    const std::string report_path =
        opt.out.empty() ? path_in(opt.dataset, "report.tsv") : opt.out;
    write_text_file_atomic(report_path, table.str());

    RunManifest manifest;
    manifest.command = "evaluate";
    manifest.command_line = command_line;
    manifest.config_digest = config_digest(cfg);
    manifest.master_seed = cfg.seed;
    manifest.inputs = {opt.dataset, opt.config};
    manifest.outputs = {report_path};
    manifest.timings_s.emplace_back("total", seconds_since(t0));
    write_run_manifest(path_in(fs::path(report_path).parent_path().string(),
                               "run_manifest.txt"),
                       manifest);

    std::cout << summary;
    return 0;
}

// ---------------------------------------------------------------------------
// spectrum and lowrank share the layer system construction
// ---------------------------------------------------------------------------

struct LayerSystem {
    SystemMatrix B;
    ComplexState x0;
    PipelineConfig cfg;
};

LayerSystem build_layer_system(const std::string& image_path,
                               const PipelineConfig& cfg, int layer) {
    Eigen::MatrixXd raw = load_image_for_config(image_path, cfg);
    const bool constant = !(raw.maxCoeff() > raw.minCoeff());
    Eigen::MatrixXd image = constant ? raw : zscore_image(raw);
    PipelineContext ctx = make_context(cfg);
    LayerSystem sys;
    sys.cfg = cfg;
    if (layer == 1) {
        sys.B = build_system_matrix(ctx.adjacency_layer1,
                                    pixels_to_frequencies(image, cfg.layer1),
                                    cfg.layer1.epsilon);
        sys.x0 = sample_initial_state(sys.B.size(),
                                      mix_seed(cfg.seed, kSeedStreamLayer1));
    } else {
        PhaseRecord l1 = layer1_run(image, cfg, ctx);
        BackgroundSplit split =
            background_split(l1, cfg.background_step, ctx.lattice);
        AdjacencyMatrix masked =
            mask_adjacency(ctx.adjacency_layer2, split.foreground);
        sys.B = build_system_matrix(masked,
                                    pixels_to_frequencies(image, cfg.layer2),
                                    cfg.layer2.epsilon);
        sys.x0 = sample_initial_state(sys.B.size(),
                                      mix_seed(cfg.seed, kSeedStreamLayer2));
    }
    return sys;
}

struct SpectrumOpts {
    std::string image;
    std::string config;
    std::string out = ".";
    int modes = 6;
    int layer = 2;
    int steps = 100;
    double tol = 1e-8;
};

int run_spectrum(const SpectrumOpts& opt, const std::string& command_line) {
    auto t0 = std::chrono::steady_clock::now();
    PipelineConfig cfg = load_config_file(opt.config);
    if (opt.modes < 1 || opt.modes > cfg.side * cfg.side)
        throw usage_error("--modes must be in [1, side^2]");
    ensure_out_dir(opt.out);

    LayerSystem sys = build_layer_system(opt.image, cfg, opt.layer);
    EigenDecomposition dec =
        leading_eigenpairs(sys.B, opt.modes, opt.tol, mix_seed(cfg.seed, 0xE16));

    RunManifest manifest;
    manifest.command = "spectrum";
    manifest.command_line = command_line;
    manifest.config_digest = config_digest(cfg);
    manifest.master_seed = cfg.seed;
    manifest.inputs = {opt.image, opt.config};

    std::ostringstream table;
    table << std::setprecision(12);
    table << "mode\tmodulus\tphase\treal\timag\tresidual\n";
    for (Eigen::Index i = 0; i < dec.modes(); ++i) {
        table << i + 1 << '\t' << std::abs(dec.eigenvalues[i]) << '\t'
              << std::arg(dec.eigenvalues[i]) << '\t' << dec.eigenvalues[i].real()
              << '\t' << dec.eigenvalues[i].imag() << '\t' << dec.residuals[i]
              << '\n';
    }
    const std::string eig_path = path_in(opt.out, "eigenvalues.tsv");
    write_text_file_atomic(eig_path, table.str());
    manifest.outputs.push_back(eig_path);

    for (Eigen::Index i = 0; i < dec.modes(); ++i) {
        Eigen::VectorXd phases(dec.dim());
        for (Eigen::Index j = 0; j < dec.dim(); ++j)
            phases[j] = std::arg(dec.right_vectors(j, i));
        char name[32];
        std::snprintf(name, sizeof(name), "mode_%02d.pgm", static_cast<int>(i) + 1);
        const std::string mode_path = path_in(opt.out, name);
        save_phase_frame_pgm(phases, cfg.side, mode_path);
        manifest.outputs.push_back(mode_path);
    }

    ContributionTrace trace = mode_contributions(dec, sys.x0, opt.steps);
    std::ostringstream contrib;
    contrib << std::setprecision(12);
    contrib << "step";
    for (Eigen::Index i = 0; i < dec.modes(); ++i) contrib << "\tmu~" << i + 1;
    contrib << '\n';
    for (int k = 0; k <= opt.steps; ++k) {
        contrib << k;
        for (Eigen::Index i = 0; i < dec.modes(); ++i)
            contrib << '\t' << trace.mu_normalized(k, i);
        contrib << '\n';
    }
    const std::string contrib_path = path_in(opt.out, "contributions.tsv");
    write_text_file_atomic(contrib_path, contrib.str());
    manifest.outputs.push_back(contrib_path);

    manifest.timings_s.emplace_back("total", seconds_since(t0));
    write_run_manifest(path_in(opt.out, "run_manifest.txt"), manifest);
    std::cout << "wrote " << eig_path << " and " << dec.modes()
              << " eigenvector phase maps\n";
    return 0;
}

struct LowrankOpts {
    std::string image;
    std::string config;
    std::string out = ".";
    int rank = 0;
    int modes = 0;  // 0 = same as rank
    int steps = 60;
    int record_every = 5;
    int layer = 2;
    double tol = 1e-8;
};

int run_lowrank(const LowrankOpts& opt, const std::string& command_line) {
    auto t0 = std::chrono::steady_clock::now();
    PipelineConfig cfg = load_config_file(opt.config);
    const int dim = cfg.side * cfg.side;
    if (opt.rank < 1) throw usage_error("--rank must be >= 1");
    const int modes = opt.modes == 0 ? opt.rank : opt.modes;
    if (modes < opt.rank) throw usage_error("--modes must be >= --rank");
    if (modes > dim) throw usage_error("--modes must be <= side^2");
    if (opt.steps < 1 || opt.record_every < 1)
        throw usage_error("--steps and --record-every must be >= 1");
    ensure_out_dir(opt.out);

    LayerSystem sys = build_layer_system(opt.image, cfg, opt.layer);
    EigenDecomposition dec =
        leading_eigenpairs(sys.B, modes, opt.tol, mix_seed(cfg.seed, 0x10E));
    PhaseRecord exact =
        propagate(sys.B, sys.x0, opt.steps, true, opt.record_every);

    RunManifest manifest;
    manifest.command = "lowrank";
    manifest.command_line = command_line;
    manifest.config_digest = config_digest(cfg);
    manifest.master_seed = cfg.seed;
    manifest.inputs = {opt.image, opt.config};

    std::ostringstream table;
    table << std::setprecision(12);
    table << "step\tmean_circular_error\n";
    for (Eigen::Index t = 0; t < exact.rows(); ++t) {
        const int k = exact.step_indices[static_cast<std::size_t>(t)];
        ComplexState recon = lowrank_reconstruct(dec, sys.x0, k, opt.rank);
        Eigen::VectorXd phases(dim);
        double err = 0.0;
        for (int j = 0; j < dim; ++j) {
            phases[j] = principal_phase(std::arg(recon[j]));
            err += circular_distance(phases[j], exact.phases(t, j));
        }
        err /= dim;
        table << k << '\t' << err << '\n';
        char name[32];
        std::snprintf(name, sizeof(name), "recon_%05d.pgm", k);
        const std::string frame_path = path_in(opt.out, name);
        save_phase_frame_pgm(phases, cfg.side, frame_path);
        manifest.outputs.push_back(frame_path);
    }
    const std::string err_path = path_in(opt.out, "lowrank_error.tsv");
    write_text_file_atomic(err_path, table.str());
    manifest.outputs.push_back(err_path);

    manifest.timings_s.emplace_back("total", seconds_since(t0));
    write_run_manifest(path_in(opt.out, "run_manifest.txt"), manifest);
    std::cout << "wrote " << err_path << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepOpts {
    std::string dataset;
    std::string grid;
    std::string config;
    std::string out = ".";
    unsigned jobs = 0;
    int limit = 0;
    bool resume = false;
};

int run_sweep(const SweepOpts& opt, const std::string& command_line) {
    auto t0 = std::chrono::steady_clock::now();
    PipelineConfig base = load_config_file(opt.config);
    std::vector<GridAxis> axes = parse_sweep_grid(read_text_file(opt.grid));
    std::vector<PipelineConfig> points = expand_grid(base, axes);
    if (points.empty()) throw usage_error("grid expands to no valid configs");
    ensure_out_dir(opt.out);

    DatasetOnDisk ds = load_dataset_dir(opt.dataset, 0);
    // Training split: even indices (held-out odd indices stay untouched).
    std::vector<LabeledImage> train;
    for (std::size_t i = 0; i < ds.images.size(); i += 2)
        train.push_back(ds.images[i]);
    if (opt.limit > 0 && static_cast<int>(train.size()) > opt.limit)
        train.resize(static_cast<std::size_t>(opt.limit));

    const std::string log_path = path_in(opt.out, "sweep_log.tsv");
    std::map<std::size_t, double> done;
    if (opt.resume && fs::exists(log_path)) {
        std::istringstream in(read_text_file(log_path));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::istringstream ls(line);
            std::size_t idx;
            std::string digest;
            double score;
            if (!(ls >> idx >> digest >> score)) continue;
            if (idx < points.size() && config_digest(points[idx]) == digest)
                done[idx] = score;
        }
        std::cerr << "resuming: " << done.size() << " of " << points.size()
                  << " grid points already scored\n";
    }

    std::ofstream log(log_path, opt.resume ? std::ios::app : std::ios::trunc);
    log << std::setprecision(12);
    if (!log) throw std::runtime_error("cannot write '" + log_path + "'");
    if (!opt.resume || done.empty())
        log << "# grid_index\tconfig_digest\tmean_accuracy\n" << std::flush;

    SweepResult result = hyperparameter_sweep(
        train, points, opt.jobs, &done,
        [&](std::size_t idx, const PipelineConfig& cfg, double score) {
            log << idx << '\t' << config_digest(cfg) << '\t' << score << '\n'
                << std::flush;
            std::cerr << "grid " << idx + 1 << "/" << points.size() << " score "
                      << score << "\n";
        });

    std::ostringstream table;
    table << std::setprecision(12);
    table << "grid_index\tconfig_digest\tmean_accuracy";
    for (const auto& axis : axes) table << '\t' << axis.key;
    table << '\n';
    for (std::size_t i = 0; i < result.table.size(); ++i) {
        table << i << '\t' << config_digest(result.table[i].config) << '\t'
              << result.table[i].score;
        // Echo the swept key values for readability.
        std::size_t rem = i;
        std::vector<std::string> values(axes.size());
        for (std::size_t a = axes.size(); a-- > 0;) {
            values[a] = axes[a].values[rem % axes[a].values.size()];
            rem /= axes[a].values.size();
        }
        for (const auto& v : values) table << '\t' << v;
        table << '\n';
    }
    const std::string table_path = path_in(opt.out, "sweep_table.tsv");
    write_text_file_atomic(table_path, table.str());
    const std::string best_path = path_in(opt.out, "best_config.cfg");
    write_text_file_atomic(best_path, pipeline_config_to_text(result.best));

    RunManifest manifest;
    manifest.command = "sweep";
    manifest.command_line = command_line;
    manifest.config_digest = config_digest(result.best);
    manifest.master_seed = base.seed;
    manifest.inputs = {opt.dataset, opt.grid, opt.config};
    manifest.outputs = {table_path, best_path, log_path};
    manifest.timings_s.emplace_back("total", seconds_since(t0));
    write_run_manifest(path_in(opt.out, "run_manifest.txt"), manifest);

    std::cout << "best score " << result.best_score << " -> " << best_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cvrnn: image segmentation with complex-valued recurrent dynamics"};
    app.require_subcommand(1);
    const std::string command_line = join_command_line(argc, argv);

    GenerateOpts gen;
    CLI::App* cgen = app.add_subcommand("generate", "generate a shapes dataset");
    cgen->add_option("--out", gen.out, "output directory")->required();
    cgen->add_option("--count", gen.count, "number of images")
        ->check(CLI::PositiveNumber);
    cgen->add_option("--shapes", gen.shapes, "shapes per image")
        ->check(CLI::PositiveNumber);
    cgen->add_option("--overlap", gen.overlap, "forbid|allow")
        ->check(CLI::IsMember({"forbid", "allow"}));
    cgen->add_option("--seed", gen.seed, "master seed");
    cgen->add_option("--side", gen.side, "canvas side length");
    cgen->add_option("--min-size", gen.min_size, "minimum shape size");
    cgen->add_option("--max-size", gen.max_size, "maximum shape size");
    cgen->add_option("--intensity", gen.intensities,
                     "per-shape intensities, cycled");
    cgen->add_option("--kind", gen.kinds, "shape kinds, cycled")
        ->check(CLI::IsMember({"triangle", "square", "circle"}));

    SegmentOpts seg;
    CLI::App* cseg = app.add_subcommand("segment", "segment one image");
    cseg->add_option("--image", seg.image, "input PGM")->required();
    cseg->add_option("--config", seg.config, "pipeline config file")->required();
    cseg->add_option("--out", seg.out, "output directory");
    cseg->add_option("--clusters", seg.clusters, "'auto' or object count");
    std::uint64_t seg_seed = 0;
    CLI::Option* seg_seed_opt = cseg->add_option("--seed", seg_seed, "seed override");
    cseg->add_flag("--frames", seg.frames, "write per-step phase frames");
    cseg->add_flag("--ppm", seg.ppm, "also write HSV phase frames (PPM)");
    cseg->add_flag("--projection", seg.projection, "write projection coordinates");

    EvaluateOpts eva;
    CLI::App* ceva = app.add_subcommand("evaluate", "evaluate a dataset");
    ceva->add_option("--dataset", eva.dataset, "dataset directory")->required();
    ceva->add_option("--config", eva.config, "pipeline config file")->required();
    ceva->add_option("--out", eva.out, "report path");
    ceva->add_option("--clusters", eva.clusters, "'truth' or 'auto'");
    ceva->add_option("--jobs", eva.jobs, "worker threads (0 = auto)");
    ceva->add_option("--limit", eva.limit, "evaluate at most N images");

    SpectrumOpts spc;
    CLI::App* cspc = app.add_subcommand("spectrum", "dump system-matrix spectrum");
    cspc->add_option("--image", spc.image, "input PGM")->required();
    cspc->add_option("--config", spc.config, "pipeline config file")->required();
    cspc->add_option("--out", spc.out, "output directory");
    cspc->add_option("--modes", spc.modes, "number of leading eigenpairs");
    cspc->add_option("--layer", spc.layer, "1 or 2")->check(CLI::IsMember({1, 2}));
    cspc->add_option("--steps", spc.steps, "contribution trace length");
    cspc->add_option("--tol", spc.tol, "residual tolerance");

    LowrankOpts low;
    CLI::App* clow = app.add_subcommand("lowrank", "low-rank dynamics reconstruction");
    clow->add_option("--image", low.image, "input PGM")->required();
    clow->add_option("--config", low.config, "pipeline config file")->required();
    clow->add_option("--out", low.out, "output directory");
    clow->add_option("--rank", low.rank, "reconstruction rank")->required();
    clow->add_option("--modes", low.modes, "modes to compute (default: rank)");
    clow->add_option("--steps", low.steps, "propagation steps");
    clow->add_option("--record-every", low.record_every, "frame stride");
    clow->add_option("--layer", low.layer, "1 or 2")->check(CLI::IsMember({1, 2}));
    clow->add_option("--tol", low.tol, "residual tolerance");

    SweepOpts swp;
    CLI::App* cswp = app.add_subcommand("sweep", "hyperparameter grid sweep");
    cswp->add_option("--dataset", swp.dataset, "dataset directory")->required();
    cswp->add_option("--grid", swp.grid, "grid file")->required();
    cswp->add_option("--config", swp.config, "base config file")->required();
    cswp->add_option("--out", swp.out, "output directory");
    cswp->add_option("--jobs", swp.jobs, "worker threads (0 = auto)");
    cswp->add_option("--limit", swp.limit, "cap training images");
    cswp->add_flag("--resume", swp.resume, "reuse completed grid points");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cgen->parsed()) return run_generate(gen, command_line);
        if (cseg->parsed()) {
            if (seg_seed_opt->count() > 0) seg.seed = seg_seed;
            return run_segment(seg, command_line);
        }
        if (ceva->parsed()) return run_evaluate(eva, command_line);
        if (cspc->parsed()) return run_spectrum(spc, command_line);
        if (clow->parsed()) return run_lowrank(low, command_line);
        if (cswp->parsed()) return run_sweep(swp, command_line);
    } catch (const usage_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const parse_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const convergence_error& e) {
        std::cerr << "error: " << e.what()
                  << " (best residual " << e.best_residual() << ")\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
