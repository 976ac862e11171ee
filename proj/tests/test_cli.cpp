// End-to-end tests of the cvrnn binary: exit codes, file contracts, and
// determinism. The binary path comes from the build system.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cvrnn/config.hpp"
#include "cvrnn/data.hpp"
#include "cvrnn/pipeline.hpp"

using namespace cvrnn;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    std::string cmd = std::string(CVRNN_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "cvrnn_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

/// Small, fast config for CLI plumbing tests (not tuned for accuracy).
void write_small_config(const fs::path& path, int side = 16) {
    std::ostringstream cfg;
    cfg << "side = " << side << "\n"
        << "layer1.alpha = 1\nlayer1.sigma = 7\nlayer1.epsilon = 0.01\n"
        << "layer1.steps = 60\nlayer1.record_every = 1\n"
        << "layer1.omega_min = 0.1\nlayer1.omega_max = 2\n"
        << "layer2.alpha = 0.5\nlayer2.sigma = 1.5\nlayer2.epsilon = 0.1\n"
        << "layer2.steps = 50\nlayer2.record_every = 1\n"
        << "layer2.omega_min = 0.1\nlayer2.omega_max = 2\n"
        << "background_step = 60\nsimilarity_window = 0.5\n"
        << "clusters = auto\nseed = 1\n";
    std::ofstream out(path);
    out << cfg.str();
}

}  // namespace

TEST_CASE("generate writes a reproducible dataset", "[cli]") {
    fs::path a = fresh_dir("gen_a");
    fs::path b = fresh_dir("gen_b");
    std::string flags =
        "generate --count 4 --shapes 2 --seed 7 --side 20 --min-size 5 "
        "--max-size 7 --out ";
    REQUIRE(run_cli(flags + a.string()) == 0);
    REQUIRE(run_cli(flags + b.string()) == 0);

    for (int i = 0; i < 4; ++i) {
        char img[32], truth[32];
        std::snprintf(img, sizeof(img), "img_%04d.pgm", i);
        std::snprintf(truth, sizeof(truth), "truth_%04d.pgm", i);
        REQUIRE(fs::exists(a / img));
        REQUIRE(fs::exists(a / truth));
        CHECK(slurp(a / img) == slurp(b / img));
        CHECK(slurp(a / truth) == slurp(b / truth));
    }
    CHECK(slurp(a / "index.txt") == slurp(b / "index.txt"));
    auto entries = parse_dataset_index(slurp(a / "index.txt"));
    CHECK(entries.size() == 4);
    CHECK(fs::exists(a / "run_manifest.txt"));

    SECTION("usage errors exit with code 2") {
        CHECK(run_cli("generate --count 4 --shapes 0 --out " +
                      fresh_dir("gen_bad").string()) == 2);
        CHECK(run_cli("generate --count 4") == 2);  // missing --out
    }
}

TEST_CASE("segment writes labels, frames and projection", "[cli]") {
    fs::path dir = fresh_dir("segment");
    fs::path cfg_path = dir / "small.cfg";
    write_small_config(cfg_path);

    ShapeSpec sq{ShapeKind::Square, 6, 1.0, 2, 2};
    ShapeSpec tr{ShapeKind::Triangle, 7, 1.0, 9, 9};
    LabeledImage img = generate_shapes_image(16, {sq, tr}, OverlapPolicy::Forbid, 3);
    fs::path img_path = dir / "input.pgm";
    save_pgm(img.pixels, img_path.string());

    fs::path out = dir / "out";
    REQUIRE(run_cli("segment --image " + img_path.string() + " --config " +
                    cfg_path.string() + " --out " + out.string() +
                    " --frames --ppm --projection --clusters 2") == 0);
    CHECK(fs::exists(out / "labels.pgm"));
    CHECK(fs::exists(out / "projection.tsv"));
    CHECK(fs::exists(out / "run_manifest.txt"));
    // Frame naming contract: frame_%05d.pgm at recorded steps (1..50 here).
    CHECK(fs::exists(out / "frames" / "frame_00001.pgm"));
    CHECK(fs::exists(out / "frames" / "frame_00050.pgm"));
    CHECK(fs::exists(out / "frames" / "frame_00050.ppm"));
    CHECK_FALSE(fs::exists(out / "frames" / "frame_00051.pgm"));

    Eigen::MatrixXi labels = load_pgm_labels((out / "labels.pgm").string());
    CHECK(labels.rows() == 16);
    CHECK(labels.maxCoeff() == 255);  // scaled distinct gray levels

    std::string manifest = slurp(out / "run_manifest.txt");
    CHECK(manifest.find("command = segment") != std::string::npos);
    CHECK(manifest.find("labels.pgm") != std::string::npos);

    SECTION("missing config exits 2") {
        CHECK(run_cli("segment --image " + img_path.string() + " --config " +
                      (dir / "absent.cfg").string()) == 2);
        CHECK(run_cli("segment --image " + img_path.string()) == 2);
    }
    SECTION("reruns are byte-identical") {
        fs::path out2 = dir / "out2";
        REQUIRE(run_cli("segment --image " + img_path.string() + " --config " +
                        cfg_path.string() + " --out " + out2.string() +
                        " --clusters 2") == 0);
        CHECK(slurp(out / "labels.pgm") == slurp(out2 / "labels.pgm"));
    }
}

TEST_CASE("evaluate reports per-image and mean accuracy", "[cli]") {
    fs::path dir = fresh_dir("evaluate");
    fs::path data = dir / "data";
    REQUIRE(run_cli("generate --count 4 --shapes 2 --seed 9 --side 16 "
                    "--min-size 5 --max-size 7 --out " +
                    data.string()) == 0);
    fs::path cfg_path = dir / "small.cfg";
    write_small_config(cfg_path);

    fs::path report = dir / "report.tsv";
    REQUIRE(run_cli("evaluate --dataset " + data.string() + " --config " +
                    cfg_path.string() + " --out " + report.string() +
                    " --jobs 2") == 0);
    std::string text = slurp(report);
    CHECK(text.find("SUMMARY\tmean_accuracy=") != std::string::npos);
    CHECK(text.find("images=4") != std::string::npos);

    SECTION("missing truth maps are skipped and reported") {
        fs::remove(data / "truth_0001.pgm");
        REQUIRE(run_cli("evaluate --dataset " + data.string() + " --config " +
                        cfg_path.string() + " --out " + report.string()) == 0);
        std::string text2 = slurp(report);
        CHECK(text2.find("images=3") != std::string::npos);
        CHECK(text2.find("skipped=1") != std::string::npos);
    }
    SECTION("empty directory exits 2") {
        fs::path empty = fresh_dir("evaluate_empty");
        CHECK(run_cli("evaluate --dataset " + empty.string() + " --config " +
                      cfg_path.string()) == 2);
    }
}

TEST_CASE("spectrum dumps eigenvalues, modes and contributions", "[cli]") {
    fs::path dir = fresh_dir("spectrum");
    fs::path cfg_path = dir / "toy.cfg";
    // Decoupled toy system: epsilon = 0 makes B = diag(i*omega).
    {
        std::ofstream out(cfg_path);
        out << "side = 8\n"
            << "layer1.alpha = 1\nlayer1.sigma = 2\nlayer1.epsilon = 0\n"
            << "layer1.steps = 10\nlayer1.omega_min = 0.5\nlayer1.omega_max = 1.5\n"
            << "layer2.steps = 10\n"
            << "background_step = 10\nclusters = auto\nseed = 3\n";
    }
    Rng rng(5);
    Eigen::MatrixXd image(8, 8);
    for (Eigen::Index i = 0; i < image.size(); ++i) image(i) = rng.uniform();
    fs::path img_path = dir / "input.pgm";
    save_pgm(image, img_path.string());

    fs::path out = dir / "out";
    REQUIRE(run_cli("spectrum --image " + img_path.string() + " --config " +
                    cfg_path.string() + " --out " + out.string() +
                    " --modes 6 --layer 1 --steps 20") == 0);

    // Eigenvalue table: all moduli match i*omega entries (phase +-pi/2).
    std::string eig_text = slurp(out / "eigenvalues.tsv");
    std::istringstream eig_in(eig_text);
    std::string header;
    std::getline(eig_in, header);
    Eigen::MatrixXd z = zscore_image(load_pgm(img_path.string()));
    LayerConfig l1;
    l1.omega_min = 0.5;
    l1.omega_max = 1.5;
    Eigen::VectorXd omega = pixels_to_frequencies(z, l1);
    std::sort(omega.begin(), omega.end(), [](double a, double b) {
        return std::abs(a) > std::abs(b);
    });
    for (int i = 0; i < 6; ++i) {
        int mode;
        double modulus, phase, re, im, resid;
        eig_in >> mode >> modulus >> phase >> re >> im >> resid;
        CHECK(mode == i + 1);
        CHECK(modulus == Catch::Approx(std::abs(omega[i])).margin(1e-9));
        CHECK(std::abs(std::abs(phase) - kPi / 2) < 1e-9);
        CHECK(resid < 1e-9);
    }
    for (int i = 1; i <= 6; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "mode_%02d.pgm", i);
        CHECK(fs::exists(out / name));
    }

    // Contribution rows sum to 1.
    std::istringstream contrib(slurp(out / "contributions.tsv"));
    std::getline(contrib, header);
    std::string line;
    int rows = 0;
    while (std::getline(contrib, line)) {
        std::istringstream ls(line);
        int step;
        ls >> step;
        double total = 0.0, v;
        while (ls >> v) total += v;
        CHECK(total == Catch::Approx(1.0).margin(1e-9));
        ++rows;
    }
    CHECK(rows == 21);
}

TEST_CASE("lowrank reconstruction errors and usage", "[cli]") {
    fs::path dir = fresh_dir("lowrank");
    fs::path cfg_path = dir / "tiny.cfg";
    {
        std::ofstream out(cfg_path);
        out << "side = 4\n"
            << "layer1.alpha = 0.7\nlayer1.sigma = 1\nlayer1.epsilon = 0.2\n"
            << "layer1.steps = 10\nlayer1.omega_min = 0.2\nlayer1.omega_max = 2\n"
            << "layer2.steps = 10\nbackground_step = 10\nclusters = auto\nseed = 2\n";
    }
    Rng rng(9);
    Eigen::MatrixXd image(4, 4);
    for (Eigen::Index i = 0; i < image.size(); ++i) image(i) = rng.uniform();
    fs::path img_path = dir / "input.pgm";
    save_pgm(image, img_path.string());

    fs::path out = dir / "out";
    REQUIRE(run_cli("lowrank --image " + img_path.string() + " --config " +
                    cfg_path.string() + " --out " + out.string() +
                    " --rank 16 --steps 30 --record-every 5 --layer 1") == 0);
    std::istringstream err_in(slurp(out / "lowrank_error.tsv"));
    std::string header;
    std::getline(err_in, header);
    int step;
    double err;
    int rows = 0;
    while (err_in >> step >> err) {
        CHECK(err <= 1e-6);
        ++rows;
    }
    CHECK(rows == 6);
    CHECK(fs::exists(out / "recon_00030.pgm"));

    SECTION("rank 0 and rank beyond modes exit 2") {
        CHECK(run_cli("lowrank --image " + img_path.string() + " --config " +
                      cfg_path.string() + " --rank 0") == 2);
        CHECK(run_cli("lowrank --image " + img_path.string() + " --config " +
                      cfg_path.string() + " --rank 4 --modes 2") == 2);
    }
}

TEST_CASE("sweep scores grids and resumes deterministically", "[cli]") {
    fs::path dir = fresh_dir("sweep");
    fs::path data = dir / "data";
    REQUIRE(run_cli("generate --count 6 --shapes 2 --seed 4 --side 16 "
                    "--min-size 5 --max-size 7 --out " +
                    data.string()) == 0);
    fs::path cfg_path = dir / "small.cfg";
    write_small_config(cfg_path);
    fs::path grid_path = dir / "grid.cfg";
    {
        std::ofstream out(grid_path);
        out << "layer2.epsilon = 0.1, 0.02\n";
    }

    fs::path out1 = dir / "out1";
    REQUIRE(run_cli("sweep --dataset " + data.string() + " --grid " +
                    grid_path.string() + " --config " + cfg_path.string() +
                    " --out " + out1.string() + " --jobs 2") == 0);
    REQUIRE(fs::exists(out1 / "sweep_table.tsv"));
    REQUIRE(fs::exists(out1 / "best_config.cfg"));
    PipelineConfig best =
        pipeline_config_from_text(slurp(out1 / "best_config.cfg"));
    CHECK((best.layer2.epsilon == 0.1 || best.layer2.epsilon == 0.02));

    SECTION("interrupted runs resume to the identical table") {
        fs::path out2 = dir / "out2";
        fs::create_directories(out2);
        // Seed the log with only the first completed grid point.
        std::istringstream log_in(slurp(out1 / "sweep_log.tsv"));
        std::string line, first_lines;
        while (std::getline(log_in, line)) {
            first_lines += line + "\n";
            if (!line.empty() && line[0] != '#') break;  // keep one scored point
        }
        std::ofstream(out2 / "sweep_log.tsv") << first_lines;
        REQUIRE(run_cli("sweep --dataset " + data.string() + " --grid " +
                        grid_path.string() + " --config " + cfg_path.string() +
                        " --out " + out2.string() + " --jobs 2 --resume") == 0);
        CHECK(slurp(out2 / "sweep_table.tsv") == slurp(out1 / "sweep_table.tsv"));
        CHECK(slurp(out2 / "best_config.cfg") == slurp(out1 / "best_config.cfg"));
    }
    SECTION("single-point grids echo the config") {
        fs::path grid1 = dir / "grid1.cfg";
        std::ofstream(grid1) << "seed = 5\n";
        fs::path out3 = dir / "out3";
        REQUIRE(run_cli("sweep --dataset " + data.string() + " --grid " +
                        grid1.string() + " --config " + cfg_path.string() +
                        " --out " + out3.string()) == 0);
        PipelineConfig echoed =
            pipeline_config_from_text(slurp(out3 / "best_config.cfg"));
        CHECK(echoed.seed == 5);
    }
    SECTION("bad grid keys exit 2") {
        fs::path bad = dir / "bad.cfg";
        std::ofstream(bad) << "layer2.epsilonn = 0.1\n";
        CHECK(run_cli("sweep --dataset " + data.string() + " --grid " +
                      bad.string() + " --config " + cfg_path.string() +
                      " --out " + (dir / "outbad").string()) == 2);
    }
}
