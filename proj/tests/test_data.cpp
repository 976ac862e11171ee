#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "cvrnn/data.hpp"

using namespace cvrnn;

namespace {

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "cvrnn_data_tests";
    std::filesystem::create_directories(dir);
    return dir;
}

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void put_be32(std::string& s, std::uint32_t v) {
    s.push_back(static_cast<char>((v >> 24) & 0xFF));
    s.push_back(static_cast<char>((v >> 16) & 0xFF));
    s.push_back(static_cast<char>((v >> 8) & 0xFF));
    s.push_back(static_cast<char>(v & 0xFF));
}

}  // namespace

TEST_CASE("axis-aligned square raster", "[data]") {
    ShapeSpec sq{ShapeKind::Square, 8, 1.0, 4, 4};
    LabeledImage img = generate_shapes_image(28, {sq}, OverlapPolicy::Forbid, 1);
    int ones = 0, labeled = 0;
    for (int r = 0; r < 28; ++r)
        for (int c = 0; c < 28; ++c) {
            if (img.pixels(r, c) == 1.0) ++ones;
            if (img.truth(r, c) == 1) ++labeled;
            bool inside = r >= 4 && r < 12 && c >= 4 && c < 12;
            CHECK(img.pixels(r, c) == (inside ? 1.0 : 0.0));
        }
    CHECK(ones == 64);
    CHECK(labeled == 64);
    CHECK(img.meta.overlap_zone.empty());
}

TEST_CASE("random generation is deterministic in the seed", "[data]") {
    ShapeRecipe recipe;
    recipe.count = 2;
    LabeledImage a = generate_shapes_image(28, recipe, 42);
    LabeledImage b = generate_shapes_image(28, recipe, 42);
    CHECK(a.pixels == b.pixels);
    CHECK(a.truth == b.truth);
    LabeledImage c = generate_shapes_image(28, recipe, 43);
    CHECK(a.pixels != c.pixels);
}

TEST_CASE("overlap zones carry the later stamp", "[data]") {
    ShapeSpec square{ShapeKind::Square, 10, 1.0, 8, 4};
    ShapeSpec triangle{ShapeKind::Triangle, 10, 0.6, 8, 10};
    LabeledImage img =
        generate_shapes_image(28, {square, triangle}, OverlapPolicy::Allow, 3);
    REQUIRE_FALSE(img.meta.overlap_zone.empty());
    std::set<std::pair<int, int>> zone(img.meta.overlap_zone.begin(),
                                       img.meta.overlap_zone.end());
    for (int r = 0; r < 28; ++r)
        for (int c = 0; c < 28; ++c) {
            bool in_sq = r >= 8 && r < 18 && c >= 4 && c < 14;
            bool in_tri = shape_covers(triangle, r - 8, c - 10);
            if (in_sq && in_tri) {
                CHECK(img.pixels(r, c) == 0.6);
                CHECK(img.truth(r, c) == 2);
                CHECK(zone.count({r, c}) == 1);
            } else if (in_sq) {
                CHECK(img.pixels(r, c) == 1.0);
                CHECK(img.truth(r, c) == 1);
            } else if (in_tri) {
                CHECK(img.pixels(r, c) == 0.6);
                CHECK(img.truth(r, c) == 2);
            } else {
                CHECK(img.truth(r, c) == 0);
            }
        }
    SECTION("explicit overlap is rejected when forbidden") {
        CHECK_THROWS_AS(
            generate_shapes_image(28, {square, triangle}, OverlapPolicy::Forbid, 3),
            placement_error);
    }
}

TEST_CASE("dataset generation", "[data]") {
    ShapeRecipe recipe;
    recipe.count = 2;
    Dataset ds = generate_dataset(20, 28, recipe, 7);
    REQUIRE(ds.images.size() == 20);
    CHECK(ds.placement_failures == 0);
    CHECK(ds.images[0].pixels != ds.images[1].pixels);

    Dataset again = generate_dataset(20, 28, recipe, 7);
    for (int i = 0; i < 20; ++i)
        CHECK(ds.images[static_cast<std::size_t>(i)].pixels ==
              again.images[static_cast<std::size_t>(i)].pixels);

    Dataset other = generate_dataset(20, 28, recipe, 8);
    CHECK(ds.images[0].pixels != other.images[0].pixels);

    CHECK_THROWS_AS(generate_dataset(0, 28, recipe, 1), std::invalid_argument);

    SECTION("impossible placements are counted, not fatal") {
        ShapeRecipe impossible;
        impossible.count = 3;
        impossible.min_size = impossible.max_size = 16;
        impossible.max_retries = 50;
        Dataset bad = generate_dataset(5, 16, impossible, 1);
        CHECK(bad.images.empty());
        CHECK(bad.placement_failures == 5);
    }
}

TEST_CASE("truth labels and pixels stay consistent", "[data]") {
    ShapeRecipe recipe;
    recipe.count = 3;
    recipe.min_size = 6;
    recipe.max_size = 9;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        LabeledImage img = generate_shapes_image(28, recipe, seed);
        for (int r = 0; r < 28; ++r)
            for (int c = 0; c < 28; ++c)
                CHECK((img.truth(r, c) > 0) == (img.pixels(r, c) > 0.0));
    }
}

TEST_CASE("PGM round trip and parsing", "[data]") {
    auto dir = temp_dir();
    SECTION("round trip loses at most quantization") {
        Rng rng(5);
        Eigen::MatrixXd img(9, 9);
        for (Eigen::Index i = 0; i < img.size(); ++i) img(i) = rng.uniform();
        for (bool binary : {true, false}) {
            auto path = (dir / (binary ? "rt.p5.pgm" : "rt.p2.pgm")).string();
            save_pgm(img, path, binary);
            Eigen::MatrixXd back = load_pgm(path);
            CHECK((back - img).cwiseAbs().maxCoeff() <= 1.0 / 510.0 + 1e-12);
        }
    }
    SECTION("hand-written P2 fixture loads exactly") {
        auto path = (dir / "fixture.pgm").string();
        write_bytes(path,
                    "P2\n# tiny fixture\n4 4\n255\n"
                    "0 51 102 153\n204 255 0 51\n"
                    "102 153 204 255\n0 51 102 153\n");
        Eigen::MatrixXd img = load_pgm(path);
        CHECK(img(0, 0) == 0.0);
        CHECK(img(0, 1) == 51.0 / 255.0);
        CHECK(img(1, 1) == 1.0);
        CHECK(img(3, 3) == 153.0 / 255.0);
    }
    SECTION("malformed files raise parse errors") {
        auto trunc = (dir / "trunc.pgm").string();
        write_bytes(trunc, "P5\n4 4\n255\nab");  // raster cut short
        CHECK_THROWS_AS(load_pgm(trunc), parse_error);

        auto rect = (dir / "rect.pgm").string();
        write_bytes(rect, "P2\n3 2\n255\n0 0 0 0 0 0\n");
        CHECK_THROWS_AS(load_pgm(rect), parse_error);

        auto deep = (dir / "deep.pgm").string();
        write_bytes(deep, "P2\n2 2\n65535\n0 0 0 0\n");
        CHECK_THROWS_AS(load_pgm(deep), parse_error);

        auto junk = (dir / "junk.pgm").string();
        write_bytes(junk, "JUNK");
        CHECK_THROWS_AS(load_pgm(junk), parse_error);
    }
    SECTION("label maps store raw values") {
        Eigen::MatrixXi labels(3, 3);
        labels << 0, 1, 2, 2, 1, 0, 3, 3, 3;
        auto path = (dir / "labels.pgm").string();
        save_pgm(labels, path);
        CHECK(load_pgm_labels(path) == labels);
    }
}

TEST_CASE("IDX loading", "[data]") {
    auto dir = temp_dir();
    std::string images, labels;
    put_be32(images, 0x00000803u);
    put_be32(images, 2);  // two images
    put_be32(images, 3);  // 3x3
    put_be32(images, 3);
    for (int v = 0; v < 9; ++v) images.push_back(static_cast<char>(v * 10));
    for (int v = 0; v < 9; ++v) images.push_back(static_cast<char>(255 - v));
    put_be32(labels, 0x00000801u);
    put_be32(labels, 2);
    labels.push_back(static_cast<char>(7));
    labels.push_back(static_cast<char>(1));

    auto ipath = (dir / "imgs.idx").string();
    auto lpath = (dir / "labs.idx").string();
    write_bytes(ipath, images);
    write_bytes(lpath, labels);

    MnistDataset ds = load_idx(ipath, lpath);
    REQUIRE(ds.images.size() == 2);
    CHECK(ds.labels == std::vector<int>{7, 1});
    CHECK(ds.images[0](0, 0) == 0.0);
    CHECK(ds.images[0](0, 1) == 10.0 / 255.0);
    CHECK(ds.images[0](2, 2) == 80.0 / 255.0);
    CHECK(ds.images[1](0, 0) == 1.0);

    SECTION("count mismatch") {
        std::string bad = labels;
        bad[7] = 3;  // claims 3 labels
        auto bpath = (dir / "bad.idx").string();
        write_bytes(bpath, bad);
        CHECK_THROWS_AS(load_idx(ipath, bpath), parse_error);
    }
    SECTION("empty file") {
        auto epath = (dir / "empty.idx").string();
        write_bytes(epath, "");
        CHECK_THROWS_AS(load_idx(epath, lpath), parse_error);
    }
    SECTION("wrong magic") {
        std::string bad = images;
        bad[3] = 0x01;
        auto bpath = (dir / "badmagic.idx").string();
        write_bytes(bpath, bad);
        CHECK_THROWS_AS(load_idx(bpath, lpath), parse_error);
    }
}

TEST_CASE("compose_mnist_shape", "[data]") {
    Eigen::MatrixXd digit = Eigen::MatrixXd::Zero(8, 8);
    digit.block(2, 3, 4, 2).setConstant(0.9);  // a fat stroke
    digit(0, 0) = 0.4;                         // below threshold, ignored
    ShapeSpec shape{ShapeKind::Square, 6, 1.0, 0, 0};

    LabeledImage img = compose_mnist_shape(digit, shape, 28, 11);
    int digit_px = 0, shape_px = 0;
    for (int r = 0; r < 28; ++r)
        for (int c = 0; c < 28; ++c) {
            if (img.truth(r, c) == 1) ++digit_px;
            if (img.truth(r, c) == 2) ++shape_px;
            CHECK((img.truth(r, c) > 0) == (img.pixels(r, c) > 0.0));
        }
    CHECK(digit_px == 8);   // binarized stroke only
    CHECK(shape_px == 36);

    SECTION("deterministic") {
        LabeledImage again = compose_mnist_shape(digit, shape, 28, 11);
        CHECK(img.pixels == again.pixels);
        CHECK(img.truth == again.truth);
    }
    SECTION("blank digit leaves only the shape") {
        LabeledImage only =
            compose_mnist_shape(Eigen::MatrixXd::Zero(8, 8), shape, 28, 4);
        CHECK((only.truth.array() == 1).count() == 0);
        CHECK((only.truth.array() == 2).count() == 36);
    }
}

TEST_CASE("zscore_image", "[data]") {
    Eigen::MatrixXd img(2, 2);
    img << 0.1, 0.4, 0.7, 0.9;
    Eigen::MatrixXd z = zscore_image(img);
    CHECK(z.minCoeff() == 0.0);
    CHECK(z.maxCoeff() == 1.0);
    Eigen::MatrixXd zz = zscore_image(z);
    CHECK((zz - z).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK_THROWS_AS(zscore_image(Eigen::MatrixXd::Constant(3, 3, 0.5)),
                    std::invalid_argument);
}

TEST_CASE("box-average resampling", "[data]") {
    Eigen::MatrixXd img(4, 4);
    img << 1, 3, 0, 0,
           5, 7, 0, 0,
           2, 2, 8, 8,
           2, 2, 8, 8;
    Eigen::MatrixXd down = resample_box_average(img, 2);
    CHECK(down(0, 0) == 4.0);
    CHECK(down(0, 1) == 0.0);
    CHECK(down(1, 0) == 2.0);
    CHECK(down(1, 1) == 8.0);
    CHECK(resample_box_average(img, 4) == img);
    CHECK_THROWS_AS(resample_box_average(img, 5), std::invalid_argument);
}

TEST_CASE("dataset index round trip", "[data]") {
    std::vector<DatasetIndexEntry> entries(2);
    entries[0].image_path = "img_0000.pgm";
    entries[0].truth_path = "truth_0000.pgm";
    entries[0].seed = 123456789;
    entries[0].shapes = {{ShapeKind::Triangle, 8, 1.0, 3, 4},
                         {ShapeKind::Square, 10, 0.5, 15, 12}};
    entries[1].image_path = "img_0001.pgm";
    entries[1].truth_path = "truth_0001.pgm";
    entries[1].seed = 42;
    entries[1].shapes = {{ShapeKind::Circle, 9, 1.0, 0, 0}};

    std::string text = format_dataset_index(entries);
    std::vector<DatasetIndexEntry> back = parse_dataset_index(text);
    REQUIRE(back.size() == 2);
    CHECK(back[0].image_path == entries[0].image_path);
    CHECK(back[0].seed == entries[0].seed);
    REQUIRE(back[0].shapes.size() == 2);
    CHECK(back[0].shapes[1].kind == ShapeKind::Square);
    CHECK(back[0].shapes[1].intensity == 0.5);
    CHECK(back[1].shapes[0].kind == ShapeKind::Circle);

    CHECK_THROWS_AS(parse_dataset_index("one\tfield"), parse_error);
    CHECK_THROWS_AS(parse_dataset_index("a\tb\tnotanumber\tsquare:1@0,0*1"),
                    parse_error);
}
