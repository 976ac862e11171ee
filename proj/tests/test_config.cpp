#include <catch2/catch_amalgamated.hpp>

#include "cvrnn/config.hpp"

using namespace cvrnn;

TEST_CASE("config text round trip", "[config]") {
    PipelineConfig cfg;
    cfg.side = 28;
    cfg.layer1.alpha = 1.5;
    cfg.layer1.sigma = 8.25;
    cfg.layer1.epsilon = 0.01;
    cfg.layer1.steps = 60;
    cfg.layer2.alpha = 0.4;
    cfg.layer2.sigma = 1.1;
    cfg.layer2.steps = 150;
    cfg.background_step = 60;
    cfg.window_fraction = 0.5;
    cfg.clusters = 0;
    cfg.seed = 99;

    std::string text = pipeline_config_to_text(cfg);
    PipelineConfig back = pipeline_config_from_text(text);
    CHECK(pipeline_config_to_text(back) == text);
    CHECK(back.layer1.sigma == 8.25);
    CHECK(back.layer2.steps == 150);
    CHECK(back.seed == 99);
}

TEST_CASE("config parsing details", "[config]") {
    SECTION("comments, blanks and spacing are tolerated") {
        PipelineConfig cfg = pipeline_config_from_text(
            "# a comment\n"
            "\n"
            "  layer1.alpha =  2.5   # trailing comment\n"
            "clusters = 3\n");
        CHECK(cfg.layer1.alpha == 2.5);
        CHECK(cfg.clusters == 3);
    }
    SECTION("explicit window range") {
        PipelineConfig cfg =
            pipeline_config_from_text("layer2.steps = 200\nsimilarity_window = 80:200\n");
        CHECK(cfg.window_first == 80);
        CHECK(cfg.window_last == 200);
        std::string text = pipeline_config_to_text(cfg);
        CHECK(text.find("similarity_window = 80:200") != std::string::npos);
    }
    SECTION("clusters accepts auto") {
        CHECK(pipeline_config_from_text("clusters = auto\n").clusters == 0);
    }
    SECTION("unknown keys carry their line number") {
        try {
            pipeline_config_from_text("side = 28\nlayer3.alpha = 1\n");
            FAIL("expected parse_error");
        } catch (const parse_error& e) {
            CHECK(e.offset() == 2);
            CHECK(std::string(e.what()).find("layer3.alpha") != std::string::npos);
        }
    }
    SECTION("malformed values are rejected") {
        CHECK_THROWS_AS(pipeline_config_from_text("layer1.alpha = fast\n"),
                        parse_error);
        CHECK_THROWS_AS(pipeline_config_from_text("layer1.alpha\n"), parse_error);
    }
    SECTION("semantic validation") {
        CHECK_THROWS_AS(pipeline_config_from_text("layer1.sigma = -1\n"),
                        std::invalid_argument);
        CHECK_THROWS_AS(
            pipeline_config_from_text("layer1.steps = 10\nbackground_step = 20\n"),
            std::invalid_argument);
    }
}

TEST_CASE("config digest", "[config]") {
    PipelineConfig a, b;
    CHECK(config_digest(a) == config_digest(b));
    b.layer2.epsilon = 0.123;
    CHECK(config_digest(a) != config_digest(b));
    CHECK(config_digest(a).size() == 16);
}

TEST_CASE("sweep grid parsing and expansion", "[config]") {
    SECTION("cartesian product with the last axis fastest") {
        auto axes = parse_sweep_grid(
            "layer1.alpha = 1, 2\n"
            "layer2.sigma = 0.5, 1.0, 1.5\n");
        REQUIRE(axes.size() == 2);
        PipelineConfig base;
        auto points = expand_grid(base, axes);
        REQUIRE(points.size() == 6);
        CHECK(points[0].layer1.alpha == 1.0);
        CHECK(points[0].layer2.sigma == 0.5);
        CHECK(points[1].layer2.sigma == 1.0);
        CHECK(points[3].layer1.alpha == 2.0);
        CHECK(points[3].layer2.sigma == 0.5);
    }
    SECTION("single point grid") {
        auto axes = parse_sweep_grid("seed = 5\n");
        auto points = expand_grid(PipelineConfig{}, axes);
        REQUIRE(points.size() == 1);
        CHECK(points[0].seed == 5);
    }
    SECTION("bad keys are named") {
        try {
            parse_sweep_grid("layer1.alhpa = 1, 2\n");
            FAIL("expected parse_error");
        } catch (const parse_error& e) {
            CHECK(std::string(e.what()).find("layer1.alhpa") != std::string::npos);
            CHECK(e.offset() == 1);
        }
    }
    SECTION("invalid combinations are dropped at expansion") {
        auto axes = parse_sweep_grid("background_step = 30, 120\n");
        PipelineConfig base;
        base.layer1.steps = 60;
        auto points = expand_grid(base, axes);
        REQUIRE(points.size() == 1);  // 120 > layer1.steps is invalid
        CHECK(points[0].background_step == 30);
    }
}
