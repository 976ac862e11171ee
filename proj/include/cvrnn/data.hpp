#pragma once

///
/// \file data.hpp
///
/// Synthetic shape images with ground-truth labels, MNIST composites,
/// image normalization, and file I/O (8-bit PGM, IDX, dataset index).
///

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "cvrnn/common.hpp"

namespace cvrnn {

// ---------------------------------------------------------------------------
// Shapes and labeled images
// ---------------------------------------------------------------------------

enum class ShapeKind { Triangle, Square, Circle };

inline const char* to_string(ShapeKind kind) {
    switch (kind) {
        case ShapeKind::Triangle: return "triangle";
        case ShapeKind::Square: return "square";
        case ShapeKind::Circle: return "circle";
    }
    return "unknown";
}

inline ShapeKind shape_kind_from_string(const std::string& s) {
    if (s == "triangle") return ShapeKind::Triangle;
    if (s == "square") return ShapeKind::Square;
    if (s == "circle") return ShapeKind::Circle;
    throw std::invalid_argument("unknown shape kind '" + s + "'");
}

struct ShapeSpec {
    ShapeKind kind = ShapeKind::Square;
    int size = 8;            // bounding-box side in pixels
    double intensity = 1.0;  // in (0, 1]
    int row = 0, col = 0;    // bounding-box top-left
};

/// Whether a shape covers local bounding-box coordinate (r, c).
/// Triangles are filled right isoceles, right angle at the top-left corner;
/// circles are inscribed in the bounding box. Deterministic scanline rules.
inline bool shape_covers(const ShapeSpec& s, int r, int c) {
    if (r < 0 || c < 0 || r >= s.size || c >= s.size) return false;
    switch (s.kind) {
        case ShapeKind::Square: return true;
        case ShapeKind::Triangle: return r + c <= s.size - 1;
        case ShapeKind::Circle: {
            double half = (s.size - 1) / 2.0;
            double dr = r - half, dc = c - half;
            double radius = s.size / 2.0;
            return dr * dr + dc * dc <= radius * radius;
        }
    }
    return false;
}

/// Pixels plus ground truth. Truth is nonzero exactly where a shape was
/// stamped; in overlap zones the last-stamped shape wins and the pixel is
/// recorded in meta.overlap_zone.
struct LabeledImage {
    Eigen::MatrixXd pixels;  // N×N in [0, 1]
    Eigen::MatrixXi truth;   // 0 = background, 1..k = stamp order

    struct Meta {
        std::uint64_t seed = 0;
        std::vector<ShapeSpec> shapes;
        std::vector<std::pair<int, int>> overlap_zone;
    } meta;

    int side() const noexcept { return static_cast<int>(pixels.rows()); }
};

namespace detail {

inline void stamp_shape(LabeledImage& img, const ShapeSpec& s, int label) {
    const int N = img.side();
    if (s.row < 0 || s.col < 0 || s.row + s.size > N || s.col + s.size > N ||
        s.size < 1)
        throw std::invalid_argument("stamp_shape: shape does not fit image bounds");
    if (!(s.intensity > 0.0) || s.intensity > 1.0)
        throw std::invalid_argument("stamp_shape: intensity must be in (0, 1]");
    for (int r = 0; r < s.size; ++r) {
        for (int c = 0; c < s.size; ++c) {
            if (!shape_covers(s, r, c)) continue;
            int rr = s.row + r, cc = s.col + c;
            if (img.truth(rr, cc) != 0)
                img.meta.overlap_zone.emplace_back(rr, cc);
            img.pixels(rr, cc) = s.intensity;
            img.truth(rr, cc) = label;
        }
    }
}

inline bool boxes_disjoint(const ShapeSpec& a, const ShapeSpec& b) {
    return a.row + a.size <= b.row || b.row + b.size <= a.row ||
           a.col + a.size <= b.col || b.col + b.size <= a.col;
}

}  // namespace detail

enum class OverlapPolicy { Forbid, Allow };

/// Rasterizes explicitly specified shapes (truth labels follow stamp order).
inline LabeledImage generate_shapes_image(int N, const std::vector<ShapeSpec>& shapes,
                                          OverlapPolicy policy, std::uint64_t seed) {
    if (N < 16) throw std::invalid_argument("generate_shapes_image: N must be >= 16");
    if (shapes.empty())
        throw std::invalid_argument("generate_shapes_image: need at least one shape");
    if (policy == OverlapPolicy::Forbid) {
        for (std::size_t a = 0; a < shapes.size(); ++a)
            for (std::size_t b = a + 1; b < shapes.size(); ++b)
                if (!detail::boxes_disjoint(shapes[a], shapes[b]))
                    throw placement_error(
                        "generate_shapes_image: explicit shapes overlap but policy "
                        "forbids it");
    }
    LabeledImage img;
    img.pixels = Eigen::MatrixXd::Zero(N, N);
    img.truth = Eigen::MatrixXi::Zero(N, N);
    img.meta.seed = seed;
    int label = 1;
    for (const auto& s : shapes) {
        detail::stamp_shape(img, s, label++);
        img.meta.shapes.push_back(s);
    }
    std::sort(img.meta.overlap_zone.begin(), img.meta.overlap_zone.end());
    img.meta.overlap_zone.erase(
        std::unique(img.meta.overlap_zone.begin(), img.meta.overlap_zone.end()),
        img.meta.overlap_zone.end());
    return img;
}

/// Recipe for randomly placed shapes.
struct ShapeRecipe {
    int count = 2;
    int min_size = 8, max_size = 12;
    std::vector<ShapeKind> kinds;        // empty = uniform over all three
    std::vector<double> intensities;     // empty = all 1.0; else cycled
    OverlapPolicy overlap = OverlapPolicy::Forbid;
    int max_retries = 1000;
};

/// Samples shape kinds, sizes and positions from the recipe; with overlap
/// forbidden, positions are rejection-sampled until bounding boxes are
/// disjoint (bounded retries).
inline LabeledImage generate_shapes_image(int N, const ShapeRecipe& recipe,
                                          std::uint64_t seed) {
    if (N < 16) throw std::invalid_argument("generate_shapes_image: N must be >= 16");
    if (recipe.count < 1)
        throw std::invalid_argument("generate_shapes_image: shape count must be >= 1");
    if (recipe.min_size < 1 || recipe.max_size < recipe.min_size ||
        recipe.max_size > N)
        throw std::invalid_argument("generate_shapes_image: bad size range");

    Rng rng(seed);
    std::vector<ShapeSpec> shapes(static_cast<std::size_t>(recipe.count));
    for (int i = 0; i < recipe.count; ++i) {
        ShapeSpec& s = shapes[static_cast<std::size_t>(i)];
        s.kind = recipe.kinds.empty()
                     ? static_cast<ShapeKind>(rng.index(3))
                     : recipe.kinds[static_cast<std::size_t>(i) % recipe.kinds.size()];
        s.size = recipe.min_size +
                 static_cast<int>(rng.index(
                     static_cast<std::size_t>(recipe.max_size - recipe.min_size + 1)));
        s.intensity = recipe.intensities.empty()
                          ? 1.0
                          : recipe.intensities[static_cast<std::size_t>(i) %
                                               recipe.intensities.size()];
    }

    // Position rejection sampling. A stuck configuration (an early box can
    // block every later placement) restarts all positions, so the budget is
    // split into inner tries per shape and outer whole-image attempts.
    const int inner_tries = 64;
    const int outer_tries = std::max(1, recipe.max_retries / inner_tries);
    bool placed_all = false;
    for (int outer = 0; outer < outer_tries && !placed_all; ++outer) {
        placed_all = true;
        for (int i = 0; i < recipe.count && placed_all; ++i) {
            ShapeSpec& s = shapes[static_cast<std::size_t>(i)];
            bool ok = false;
            for (int t = 0; t < inner_tries && !ok; ++t) {
                s.row = static_cast<int>(
                    rng.index(static_cast<std::size_t>(N - s.size + 1)));
                s.col = static_cast<int>(
                    rng.index(static_cast<std::size_t>(N - s.size + 1)));
                ok = true;
                if (recipe.overlap == OverlapPolicy::Forbid)
                    for (int j = 0; j < i; ++j)
                        if (!detail::boxes_disjoint(s, shapes[static_cast<std::size_t>(j)])) {
                            ok = false;
                            break;
                        }
            }
            if (!ok) placed_all = false;
        }
    }
    if (!placed_all)
        throw placement_error("generate_shapes_image: could not place " +
                              std::to_string(recipe.count) + " disjoint shapes within " +
                              std::to_string(recipe.max_retries) + " retries");

    LabeledImage img = generate_shapes_image(N, shapes, OverlapPolicy::Allow, seed);
    img.meta.seed = seed;
    return img;
}

struct Dataset {
    std::vector<LabeledImage> images;
    int placement_failures = 0;
};

/// Generates `count` images with per-image seeds derived from the master
/// seed; placement failures are counted, not fatal.
inline Dataset generate_dataset(int count, int N, const ShapeRecipe& recipe,
                                std::uint64_t master_seed) {
    if (count < 1) throw std::invalid_argument("generate_dataset: count must be >= 1");
    Dataset ds;
    ds.images.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        try {
            ds.images.push_back(generate_shapes_image(
                N, recipe, mix_seed(master_seed, static_cast<std::uint64_t>(i))));
        } catch (const placement_error&) {
            ++ds.placement_failures;
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Normalization and resampling
// ---------------------------------------------------------------------------

/// Z-scores an image (mean 0, unit standard deviation), then min-max
/// rescales to [0, 1] so the affine frequency map applies uniformly.
inline Eigen::MatrixXd zscore_image(const Eigen::MatrixXd& image) {
    const double lo = image.minCoeff(), hi = image.maxCoeff();
    if (!(hi > lo))
        throw std::invalid_argument("zscore_image: constant image has no scale");
    const double n = static_cast<double>(image.size());
    const double mean = image.sum() / n;
    const double var = (image.array() - mean).square().sum() / n;
    Eigen::MatrixXd z = (image.array() - mean) / std::sqrt(var);
    const double zlo = z.minCoeff(), zhi = z.maxCoeff();
    return (z.array() - zlo) / (zhi - zlo);
}

/// Downscales a square image to `dst_side` by box averaging.
inline Eigen::MatrixXd resample_box_average(const Eigen::MatrixXd& image,
                                            int dst_side) {
    const int src = static_cast<int>(image.rows());
    if (image.cols() != src)
        throw std::invalid_argument("resample_box_average: image not square");
    if (dst_side < 1 || dst_side > src)
        throw std::invalid_argument(
            "resample_box_average: destination side must be in [1, source side]");
    if (dst_side == src) return image;
    Eigen::MatrixXd out(dst_side, dst_side);
    for (int r = 0; r < dst_side; ++r) {
        int r0 = r * src / dst_side, r1 = (r + 1) * src / dst_side;
        for (int c = 0; c < dst_side; ++c) {
            int c0 = c * src / dst_side, c1 = (c + 1) * src / dst_side;
            out(r, c) = image.block(r0, c0, r1 - r0, c1 - c0).mean();
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// PGM I/O (P2/P5, 8-bit)
// ---------------------------------------------------------------------------

namespace detail {

struct PgmReader {
    std::string bytes;
    std::size_t pos = 0;

    explicit PgmReader(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw parse_error("cannot open '" + path + "'", 0);
        std::ostringstream ss;
        ss << in.rdbuf();
        bytes = ss.str();
    }

    void skip_space_and_comments() {
        while (pos < bytes.size()) {
            char ch = bytes[pos];
            if (ch == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    }

    long next_int() {
        skip_space_and_comments();
        if (pos >= bytes.size())
            throw parse_error("unexpected end of PGM header", pos);
        if (!std::isdigit(static_cast<unsigned char>(bytes[pos])))
            throw parse_error("expected integer in PGM header", pos);
        long value = 0;
        while (pos < bytes.size() &&
               std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
            value = value * 10 + (bytes[pos] - '0');
            if (value > 1 << 30) throw parse_error("PGM header value too large", pos);
            ++pos;
        }
        return value;
    }
};

/// Parses an 8-bit P2/P5 PGM into raw gray values.
inline Eigen::MatrixXi read_pgm_gray(const std::string& path) {
    PgmReader rd(path);
    if (rd.bytes.size() < 2 || rd.bytes[0] != 'P' ||
        (rd.bytes[1] != '2' && rd.bytes[1] != '5'))
        throw parse_error("not a P2/P5 PGM file: '" + path + "'", 0);
    const bool binary = rd.bytes[1] == '5';
    rd.pos = 2;
    long width = rd.next_int();
    long height = rd.next_int();
    long maxval = rd.next_int();
    if (width < 1 || height < 1)
        throw parse_error("bad PGM dimensions", rd.pos);
    if (maxval != 255)
        throw parse_error("unsupported PGM maxval " + std::to_string(maxval) +
                              " (only 255 is handled)",
                          rd.pos);
    Eigen::MatrixXi gray(height, width);
    if (binary) {
        if (rd.pos >= rd.bytes.size())
            throw parse_error("missing whitespace after PGM maxval", rd.pos);
        ++rd.pos;  // single whitespace byte separates header from raster
        if (rd.bytes.size() - rd.pos <
            static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
            throw parse_error("truncated P5 raster", rd.bytes.size());
        for (long r = 0; r < height; ++r)
            for (long c = 0; c < width; ++c)
                gray(r, c) = static_cast<unsigned char>(rd.bytes[rd.pos++]);
    } else {
        for (long r = 0; r < height; ++r)
            for (long c = 0; c < width; ++c) {
                long v = rd.next_int();
                if (v > maxval)
                    throw parse_error("P2 sample exceeds maxval", rd.pos);
                gray(r, c) = static_cast<int>(v);
            }
    }
    return gray;
}

inline void write_file_atomic(const std::string& path, const std::string& bytes);

inline void write_pgm_gray(const Eigen::MatrixXi& gray, const std::string& path,
                           bool binary) {
    std::ostringstream out;
    out << (binary ? "P5" : "P2") << "\n"
        << gray.cols() << " " << gray.rows() << "\n255\n";
    if (binary) {
        for (Eigen::Index r = 0; r < gray.rows(); ++r)
            for (Eigen::Index c = 0; c < gray.cols(); ++c)
                out.put(static_cast<char>(gray(r, c)));
    } else {
        for (Eigen::Index r = 0; r < gray.rows(); ++r) {
            for (Eigen::Index c = 0; c < gray.cols(); ++c)
                out << gray(r, c) << (c + 1 == gray.cols() ? "" : " ");
            out << "\n";
        }
    }
    write_file_atomic(path, out.str());
}

}  // namespace detail

/// Loads a square 8-bit PGM as an image in [0, 1] (gray / 255).
inline Eigen::MatrixXd load_pgm(const std::string& path) {
    Eigen::MatrixXi gray = detail::read_pgm_gray(path);
    if (gray.rows() != gray.cols())
        throw parse_error("PGM is not square: " + std::to_string(gray.cols()) + "x" +
                              std::to_string(gray.rows()),
                          0);
    return gray.cast<double>() / 255.0;
}

/// Saves an image in [0, 1] as 8-bit PGM, rounding half up.
inline void save_pgm(const Eigen::MatrixXd& image, const std::string& path,
                     bool binary = true) {
    Eigen::MatrixXi gray(image.rows(), image.cols());
    for (Eigen::Index r = 0; r < image.rows(); ++r)
        for (Eigen::Index c = 0; c < image.cols(); ++c) {
            double v = std::floor(image(r, c) * 255.0 + 0.5);
            gray(r, c) = static_cast<int>(std::clamp(v, 0.0, 255.0));
        }
    detail::write_pgm_gray(gray, path, binary);
}

/// Saves a label map with raw label values as gray levels (labels ≤ 255).
inline void save_pgm(const Eigen::MatrixXi& labels, const std::string& path,
                     bool binary = true) {
    if (labels.minCoeff() < 0 || labels.maxCoeff() > 255)
        throw std::invalid_argument("save_pgm: labels must be in [0, 255]");
    detail::write_pgm_gray(labels, path, binary);
}

/// Loads a square label map saved by save_pgm (raw gray values).
inline Eigen::MatrixXi load_pgm_labels(const std::string& path) {
    Eigen::MatrixXi gray = detail::read_pgm_gray(path);
    if (gray.rows() != gray.cols())
        throw parse_error("PGM is not square: " + std::to_string(gray.cols()) + "x" +
                              std::to_string(gray.rows()),
                          0);
    return gray;
}

// ---------------------------------------------------------------------------
// IDX (MNIST) loading
// ---------------------------------------------------------------------------

struct MnistDataset {
    std::vector<Eigen::MatrixXd> images;  // pixel values in [0, 1]
    std::vector<int> labels;
};

namespace detail {

inline std::uint32_t read_be32(const std::string& bytes, std::size_t pos) {
    if (pos + 4 > bytes.size())
        throw parse_error("truncated IDX header", pos);
    return (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos])) << 24) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + 1])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + 2])) << 8) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + 3]));
}

inline std::string read_binary_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw parse_error("cannot open '" + path + "'", 0);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace detail

/// Loads an MNIST-style IDX image/label file pair. Pixels are scaled to
/// [0, 1]; image and label counts must agree.
inline MnistDataset load_idx(const std::string& images_path,
                             const std::string& labels_path) {
    std::string ib = detail::read_binary_file(images_path);
    std::string lb = detail::read_binary_file(labels_path);
    if (detail::read_be32(ib, 0) != 0x00000803u)
        throw parse_error("bad IDX image magic in '" + images_path + "'", 0);
    if (detail::read_be32(lb, 0) != 0x00000801u)
        throw parse_error("bad IDX label magic in '" + labels_path + "'", 0);
    const std::uint32_t count = detail::read_be32(ib, 4);
    const std::uint32_t rows = detail::read_be32(ib, 8);
    const std::uint32_t cols = detail::read_be32(ib, 12);
    const std::uint32_t label_count = detail::read_be32(lb, 4);
    if (count != label_count)
        throw parse_error("IDX image/label count mismatch: " + std::to_string(count) +
                              " vs " + std::to_string(label_count),
                          4);
    const std::size_t pixel_bytes =
        static_cast<std::size_t>(count) * rows * cols;
    if (ib.size() < 16 + pixel_bytes)
        throw parse_error("truncated IDX image payload", ib.size());
    if (lb.size() < 8 + count)
        throw parse_error("truncated IDX label payload", lb.size());

    MnistDataset ds;
    ds.images.reserve(count);
    ds.labels.reserve(count);
    std::size_t pos = 16;
    for (std::uint32_t i = 0; i < count; ++i) {
        Eigen::MatrixXd img(rows, cols);
        for (std::uint32_t r = 0; r < rows; ++r)
            for (std::uint32_t c = 0; c < cols; ++c)
                img(r, c) =
                    static_cast<unsigned char>(ib[pos++]) / 255.0;
        ds.images.push_back(std::move(img));
        ds.labels.push_back(static_cast<unsigned char>(lb[8 + i]));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// MNIST & shape composition
// ---------------------------------------------------------------------------

/// Stamps a binarized digit (threshold 0.5) and one geometric shape onto a
/// blank canvas with rejection-sampled positions; truth: digit = 1,
/// shape = 2. Foreground pixels of the two never collide.
inline LabeledImage compose_mnist_shape(const Eigen::MatrixXd& digit_image,
                                        const ShapeSpec& shape, int canvas_N,
                                        std::uint64_t seed,
                                        double digit_intensity = 1.0,
                                        int max_retries = 1000) {
    const int d = static_cast<int>(digit_image.rows());
    if (digit_image.cols() != d)
        throw std::invalid_argument("compose_mnist_shape: digit image not square");
    if (canvas_N < d || canvas_N < shape.size)
        throw std::invalid_argument("compose_mnist_shape: canvas too small");

    Rng rng(seed);
    LabeledImage img;
    img.pixels = Eigen::MatrixXd::Zero(canvas_N, canvas_N);
    img.truth = Eigen::MatrixXi::Zero(canvas_N, canvas_N);
    img.meta.seed = seed;

    const int dr = static_cast<int>(rng.index(static_cast<std::size_t>(canvas_N - d + 1)));
    const int dc = static_cast<int>(rng.index(static_cast<std::size_t>(canvas_N - d + 1)));
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c)
            if (digit_image(r, c) >= 0.5) {
                img.pixels(dr + r, dc + c) = digit_intensity;
                img.truth(dr + r, dc + c) = 1;
            }

    ShapeSpec s = shape;
    for (int attempt = 0;; ++attempt) {
        if (attempt > max_retries)
            throw placement_error(
                "compose_mnist_shape: could not place shape without collision");
        s.row = static_cast<int>(
            rng.index(static_cast<std::size_t>(canvas_N - s.size + 1)));
        s.col = static_cast<int>(
            rng.index(static_cast<std::size_t>(canvas_N - s.size + 1)));
        bool collision = false;
        for (int r = 0; r < s.size && !collision; ++r)
            for (int c = 0; c < s.size; ++c)
                if (shape_covers(s, r, c) && img.truth(s.row + r, s.col + c) != 0) {
                    collision = true;
                    break;
                }
        if (!collision) break;
    }
    detail::stamp_shape(img, s, 2);
    img.meta.shapes.push_back(s);
    return img;
}

// ---------------------------------------------------------------------------
// Dataset index (line-oriented text manifest)
// ---------------------------------------------------------------------------
//
// Grammar (tab-separated, '#' comments):
//   image-path <TAB> truth-path <TAB> seed <TAB> shape(;shape)*
//   shape := kind ':' size '@' row ',' col '*' intensity

struct DatasetIndexEntry {
    std::string image_path;
    std::string truth_path;
    std::uint64_t seed = 0;
    std::vector<ShapeSpec> shapes;
};

inline std::string format_shape_spec(const ShapeSpec& s) {
    std::ostringstream out;
    out << to_string(s.kind) << ':' << s.size << '@' << s.row << ',' << s.col << '*'
        << s.intensity;
    return out.str();
}

inline std::string format_dataset_index(const std::vector<DatasetIndexEntry>& entries) {
    std::ostringstream out;
    out << "# cvrnn-dataset-index v1\n";
    out << "# image\ttruth\tseed\tshapes(kind:size@row,col*intensity;...)\n";
    for (const auto& e : entries) {
        out << e.image_path << '\t' << e.truth_path << '\t' << e.seed << '\t';
        for (std::size_t i = 0; i < e.shapes.size(); ++i) {
            if (i) out << ';';
            out << format_shape_spec(e.shapes[i]);
        }
        out << '\n';
    }
    return out.str();
}

inline std::vector<DatasetIndexEntry> parse_dataset_index(const std::string& text) {
    std::vector<DatasetIndexEntry> entries;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        DatasetIndexEntry e;
        std::string seed_field, shapes_field;
        if (!std::getline(ls, e.image_path, '\t') ||
            !std::getline(ls, e.truth_path, '\t') ||
            !std::getline(ls, seed_field, '\t'))
            throw parse_error("dataset index line needs 4 tab-separated fields",
                              lineno);
        std::getline(ls, shapes_field, '\t');
        try {
            e.seed = std::stoull(seed_field);
        } catch (const std::exception&) {
            throw parse_error("bad seed field '" + seed_field + "'", lineno);
        }
        std::istringstream shapes(shapes_field);
        std::string one;
        while (std::getline(shapes, one, ';')) {
            if (one.empty()) continue;
            ShapeSpec s;
            std::size_t colon = one.find(':');
            std::size_t at = one.find('@');
            std::size_t comma = one.find(',', at == std::string::npos ? 0 : at);
            std::size_t star = one.find('*');
            if (colon == std::string::npos || at == std::string::npos ||
                comma == std::string::npos || star == std::string::npos)
                throw parse_error("bad shape spec '" + one + "'", lineno);
            try {
                s.kind = shape_kind_from_string(one.substr(0, colon));
                s.size = std::stoi(one.substr(colon + 1, at - colon - 1));
                s.row = std::stoi(one.substr(at + 1, comma - at - 1));
                s.col = std::stoi(one.substr(comma + 1, star - comma - 1));
                s.intensity = std::stod(one.substr(star + 1));
            } catch (const std::exception&) {
                throw parse_error("bad shape spec '" + one + "'", lineno);
            }
            e.shapes.push_back(s);
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

// ---------------------------------------------------------------------------
// Atomic file write (temp + rename)
// ---------------------------------------------------------------------------

namespace detail {

inline void write_file_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp + "'");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("short write to '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename '" + tmp + "' to '" + path + "'");
}

}  // namespace detail

inline void write_text_file_atomic(const std::string& path, const std::string& text) {
    detail::write_file_atomic(path, text);
}

}  // namespace cvrnn
