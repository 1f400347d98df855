#include "patchseg/feature_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "patchseg/error.hpp"

namespace patchseg {

namespace fs = std::filesystem;

PatchGrid PatchGrid::from_image(int image_height, int image_width, int patch_size) {
    if (patch_size <= 0 || image_height <= 0 || image_width <= 0) {
        throw Error(ErrorKind::InvalidSpec, "image and patch sizes must be positive");
    }
    if (image_height % patch_size != 0 || image_width % patch_size != 0) {
        throw Error(ErrorKind::InvalidSpec,
                    "image size " + std::to_string(image_height) + "x" +
                        std::to_string(image_width) + " is not a multiple of patch size " +
                        std::to_string(patch_size));
    }
    return PatchGrid{image_height / patch_size, image_width / patch_size, patch_size};
}

bool PatchGrid::on_border(int token) const noexcept {
    const int r = token / cols;
    const int c = token % cols;
    return r == 0 || c == 0 || r == rows - 1 || c == cols - 1;
}

TokenFeatureMap::TokenFeatureMap(PatchGrid grid, Eigen::MatrixXf tokens)
    : grid_(grid), tokens_(std::move(tokens)) {
    if (!grid_.valid()) {
        throw Error(ErrorKind::InvalidSpec, "patch grid dimensions must be positive");
    }
    if (tokens_.rows() != grid_.size() || tokens_.cols() < 1) {
        throw Error(ErrorKind::ShapeMismatch,
                    "token matrix is " + std::to_string(tokens_.rows()) + "x" +
                        std::to_string(tokens_.cols()) + " but grid holds " +
                        std::to_string(grid_.size()) + " tokens");
    }
    if (!tokens_.allFinite()) {
        throw Error(ErrorKind::NonFiniteValue, "token matrix contains NaN or Inf");
    }
}

LabelMask::LabelMask(PatchGrid g, std::vector<int> l) : grid(g), labels(std::move(l)) {
    if (static_cast<int>(labels.size()) != grid.size()) {
        throw Error(ErrorKind::ShapeMismatch, "label count does not match grid size");
    }
    if (std::any_of(labels.begin(), labels.end(), [](int v) { return v < 0; })) {
        throw Error(ErrorKind::InvalidArgument, "labels must be nonnegative");
    }
}

int LabelMask::max_label() const noexcept {
    return labels.empty() ? -1 : *std::max_element(labels.begin(), labels.end());
}

// ---------------------------------------------------------------------------
// Raw file helpers

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw Error(ErrorKind::IoFailure, "read failed for " + path.string());
    }
    return bytes;
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorKind::IoFailure, "cannot open " + tmp.string() + " for writing");
        }
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw Error(ErrorKind::IoFailure, "write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error(ErrorKind::IoFailure, "cannot rename into " + path.string());
    }
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8) {
        out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xffu));
    }
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
    }
    return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// SSAM v1
//
//   0  "SSAM"     4  u32 version   8  u32 rows   12 u32 cols
//   16 u32 dim    20 u32 patch     24 rows*cols*dim f32, token-major
//
// All integers and floats little-endian; tokens row-major over the grid.

std::vector<std::uint8_t> encode_features(const TokenFeatureMap& features) {
    const auto& grid = features.grid();
    const auto& tokens = features.tokens();
    std::vector<std::uint8_t> out;
    out.reserve(kFeatureHeaderBytes + 4 * static_cast<std::size_t>(tokens.size()));
    for (char c : {'S', 'S', 'A', 'M'}) out.push_back(static_cast<std::uint8_t>(c));
    put_u32(out, kFeatureFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(grid.rows));
    put_u32(out, static_cast<std::uint32_t>(grid.cols));
    put_u32(out, static_cast<std::uint32_t>(features.dim()));
    put_u32(out, static_cast<std::uint32_t>(grid.patch_size));
    for (Eigen::Index i = 0; i < tokens.rows(); ++i) {
        for (Eigen::Index j = 0; j < tokens.cols(); ++j) {
            put_u32(out, std::bit_cast<std::uint32_t>(tokens(i, j)));
        }
    }
    return out;
}

TokenFeatureMap parse_features(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) {
        throw Error(ErrorKind::TruncatedFile, "file shorter than magic", bytes.size());
    }
    if (std::memcmp(bytes.data(), "SSAM", 4) != 0) {
        throw Error(ErrorKind::BadMagic, "expected magic \"SSAM\"", 0);
    }
    if (bytes.size() < kFeatureHeaderBytes) {
        throw Error(ErrorKind::TruncatedFile, "header needs 24 bytes", bytes.size());
    }
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kFeatureFormatVersion) {
        throw Error(ErrorKind::UnsupportedVersion,
                    "version " + std::to_string(version) + " is not supported", 4);
    }
    const std::uint32_t rows = get_u32(bytes, 8);
    const std::uint32_t cols = get_u32(bytes, 12);
    const std::uint32_t dim = get_u32(bytes, 16);
    const std::uint32_t patch = get_u32(bytes, 20);
    if (rows == 0 || cols == 0 || dim == 0 || patch == 0 || rows > (1u << 20) ||
        cols > (1u << 20) || dim > (1u << 20) || patch > (1u << 16)) {
        throw Error(ErrorKind::BadHeader, "header dimensions out of range", 8);
    }
    const std::uint64_t count = std::uint64_t{rows} * cols * dim;
    const std::uint64_t expected = kFeatureHeaderBytes + 4 * count;
    if (bytes.size() < expected) {
        // Point at the first value that cannot be read in full.
        const std::uint64_t whole = (bytes.size() - kFeatureHeaderBytes) / 4;
        throw Error(ErrorKind::TruncatedFile,
                    "payload needs " + std::to_string(expected) + " bytes, file has " +
                        std::to_string(bytes.size()),
                    kFeatureHeaderBytes + 4 * whole);
    }
    if (bytes.size() > expected) {
        throw Error(ErrorKind::TrailingData, "unexpected bytes after payload", expected);
    }

    const PatchGrid grid{static_cast<int>(rows), static_cast<int>(cols), static_cast<int>(patch)};
    Eigen::MatrixXf tokens(grid.size(), static_cast<Eigen::Index>(dim));
    std::size_t offset = kFeatureHeaderBytes;
    for (Eigen::Index i = 0; i < tokens.rows(); ++i) {
        for (Eigen::Index j = 0; j < tokens.cols(); ++j, offset += 4) {
            const float v = std::bit_cast<float>(get_u32(bytes, offset));
            if (!std::isfinite(v)) {
                throw Error(ErrorKind::NonFiniteValue, "NaN or Inf in payload", offset);
            }
            tokens(i, j) = v;
        }
    }
    return TokenFeatureMap(grid, std::move(tokens));
}

TokenFeatureMap load_features(const fs::path& path) {
    const auto bytes = read_file(path);
    return parse_features(bytes);
}

void save_features(const TokenFeatureMap& features, const fs::path& path) {
    const auto bytes = encode_features(features);
    write_file_atomic(path, bytes);
}

// ---------------------------------------------------------------------------
// PGM

namespace {

std::vector<std::uint8_t> pgm_bytes(int width, int height, const std::vector<std::uint8_t>& pixels) {
    const std::string header =
        "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), pixels.begin(), pixels.end());
    return out;
}

class PgmHeaderReader {
public:
    explicit PgmHeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    int next_int() {
        skip_space_and_comments();
        const std::size_t start = pos_;
        long value = 0;
        while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
            value = value * 10 + (bytes_[pos_] - '0');
            if (value > (1L << 24)) {
                throw Error(ErrorKind::BadHeader, "PGM header value too large", start);
            }
            ++pos_;
        }
        if (pos_ == start) {
            throw Error(ErrorKind::BadHeader, "expected integer in PGM header", start);
        }
        return static_cast<int>(value);
    }

    // Exactly one whitespace byte separates maxval from the raster.
    std::size_t raster_start() {
        if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) {
            throw Error(ErrorKind::BadHeader, "missing whitespace before raster", pos_);
        }
        return pos_ + 1;
    }

private:
    static bool is_space(std::uint8_t c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
    }

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (is_space(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 2;
};

}  // namespace

std::vector<std::uint8_t> encode_mask(const LabelMask& mask) {
    std::vector<std::uint8_t> pixels;
    pixels.reserve(mask.labels.size());
    for (std::size_t i = 0; i < mask.labels.size(); ++i) {
        const int v = mask.labels[i];
        if (v < 0 || v > 255) {
            throw Error(ErrorKind::LabelOverflow,
                        "label " + std::to_string(v) + " at patch " + std::to_string(i) +
                            " does not fit in 8 bits");
        }
        pixels.push_back(static_cast<std::uint8_t>(v));
    }
    return pgm_bytes(mask.grid.cols, mask.grid.rows, pixels);
}

LabelMask parse_mask(std::span<const std::uint8_t> bytes, int patch_size) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
        throw Error(ErrorKind::BadHeader, "expected binary PGM magic \"P5\"", 0);
    }
    PgmHeaderReader reader(bytes);
    const int width = reader.next_int();
    const int height = reader.next_int();
    const int maxval = reader.next_int();
    if (width <= 0 || height <= 0) {
        throw Error(ErrorKind::BadHeader, "PGM dimensions must be positive", 2);
    }
    if (maxval <= 0 || maxval > 255) {
        throw Error(ErrorKind::BadHeader, "only 8-bit PGM (maxval <= 255) is supported", 2);
    }
    const std::size_t start = reader.raster_start();
    const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (bytes.size() < start + count) {
        throw Error(ErrorKind::TruncatedFile, "PGM raster is short", bytes.size());
    }
    if (bytes.size() > start + count) {
        throw Error(ErrorKind::TrailingData, "unexpected bytes after PGM raster", start + count);
    }
    std::vector<int> labels(bytes.begin() + static_cast<std::ptrdiff_t>(start), bytes.end());
    return LabelMask(PatchGrid{height, width, patch_size}, std::move(labels));
}

LabelMask load_mask(const fs::path& path, int patch_size) {
    const auto bytes = read_file(path);
    return parse_mask(bytes, patch_size);
}

void save_mask(const LabelMask& mask, const fs::path& path) {
    const auto bytes = encode_mask(mask);
    write_file_atomic(path, bytes);
}

LabelMask upsample_to_pixels(const LabelMask& mask) {
    const PatchGrid& g = mask.grid;
    const int height = g.image_height();
    const int width = g.image_width();
    std::vector<int> pixels(static_cast<std::size_t>(height) * width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            pixels[static_cast<std::size_t>(y) * width + x] =
                mask.labels[g.index(y / g.patch_size, x / g.patch_size)];
        }
    }
    return LabelMask(PatchGrid{height, width, 1}, std::move(pixels));
}

void save_heatmap(const Eigen::MatrixXd& values, const fs::path& path) {
    if (values.size() == 0) {
        throw Error(ErrorKind::InvalidArgument, "cannot write an empty heatmap");
    }
    const double lo = values.minCoeff();
    const double hi = values.maxCoeff();
    const double range = hi - lo;
    std::vector<std::uint8_t> pixels;
    pixels.reserve(static_cast<std::size_t>(values.size()));
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        for (Eigen::Index c = 0; c < values.cols(); ++c) {
            const double t = range > 0 ? (values(r, c) - lo) / range : 0.0;
            pixels.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0)));
        }
    }
    write_file_atomic(path, pgm_bytes(static_cast<int>(values.cols()),
                                      static_cast<int>(values.rows()), pixels));
}

}  // namespace patchseg
