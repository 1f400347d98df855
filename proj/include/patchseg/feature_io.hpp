#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace patchseg {

/// Geometry of the patch grid a vision transformer lays over an image.
/// Image size is rows*patch_size by cols*patch_size pixels.
struct PatchGrid {
    int rows = 0;
    int cols = 0;
    int patch_size = 1;

    /// Validates M % P == 0 and N % P == 0; throws InvalidSpec otherwise.
    static PatchGrid from_image(int image_height, int image_width, int patch_size);

    int image_height() const noexcept { return rows * patch_size; }
    int image_width() const noexcept { return cols * patch_size; }
    int size() const noexcept { return rows * cols; }
    int index(int row, int col) const noexcept { return row * cols + col; }
    bool on_border(int token) const noexcept;

    bool valid() const noexcept { return rows > 0 && cols > 0 && patch_size > 0; }
    bool same_shape(const PatchGrid& other) const noexcept {
        return rows == other.rows && cols == other.cols;
    }
    friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

/// Per-image patch tokens. Row i is token i; tokens are in row-major grid
/// order. Stored in single precision, matching the on-disk format.
class TokenFeatureMap {
public:
    TokenFeatureMap(PatchGrid grid, Eigen::MatrixXf tokens);

    const PatchGrid& grid() const noexcept { return grid_; }
    int size() const noexcept { return grid_.size(); }
    int dim() const noexcept { return static_cast<int>(tokens_.cols()); }
    const Eigen::MatrixXf& tokens() const noexcept { return tokens_; }
    Eigen::MatrixXd as_double() const { return tokens_.cast<double>(); }

    friend bool operator==(const TokenFeatureMap& a, const TokenFeatureMap& b) {
        return a.grid_ == b.grid_ && a.tokens_.rows() == b.tokens_.rows() &&
               a.tokens_.cols() == b.tokens_.cols() && a.tokens_ == b.tokens_;
    }

private:
    PatchGrid grid_;
    Eigen::MatrixXf tokens_;
};

/// Per-patch integer labels; 0 is background for binary masks.
struct LabelMask {
    PatchGrid grid;
    std::vector<int> labels;

    LabelMask() = default;
    LabelMask(PatchGrid g, std::vector<int> l);

    int size() const noexcept { return static_cast<int>(labels.size()); }
    int max_label() const noexcept;
    friend bool operator==(const LabelMask&, const LabelMask&) = default;
};

// SSAM v1 feature files.
inline constexpr std::uint32_t kFeatureFormatVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 24;

TokenFeatureMap load_features(const std::filesystem::path& path);
TokenFeatureMap parse_features(std::span<const std::uint8_t> bytes);
void save_features(const TokenFeatureMap& features, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_features(const TokenFeatureMap& features);

// Binary PGM (P5) masks at patch resolution, pixel intensity == label.
LabelMask load_mask(const std::filesystem::path& path, int patch_size = 1);
LabelMask parse_mask(std::span<const std::uint8_t> bytes, int patch_size = 1);
void save_mask(const LabelMask& mask, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_mask(const LabelMask& mask);

/// Nearest-neighbour upsampling to pixel resolution: every label is
/// replicated over its patch_size x patch_size block.
LabelMask upsample_to_pixels(const LabelMask& mask);

/// Min-max scales a real matrix to 0..255 and writes it as a P5 image.
/// A constant matrix maps to all zeros.
void save_heatmap(const Eigen::MatrixXd& values, const std::filesystem::path& path);

/// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// Synthetic planted-partition fixtures.
struct FixtureSpec {
    PatchGrid grid;
    int dim = 16;
    int block_count = 2;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

struct Fixture {
    TokenFeatureMap features;
    LabelMask mask;
};

/// Splits the grid into `block_count` contiguous rectangles: block rows of
/// near-equal height, each cut into near-equal-width blocks.
LabelMask block_layout(const PatchGrid& grid, int block_count);

/// Token i = e_{label_i} + N(0, sigma^2) per entry. Requires every label < dim.
Fixture fixture_from_labels(const LabelMask& planted, int dim, double noise_sigma,
                            std::uint64_t seed);

Fixture synthesize_fixture(const FixtureSpec& spec);

}  // namespace patchseg
