#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "patchseg/error.hpp"
#include "patchseg/feature_io.hpp"

namespace patchseg {

LabelMask block_layout(const PatchGrid& grid, int block_count) {
    if (!grid.valid()) {
        throw Error(ErrorKind::InvalidSpec, "patch grid dimensions must be positive");
    }
    if (block_count < 1 || block_count > grid.size()) {
        throw Error(ErrorKind::InvalidSpec,
                    "block count " + std::to_string(block_count) + " must lie in [1, " +
                        std::to_string(grid.size()) + "]");
    }
    // Blocks per band, chosen so blocks come out roughly square.
    const double aspect = static_cast<double>(grid.cols) / grid.rows;
    int per_band = static_cast<int>(std::lround(std::sqrt(block_count * aspect)));
    per_band = std::clamp(per_band, 1, std::min(grid.cols, block_count));
    int bands = (block_count + per_band - 1) / per_band;
    if (bands > grid.rows) {
        per_band = (block_count + grid.rows - 1) / grid.rows;
        bands = (block_count + per_band - 1) / per_band;
    }

    std::vector<int> labels(static_cast<std::size_t>(grid.size()));
    int first_label = 0;
    for (int band = 0; band < bands; ++band) {
        const int in_band = std::min(per_band, block_count - first_label);
        const int r0 = band * grid.rows / bands;
        const int r1 = (band + 1) * grid.rows / bands;
        for (int b = 0; b < in_band; ++b) {
            const int c0 = b * grid.cols / in_band;
            const int c1 = (b + 1) * grid.cols / in_band;
            for (int r = r0; r < r1; ++r) {
                for (int c = c0; c < c1; ++c) {
                    labels[static_cast<std::size_t>(grid.index(r, c))] = first_label + b;
                }
            }
        }
        first_label += in_band;
    }
    return LabelMask(grid, std::move(labels));
}

Fixture fixture_from_labels(const LabelMask& planted, int dim, double noise_sigma,
                            std::uint64_t seed) {
    if (dim < 1) {
        throw Error(ErrorKind::InvalidSpec, "token dimension must be positive");
    }
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
        throw Error(ErrorKind::InvalidSpec, "noise sigma must be finite and nonnegative");
    }
    if (planted.max_label() >= dim) {
        throw Error(ErrorKind::InvalidSpec,
                    "orthonormal prototypes need dim >= block count (dim " + std::to_string(dim) +
                        ", max label " + std::to_string(planted.max_label()) + ")");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    Eigen::MatrixXf tokens(planted.size(), dim);
    for (int i = 0; i < planted.size(); ++i) {
        for (int j = 0; j < dim; ++j) {
            const double prototype = (j == planted.labels[static_cast<std::size_t>(i)]) ? 1.0 : 0.0;
            const double z = noise(rng);
            tokens(i, j) = static_cast<float>(noise_sigma > 0.0 ? prototype + noise_sigma * z
                                                                : prototype);
        }
    }
    return Fixture{TokenFeatureMap(planted.grid, std::move(tokens)), planted};
}

Fixture synthesize_fixture(const FixtureSpec& spec) {
    if (spec.block_count < 2) {
        throw Error(ErrorKind::InvalidSpec, "a fixture needs at least two blocks");
    }
    return fixture_from_labels(block_layout(spec.grid, spec.block_count), spec.dim,
                               spec.noise_sigma, spec.seed);
}

}  // namespace patchseg
