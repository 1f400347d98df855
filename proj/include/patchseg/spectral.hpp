#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "patchseg/affinity.hpp"
#include "patchseg/feature_io.hpp"
#include "patchseg/kmeans.hpp"

namespace patchseg::spectral {

/// Ascending eigenvalues with eigenvector j in column j.
struct EigenBasis {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenvectors;

    int size() const noexcept { return static_cast<int>(eigenvalues.size()); }
};

/// D^{-1/2} (D - W+) D^{-1/2} where W+ clamps negative affinities to zero and
/// D holds the row sums of W+. Zero-degree rows get a zero scale factor.
/// Throws AllZeroAffinity when nothing survives the clamp.
Eigen::MatrixXd normalized_laplacian(const affinity::AffinityMatrix& w);

/// The trivial null vector D^{1/2} 1, unit-normalized (the y_0 direction).
Eigen::VectorXd trivial_eigenvector(const affinity::AffinityMatrix& w);

/// The m algebraically smallest eigenpairs of a symmetric matrix. Each
/// eigenvector's first component with |v| > 1e-12 is made positive.
/// Throws NotSymmetric if |a - a^T| exceeds 1e-9 anywhere.
EigenBasis eigendecompose(const Eigen::MatrixXd& a, int m);

/// y_1 .. y_m of the normalized Laplacian of `w`, i.e. its smallest eigenpairs
/// orthogonal to the trivial direction. Computed on L + 4 y_0 y_0^T, which
/// moves y_0 to the top of the spectrum and leaves every other pair intact;
/// this keeps y_1 well defined when the clamped graph splits into pieces.
EigenBasis nontrivial_eigenbasis(const affinity::AffinityMatrix& w, int m);

struct FiedlerOptions {
    double threshold = 0.0;
    /// Relative gap below which lambda_1 and lambda_2 count as equal.
    double degeneracy_tolerance = 1e-9;
};

struct ObjectSegmentation {
    LabelMask mask;            // 1 = foreground, 0 = background
    Eigen::VectorXd fiedler;   // y_1
    double fiedler_value = 0.0;
    bool degenerate = false;   // y_1 not unique; mask is all background
};

/// Sign cut of the Fiedler vector. The smaller side is foreground; equal
/// sides go to the one with fewer border patches, then to the side not
/// holding patch 0.
ObjectSegmentation fiedler_object_mask(const affinity::AffinityMatrix& w, const PatchGrid& grid,
                                       const FiedlerOptions& options = {});

struct SegmentLabeling {
    PatchGrid grid;
    std::vector<int> labels;  // contiguous 0..count-1
    std::optional<int> background_label;

    int count() const noexcept;
    LabelMask as_mask() const { return LabelMask(grid, labels); }
};

/// K-means over the rows of the spectral embedding. `num_ev` counts the
/// smallest eigenvectors including y_0, which is dropped; the embedding is
/// [y_1 .. y_c] with c = min(num_ev, num_segments, n) - 1. Labels are
/// renumbered in order of first appearance.
SegmentLabeling discrete_segments(const affinity::AffinityMatrix& w, const PatchGrid& grid,
                                  int num_ev = 15, int num_segments = 15, std::uint64_t seed = 0);

/// Marks the most populous label as background (smaller id wins ties).
SegmentLabeling identify_background(SegmentLabeling s);

struct SegmentFeature {
    int label = 0;
    Eigen::VectorXd feature;
};

/// L2-normalized mean token of every non-background segment, by label.
std::vector<SegmentFeature> segment_features(const TokenFeatureMap& features,
                                             const SegmentLabeling& s);

/// Reshapes a per-patch vector onto the grid for heatmap export.
Eigen::MatrixXd grid_image(const Eigen::VectorXd& values, const PatchGrid& grid);

}  // namespace patchseg::spectral
