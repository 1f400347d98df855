#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "patchseg/affinity.hpp"
#include "patchseg/feature_io.hpp"

namespace patchseg::metrics {

enum class LabelMatching {
    kHungarian,  // predicted labels are matched to gt classes first
    kIdentity,   // labels compared as given
};

struct EvalReport {
    double miou = 0.0;
    double accuracy = 0.0;
    std::optional<double> frobenius;
};

/// Optimal one-to-one assignment maximizing the total score. score is
/// rows x cols; returns, for every row, its column or -1 when unassigned.
std::vector<int> max_weight_assignment(const Eigen::MatrixXd& score);

/// Mean IoU over the classes present in `gt`. Throws ShapeMismatch.
double miou(const LabelMask& pred, const LabelMask& gt,
            LabelMatching matching = LabelMatching::kHungarian);

/// Fraction of patches whose label agrees with `gt` after matching.
double pixel_accuracy(const LabelMask& pred, const LabelMask& gt,
                      LabelMatching matching = LabelMatching::kHungarian);

/// ||A - B||_F.
double frobenius_gap(const affinity::AffinityMatrix& a, const affinity::AffinityMatrix& b);

/// Matched mIoU and accuracy plus the Frobenius gap between the two
/// mask-induced affinities.
EvalReport evaluate(const LabelMask& pred, const LabelMask& gt);

}  // namespace patchseg::metrics
