#include "patchseg/metrics.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <string>

#include "patchseg/error.hpp"

namespace patchseg::metrics {

std::vector<int> max_weight_assignment(const Eigen::MatrixXd& score) {
    const int rows = static_cast<int>(score.rows());
    const int cols = static_cast<int>(score.cols());
    std::vector<int> result(static_cast<std::size_t>(rows), -1);
    if (rows == 0 || cols == 0) return result;

    // Shortest augmenting path Hungarian method on a square, padded cost
    // matrix (cost = -score). 1-based potentials as in the classic layout.
    const int size = std::max(rows, cols);
    auto cost = [&](int r, int c) {
        return (r < rows && c < cols) ? -score(r, c) : 0.0;
    };
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(size) + 1, 0.0);
    std::vector<double> v(static_cast<std::size_t>(size) + 1, 0.0);
    std::vector<int> match(static_cast<std::size_t>(size) + 1, 0);  // column -> row
    std::vector<int> way(static_cast<std::size_t>(size) + 1, 0);
    for (int r = 1; r <= size; ++r) {
        match[0] = r;
        int col0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(size) + 1, inf);
        std::vector<char> used(static_cast<std::size_t>(size) + 1, 0);
        do {
            used[static_cast<std::size_t>(col0)] = 1;
            const int r0 = match[static_cast<std::size_t>(col0)];
            double delta = inf;
            int col1 = 0;
            for (int c = 1; c <= size; ++c) {
                if (used[static_cast<std::size_t>(c)]) continue;
                const double cur = cost(r0 - 1, c - 1) - u[static_cast<std::size_t>(r0)] -
                                   v[static_cast<std::size_t>(c)];
                if (cur < minv[static_cast<std::size_t>(c)]) {
                    minv[static_cast<std::size_t>(c)] = cur;
                    way[static_cast<std::size_t>(c)] = col0;
                }
                if (minv[static_cast<std::size_t>(c)] < delta) {
                    delta = minv[static_cast<std::size_t>(c)];
                    col1 = c;
                }
            }
            for (int c = 0; c <= size; ++c) {
                if (used[static_cast<std::size_t>(c)]) {
                    u[static_cast<std::size_t>(match[static_cast<std::size_t>(c)])] += delta;
                    v[static_cast<std::size_t>(c)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(c)] -= delta;
                }
            }
            col0 = col1;
        } while (match[static_cast<std::size_t>(col0)] != 0);
        do {
            const int col1 = way[static_cast<std::size_t>(col0)];
            match[static_cast<std::size_t>(col0)] = match[static_cast<std::size_t>(col1)];
            col0 = col1;
        } while (col0 != 0);
    }
    for (int c = 1; c <= size; ++c) {
        const int r = match[static_cast<std::size_t>(c)] - 1;
        if (r >= 0 && r < rows && c - 1 < cols) result[static_cast<std::size_t>(r)] = c - 1;
    }
    return result;
}

namespace {

void require_same_grid(const LabelMask& pred, const LabelMask& gt) {
    if (!pred.grid.same_shape(gt.grid) || pred.labels.size() != gt.labels.size()) {
        throw Error(ErrorKind::ShapeMismatch,
                    "prediction is " + std::to_string(pred.grid.rows) + "x" +
                        std::to_string(pred.grid.cols) + ", ground truth is " +
                        std::to_string(gt.grid.rows) + "x" + std::to_string(gt.grid.cols));
    }
}

// Dense contingency table between gt classes (rows) and predicted labels.
struct Contingency {
    std::vector<int> gt_classes;
    std::vector<int> pred_classes;
    Eigen::MatrixXd overlap;
    Eigen::VectorXd gt_size;
    Eigen::VectorXd pred_size;
};

Contingency contingency(const LabelMask& pred, const LabelMask& gt) {
    std::map<int, int> gt_index;
    std::map<int, int> pred_index;
    for (int l : gt.labels) gt_index.emplace(l, 0);
    for (int l : pred.labels) pred_index.emplace(l, 0);
    Contingency t;
    for (auto& [label, idx] : gt_index) {
        idx = static_cast<int>(t.gt_classes.size());
        t.gt_classes.push_back(label);
    }
    for (auto& [label, idx] : pred_index) {
        idx = static_cast<int>(t.pred_classes.size());
        t.pred_classes.push_back(label);
    }
    const auto g = static_cast<Eigen::Index>(t.gt_classes.size());
    const auto p = static_cast<Eigen::Index>(t.pred_classes.size());
    t.overlap = Eigen::MatrixXd::Zero(g, p);
    t.gt_size = Eigen::VectorXd::Zero(g);
    t.pred_size = Eigen::VectorXd::Zero(p);
    for (std::size_t i = 0; i < gt.labels.size(); ++i) {
        const int gi = gt_index[gt.labels[i]];
        const int pi = pred_index[pred.labels[i]];
        t.overlap(gi, pi) += 1.0;
        t.gt_size(gi) += 1.0;
        t.pred_size(pi) += 1.0;
    }
    return t;
}

// Column of the predicted label each gt class is compared against, or -1.
std::vector<int> pairing(const Contingency& t, const Eigen::MatrixXd& score, LabelMatching matching) {
    if (matching == LabelMatching::kHungarian) return max_weight_assignment(score);
    std::vector<int> out(t.gt_classes.size(), -1);
    for (std::size_t g = 0; g < t.gt_classes.size(); ++g) {
        const auto it = std::find(t.pred_classes.begin(), t.pred_classes.end(), t.gt_classes[g]);
        if (it != t.pred_classes.end()) out[g] = static_cast<int>(it - t.pred_classes.begin());
    }
    return out;
}

Eigen::MatrixXd iou_table(const Contingency& t) {
    Eigen::MatrixXd iou(t.overlap.rows(), t.overlap.cols());
    for (Eigen::Index g = 0; g < iou.rows(); ++g) {
        for (Eigen::Index p = 0; p < iou.cols(); ++p) {
            const double inter = t.overlap(g, p);
            iou(g, p) = inter / (t.gt_size(g) + t.pred_size(p) - inter);
        }
    }
    return iou;
}

}  // namespace

double miou(const LabelMask& pred, const LabelMask& gt, LabelMatching matching) {
    require_same_grid(pred, gt);
    if (gt.labels.empty()) throw Error(ErrorKind::InvalidArgument, "empty masks");
    const Contingency t = contingency(pred, gt);
    const Eigen::MatrixXd iou = iou_table(t);
    const std::vector<int> pair = pairing(t, iou, matching);
    double total = 0.0;
    for (std::size_t g = 0; g < pair.size(); ++g) {
        if (pair[g] >= 0) total += iou(static_cast<Eigen::Index>(g), pair[g]);
    }
    return total / static_cast<double>(t.gt_classes.size());
}

double pixel_accuracy(const LabelMask& pred, const LabelMask& gt, LabelMatching matching) {
    require_same_grid(pred, gt);
    if (gt.labels.empty()) throw Error(ErrorKind::InvalidArgument, "empty masks");
    const Contingency t = contingency(pred, gt);
    const std::vector<int> pair = pairing(t, t.overlap, matching);
    double agree = 0.0;
    for (std::size_t g = 0; g < pair.size(); ++g) {
        if (pair[g] >= 0) agree += t.overlap(static_cast<Eigen::Index>(g), pair[g]);
    }
    return agree / static_cast<double>(gt.labels.size());
}

double frobenius_gap(const affinity::AffinityMatrix& a, const affinity::AffinityMatrix& b) {
    if (a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols()) {
        throw Error(ErrorKind::ShapeMismatch, "affinities differ in size");
    }
    return (a.values - b.values).norm();
}

EvalReport evaluate(const LabelMask& pred, const LabelMask& gt) {
    EvalReport r;
    r.miou = miou(pred, gt);
    r.accuracy = pixel_accuracy(pred, gt);
    r.frobenius = frobenius_gap(affinity::mask_affinity(pred), affinity::mask_affinity(gt));
    return r;
}

}  // namespace patchseg::metrics
