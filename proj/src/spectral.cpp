#include "patchseg/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

#include "patchseg/error.hpp"

namespace patchseg::spectral {

namespace {

constexpr double kSymmetryTolerance = 1e-9;
constexpr double kSignTolerance = 1e-12;
constexpr double kDeflationShift = 4.0;

void require_symmetric(const Eigen::MatrixXd& a) {
    if (a.rows() != a.cols()) {
        throw Error(ErrorKind::ShapeMismatch, "matrix is not square");
    }
    const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
    if (!(asym <= kSymmetryTolerance)) {
        throw Error(ErrorKind::NotSymmetric,
                    "max |a_ij - a_ji| = " + std::to_string(asym) + " exceeds 1e-9");
    }
}

Eigen::VectorXd clamped_degrees(const Eigen::MatrixXd& w) {
    return w.cwiseMax(0.0).rowwise().sum();
}

}  // namespace

Eigen::MatrixXd normalized_laplacian(const affinity::AffinityMatrix& w) {
    require_symmetric(w.values);
    if (!w.values.allFinite()) {
        throw Error(ErrorKind::InvalidArgument, "affinity has non-finite entries");
    }
    const Eigen::MatrixXd clamped = w.values.cwiseMax(0.0);
    const Eigen::VectorXd degree = clamped.rowwise().sum();
    if (!(degree.maxCoeff() > 0.0)) {
        throw Error(ErrorKind::AllZeroAffinity, "every affinity entry is <= 0 after clamping");
    }
    const Eigen::VectorXd inv_sqrt =
        degree.unaryExpr([](double d) { return d > 0.0 ? 1.0 / std::sqrt(d) : 0.0; });
    Eigen::MatrixXd lap = -clamped;
    lap.diagonal() += degree;
    lap = inv_sqrt.asDiagonal() * lap * inv_sqrt.asDiagonal();
    // Exact symmetry keeps the eigensolver contract happy.
    return 0.5 * (lap + lap.transpose());
}

Eigen::VectorXd trivial_eigenvector(const affinity::AffinityMatrix& w) {
    Eigen::VectorXd v = clamped_degrees(w.values).cwiseSqrt();
    const double norm = v.norm();
    if (!(norm > 0.0)) {
        throw Error(ErrorKind::AllZeroAffinity, "every affinity entry is <= 0 after clamping");
    }
    return v / norm;
}

EigenBasis eigendecompose(const Eigen::MatrixXd& a, int m) {
    require_symmetric(a);
    if (m < 1 || m > a.rows()) {
        throw Error(ErrorKind::InvalidArgument, "requested " + std::to_string(m) +
                                                    " eigenpairs of a " +
                                                    std::to_string(a.rows()) + "x" +
                                                    std::to_string(a.rows()) + " matrix");
    }
    if (!a.allFinite()) {
        throw Error(ErrorKind::InvalidArgument, "matrix has non-finite entries");
    }
    const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success) {
        throw Error(ErrorKind::NoConvergence, "symmetric eigensolver did not converge");
    }
    EigenBasis basis;
    basis.eigenvalues = solver.eigenvalues().head(m);
    basis.eigenvectors = solver.eigenvectors().leftCols(m);
    for (int j = 0; j < m; ++j) {
        auto col = basis.eigenvectors.col(j);
        for (Eigen::Index i = 0; i < col.size(); ++i) {
            if (std::abs(col(i)) > kSignTolerance) {
                if (col(i) < 0.0) col = -col;
                break;
            }
        }
    }
    return basis;
}

EigenBasis nontrivial_eigenbasis(const affinity::AffinityMatrix& w, int m) {
    const int n = w.size();
    if (m < 1 || m > n - 1) {
        throw Error(ErrorKind::InvalidArgument,
                    "need 1 <= m <= n-1 nontrivial eigenvectors, got m=" + std::to_string(m) +
                        " for n=" + std::to_string(n));
    }
    Eigen::MatrixXd deflated = normalized_laplacian(w);
    const Eigen::VectorXd y0 = trivial_eigenvector(w);
    deflated.noalias() += kDeflationShift * y0 * y0.transpose();
    deflated = 0.5 * (deflated + deflated.transpose());
    return eigendecompose(deflated, m);
}

ObjectSegmentation fiedler_object_mask(const affinity::AffinityMatrix& w, const PatchGrid& grid,
                                       const FiedlerOptions& options) {
    const int n = w.size();
    if (n < 2) throw Error(ErrorKind::InvalidArgument, "object segmentation needs n >= 2");
    if (grid.size() != n) {
        throw Error(ErrorKind::ShapeMismatch, "affinity size does not match the patch grid");
    }
    const EigenBasis basis = nontrivial_eigenbasis(w, std::min(2, n - 1));

    ObjectSegmentation out;
    out.fiedler = basis.eigenvectors.col(0);
    out.fiedler_value = basis.eigenvalues(0);
    if (basis.size() > 1) {
        const double gap = basis.eigenvalues(1) - basis.eigenvalues(0);
        out.degenerate = gap <= options.degeneracy_tolerance *
                                    std::max(1.0, std::abs(basis.eigenvalues(1)));
    }
    if (out.degenerate) {
        out.mask = LabelMask(grid, std::vector<int>(static_cast<std::size_t>(n), 0));
        return out;
    }

    std::vector<int> side(static_cast<std::size_t>(n));
    int positive = 0;
    int positive_border = 0;
    int border = 0;
    for (int i = 0; i < n; ++i) {
        side[static_cast<std::size_t>(i)] = out.fiedler(i) > options.threshold ? 1 : 0;
        positive += side[static_cast<std::size_t>(i)];
        if (grid.on_border(i)) {
            ++border;
            positive_border += side[static_cast<std::size_t>(i)];
        }
    }
    const int negative = n - positive;
    const int negative_border = border - positive_border;
    int foreground_side;
    if (positive != negative) {
        foreground_side = positive < negative ? 1 : 0;
    } else if (positive_border != negative_border) {
        foreground_side = positive_border < negative_border ? 1 : 0;
    } else {
        foreground_side = side[0] == 1 ? 0 : 1;
    }
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        labels[static_cast<std::size_t>(i)] = side[static_cast<std::size_t>(i)] == foreground_side ? 1 : 0;
    }
    out.mask = LabelMask(grid, std::move(labels));
    return out;
}

int SegmentLabeling::count() const noexcept {
    return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

SegmentLabeling discrete_segments(const affinity::AffinityMatrix& w, const PatchGrid& grid,
                                  int num_ev, int num_segments, std::uint64_t seed) {
    const int n = w.size();
    if (grid.size() != n) {
        throw Error(ErrorKind::ShapeMismatch, "affinity size does not match the patch grid");
    }
    if (num_ev < 1 || num_segments < 1) {
        throw Error(ErrorKind::InvalidArgument, "eigenvector and segment counts must be >= 1");
    }
    if (n < num_segments) {
        throw Error(ErrorKind::TooFewPoints, std::to_string(n) + " patches cannot form " +
                                                 std::to_string(num_segments) + " segments");
    }
    SegmentLabeling out;
    out.grid = grid;
    if (num_segments == 1 || n < 2) {
        out.labels.assign(static_cast<std::size_t>(n), 0);
        return out;
    }
    // num_ev counts y_0; k clusters need at most k - 1 nontrivial directions.
    const int columns = std::min({num_ev - 1, num_segments - 1, n - 1});
    if (columns < 1) {
        throw Error(ErrorKind::InvalidArgument, "need at least two eigenvectors (y_0 and y_1)");
    }
    const EigenBasis basis = nontrivial_eigenbasis(w, columns);
    const ClusterModel model = kmeans_fit(basis.eigenvectors, num_segments, seed);

    std::unordered_map<int, int> renumber;
    out.labels.reserve(static_cast<std::size_t>(n));
    for (int l : model.labels) {
        auto [it, inserted] = renumber.try_emplace(l, static_cast<int>(renumber.size()));
        out.labels.push_back(it->second);
    }
    return out;
}

SegmentLabeling identify_background(SegmentLabeling s) {
    const int count = s.count();
    if (count == 0) return s;
    std::vector<int> sizes(static_cast<std::size_t>(count), 0);
    for (int l : s.labels) ++sizes[static_cast<std::size_t>(l)];
    s.background_label = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    return s;
}

std::vector<SegmentFeature> segment_features(const TokenFeatureMap& features,
                                             const SegmentLabeling& s) {
    if (static_cast<int>(s.labels.size()) != features.size()) {
        throw Error(ErrorKind::ShapeMismatch, "segment labels do not match token count");
    }
    const int count = s.count();
    const Eigen::MatrixXd tokens = features.as_double();
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(count, features.dim());
    std::vector<int> sizes(static_cast<std::size_t>(count), 0);
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
        sums.row(s.labels[i]) += tokens.row(static_cast<Eigen::Index>(i));
        ++sizes[static_cast<std::size_t>(s.labels[i])];
    }
    std::vector<SegmentFeature> out;
    for (int l = 0; l < count; ++l) {
        if (s.background_label && *s.background_label == l) continue;
        if (sizes[static_cast<std::size_t>(l)] == 0) {
            throw Error(ErrorKind::EmptySegment, "segment " + std::to_string(l) + " has no patches");
        }
        Eigen::VectorXd mean = sums.row(l).transpose() / sizes[static_cast<std::size_t>(l)];
        const double norm = mean.norm();
        if (norm == 0.0) {
            throw Error(ErrorKind::ZeroVector, "segment " + std::to_string(l) + " has a zero mean token");
        }
        out.push_back(SegmentFeature{l, mean / norm});
    }
    return out;
}

Eigen::MatrixXd grid_image(const Eigen::VectorXd& values, const PatchGrid& grid) {
    if (values.size() != grid.size()) {
        throw Error(ErrorKind::ShapeMismatch, "vector length does not match the patch grid");
    }
    Eigen::MatrixXd image(grid.rows, grid.cols);
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) image(r, c) = values(grid.index(r, c));
    }
    return image;
}

}  // namespace patchseg::spectral
