#include "patchseg/affinity.hpp"

#include <cmath>
#include <string>

#include "patchseg/error.hpp"

namespace patchseg::affinity {

std::string_view to_string(AffinityKind kind) {
    switch (kind) {
        case AffinityKind::kVanilla: return "vanilla";
        case AffinityKind::kVanillaUnnormalized: return "vanilla_unnormalized";
        case AffinityKind::kSemantic: return "semantic";
        case AffinityKind::kCombined: return "combined";
        case AffinityKind::kMaskInduced: return "mask_induced";
    }
    return "unknown";
}

Kappa::Kappa(double value) : value_(value) {
    if (!std::isfinite(value) || value < 0.0) {
        throw Error(ErrorKind::InvalidArgument, "kappa must be finite and nonnegative");
    }
}

AffinityMatrix vanilla_affinity(const TokenFeatureMap& features, bool normalize) {
    const Eigen::MatrixXd f = features.as_double();
    Eigen::MatrixXd gram = f * f.transpose();
    if (!normalize) {
        return AffinityMatrix{std::move(gram), AffinityKind::kVanillaUnnormalized};
    }
    gram.array() -= gram.mean();
    return AffinityMatrix{std::move(gram), AffinityKind::kVanilla};
}

AffinityMatrix semantic_affinity(const siamese::SiameseParams& params,
                                 const TokenFeatureMap& features) {
    params.validate();
    const Eigen::MatrixXd z = siamese::predict(params, siamese::project(params, features.as_double()));
    Eigen::MatrixXd gram = z * z.transpose();
    if (!gram.allFinite()) {
        throw Error(ErrorKind::DivergedLoss, "semantic affinity has non-finite entries");
    }
    return AffinityMatrix{std::move(gram), AffinityKind::kSemantic};
}

AffinityMatrix combine(const AffinityMatrix& vanilla, const AffinityMatrix& semantic, Kappa kappa) {
    if (vanilla.kind != AffinityKind::kVanilla && vanilla.kind != AffinityKind::kVanillaUnnormalized) {
        throw Error(ErrorKind::KindMismatch, "first operand must be a vanilla affinity, got " +
                                                 std::string(to_string(vanilla.kind)));
    }
    if (semantic.kind != AffinityKind::kSemantic) {
        throw Error(ErrorKind::KindMismatch, "second operand must be a semantic affinity, got " +
                                                 std::string(to_string(semantic.kind)));
    }
    if (vanilla.values.rows() != semantic.values.rows() ||
        vanilla.values.cols() != semantic.values.cols()) {
        throw Error(ErrorKind::ShapeMismatch,
                    "affinities are " + std::to_string(vanilla.size()) + " and " +
                        std::to_string(semantic.size()) + " patches");
    }
    return AffinityMatrix{vanilla.values + kappa.value() * semantic.values, AffinityKind::kCombined};
}

AffinityMatrix mask_affinity(const LabelMask& mask) {
    const int n = mask.size();
    Eigen::MatrixXd w(n, n);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            w(i, j) = mask.labels[static_cast<std::size_t>(i)] == mask.labels[static_cast<std::size_t>(j)]
                          ? 1.0
                          : 0.0;
        }
    }
    return AffinityMatrix{std::move(w), AffinityKind::kMaskInduced};
}

void save_affinity(const AffinityMatrix& w, const std::filesystem::path& path) {
    const int n = w.size();
    if (n < 1) throw Error(ErrorKind::InvalidArgument, "cannot save an empty affinity");
    Eigen::MatrixXf flat(static_cast<Eigen::Index>(n) * n, 1);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            flat(static_cast<Eigen::Index>(i) * n + j, 0) = static_cast<float>(w.values(i, j));
        }
    }
    save_features(TokenFeatureMap(PatchGrid{n, n, 1}, std::move(flat)), path);
}

Eigen::MatrixXd load_affinity_values(const std::filesystem::path& path) {
    const TokenFeatureMap f = load_features(path);
    if (f.dim() != 1 || f.grid().rows != f.grid().cols) {
        throw Error(ErrorKind::BadHeader, "affinity files are square grids with dim 1");
    }
    const int n = f.grid().rows;
    Eigen::MatrixXd w(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) w(i, j) = f.tokens()(static_cast<Eigen::Index>(i) * n + j, 0);
    }
    return w;
}

void save_affinity_heatmap(const AffinityMatrix& w, const std::filesystem::path& path) {
    save_heatmap(w.values, path);
}

}  // namespace patchseg::affinity
