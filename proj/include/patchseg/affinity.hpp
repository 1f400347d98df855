#pragma once

#include <filesystem>
#include <string_view>

#include <Eigen/Dense>

#include "patchseg/feature_io.hpp"
#include "patchseg/siamese.hpp"

namespace patchseg::affinity {

enum class AffinityKind { kVanilla, kVanillaUnnormalized, kSemantic, kCombined, kMaskInduced };

std::string_view to_string(AffinityKind kind);

/// Dense symmetric n x n patch affinity, tagged with how it was built.
struct AffinityMatrix {
    Eigen::MatrixXd values;
    AffinityKind kind = AffinityKind::kVanilla;

    int size() const noexcept { return static_cast<int>(values.rows()); }
};

/// Weight of the semantic term in the combined affinity.
class Kappa {
public:
    static constexpr double kDefault = 0.1;

    constexpr Kappa() = default;
    explicit Kappa(double value);
    double value() const noexcept { return value_; }

private:
    double value_ = kDefault;
};

/// G = F F^T; with `normalize`, the scalar mean of G is subtracted from every
/// entry (kind vanilla), otherwise G is returned as is (vanilla_unnormalized).
AffinityMatrix vanilla_affinity(const TokenFeatureMap& features, bool normalize = true);

/// Z Z^T with z_i = predict(project(f_i)) on the untransformed tokens.
AffinityMatrix semantic_affinity(const siamese::SiameseParams& params,
                                 const TokenFeatureMap& features);

/// W_A + kappa * W_SA. Accepts either vanilla kind as the first argument.
AffinityMatrix combine(const AffinityMatrix& vanilla, const AffinityMatrix& semantic, Kappa kappa);

/// Same-label indicator matrix.
AffinityMatrix mask_affinity(const LabelMask& mask);

/// Reuses the SSAM container with rows = cols = n, dim = 1, patch = 1.
/// Values are narrowed to single precision.
void save_affinity(const AffinityMatrix& w, const std::filesystem::path& path);
Eigen::MatrixXd load_affinity_values(const std::filesystem::path& path);

void save_affinity_heatmap(const AffinityMatrix& w, const std::filesystem::path& path);

}  // namespace patchseg::affinity
