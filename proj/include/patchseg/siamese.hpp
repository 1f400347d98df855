#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "patchseg/feature_io.hpp"

namespace patchseg::siamese {

/// Projector (one dense layer + ELU) and predictor (one dense layer), both
/// d -> d. Weights act on row tokens as x * W^T + b.
struct SiameseParams {
    Eigen::MatrixXd proj_weight;
    Eigen::VectorXd proj_bias;
    Eigen::MatrixXd pred_weight;
    Eigen::VectorXd pred_bias;

    int dim() const noexcept { return static_cast<int>(proj_bias.size()); }

    static SiameseParams zeros(int dim);
    static SiameseParams identity(int dim);
    /// Identity weights plus N(0, sigma^2) noise; zero biases.
    static SiameseParams near_identity(int dim, std::uint64_t seed, double sigma = 0.01);

    /// Throws InvalidArgument on shape or finiteness violations.
    void validate() const;

    SiameseParams& operator+=(const SiameseParams& other);
    SiameseParams& operator*=(double scale);
    double max_abs() const;
    bool all_finite() const;
    friend bool operator==(const SiameseParams&, const SiameseParams&) = default;
};

/// Spatial affine warp of the token grid. Translation is a fraction of the
/// grid extent; rotation is about the grid centre.
struct AffineParams {
    double rotation_deg = 0.0;
    double translate_x = 0.0;
    double translate_y = 0.0;
    double scale = 1.0;

    static AffineParams identity() { return {}; }
};

struct AffineRanges {
    double max_rotation_deg = 10.0;
    double max_translate_frac = 0.1;
    double min_scale = 0.9;
    double max_scale = 1.1;
};

AffineParams sample_affine(const AffineRanges& ranges, std::mt19937_64& rng);

/// The two augmented token sets; both n x d.
struct ViewPair {
    Eigen::MatrixXd alpha;
    Eigen::MatrixXd beta;
};

/// Warps the Hp x Wp x d token field channel-wise with bilinear sampling and
/// edge clamping. Identity parameters copy the tokens exactly.
Eigen::MatrixXd affine_view(const TokenFeatureMap& features, const AffineParams& params);
ViewPair random_affine_views(const TokenFeatureMap& features, const AffineParams& first,
                             const AffineParams& second);

inline double elu(double t) { return t > 0.0 ? t : std::expm1(t); }
inline double elu_derivative(double t) { return t > 0.0 ? 1.0 : std::exp(t); }

Eigen::MatrixXd project(const SiameseParams& params, const Eigen::MatrixXd& x);
Eigen::MatrixXd predict(const SiameseParams& params, const Eigen::MatrixXd& delta);

/// Negative cosine similarity; throws ZeroVector if either input has zero norm.
double cosine_distance(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

/// Mean over tokens of 1/2 [D(f^a, sg(delta^b)) + D(sg(delta^a), f^b)].
double symmetric_loss(const SiameseParams& params, const ViewPair& views);

enum class GradientMode {
    kStopGradient,  // targets delta^a / delta^b are constants
    kFullBackprop,  // gradient also flows through the target branch
};

SiameseParams loss_gradient(const SiameseParams& params, const ViewPair& views,
                            GradientMode mode = GradientMode::kStopGradient);

struct TrainConfig {
    int iterations = 10;
    int batch_size = 2;
    double learning_rate = 1e-2;
    std::uint64_t seed = 0;
    double init_sigma = 0.01;
    AffineRanges affine;

    void validate() const;
};

struct TrainResult {
    SiameseParams params;
    /// loss_trace[t] is the loss on a fixed probe batch after t updates;
    /// iterations + 1 entries.
    std::vector<double> loss_trace;
    /// Mean loss of each training batch, measured before its update.
    std::vector<double> batch_losses;
};

/// Per-image training: near-identity init, then `iterations` plain gradient
/// descent steps on the mean gradient of `batch_size` independent view pairs.
TrainResult train(const TokenFeatureMap& features, const TrainConfig& config);

/// Loss trace as "iter,loss" CSV lines with a header row.
std::string loss_trace_csv(const std::vector<double>& trace);

}  // namespace patchseg::siamese
