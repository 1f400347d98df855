#include "patchseg/siamese.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "patchseg/error.hpp"
#include "patchseg/seed.hpp"

namespace patchseg::siamese {

SiameseParams SiameseParams::zeros(int dim) {
    return SiameseParams{Eigen::MatrixXd::Zero(dim, dim), Eigen::VectorXd::Zero(dim),
                         Eigen::MatrixXd::Zero(dim, dim), Eigen::VectorXd::Zero(dim)};
}

SiameseParams SiameseParams::identity(int dim) {
    return SiameseParams{Eigen::MatrixXd::Identity(dim, dim), Eigen::VectorXd::Zero(dim),
                         Eigen::MatrixXd::Identity(dim, dim), Eigen::VectorXd::Zero(dim)};
}

SiameseParams SiameseParams::near_identity(int dim, std::uint64_t seed, double sigma) {
    SiameseParams p = identity(dim);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (Eigen::Index c = 0; c < dim; ++c) {
        for (Eigen::Index r = 0; r < dim; ++r) p.proj_weight(r, c) += noise(rng);
    }
    for (Eigen::Index c = 0; c < dim; ++c) {
        for (Eigen::Index r = 0; r < dim; ++r) p.pred_weight(r, c) += noise(rng);
    }
    return p;
}

void SiameseParams::validate() const {
    const auto d = proj_bias.size();
    if (d < 1 || proj_weight.rows() != d || proj_weight.cols() != d || pred_weight.rows() != d ||
        pred_weight.cols() != d || pred_bias.size() != d) {
        throw Error(ErrorKind::InvalidArgument, "siamese weights must be d x d with length-d biases");
    }
    if (!all_finite()) {
        throw Error(ErrorKind::InvalidArgument, "siamese parameters contain NaN or Inf");
    }
}

SiameseParams& SiameseParams::operator+=(const SiameseParams& other) {
    proj_weight += other.proj_weight;
    proj_bias += other.proj_bias;
    pred_weight += other.pred_weight;
    pred_bias += other.pred_bias;
    return *this;
}

SiameseParams& SiameseParams::operator*=(double scale) {
    proj_weight *= scale;
    proj_bias *= scale;
    pred_weight *= scale;
    pred_bias *= scale;
    return *this;
}

double SiameseParams::max_abs() const {
    return std::max({proj_weight.cwiseAbs().maxCoeff(), proj_bias.cwiseAbs().maxCoeff(),
                     pred_weight.cwiseAbs().maxCoeff(), pred_bias.cwiseAbs().maxCoeff()});
}

bool SiameseParams::all_finite() const {
    return proj_weight.allFinite() && proj_bias.allFinite() && pred_weight.allFinite() &&
           pred_bias.allFinite();
}

// ---------------------------------------------------------------------------
// Views

AffineParams sample_affine(const AffineRanges& ranges, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> rotation(-ranges.max_rotation_deg, ranges.max_rotation_deg);
    std::uniform_real_distribution<double> shift(-ranges.max_translate_frac, ranges.max_translate_frac);
    std::uniform_real_distribution<double> scale(ranges.min_scale, ranges.max_scale);
    AffineParams p;
    p.rotation_deg = rotation(rng);
    p.translate_x = shift(rng);
    p.translate_y = shift(rng);
    p.scale = scale(rng);
    return p;
}

Eigen::MatrixXd affine_view(const TokenFeatureMap& features, const AffineParams& params) {
    if (!(params.scale > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "affine scale must be positive");
    }
    const PatchGrid& grid = features.grid();
    const Eigen::MatrixXd src = features.as_double();
    const int rows = grid.rows;
    const int cols = grid.cols;
    const double cx = (cols - 1) / 2.0;
    const double cy = (rows - 1) / 2.0;
    const double theta = params.rotation_deg * std::numbers::pi / 180.0;
    const double cos_t = std::cos(theta);
    const double sin_t = std::sin(theta);
    const double tx = params.translate_x * cols;
    const double ty = params.translate_y * rows;

    Eigen::MatrixXd out(src.rows(), src.cols());
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            // Inverse map: output position -> source position.
            const double dx = c - cx - tx;
            const double dy = r - cy - ty;
            double x = (cos_t * dx + sin_t * dy) / params.scale + cx;
            double y = (-sin_t * dx + cos_t * dy) / params.scale + cy;
            x = std::clamp(x, 0.0, static_cast<double>(cols - 1));
            y = std::clamp(y, 0.0, static_cast<double>(rows - 1));
            const int x0 = static_cast<int>(std::floor(x));
            const int y0 = static_cast<int>(std::floor(y));
            const int x1 = std::min(x0 + 1, cols - 1);
            const int y1 = std::min(y0 + 1, rows - 1);
            const double fx = x - x0;
            const double fy = y - y0;
            out.row(grid.index(r, c)) =
                (1.0 - fy) * ((1.0 - fx) * src.row(grid.index(y0, x0)) + fx * src.row(grid.index(y0, x1))) +
                fy * ((1.0 - fx) * src.row(grid.index(y1, x0)) + fx * src.row(grid.index(y1, x1)));
        }
    }
    return out;
}

ViewPair random_affine_views(const TokenFeatureMap& features, const AffineParams& first,
                             const AffineParams& second) {
    return ViewPair{affine_view(features, first), affine_view(features, second)};
}

// ---------------------------------------------------------------------------
// Heads

namespace {

void check_input(const SiameseParams& params, const Eigen::MatrixXd& x) {
    if (x.cols() != params.dim()) {
        throw Error(ErrorKind::ShapeMismatch,
                    "input has " + std::to_string(x.cols()) + " columns, heads expect " +
                        std::to_string(params.dim()));
    }
}

Eigen::MatrixXd pre_activation(const SiameseParams& params, const Eigen::MatrixXd& x) {
    return (x * params.proj_weight.transpose()).rowwise() + params.proj_bias.transpose();
}

}  // namespace

Eigen::MatrixXd project(const SiameseParams& params, const Eigen::MatrixXd& x) {
    check_input(params, x);
    return pre_activation(params, x).unaryExpr([](double t) { return elu(t); });
}

Eigen::MatrixXd predict(const SiameseParams& params, const Eigen::MatrixXd& delta) {
    check_input(params, delta);
    return (delta * params.pred_weight.transpose()).rowwise() + params.pred_bias.transpose();
}

double cosine_distance(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    if (u.size() != v.size()) {
        throw Error(ErrorKind::ShapeMismatch, "cosine distance needs equal-length vectors");
    }
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu == 0.0 || nv == 0.0) {
        throw Error(ErrorKind::ZeroVector, "cosine distance of a zero-norm vector");
    }
    return std::clamp(-u.dot(v) / (nu * nv), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Loss and gradient

namespace {

struct Branch {
    Eigen::MatrixXd pre;        // x W_p^T + b_p
    Eigen::MatrixXd projected;  // delta
    Eigen::MatrixXd predicted;  // f
};

Branch forward(const SiameseParams& params, const Eigen::MatrixXd& x) {
    check_input(params, x);
    Branch b;
    b.pre = pre_activation(params, x);
    b.projected = b.pre.unaryExpr([](double t) { return elu(t); });
    b.predicted = predict(params, b.projected);
    return b;
}

void check_views(const SiameseParams& params, const ViewPair& views) {
    params.validate();
    if (views.alpha.rows() != views.beta.rows() || views.alpha.cols() != views.beta.cols() ||
        views.alpha.rows() < 1) {
        throw Error(ErrorKind::ShapeMismatch, "view pair shapes differ or are empty");
    }
}

// d/du of -cos(u, v).
Eigen::RowVectorXd cosine_grad_first(const Eigen::RowVectorXd& u, const Eigen::RowVectorXd& v) {
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu == 0.0 || nv == 0.0) {
        throw Error(ErrorKind::ZeroVector, "zero-norm vector in loss gradient");
    }
    const Eigen::RowVectorXd uh = u / nu;
    const Eigen::RowVectorXd vh = v / nv;
    return -(vh - uh.dot(vh) * uh) / nu;
}

}  // namespace

double symmetric_loss(const SiameseParams& params, const ViewPair& views) {
    check_views(params, views);
    const Branch a = forward(params, views.alpha);
    const Branch b = forward(params, views.beta);
    const Eigen::Index n = views.alpha.rows();
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        total += 0.5 * (cosine_distance(a.predicted.row(i).transpose(), b.projected.row(i).transpose()) +
                        cosine_distance(a.projected.row(i).transpose(), b.predicted.row(i).transpose()));
    }
    return total / static_cast<double>(n);
}

SiameseParams loss_gradient(const SiameseParams& params, const ViewPair& views, GradientMode mode) {
    check_views(params, views);
    const Branch a = forward(params, views.alpha);
    const Branch b = forward(params, views.beta);
    const Eigen::Index n = views.alpha.rows();
    const double w = 0.5 / static_cast<double>(n);

    // Upstream gradients w.r.t. each branch's predictor output and projector output.
    Eigen::MatrixXd g_pred_a(n, params.dim());
    Eigen::MatrixXd g_pred_b(n, params.dim());
    Eigen::MatrixXd g_proj_a = Eigen::MatrixXd::Zero(n, params.dim());
    Eigen::MatrixXd g_proj_b = Eigen::MatrixXd::Zero(n, params.dim());
    for (Eigen::Index i = 0; i < n; ++i) {
        g_pred_a.row(i) = w * cosine_grad_first(a.predicted.row(i), b.projected.row(i));
        g_pred_b.row(i) = w * cosine_grad_first(b.predicted.row(i), a.projected.row(i));
        if (mode == GradientMode::kFullBackprop) {
            g_proj_b.row(i) = w * cosine_grad_first(b.projected.row(i), a.predicted.row(i));
            g_proj_a.row(i) = w * cosine_grad_first(a.projected.row(i), b.predicted.row(i));
        }
    }

    SiameseParams grad;
    grad.pred_weight = g_pred_a.transpose() * a.projected + g_pred_b.transpose() * b.projected;
    grad.pred_bias = (g_pred_a.colwise().sum() + g_pred_b.colwise().sum()).transpose();

    g_proj_a += g_pred_a * params.pred_weight;
    g_proj_b += g_pred_b * params.pred_weight;
    const Eigen::MatrixXd g_pre_a =
        g_proj_a.cwiseProduct(a.pre.unaryExpr([](double t) { return elu_derivative(t); }));
    const Eigen::MatrixXd g_pre_b =
        g_proj_b.cwiseProduct(b.pre.unaryExpr([](double t) { return elu_derivative(t); }));
    grad.proj_weight = g_pre_a.transpose() * views.alpha + g_pre_b.transpose() * views.beta;
    grad.proj_bias = (g_pre_a.colwise().sum() + g_pre_b.colwise().sum()).transpose();
    return grad;
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
    if (iterations < 1) throw Error(ErrorKind::InvalidArgument, "iterations must be >= 1");
    if (batch_size < 1) throw Error(ErrorKind::InvalidArgument, "batch size must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw Error(ErrorKind::InvalidArgument, "learning rate must be finite and nonnegative");
    }
    if (!(init_sigma >= 0.0) || !std::isfinite(init_sigma)) {
        throw Error(ErrorKind::InvalidArgument, "init sigma must be finite and nonnegative");
    }
    if (!(affine.min_scale > 0.0) || affine.min_scale > affine.max_scale ||
        affine.max_rotation_deg < 0.0 || affine.max_translate_frac < 0.0) {
        throw Error(ErrorKind::InvalidArgument, "affine ranges are inconsistent");
    }
}

namespace {

std::vector<ViewPair> draw_batch(const TokenFeatureMap& features, const AffineRanges& ranges,
                                 int count, std::mt19937_64& rng) {
    std::vector<ViewPair> batch;
    batch.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        const AffineParams first = sample_affine(ranges, rng);
        const AffineParams second = sample_affine(ranges, rng);
        batch.push_back(random_affine_views(features, first, second));
    }
    return batch;
}

double batch_loss(const SiameseParams& params, const std::vector<ViewPair>& batch) {
    double total = 0.0;
    for (const auto& views : batch) total += symmetric_loss(params, views);
    return total / static_cast<double>(batch.size());
}

}  // namespace

TrainResult train(const TokenFeatureMap& features, const TrainConfig& config) {
    config.validate();
    TrainResult result;
    result.params = SiameseParams::near_identity(features.dim(), derive_seed(config.seed, "init"),
                                                 config.init_sigma);
    std::mt19937_64 view_rng(derive_seed(config.seed, "affine"));
    std::mt19937_64 probe_rng(derive_seed(config.seed, "probe"));
    const auto probe = draw_batch(features, config.affine, config.batch_size, probe_rng);

    auto record_probe = [&] {
        const double loss = batch_loss(result.params, probe);
        if (!std::isfinite(loss)) {
            throw Error(ErrorKind::DivergedLoss, "probe loss became non-finite");
        }
        result.loss_trace.push_back(loss);
    };

    for (int step = 0; step < config.iterations; ++step) {
        record_probe();
        const auto batch = draw_batch(features, config.affine, config.batch_size, view_rng);
        SiameseParams grad = SiameseParams::zeros(features.dim());
        double loss = 0.0;
        for (const auto& views : batch) {
            loss += symmetric_loss(result.params, views);
            grad += loss_gradient(result.params, views);
        }
        loss /= static_cast<double>(batch.size());
        if (!std::isfinite(loss) || !grad.all_finite()) {
            throw Error(ErrorKind::DivergedLoss,
                        "training loss became non-finite at step " + std::to_string(step));
        }
        result.batch_losses.push_back(loss);
        grad *= -config.learning_rate / static_cast<double>(batch.size());
        result.params += grad;
    }
    record_probe();
    return result;
}

std::string loss_trace_csv(const std::vector<double>& trace) {
    std::ostringstream out;
    out.precision(17);
    out << "iter,loss\n";
    for (std::size_t t = 0; t < trace.size(); ++t) out << t << ',' << trace[t] << '\n';
    return out.str();
}

}  // namespace patchseg::siamese
