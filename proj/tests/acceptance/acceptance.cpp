// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <queue>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles/jacobi.hpp"
#include "oracles/reference.hpp"
#include "patchseg/affinity.hpp"
#include "patchseg/error.hpp"
#include "patchseg/feature_io.hpp"
#include "patchseg/kmeans.hpp"
#include "patchseg/metrics.hpp"
#include "patchseg/pipeline.hpp"
#include "patchseg/siamese.hpp"
#include "patchseg/spectral.hpp"

using namespace patchseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

Fixture fixture(const PatchGrid& grid, int blocks, double sigma, std::uint64_t seed) {
    FixtureSpec spec;
    spec.grid = grid;
    spec.dim = 16;
    spec.block_count = blocks;
    spec.noise_sigma = sigma;
    spec.seed = seed;
    return synthesize_fixture(spec);
}

const PatchGrid kGrid8{8, 8, 16};

// ---------------------------------------------------------------------------

Outcome gradient_fd() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1001);
    std::uniform_int_distribution<int> n_dist(1, 6), d_dist(1, 8);
    double worst_sg = 0.0, worst_full = 0.0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
        const int n = n_dist(rng);
        const int d = d_dist(rng);
        const auto inst = oracle::random_instance(rng, n, d);
        const oracle::Targets frozen = oracle::projections(inst.params, inst.views);
        const auto fd_sg = oracle::finite_difference(
            inst.params, [&](const siamese::SiameseParams& p) { return oracle::loss(p, inst.views, &frozen); });
        const auto fd_full = oracle::finite_difference(
            inst.params, [&](const siamese::SiameseParams& p) { return oracle::loss(p, inst.views); });
        worst_sg = std::max(worst_sg, oracle::max_relative_error(siamese::loss_gradient(inst.params, inst.views), fd_sg));
        worst_full = std::max(
            worst_full, oracle::max_relative_error(
                            siamese::loss_gradient(inst.params, inst.views, siamese::GradientMode::kFullBackprop),
                            fd_full));
    }
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = worst_sg < 1e-4 && worst_full < 1e-4 && secs < 10.0;
    o.detail = std::to_string(trials) + " instances, max rel err stop-grad " + fmt("%.2e", worst_sg) +
               ", full " + fmt("%.2e", worst_full) + ", " + fmt("%.2f", secs) + " s";
    return o;
}

Outcome stop_grad() {
    std::mt19937_64 rng(1002);
    // With d = 1 every normalized vector is +-1, the loss is locally constant and
    // both gradients vanish, so the two modes cannot differ there.
    std::uniform_int_distribution<int> n_dist(1, 6), d_dist(2, 8);
    const int trials = 200;
    int differ = 0;
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        const int n = n_dist(rng);
        const int d = d_dist(rng);
        const auto inst = oracle::random_instance(rng, n, d);
        const oracle::Targets frozen = oracle::projections(inst.params, inst.views);
        const auto held = oracle::finite_difference(
            inst.params, [&](const siamese::SiameseParams& p) { return oracle::loss(p, inst.views, &frozen); });
        const auto sg = siamese::loss_gradient(inst.params, inst.views);
        const auto full = siamese::loss_gradient(inst.params, inst.views, siamese::GradientMode::kFullBackprop);
        worst = std::max(worst, oracle::max_relative_error(sg, held));
        if (oracle::max_abs_difference(sg, full) > 1e-8) ++differ;
    }
    const double frac = static_cast<double>(differ) / trials;
    return {worst < 1e-4 && frac >= 0.95, "vs frozen-target oracle max rel err " + fmt("%.2e", worst) +
                                             ", differs from no-sg on " + fmt("%.1f", 100 * frac) + "%"};
}

Outcome loss_contract() {
    std::mt19937_64 rng(1003);
    std::uniform_int_distribution<int> n_dist(1, 6), d_dist(1, 8);
    double lo = 1.0, hi = -1.0, worst_swap = 0.0;
    for (int t = 0; t < 500; ++t) {
        const int n = n_dist(rng);
        const int d = d_dist(rng);
        const auto inst = oracle::random_instance(rng, n, d);
        const double l = siamese::symmetric_loss(inst.params, inst.views);
        lo = std::min(lo, l);
        hi = std::max(hi, l);
        worst_swap = std::max(
            worst_swap, std::abs(l - siamese::symmetric_loss(inst.params, {inst.views.beta, inst.views.alpha})));
    }
    double worst_id = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Eigen::MatrixXd f = fixture(kGrid8, 2, 0.2, s).features.as_double().cwiseAbs();
        worst_id = std::max(worst_id,
                            std::abs(siamese::symmetric_loss(siamese::SiameseParams::identity(16), {f, f}) + 1.0));
    }
    return {lo >= -1.0 && hi <= 1.0 && worst_id < 1e-12 && worst_swap < 1e-12,
            "range [" + fmt("%.4f", lo) + ", " + fmt("%.4f", hi) + "], identity " + fmt("%.1e", worst_id) +
                ", swap " + fmt("%.1e", worst_swap)};
}

Outcome vanilla_affinity() {
    std::mt19937_64 rng(1004);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_int_distribution<int> side(1, 8), dim(1, 16);
    double worst_mean = 0.0, worst_sym = 0.0, worst_oracle = 0.0;
    for (int t = 0; t < 100; ++t) {
        const int r = side(rng), c = side(rng), d = dim(rng);
        Eigen::MatrixXf tok(r * c, d);
        for (Eigen::Index i = 0; i < tok.size(); ++i) tok.data()[i] = static_cast<float>(g(rng));
        const TokenFeatureMap f(PatchGrid{r, c, 1}, tok);
        const Eigen::MatrixXd w = affinity::vanilla_affinity(f).values;
        const auto gram = oracle::gram(oracle::to_rows(f.as_double()));
        double mean = 0.0;
        for (const auto& row : gram)
            for (double x : row) mean += x;
        mean /= static_cast<double>(w.size());
        worst_mean = std::max(worst_mean, std::abs(w.mean()));
        worst_sym = std::max(worst_sym, (w - w.transpose()).cwiseAbs().maxCoeff());
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j)
                worst_oracle = std::max(worst_oracle, std::abs(w(i, j) - (gram[i][j] - mean)));
    }
    return {worst_mean < 1e-9 && worst_sym < 1e-9 && worst_oracle < 1e-12,
            "mean " + fmt("%.1e", worst_mean) + ", asymmetry " + fmt("%.1e", worst_sym) + ", oracle " +
                fmt("%.1e", worst_oracle)};
}

struct ContractCheck {
    double residual = 0.0;
    double orthogonality = 0.0;
    bool ordered = true;
};

void contracts(const Eigen::MatrixXd& a, const spectral::EigenBasis& b, ContractCheck& c) {
    for (int j = 0; j < b.size(); ++j) {
        if (j > 0 && b.eigenvalues(j - 1) > b.eigenvalues(j)) c.ordered = false;
        const Eigen::VectorXd y = b.eigenvectors.col(j);
        c.residual = std::max(c.residual, (a * y - b.eigenvalues(j) * y).cwiseAbs().maxCoeff());
    }
    const Eigen::MatrixXd gram = b.eigenvectors.transpose() * b.eigenvectors;
    c.orthogonality =
        std::max(c.orthogonality, (gram - Eigen::MatrixXd::Identity(b.size(), b.size())).cwiseAbs().maxCoeff());
}

Outcome eigensolver() {
    std::mt19937_64 rng(1005);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_int_distribution<int> size(1, 16);
    double worst_value = 0.0, worst_align = 1.0;
    ContractCheck cc;
    const int trials = 300;
    for (int t = 0; t < trials; ++t) {
        const int n = size(rng);
        Eigen::MatrixXd a(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j <= i; ++j) a(i, j) = a(j, i) = g(rng);
        const auto got = spectral::eigendecompose(a, n);
        const auto ref = oracle::jacobi_eigen(a);
        contracts(a, got, cc);
        worst_value = std::max(worst_value, (got.eigenvalues - ref.values).cwiseAbs().maxCoeff());
        for (int j = 0; j < n; ++j)
            worst_align = std::min(worst_align, std::abs(got.eigenvectors.col(j).dot(ref.vectors.col(j))));
    }
    return {worst_value < 1e-8 && worst_align > 1.0 - 1e-8 && cc.residual < 1e-8 && cc.orthogonality < 1e-8 &&
                cc.ordered,
            std::to_string(trials) + " matrices, eigenvalue err " + fmt("%.1e", worst_value) + ", min |cos| 1-" +
                fmt("%.1e", 1.0 - worst_align) + ", residual " + fmt("%.1e", cc.residual) + ", orthonormality " +
                fmt("%.1e", cc.orthogonality)};
}

bool connected(const Eigen::MatrixXd& w) {
    const Eigen::Index n = w.rows();
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    std::queue<Eigen::Index> todo;
    todo.push(0);
    seen[0] = true;
    Eigen::Index count = 1;
    while (!todo.empty()) {
        const auto i = todo.front();
        todo.pop();
        for (Eigen::Index j = 0; j < n; ++j)
            if (!seen[static_cast<std::size_t>(j)] && w(i, j) > 0.0) {
                seen[static_cast<std::size_t>(j)] = true;
                ++count;
                todo.push(j);
            }
    }
    return count == n;
}

Outcome laplacian_invariants() {
    const RunConfig cfg;
    double lo = 0.0, hi = 2.0, worst_null = 0.0;
    int connected_graphs = 0, mask_changes = 0, fixtures = 0;
    ContractCheck cc;
    auto visit = [&](const affinity::AffinityMatrix& w) {
        const Eigen::MatrixXd l = spectral::normalized_laplacian(w);
        const auto b = spectral::eigendecompose(l, static_cast<int>(l.rows()));
        contracts(l, b, cc);
        lo = std::min(lo, b.eigenvalues(0));
        hi = std::max(hi, b.eigenvalues(b.size() - 1));
        if (connected(w.values)) {
            ++connected_graphs;
            worst_null = std::max(worst_null, std::abs(b.eigenvalues(0)));
        }
    };
    std::mt19937_64 rng(1006);
    std::uniform_real_distribution<double> u(-0.3, 1.0);
    for (int t = 0; t < 20; ++t) {
        Eigen::MatrixXd w(12, 12);
        for (int i = 0; i < 12; ++i)
            for (int j = 0; j <= i; ++j) w(i, j) = w(j, i) = u(rng);
        visit({w, affinity::AffinityKind::kCombined});
    }
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto fx = fixture(kGrid8, 2 + static_cast<int>(s % 3), 0.05 + 0.05 * static_cast<double>(s % 4), s);
        const auto r = segment_object(fx.features, cfg, image_seed(cfg.seed, "lap" + std::to_string(s)));
        const auto& w = r.affinities.combined;
        visit(w);
        ++fixtures;
        for (double c : {1e-3, 0.25, 4.0, 1e3}) {
            const auto scaled = spectral::fiedler_object_mask({c * w.values, w.kind}, fx.mask.grid);
            if (!(scaled.mask == r.segmentation.mask) || scaled.degenerate != r.segmentation.degenerate)
                ++mask_changes;
        }
    }
    const bool pass = lo >= -1e-8 && hi <= 2.0 + 1e-8 && worst_null < 1e-10 && connected_graphs > 0 &&
                      mask_changes == 0 && cc.residual < 1e-8 && cc.orthogonality < 1e-8;
    return {pass, "spectrum [" + fmt("%.2e", lo) + ", " + fmt("%.6f", hi) + "], lambda_min " +
                      fmt("%.1e", worst_null) + " on " + std::to_string(connected_graphs) + " connected graphs, " +
                      std::to_string(mask_changes) + " mask changes under rescaling on " + std::to_string(fixtures) +
                      " fixtures"};
}

Outcome planted_recovery() {
    const auto t0 = Clock::now();
    const RunConfig cfg;
    int splits = 0, exact = 0;
    // Every axis-aligned rectangle as one side, the rest as the other.
    for (int r0 = 0; r0 < 8; ++r0)
        for (int r1 = r0 + 1; r1 <= 8; ++r1)
            for (int c0 = 0; c0 < 8; ++c0)
                for (int c1 = c0 + 1; c1 <= 8; ++c1) {
                    const int area = (r1 - r0) * (c1 - c0);
                    if (area < 2 || 64 - area < 2) continue;
                    std::vector<int> labels(64, 0);
                    for (int r = r0; r < r1; ++r)
                        for (int c = c0; c < c1; ++c) labels[static_cast<std::size_t>(r * 8 + c)] = 1;
                    const auto fx = fixture_from_labels(LabelMask(kGrid8, labels), 16, 0.0,
                                                        static_cast<std::uint64_t>(splits));
                    const auto name = "split" + std::to_string(splits);
                    const auto seg = segment_object(fx.features, cfg, image_seed(cfg.seed, name));
                    ++splits;
                    if (metrics::miou(seg.segmentation.mask, fx.mask) == 1.0) ++exact;
                }
    double total = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto fx = fixture(kGrid8, 2, 0.05, s);
        const auto seg = segment_object(fx.features, cfg, image_seed(cfg.seed, "noisy" + std::to_string(s)));
        total += metrics::miou(seg.segmentation.mask, fx.mask);
    }
    const double mean = total / 20.0;
    const double secs = seconds_since(t0);
    return {exact == splits && mean >= 0.95 && secs < 60.0,
            std::to_string(exact) + "/" + std::to_string(splits) + " sigma=0 splits exact, sigma=0.05 mean mIoU " +
                fmt("%.4f", mean) + ", " + fmt("%.2f", secs) + " s"};
}

double cut_miou(const affinity::AffinityMatrix& w, const LabelMask& gt) {
    const auto s = spectral::fiedler_object_mask(w, gt.grid);
    return metrics::miou(s.mask, gt);
}

Outcome monotone_sanity() {
    RunConfig cfg;
    cfg.kappa = 0.1;
    cfg.iterations = 10;
    double combined = 0.0, raw = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto fx = fixture(kGrid8, 2, 0.2, s);
        const auto a = build_affinities(fx.features, cfg, image_seed(cfg.seed, "mono" + std::to_string(s)));
        combined += cut_miou(a.combined, fx.mask);
        raw += cut_miou(affinity::vanilla_affinity(fx.features, false), fx.mask);
    }
    combined /= 20.0;
    raw /= 20.0;
    return {combined >= raw - 0.01,
            "W_feat mean mIoU " + fmt("%.4f", combined) + " vs unnormalized untrained " + fmt("%.4f", raw)};
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(PATCHSEG_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Runs the same command set into two directories and compares every file.
bool cli_deterministic(std::string& why) {
    const fs::path root = fs::temp_directory_path() / "patchseg_acceptance_cli";
    fs::remove_all(root);
    for (const char* tag : {"a", "b"}) {
        const fs::path dir = root / tag;
        fs::create_directories(dir / "corpus");
        const std::string d = "'" + dir.string() + "'";
        const std::string c = "'" + (dir / "corpus").string() + "'";
        const int codes[] = {
            run_cli("fixture --grid 8x8 --blocks 2 --sigma 0.1 --seed 3 --name two -o " + c),
            run_cli("fixture --grid 8x8 --blocks 3 --sigma 0.05 --seed 4 --name three -o " + c),
            run_cli("segment " + c + "/two.ssam --seed 9 --export-eigenvectors 2 --export-affinity --save-params -o " +
                    d + "/object"),
            run_cli("segment " + c + "/two.ssam " + c + "/three.ssam --mode semantic --segments 4 --seed 9 -j 2 -o " +
                    d + "/semantic"),
            run_cli("ablate " + c + " --normalize both --seed 9 -o " + d + "/ablation.csv"),
        };
        for (int code : codes)
            if (code != 0) {
                why = "CLI exited with " + std::to_string(code);
                return false;
            }
    }
    int files = 0;
    for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
        if (!entry.is_regular_file()) continue;
        const fs::path other = root / "b" / fs::relative(entry.path(), root / "a");
        ++files;
        if (slurp(entry.path()) != slurp(other)) {
            why = "differs: " + fs::relative(entry.path(), root / "a").string();
            return false;
        }
    }
    why = std::to_string(files) + " CLI outputs byte-identical";
    return files > 0;
}

Outcome training() {
    const RunConfig cfg;
    int runs = 0, bad = 0;
    double worst_rise = -1.0;
    for (int blocks : {2, 3, 4})
        for (double sigma : {0.0, 0.05, 0.2})
            for (std::uint64_t s = 0; s < 10; ++s) {
                const auto fx = fixture(kGrid8, blocks, sigma, s);
                const auto r =
                    siamese::train(fx.features, cfg.train_config(image_seed(cfg.seed, "train" + std::to_string(s))));
                ++runs;
                bool finite = true;
                for (double l : r.loss_trace) finite = finite && std::isfinite(l);
                const double rise = r.loss_trace.back() - r.loss_trace.front();
                worst_rise = std::max(worst_rise, rise);
                if (!finite || rise > 0.0) ++bad;
            }
    std::string why;
    const bool det = cli_deterministic(why);
    return {bad == 0 && det, std::to_string(runs - bad) + "/" + std::to_string(runs) +
                                 " traces finite and non-increasing end to end (max final-initial " +
                                 fmt("%.2e", worst_rise) + "); " + why};
}

Outcome metrics_checks() {
    std::mt19937_64 rng(1009);
    std::normal_distribution<double> g(0.0, 1.0);
    int violations = 0;
    for (int t = 0; t < 200; ++t) {
        auto random = [&] {
            Eigen::MatrixXd m(7, 7);
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
            return affinity::AffinityMatrix{m, affinity::AffinityKind::kCombined};
        };
        const auto a = random(), b = random(), c = random();
        const double ab = metrics::frobenius_gap(a, b), ba = metrics::frobenius_gap(b, a);
        if (!(ab > 0.0) || metrics::frobenius_gap(a, a) != 0.0 || ab != ba ||
            metrics::frobenius_gap(a, c) > ab + metrics::frobenius_gap(b, c) + 1e-12)
            ++violations;
    }
    const PatchGrid g42{4, 2, 1};
    const LabelMask gt(g42, {1, 1, 1, 1, 0, 0, 0, 0});
    const LabelMask shifted(g42, {0, 0, 1, 1, 1, 1, 0, 0});
    const LabelMask complement(g42, {0, 0, 0, 0, 1, 1, 1, 1});
    const LabelMask six(g42, {1, 1, 1, 1, 0, 0, 1, 1});
    const bool cases = metrics::miou(gt, gt) == 1.0 && metrics::pixel_accuracy(gt, gt) == 1.0 &&
                       std::abs(metrics::miou(shifted, gt) - 1.0 / 3.0) < 1e-15 &&
                       metrics::miou(complement, gt, metrics::LabelMatching::kIdentity) == 0.0 &&
                       metrics::pixel_accuracy(complement, gt) == 1.0 && metrics::pixel_accuracy(six, gt) == 0.75;
    return {violations == 0 && cases, std::to_string(violations) + " axiom violations on 200 triples; 8-patch cases " +
                                          (cases ? "exact" : "wrong")};
}

Outcome kmeans_checks() {
    int recovered = 0, increases = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        std::mt19937_64 rng(s);
        std::normal_distribution<double> g(0.0, 0.5);
        const Eigen::MatrixXd centres = (Eigen::MatrixXd(3, 3) << 0, 0, 0, 8, 0, 0, 0, 8, 0).finished();
        Eigen::MatrixXd pts(90, 3);
        std::vector<int> truth;
        for (int k = 0; k < 3; ++k)
            for (int i = 0; i < 30; ++i) {
                pts.row(k * 30 + i) = centres.row(k) + Eigen::RowVector3d(g(rng), g(rng), g(rng));
                truth.push_back(k);
            }
        const auto m = spectral::kmeans_fit(pts, 3, s);
        for (std::size_t t = 1; t < m.cost_history.size(); ++t)
            if (m.cost_history[t] > m.cost_history[t - 1]) ++increases;
        const PatchGrid line{1, 90, 1};
        if (metrics::miou(LabelMask(line, m.labels), LabelMask(line, truth)) == 1.0) ++recovered;
    }
    // Overlapping data exercises many more Lloyd steps.
    std::mt19937_64 rng(1010);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int t = 0; t < 20; ++t) {
        Eigen::MatrixXd pts(100, 4);
        for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = g(rng);
        const auto m = spectral::kmeans_fit(pts, 6, static_cast<std::uint64_t>(t));
        for (std::size_t k = 1; k < m.cost_history.size(); ++k)
            if (m.cost_history[k] > m.cost_history[k - 1]) ++increases;
    }
    return {recovered == 20 && increases == 0, std::to_string(recovered) + "/20 blob seeds recovered, " +
                                                   std::to_string(increases) + " cost increases"};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient matches finite differences", gradient_fd},
        {"stop-gradient semantics", stop_grad},
        {"loss contract", loss_contract},
        {"vanilla affinity", vanilla_affinity},
        {"eigensolver vs Jacobi", eigensolver},
        {"Laplacian invariants", laplacian_invariants},
        {"planted-partition recovery", planted_recovery},
        {"end-to-end monotone sanity", monotone_sanity},
        {"training and determinism", training},
        {"metrics", metrics_checks},
        {"k-means", kmeans_checks},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
