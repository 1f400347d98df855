// patchseg: command-line driver for the semantic-affinity segmentation pipeline.
//
// Exit codes: 0 success, 2 usage or bad input, 3 numerical degeneracy,
// 4 empty input.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "patchseg/ablation.hpp"
#include "patchseg/affinity.hpp"
#include "patchseg/error.hpp"
#include "patchseg/feature_io.hpp"
#include "patchseg/metrics.hpp"
#include "patchseg/pipeline.hpp"
#include "patchseg/spectral.hpp"

namespace fs = std::filesystem;
using namespace patchseg;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitDegenerate = 3;
constexpr int kExitEmpty = 4;

// Thrown for numerical degeneracy detected by the driver itself.
struct Degenerate : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::AllZeroAffinity:
        case ErrorKind::NotSymmetric:
        case ErrorKind::NoConvergence:
        case ErrorKind::DivergedLoss:
        case ErrorKind::ZeroVector:
            return kExitDegenerate;
        case ErrorKind::EmptyCorpus:
            return kExitEmpty;
        default:
            return kExitUsage;
    }
}

void add_run_flags(CLI::App* cmd, RunConfig& cfg, int& jobs) {
    cmd->add_option("--kappa", cfg.kappa, "Weight of the semantic affinity")->capture_default_str();
    cmd->add_option("--iterations", cfg.iterations, "Training iterations per image")
        ->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--batch-size", cfg.batch_size, "View pairs per training step")
        ->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--lr", cfg.learning_rate, "Gradient descent step size")
        ->check(CLI::NonNegativeNumber)->capture_default_str();
    cmd->add_option("--eigenvectors", cfg.num_eigenvectors, "Eigenvectors for discrete segments")
        ->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--segments", cfg.num_segments, "Discrete segments per image")
        ->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--clusters", cfg.kmeans_k, "Dataset-wide K-means clusters")
        ->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "Root seed")->envname("SIMSAM_SEED")->capture_default_str();
    cmd->add_flag("--no-normalize{false}", cfg.normalize_vanilla,
                  "Use the raw Gram matrix instead of the mean-subtracted one");
    cmd->add_option("-j,--jobs", jobs, "Images processed in parallel")
        ->check(CLI::PositiveNumber)->capture_default_str();
}

PatchGrid parse_grid(const std::string& text, int patch) {
    int rows = 0;
    int cols = 0;
    char sep = 0;
    std::istringstream in(text);
    if (!(in >> rows >> sep >> cols) || (sep != 'x' && sep != 'X') || rows <= 0 || cols <= 0 ||
        !in.eof()) {
        throw CLI::ValidationError("--grid", "expected ROWSxCOLS, got '" + text + "'");
    }
    return PatchGrid{rows, cols, patch};
}

void write_text(const fs::path& path, const std::string& text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void save_params(const siamese::SiameseParams& p, const fs::path& path) {
    auto mat = [](const Eigen::MatrixXd& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            std::vector<double> row(m.cols());
            for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
            rows.push_back(row);
        }
        return rows;
    };
    auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    nlohmann::json j{{"proj_weight", mat(p.proj_weight)},
                     {"proj_bias", vec(p.proj_bias)},
                     {"pred_weight", mat(p.pred_weight)},
                     {"pred_bias", vec(p.pred_bias)}};
    write_text(path, j.dump(1) + "\n");
}

std::string stem_of(const fs::path& p) { return p.stem().string(); }

// ---------------------------------------------------------------------------

struct FixtureArgs {
    std::string grid = "8x8";
    int dim = 16;
    int blocks = 2;
    double sigma = 0.0;
    std::uint64_t seed = 0;
    int patch = 16;
    std::string name = "fixture";
    fs::path out;
};

int run_fixture(const FixtureArgs& a) {
    FixtureSpec spec;
    spec.grid = parse_grid(a.grid, a.patch);
    spec.dim = a.dim;
    spec.block_count = a.blocks;
    spec.noise_sigma = a.sigma;
    spec.seed = a.seed;
    if (a.blocks > spec.grid.size()) {
        throw CLI::ValidationError("--blocks", "more blocks than patches");
    }
    const Fixture fx = [&] {
        try {
            return synthesize_fixture(spec);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::InvalidSpec) throw CLI::ValidationError("fixture", e.what());
            throw;
        }
    }();
    fs::create_directories(a.out);
    save_features(fx.features, a.out / (a.name + ".ssam"));
    save_mask(fx.mask, a.out / (a.name + ".pgm"));
    std::cout << (a.out / (a.name + ".ssam")).string() << '\n'
              << (a.out / (a.name + ".pgm")).string() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct SegmentArgs {
    std::vector<fs::path> inputs;
    std::string mode = "object";
    fs::path out = ".";
    RunConfig cfg;
    int jobs = 1;
    int export_eigenvectors = 0;
    bool export_affinity = false;
    bool save_params = false;
    bool pixel_mask = false;
};

void write_common_artifacts(const SegmentArgs& a, const std::string& stem,
                            const TokenFeatureMap& features, const ImageAffinities& aff) {
    write_text(a.out / (stem + "_loss.csv"), siamese::loss_trace_csv(aff.training.loss_trace));
    if (a.save_params) save_params(aff.training.params, a.out / (stem + "_params.json"));
    if (a.export_affinity) {
        affinity::save_affinity_heatmap(aff.combined, a.out / (stem + "_affinity.pgm"));
    }
    if (a.export_eigenvectors > 0) {
        const int m = std::min(a.export_eigenvectors, features.size() - 1);
        const auto basis = spectral::nontrivial_eigenbasis(aff.combined, m);
        for (int j = 0; j < m; ++j) {
            save_heatmap(spectral::grid_image(basis.eigenvectors.col(j), features.grid()),
                         a.out / (stem + "_ev" + std::to_string(j + 1) + ".pgm"));
        }
    }
}

void write_mask(const SegmentArgs& a, const std::string& stem, const LabelMask& mask) {
    save_mask(mask, a.out / (stem + "_mask.pgm"));
    if (a.pixel_mask) save_mask(upsample_to_pixels(mask), a.out / (stem + "_mask_pixels.pgm"));
}

int run_segment(const SegmentArgs& a) {
    a.cfg.validate();
    fs::create_directories(a.out);
    std::vector<TokenFeatureMap> images;
    std::vector<std::string> names;
    for (const auto& p : a.inputs) {
        images.push_back(load_features(p));
        names.push_back(stem_of(p));
    }

    if (a.mode == "object") {
        std::vector<std::optional<ObjectResult>> results(images.size());
        parallel_for(static_cast<int>(images.size()), a.jobs, [&](int i) {
            const auto idx = static_cast<std::size_t>(i);
            ObjectResult r;
            try {
                r = segment_object(images[idx], a.cfg, image_seed(a.cfg.seed, names[idx]));
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::AllZeroAffinity) {
                    throw Degenerate(names[idx] + ": stage laplacian: " + e.what());
                }
                throw;
            }
            if (r.segmentation.degenerate) {
                throw Degenerate(names[idx] +
                                 ": stage fiedler: degenerate Fiedler vector (lambda_1 == lambda_2)");
            }
            write_common_artifacts(a, names[idx], images[idx], r.affinities);
            write_mask(a, names[idx], r.segmentation.mask);
            results[idx] = std::move(r);
        });
        for (std::size_t i = 0; i < images.size(); ++i) {
            const auto& r = *results[i];
            int fg = 0;
            for (int l : r.segmentation.mask.labels) fg += l;
            std::printf("%s: foreground %d/%d patches, lambda_1 %.6g, loss %.6f -> %.6f\n",
                        names[i].c_str(), fg, images[i].size(), r.segmentation.fiedler_value,
                        r.affinities.training.loss_trace.front(), r.affinities.training.loss_trace.back());
        }
        return 0;
    }

    SemanticCorpusResult result;
    try {
        result = segment_semantic(images, names, a.cfg, a.jobs);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::AllZeroAffinity) {
            throw Degenerate(std::string("stage laplacian: ") + e.what());
        }
        throw;
    }
    if (result.clusters_used < a.cfg.kmeans_k) {
        std::fprintf(stderr, "note: only %d foreground segments; K-means uses %d clusters instead of %d\n",
                     result.clusters_used, result.clusters_used, a.cfg.kmeans_k);
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto& r = result.images[i];
        write_common_artifacts(a, names[i], images[i], r.affinities);
        save_mask(r.segments.as_mask(), a.out / (names[i] + "_segments.pgm"));
        write_mask(a, names[i], r.semantic);
        std::printf("%s: %d segments (background %d), %d semantic labels\n", names[i].c_str(),
                    r.segments.count(), r.segments.background_label.value_or(-1),
                    r.semantic.max_label() + 1);
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct AblateArgs {
    fs::path corpus;
    std::vector<double> kappas = metrics::kDefaultKappas;
    std::string normalize = "true";
    std::optional<fs::path> out;
    RunConfig cfg;
    int jobs = 1;
};

int run_ablate(const AblateArgs& a) {
    std::vector<bool> flags;
    if (a.normalize == "true" || a.normalize == "both") flags.push_back(true);
    if (a.normalize == "false" || a.normalize == "both") flags.push_back(false);
    const auto corpus = metrics::load_corpus(a.corpus);
    const auto rows = metrics::ablation_sweep(corpus, a.kappas, flags, a.cfg, a.jobs);
    const std::string csv = metrics::ablation_csv(rows);
    if (a.out) {
        write_text(*a.out, csv);
    } else {
        std::cout << csv;
    }
    return 0;
}

// ---------------------------------------------------------------------------

int run_metrics(const fs::path& pred_path, const fs::path& gt_path) {
    const LabelMask pred = load_mask(pred_path);
    const LabelMask gt = load_mask(gt_path);
    const auto report = metrics::evaluate(pred, gt);
    std::printf("frobenius,accuracy,miou\n%.6f,%.6f,%.6f\n", report.frobenius.value_or(0.0),
                report.accuracy, report.miou);
    return 0;
}

// ---------------------------------------------------------------------------

struct ExportArgs {
    fs::path input;
    std::string kind = "combined";
    std::optional<fs::path> mask;
    fs::path out;
    std::optional<fs::path> heatmap;
    RunConfig cfg;
    int jobs = 1;
};

int run_export(const ExportArgs& a) {
    a.cfg.validate();
    affinity::AffinityMatrix w;
    if (a.kind == "mask") {
        if (!a.mask) throw CLI::ValidationError("--mask", "required for --kind mask");
        w = affinity::mask_affinity(load_mask(*a.mask));
    } else {
        const TokenFeatureMap features = load_features(a.input);
        if (a.kind == "vanilla" || a.kind == "vanilla_unnormalized") {
            w = affinity::vanilla_affinity(features, a.kind == "vanilla");
        } else {
            const auto aff = build_affinities(features, a.cfg, image_seed(a.cfg.seed, stem_of(a.input)));
            w = a.kind == "semantic" ? aff.semantic : aff.combined;
        }
    }
    affinity::save_affinity(w, a.out);
    if (a.heatmap) affinity::save_affinity_heatmap(w, *a.heatmap);
    std::printf("%s affinity, n=%d -> %s\n", std::string(affinity::to_string(w.kind)).c_str(), w.size(),
                a.out.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semantic affinity learning and spectral segmentation on patch tokens"};
    app.require_subcommand(1);

    FixtureArgs fixture;
    auto* fx = app.add_subcommand("fixture", "Write a planted-partition feature file and its mask");
    fx->add_option("--grid", fixture.grid, "Patch grid as ROWSxCOLS")->capture_default_str();
    fx->add_option("--dim", fixture.dim, "Token dimension")->check(CLI::PositiveNumber)->capture_default_str();
    fx->add_option("--blocks", fixture.blocks, "Planted blocks")->check(CLI::Range(2, 1 << 20))->capture_default_str();
    fx->add_option("--sigma", fixture.sigma, "Gaussian noise level")->check(CLI::NonNegativeNumber)->capture_default_str();
    fx->add_option("--seed", fixture.seed, "Noise seed")->envname("SIMSAM_SEED")->capture_default_str();
    fx->add_option("--patch", fixture.patch, "Patch size in pixels (header only)")->check(CLI::PositiveNumber)->capture_default_str();
    fx->add_option("--name", fixture.name, "Output file stem")->capture_default_str();
    fx->add_option("-o,--out", fixture.out, "Output directory")->required();

    SegmentArgs segment;
    auto* seg = app.add_subcommand("segment", "Train per image and segment from the combined affinity");
    seg->add_option("features", segment.inputs, "SSAM feature files")->required()->check(CLI::ExistingFile);
    seg->add_option("--mode", segment.mode, "object or semantic")
        ->check(CLI::IsMember({"object", "semantic"}))->capture_default_str();
    seg->add_option("-o,--out", segment.out, "Output directory")->capture_default_str();
    seg->add_option("--export-eigenvectors", segment.export_eigenvectors, "Write y_1..y_N as PGM heatmaps")
        ->check(CLI::NonNegativeNumber);
    seg->add_flag("--export-affinity", segment.export_affinity, "Write the combined affinity heatmap");
    seg->add_flag("--save-params", segment.save_params, "Write trained head weights as JSON (debugging)");
    seg->add_flag("--pixel-mask", segment.pixel_mask, "Also write a pixel-resolution mask");
    add_run_flags(seg, segment.cfg, segment.jobs);

    AblateArgs ablate;
    auto* abl = app.add_subcommand("ablate", "Sweep kappa and normalization over a corpus");
    abl->add_option("corpus", ablate.corpus, "Directory of <stem>.ssam + <stem>.pgm pairs")->required();
    abl->add_option("--kappas", ablate.kappas, "Comma-separated kappa values")->delimiter(',');
    abl->add_option("--normalize", ablate.normalize, "true, false or both")
        ->check(CLI::IsMember({"true", "false", "both"}))->capture_default_str();
    abl->add_option("-o,--out", ablate.out, "CSV output path (stdout if omitted)");
    add_run_flags(abl, ablate.cfg, ablate.jobs);

    fs::path pred_path;
    fs::path gt_path;
    auto* met = app.add_subcommand("metrics", "Compare a predicted mask with ground truth");
    met->add_option("--pred", pred_path, "Predicted mask (PGM)")->required()->check(CLI::ExistingFile);
    met->add_option("--gt", gt_path, "Ground-truth mask (PGM)")->required()->check(CLI::ExistingFile);

    ExportArgs exp;
    auto* ex = app.add_subcommand("export-affinity", "Write an affinity matrix in the SSAM container");
    ex->add_option("features", exp.input, "SSAM feature file")->check(CLI::ExistingFile);
    ex->add_option("--kind", exp.kind, "vanilla, vanilla_unnormalized, semantic, combined or mask")
        ->check(CLI::IsMember({"vanilla", "vanilla_unnormalized", "semantic", "combined", "mask"}))
        ->capture_default_str();
    ex->add_option("--mask", exp.mask, "Mask for --kind mask")->check(CLI::ExistingFile);
    ex->add_option("-o,--out", exp.out, "Output .ssam path")->required();
    ex->add_option("--heatmap", exp.heatmap, "Optional PGM heatmap path");
    add_run_flags(ex, exp.cfg, exp.jobs);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*fx) return run_fixture(fixture);
        if (*seg) return run_segment(segment);
        if (*abl) return run_ablate(ablate);
        if (*met) return run_metrics(pred_path, gt_path);
        if (*ex) {
            if (exp.kind != "mask" && exp.input.empty()) {
                throw CLI::ValidationError("features", "a feature file is required");
            }
            return run_export(exp);
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Degenerate& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitDegenerate;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
