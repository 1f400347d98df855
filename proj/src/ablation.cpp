#include "patchseg/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "patchseg/error.hpp"

namespace patchseg::metrics {

namespace fs = std::filesystem;

std::vector<CorpusItem> load_corpus(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw Error(ErrorKind::EmptyCorpus, dir.string() + " is not a directory");
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".ssam") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error(ErrorKind::EmptyCorpus, "no .ssam files in " + dir.string());

    std::vector<CorpusItem> corpus;
    for (const auto& file : files) {
        fs::path mask_path = file;
        mask_path.replace_extension(".pgm");
        if (!fs::exists(mask_path)) {
            throw Error(ErrorKind::IoFailure, "missing ground-truth mask " + mask_path.string());
        }
        TokenFeatureMap features = load_features(file);
        LabelMask gt = load_mask(mask_path, features.grid().patch_size);
        if (!gt.grid.same_shape(features.grid())) {
            throw Error(ErrorKind::ShapeMismatch, mask_path.string() + " does not match its features");
        }
        corpus.push_back(CorpusItem{file.stem().string(), std::move(features), std::move(gt)});
    }
    return corpus;
}

std::vector<AblationRow> ablation_sweep(const std::vector<CorpusItem>& corpus,
                                        const std::vector<double>& kappas,
                                        const std::vector<bool>& normalize_flags,
                                        const RunConfig& config, int jobs) {
    if (corpus.empty()) throw Error(ErrorKind::EmptyCorpus, "ablation corpus is empty");
    if (kappas.empty() || normalize_flags.empty()) {
        throw Error(ErrorKind::InvalidArgument, "need at least one kappa and one normalize flag");
    }
    for (double k : kappas) affinity::Kappa{k};
    config.validate();

    const std::size_t configs = normalize_flags.size() * kappas.size();
    // reports[image][config]
    std::vector<std::vector<EvalReport>> reports(corpus.size(), std::vector<EvalReport>(configs));
    parallel_for(static_cast<int>(corpus.size()), jobs, [&](int i) {
        const CorpusItem& item = corpus[static_cast<std::size_t>(i)];
        const std::uint64_t seed = image_seed(config.seed, item.name);
        std::size_t slot = 0;
        for (bool normalize : normalize_flags) {
            RunConfig run = config;
            run.normalize_vanilla = normalize;
            const ImageAffinities base = build_affinities(item.features, run, seed);
            for (double k : kappas) {
                const auto w = affinity::combine(base.vanilla, base.semantic, affinity::Kappa{k});
                const auto seg = spectral::fiedler_object_mask(w, item.features.grid());
                reports[static_cast<std::size_t>(i)][slot++] = evaluate(seg.mask, item.ground_truth);
            }
        }
    });

    std::vector<AblationRow> rows;
    std::size_t slot = 0;
    for (bool normalize : normalize_flags) {
        for (double k : kappas) {
            AblationRow row;
            row.config = normalize ? "combined" : "combined_unnormalized";
            row.kappa = k;
            row.normalize = normalize;
            double frob = 0.0;
            for (const auto& per_image : reports) {
                row.report.miou += per_image[slot].miou;
                row.report.accuracy += per_image[slot].accuracy;
                frob += per_image[slot].frobenius.value_or(0.0);
            }
            const double count = static_cast<double>(corpus.size());
            row.report.miou /= count;
            row.report.accuracy /= count;
            row.report.frobenius = frob / count;
            rows.push_back(row);
            ++slot;
        }
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out << "config,kappa,normalize,frobenius,accuracy,miou\n";
    char line[256];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%s,%.6g,%s,%.6f,%.6f,%.6f\n", r.config.c_str(), r.kappa,
                      r.normalize ? "true" : "false", r.report.frobenius.value_or(0.0),
                      r.report.accuracy, r.report.miou);
        out << line;
    }
    return out.str();
}

}  // namespace patchseg::metrics
