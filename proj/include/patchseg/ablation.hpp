#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "patchseg/feature_io.hpp"
#include "patchseg/metrics.hpp"
#include "patchseg/pipeline.hpp"

namespace patchseg::metrics {

struct CorpusItem {
    std::string name;
    TokenFeatureMap features;
    LabelMask ground_truth;
};

/// Loads every `<stem>.ssam` in `dir` (sorted by name) together with its
/// `<stem>.pgm` ground-truth mask. Throws EmptyCorpus if none are found.
std::vector<CorpusItem> load_corpus(const std::filesystem::path& dir);

inline const std::vector<double> kDefaultKappas{0.1, 0.3, 0.5, 0.7, 0.9};

struct AblationRow {
    std::string config;
    double kappa = 0.0;
    bool normalize = true;
    EvalReport report;  // averaged over the corpus
};

/// Object segmentation for every (normalize, kappa) pair, normalize-major.
/// Each image is trained once per normalize flag; kappa only reweights.
/// Degenerate Fiedler cuts score as all-background masks.
std::vector<AblationRow> ablation_sweep(const std::vector<CorpusItem>& corpus,
                                        const std::vector<double>& kappas,
                                        const std::vector<bool>& normalize_flags,
                                        const RunConfig& config, int jobs = 1);

/// "config,kappa,normalize,frobenius,accuracy,miou" plus one line per row.
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace patchseg::metrics
