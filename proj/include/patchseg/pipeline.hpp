#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "patchseg/affinity.hpp"
#include "patchseg/feature_io.hpp"
#include "patchseg/siamese.hpp"
#include "patchseg/spectral.hpp"

namespace patchseg {

struct RunConfig {
    double kappa = affinity::Kappa::kDefault;
    int iterations = 10;
    int batch_size = 2;
    double learning_rate = 1e-2;
    int num_eigenvectors = 15;
    int num_segments = 15;
    int kmeans_k = 20;
    std::uint64_t seed = 0;
    bool normalize_vanilla = true;
    siamese::AffineRanges affine;

    void validate() const;
    siamese::TrainConfig train_config(std::uint64_t image_seed) const;
};

/// Root seed for one image, derived from its name so results do not depend
/// on which other images are processed alongside it.
std::uint64_t image_seed(std::uint64_t root, const std::string& image_name);

struct ImageAffinities {
    affinity::AffinityMatrix vanilla;
    affinity::AffinityMatrix semantic;
    affinity::AffinityMatrix combined;
    siamese::TrainResult training;
};

/// Trains the heads on one image and builds W_A, W_SA and W_feat.
ImageAffinities build_affinities(const TokenFeatureMap& features, const RunConfig& config,
                                 std::uint64_t image_seed);

struct ObjectResult {
    ImageAffinities affinities;
    spectral::ObjectSegmentation segmentation;
};

ObjectResult segment_object(const TokenFeatureMap& features, const RunConfig& config,
                            std::uint64_t image_seed);

struct SemanticImageResult {
    ImageAffinities affinities;
    spectral::SegmentLabeling segments;  // with background identified
    std::vector<spectral::SegmentFeature> segment_features;
    LabelMask semantic;                  // 0 = background, 1 + cluster otherwise
};

struct SemanticCorpusResult {
    std::vector<SemanticImageResult> images;
    int clusters_used = 0;  // min(kmeans_k, number of foreground segments)
};

/// Per-image discrete segments and segment features, then one K-means over
/// all foreground segment features of the corpus.
SemanticCorpusResult segment_semantic(const std::vector<TokenFeatureMap>& images,
                                      const std::vector<std::string>& names,
                                      const RunConfig& config, int jobs = 1);

/// Runs body(i) for i in [0, count) on up to `jobs` threads. The first
/// exception thrown by any task is rethrown after all threads join.
void parallel_for(int count, int jobs, const std::function<void(int)>& body);

}  // namespace patchseg
