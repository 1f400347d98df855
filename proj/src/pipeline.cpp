#include "patchseg/pipeline.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "patchseg/error.hpp"
#include "patchseg/kmeans.hpp"
#include "patchseg/seed.hpp"

namespace patchseg {

void RunConfig::validate() const {
    affinity::Kappa{kappa};
    train_config(seed).validate();
    if (num_eigenvectors < 1 || num_segments < 1 || kmeans_k < 1) {
        throw Error(ErrorKind::InvalidArgument, "eigenvector, segment and cluster counts must be >= 1");
    }
}

siamese::TrainConfig RunConfig::train_config(std::uint64_t image_seed) const {
    siamese::TrainConfig t;
    t.iterations = iterations;
    t.batch_size = batch_size;
    t.learning_rate = learning_rate;
    t.seed = image_seed;
    t.affine = affine;
    return t;
}

std::uint64_t image_seed(std::uint64_t root, const std::string& image_name) {
    return derive_seed(root, "image:" + image_name);
}

ImageAffinities build_affinities(const TokenFeatureMap& features, const RunConfig& config,
                                 std::uint64_t image_seed) {
    config.validate();
    ImageAffinities out;
    out.training = siamese::train(features, config.train_config(image_seed));
    out.vanilla = affinity::vanilla_affinity(features, config.normalize_vanilla);
    out.semantic = affinity::semantic_affinity(out.training.params, features);
    out.combined = affinity::combine(out.vanilla, out.semantic, affinity::Kappa{config.kappa});
    return out;
}

ObjectResult segment_object(const TokenFeatureMap& features, const RunConfig& config,
                            std::uint64_t image_seed) {
    ObjectResult out;
    out.affinities = build_affinities(features, config, image_seed);
    out.segmentation = spectral::fiedler_object_mask(out.affinities.combined, features.grid());
    return out;
}

SemanticCorpusResult segment_semantic(const std::vector<TokenFeatureMap>& images,
                                      const std::vector<std::string>& names,
                                      const RunConfig& config, int jobs) {
    if (images.size() != names.size()) {
        throw Error(ErrorKind::InvalidArgument, "one name per image is required");
    }
    if (images.empty()) throw Error(ErrorKind::EmptyCorpus, "no images to segment");
    config.validate();

    SemanticCorpusResult result;
    result.images.resize(images.size());
    parallel_for(static_cast<int>(images.size()), jobs, [&](int i) {
        const auto& features = images[static_cast<std::size_t>(i)];
        const std::uint64_t seed = image_seed(config.seed, names[static_cast<std::size_t>(i)]);
        SemanticImageResult& r = result.images[static_cast<std::size_t>(i)];
        r.affinities = build_affinities(features, config, seed);
        r.segments = spectral::identify_background(spectral::discrete_segments(
            r.affinities.combined, features.grid(), config.num_eigenvectors, config.num_segments,
            derive_seed(seed, "segments")));
        r.segment_features = spectral::segment_features(features, r.segments);
    });

    // Gather in image order so the clustering input is independent of scheduling.
    std::vector<const Eigen::VectorXd*> points;
    for (const auto& r : result.images) {
        for (const auto& sf : r.segment_features) points.push_back(&sf.feature);
    }
    result.clusters_used = std::min(config.kmeans_k, static_cast<int>(points.size()));

    std::vector<int> cluster_of(points.size(), 0);
    if (result.clusters_used > 0) {
        const Eigen::Index dim = points.front()->size();
        Eigen::MatrixXd data(static_cast<Eigen::Index>(points.size()), dim);
        for (std::size_t p = 0; p < points.size(); ++p) {
            if (points[p]->size() != dim) {
                throw Error(ErrorKind::ShapeMismatch, "images disagree on token dimension");
            }
            data.row(static_cast<Eigen::Index>(p)) = points[p]->transpose();
        }
        const auto model =
            spectral::kmeans_fit(data, result.clusters_used, derive_seed(config.seed, "clusters"));
        cluster_of = model.labels;
    }

    std::size_t next = 0;
    for (std::size_t i = 0; i < result.images.size(); ++i) {
        auto& r = result.images[i];
        std::vector<int> segment_cluster(static_cast<std::size_t>(r.segments.count()), -1);
        for (const auto& sf : r.segment_features) {
            segment_cluster[static_cast<std::size_t>(sf.label)] = cluster_of[next++];
        }
        std::vector<int> labels(r.segments.labels.size(), 0);
        for (std::size_t p = 0; p < labels.size(); ++p) {
            const int c = segment_cluster[static_cast<std::size_t>(r.segments.labels[p])];
            labels[p] = c < 0 ? 0 : c + 1;
        }
        r.semantic = LabelMask(images[i].grid(), std::move(labels));
    }
    return result;
}

void parallel_for(int count, int jobs, const std::function<void(int)>& body) {
    if (count <= 0) return;
    const int workers = std::max(1, std::min(jobs, count));
    if (workers == 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            for (int i = next++; i < count; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace patchseg
