#include "patchseg/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <string>

#include "patchseg/error.hpp"

namespace patchseg::spectral {

namespace {

int nearest(const Eigen::MatrixXd& centroids, const Eigen::RowVectorXd& point, double* dist2) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
        const double d = (centroids.row(c) - point).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    if (dist2) *dist2 = best_d;
    return best;
}

Eigen::MatrixXd seed_plus_plus(const Eigen::MatrixXd& points, int k, std::mt19937_64& rng) {
    const Eigen::Index n = points.rows();
    Eigen::MatrixXd centers(k, points.cols());
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    centers.row(0) = points.row(pick(rng));

    Eigen::VectorXd best(n);
    for (Eigen::Index i = 0; i < n; ++i) best(i) = (points.row(i) - centers.row(0)).squaredNorm();

    for (int c = 1; c < k; ++c) {
        const double total = best.sum();
        Eigen::Index chosen = 0;
        if (total <= 0.0) {
            chosen = pick(rng);
        } else {
            std::uniform_real_distribution<double> u(0.0, total);
            const double r = u(rng);
            double acc = 0.0;
            chosen = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += best(i);
                if (r < acc && best(i) > 0.0) {
                    chosen = i;
                    break;
                }
            }
            // Guard against r landing past the final partial sum by rounding.
            while (best(chosen) <= 0.0 && chosen > 0) --chosen;
        }
        centers.row(c) = points.row(chosen);
        for (Eigen::Index i = 0; i < n; ++i) {
            best(i) = std::min(best(i), (points.row(i) - centers.row(c)).squaredNorm());
        }
    }
    return centers;
}

struct Run {
    Eigen::MatrixXd centroids;
    std::vector<int> labels;
    double cost = 0.0;
    std::vector<double> history;
};

double assign_all(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids,
                  std::vector<int>& labels) {
    double cost = 0.0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        double d = 0.0;
        labels[static_cast<std::size_t>(i)] = nearest(centroids, points.row(i), &d);
        cost += d;
    }
    return cost;
}

double cost_of(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids,
               const std::vector<int>& labels) {
    double cost = 0.0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        cost += (points.row(i) - centroids.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
    }
    return cost;
}

Run lloyd(const Eigen::MatrixXd& points, Eigen::MatrixXd centroids, int max_iterations) {
    const Eigen::Index n = points.rows();
    const int k = static_cast<int>(centroids.rows());
    Run run;
    run.labels.assign(static_cast<std::size_t>(n), -1);
    run.history.push_back(assign_all(points, centroids, run.labels));

    for (int it = 0; it < max_iterations; ++it) {
        // Update step; an emptied cluster keeps its previous centroid.
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int l = run.labels[static_cast<std::size_t>(i)];
            sums.row(l) += points.row(i);
            ++counts[static_cast<std::size_t>(l)];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                centroids.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
            }
        }
        run.history.push_back(cost_of(points, centroids, run.labels));

        std::vector<int> next(run.labels.size());
        assign_all(points, centroids, next);
        if (next == run.labels) break;
        run.labels = std::move(next);
    }
    run.centroids = std::move(centroids);
    run.cost = cost_of(points, run.centroids, run.labels);
    return run;
}

}  // namespace

ClusterModel kmeans_fit(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                        const KMeansOptions& options) {
    if (k < 1) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
    if (points.rows() < k) {
        throw Error(ErrorKind::TooFewPoints, std::to_string(points.rows()) +
                                                 " points cannot form " + std::to_string(k) +
                                                 " clusters");
    }
    if (!points.allFinite()) throw Error(ErrorKind::InvalidArgument, "points must be finite");
    if (options.max_iterations < 1 || options.restarts < 1) {
        throw Error(ErrorKind::InvalidArgument, "iterations and restarts must be >= 1");
    }

    std::mt19937_64 rng(seed);
    Run best;
    bool have_best = false;
    for (int r = 0; r < options.restarts; ++r) {
        Run run = lloyd(points, seed_plus_plus(points, k, rng), options.max_iterations);
        if (!have_best || run.cost < best.cost) {
            best = std::move(run);
            have_best = true;
        }
    }
    ClusterModel model;
    model.k = k;
    model.centroids = std::move(best.centroids);
    model.seed = seed;
    model.labels = std::move(best.labels);
    model.cost = best.cost;
    model.cost_history = std::move(best.history);
    return model;
}

int kmeans_assign(const ClusterModel& model, const Eigen::VectorXd& point) {
    if (point.size() != model.centroids.cols()) {
        throw Error(ErrorKind::ShapeMismatch, "point dimension differs from centroids");
    }
    return nearest(model.centroids, point.transpose(), nullptr);
}

}  // namespace patchseg::spectral
