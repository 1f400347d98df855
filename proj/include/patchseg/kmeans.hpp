#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace patchseg::spectral {

struct KMeansOptions {
    int max_iterations = 300;
    /// Independent k-means++ restarts; the lowest-cost run wins.
    int restarts = 10;
};

struct ClusterModel {
    int k = 0;
    Eigen::MatrixXd centroids;  // k x q
    std::uint64_t seed = 0;
    std::vector<int> labels;    // assignment of the fitted points
    double cost = 0.0;          // sum of squared distances to assigned centroids
    /// Cost after each Lloyd iteration of the winning restart, seeding first.
    std::vector<double> cost_history;
};

/// Lloyd's algorithm from k-means++ seeding. Points are rows. Stops when the
/// assignment is stable or after max_iterations. Throws TooFewPoints if
/// fewer than k points are given.
ClusterModel kmeans_fit(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                        const KMeansOptions& options = {});

/// Nearest centroid in Euclidean distance; ties go to the smaller index.
int kmeans_assign(const ClusterModel& model, const Eigen::VectorXd& point);

}  // namespace patchseg::spectral
