#ifndef SSM_CLUSTER_HPP
#define SSM_CLUSTER_HPP

#include "ssm/geometry.hpp"
#include "ssm/rng.hpp"

#include <vector>

namespace ssm {

// Result of a partitional clustering. WCSS is a property of the partition:
// the summed squared distance of each vector to its cluster mean. This keeps
// variance_explained = 1 - WCSS/TSS inside [0, 1] for k-medoids too, whose
// centers are data indices rather than means.
struct ClusterResult {
    int k = 0;
    std::vector<int> labels;            // per-vector assignment in [0, k)
    Eigen::MatrixXd centers;            // k rows: cluster means
    std::vector<std::size_t> medoids;   // k indices into the input (k-medoids only)
    double wcss = 0.0;
    double tss = 0.0;
    double variance_explained = 0.0;
};

// Lloyd iterations from k-means++ seeds, best of `restarts` runs. Empty
// clusters are repaired by reseeding with the point farthest from its
// center. Assignment ties go to the lowest cluster index.
ClusterResult kmeans(const std::vector<ShapeVector>& vectors, int k, Rng& rng, int restarts = 10);

// PAM-style alternation minimizing total Euclidean distance to medoids.
ClusterResult kmedoids(const std::vector<ShapeVector>& vectors, int k, Rng& rng, int restarts = 10);

struct ElbowResult {
    int k_star = 0;
    Eigen::VectorXd variance_explained; // index k-1 holds the value for k clusters
};

// Runs kmeans for k = 1..k_max and picks the k whose curve point is farthest
// (perpendicular, on axes normalized to [0,1]) from the chord joining the
// curve endpoints. Ties resolve to the smallest k.
ElbowResult elbow(const std::vector<ShapeVector>& vectors, int k_max, Rng& rng, int restarts = 10);

// Per-cluster arithmetic mean of correspondences.
std::vector<PointSet> cluster_mean_shapes(const CorrespondenceEnsemble& ens,
                                          const std::vector<int>& labels);

} // namespace ssm

#endif
