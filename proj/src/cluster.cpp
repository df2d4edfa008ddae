#include "ssm/cluster.hpp"

#include "ssm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ssm {

namespace {

constexpr int kMaxLloydIters = 200;

void check_inputs(const std::vector<ShapeVector>& vectors, int k) {
    if (vectors.empty()) {
        throw DataError("clustering: no input vectors");
    }
    if (k < 1 || static_cast<std::size_t>(k) > vectors.size()) {
        std::ostringstream os;
        os << "clustering: k = " << k << " out of range [1, " << vectors.size() << "]";
        throw DataError(os.str());
    }
    const Eigen::Index len = vectors.front().size();
    for (const auto& v : vectors) {
        if (v.size() != len) {
            throw DataError("clustering: input vectors have mixed lengths");
        }
    }
}

double total_sum_of_squares(const std::vector<ShapeVector>& vectors) {
    ShapeVector mean = ShapeVector::Zero(vectors.front().size());
    for (const auto& v : vectors) mean += v;
    mean /= static_cast<double>(vectors.size());
    double tss = 0.0;
    for (const auto& v : vectors) tss += (v - mean).squaredNorm();
    return tss;
}

// k-means++: each new seed is drawn with probability proportional to the
// squared distance from the nearest already-chosen seed.
std::vector<std::size_t> kmeanspp_seeds(const std::vector<ShapeVector>& vectors, int k, Rng& rng) {
    const std::size_t n = vectors.size();
    std::vector<std::size_t> seeds;
    seeds.push_back(rng.index(n));
    std::vector<double> d2(n, std::numeric_limits<double>::max());
    while (seeds.size() < static_cast<std::size_t>(k)) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], (vectors[i] - vectors[seeds.back()]).squaredNorm());
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            double r = rng.uniform() * total;
            for (std::size_t i = 0; i < n; ++i) {
                r -= d2[i];
                if (r <= 0.0) {
                    pick = i;
                    break;
                }
                pick = i;
            }
        } else {
            pick = rng.index(n); // all distances zero: duplicate data
        }
        seeds.push_back(pick);
    }
    return seeds;
}

void assign_labels(const std::vector<ShapeVector>& vectors, const Eigen::MatrixXd& centers,
                   std::vector<int>& labels) {
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::max();
        for (int c = 0; c < centers.rows(); ++c) {
            const double d = (vectors[i] - centers.row(c).transpose()).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        labels[i] = best;
    }
}

double partition_wcss(const std::vector<ShapeVector>& vectors, const std::vector<int>& labels,
                      int k, Eigen::MatrixXd& means) {
    const Eigen::Index len = vectors.front().size();
    means = Eigen::MatrixXd::Zero(k, len);
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        means.row(labels[i]) += vectors[i].transpose();
        ++counts[static_cast<std::size_t>(labels[i])];
    }
    for (int c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0) {
            means.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
        }
    }
    double wcss = 0.0;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        wcss += (vectors[i] - means.row(labels[i]).transpose()).squaredNorm();
    }
    return wcss;
}

ClusterResult kmeans_single(const std::vector<ShapeVector>& vectors, int k, Rng& rng) {
    const std::size_t n = vectors.size();
    const Eigen::Index len = vectors.front().size();
    const std::vector<std::size_t> seeds = kmeanspp_seeds(vectors, k, rng);
    Eigen::MatrixXd centers(k, len);
    for (int c = 0; c < k; ++c) {
        centers.row(c) = vectors[seeds[static_cast<std::size_t>(c)]].transpose();
    }

    std::vector<int> labels(n, 0);
    std::vector<int> prev;
    double prev_wcss = std::numeric_limits<double>::max();
    Eigen::MatrixXd means;
    for (int iter = 0; iter < kMaxLloydIters; ++iter) {
        assign_labels(vectors, centers, labels);

        // Repair empty clusters with the point farthest from its own center.
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (int l : labels) ++counts[static_cast<std::size_t>(l)];
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) continue;
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[static_cast<std::size_t>(labels[i])] <= 1) continue;
                const double d = (vectors[i] - centers.row(labels[i]).transpose()).squaredNorm();
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            --counts[static_cast<std::size_t>(labels[far])];
            labels[far] = c;
            ++counts[static_cast<std::size_t>(c)];
        }

        const double wcss = partition_wcss(vectors, labels, k, means);
        // Lloyd steps cannot increase the objective; a material rise means a bug.
        if (wcss > prev_wcss * (1.0 + 1e-12) + 1e-12) {
            throw NumericalError("kmeans: objective increased across a Lloyd iteration");
        }
        prev_wcss = wcss;
        centers = means;
        if (prev == labels) {
            break;
        }
        prev = labels;
    }

    ClusterResult res;
    res.k = k;
    res.labels = labels;
    res.centers = centers;
    res.wcss = prev_wcss;
    res.tss = total_sum_of_squares(vectors);
    res.variance_explained =
        res.tss > 0.0 ? std::clamp(1.0 - res.wcss / res.tss, 0.0, 1.0) : (k > 1 ? 1.0 : 0.0);
    return res;
}

} // namespace

ClusterResult kmeans(const std::vector<ShapeVector>& vectors, int k, Rng& rng, int restarts) {
    check_inputs(vectors, k);
    restarts = std::max(1, restarts);
    ClusterResult best;
    double best_wcss = std::numeric_limits<double>::max();
    for (int r = 0; r < restarts; ++r) {
        Rng sub = rng.split("kmeans-restart", static_cast<std::uint64_t>(r));
        ClusterResult res = kmeans_single(vectors, k, sub);
        if (res.wcss < best_wcss) {
            best_wcss = res.wcss;
            best = std::move(res);
        }
    }
    return best;
}

ClusterResult kmedoids(const std::vector<ShapeVector>& vectors, int k, Rng& rng, int restarts) {
    check_inputs(vectors, k);
    restarts = std::max(1, restarts);
    const std::size_t n = vectors.size();

    // Pairwise Euclidean distances; ensembles are small enough to afford it.
    Eigen::MatrixXd dist(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 0.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = (vectors[i] - vectors[j]).norm();
            dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d;
            dist(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = d;
        }
    }

    auto run_once = [&](Rng sub) {
        std::vector<std::size_t> medoids = kmeanspp_seeds(vectors, k, sub);
        std::vector<int> labels(n, 0);
        double cost = 0.0;
        for (int iter = 0; iter < kMaxLloydIters; ++iter) {
            cost = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                int best = 0;
                double best_d = std::numeric_limits<double>::max();
                for (int c = 0; c < k; ++c) {
                    const double d =
                        dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(medoids[static_cast<std::size_t>(c)]));
                    if (d < best_d) {
                        best_d = d;
                        best = c;
                    }
                }
                labels[i] = best;
                cost += best_d;
            }
            bool changed = false;
            for (int c = 0; c < k; ++c) {
                double best_total = std::numeric_limits<double>::max();
                std::size_t best_idx = medoids[static_cast<std::size_t>(c)];
                for (std::size_t cand = 0; cand < n; ++cand) {
                    if (labels[cand] != c) continue;
                    double total = 0.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        if (labels[i] == c) {
                            total += dist(static_cast<Eigen::Index>(cand), static_cast<Eigen::Index>(i));
                        }
                    }
                    if (total < best_total) {
                        best_total = total;
                        best_idx = cand;
                    }
                }
                if (best_idx != medoids[static_cast<std::size_t>(c)]) {
                    medoids[static_cast<std::size_t>(c)] = best_idx;
                    changed = true;
                }
            }
            if (!changed) break;
        }
        return std::make_tuple(medoids, labels, cost);
    };

    std::vector<std::size_t> best_medoids;
    std::vector<int> best_labels;
    double best_cost = std::numeric_limits<double>::max();
    for (int r = 0; r < restarts; ++r) {
        auto [medoids, labels, cost] = run_once(rng.split("kmedoids-restart", static_cast<std::uint64_t>(r)));
        if (cost < best_cost) {
            best_cost = cost;
            best_medoids = std::move(medoids);
            best_labels = std::move(labels);
        }
    }

    ClusterResult res;
    res.k = k;
    res.labels = best_labels;
    res.medoids = best_medoids;
    res.tss = total_sum_of_squares(vectors);
    res.wcss = partition_wcss(vectors, res.labels, k, res.centers);
    res.variance_explained =
        res.tss > 0.0 ? std::clamp(1.0 - res.wcss / res.tss, 0.0, 1.0) : (k > 1 ? 1.0 : 0.0);
    return res;
}

ElbowResult elbow(const std::vector<ShapeVector>& vectors, int k_max, Rng& rng, int restarts) {
    if (k_max < 2) {
        throw DataError("elbow: k_max must be at least 2");
    }
    check_inputs(vectors, k_max);
    ElbowResult res;
    res.variance_explained.resize(k_max);
    for (int k = 1; k <= k_max; ++k) {
        Rng sub = rng.split("elbow-k", static_cast<std::uint64_t>(k));
        res.variance_explained[k - 1] = kmeans(vectors, k, sub, restarts).variance_explained;
    }

    const double v0 = res.variance_explained[0];
    const double v1 = res.variance_explained[k_max - 1];
    if (std::abs(v1 - v0) < 1e-12) {
        res.k_star = 1; // flat curve: no gain from extra clusters
        return res;
    }
    // Normalize both axes to [0,1]; the chord becomes the diagonal and the
    // perpendicular distance is proportional to v_hat - k_hat.
    double best = -std::numeric_limits<double>::max();
    int best_k = 1;
    for (int k = 1; k <= k_max; ++k) {
        const double kh = static_cast<double>(k - 1) / static_cast<double>(k_max - 1);
        const double vh = (res.variance_explained[k - 1] - v0) / (v1 - v0);
        const double d = vh - kh;
        if (d > best + 1e-12) {
            best = d;
            best_k = k;
        }
    }
    res.k_star = best_k;
    return res;
}

std::vector<PointSet> cluster_mean_shapes(const CorrespondenceEnsemble& ens,
                                          const std::vector<int>& labels) {
    ens.validate();
    if (labels.size() != static_cast<std::size_t>(ens.size())) {
        throw DataError("cluster_mean_shapes: label count does not match ensemble size");
    }
    const int k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<PointSet> means;
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    means.resize(static_cast<std::size_t>(k));
    for (auto& m : means) {
        m.pts = Eigen::MatrixXd::Zero(ens.points(), ens.dim());
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= k) {
            throw DataError("cluster_mean_shapes: label out of range");
        }
        means[static_cast<std::size_t>(labels[i])].pts += ens.shapes[i].pts;
        ++counts[static_cast<std::size_t>(labels[i])];
    }
    for (int c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0) {
            std::ostringstream os;
            os << "cluster_mean_shapes: cluster " << c << " is empty";
            throw DataError(os.str());
        }
        means[static_cast<std::size_t>(c)].pts /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }
    return means;
}

} // namespace ssm
