#include <doctest.h>

#include "ssm/cluster.hpp"
#include "ssm/errors.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

using namespace ssm;

namespace {

std::vector<ShapeVector> blob_data(Rng& rng, const std::vector<Eigen::VectorXd>& centers,
                                   int per_cluster, double spread, std::vector<int>* truth) {
    std::vector<ShapeVector> out;
    for (std::size_t c = 0; c < centers.size(); ++c) {
        for (int i = 0; i < per_cluster; ++i) {
            ShapeVector v = centers[c];
            for (Eigen::Index j = 0; j < v.size(); ++j) {
                v[j] += spread * rng.normal();
            }
            out.push_back(std::move(v));
            if (truth) truth->push_back(static_cast<int>(c));
        }
    }
    return out;
}

// Best label-permutation agreement for small k.
double permuted_agreement(const std::vector<int>& truth, const std::vector<int>& found, int k) {
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    double best = 0.0;
    do {
        int hits = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            if (perm[static_cast<std::size_t>(found[i])] == truth[i]) ++hits;
        }
        best = std::max(best, static_cast<double>(hits) / truth.size());
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

double wcss_of_partition(const std::vector<ShapeVector>& vectors, const std::vector<int>& labels,
                         int k) {
    std::vector<ShapeVector> sums(static_cast<std::size_t>(k),
                                  ShapeVector::Zero(vectors.front().size()));
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        sums[static_cast<std::size_t>(labels[i])] += vectors[i];
        ++counts[static_cast<std::size_t>(labels[i])];
    }
    double wcss = 0.0;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        const auto c = static_cast<std::size_t>(labels[i]);
        wcss += (vectors[i] - sums[c] / counts[c]).squaredNorm();
    }
    return wcss;
}

} // namespace

TEST_CASE("kmeans separates far-apart blobs") {
    Rng rng(1);
    Eigen::VectorXd c1 = Eigen::VectorXd::Zero(6);
    Eigen::VectorXd c2 = Eigen::VectorXd::Constant(6, 100.0);
    std::vector<int> truth;
    const auto vectors = blob_data(rng, {c1, c2}, 10, 1.0, &truth);
    Rng cr(2);
    const ClusterResult res = kmeans(vectors, 2, cr);
    CHECK(permuted_agreement(truth, res.labels, 2) == 1.0);
    CHECK(res.variance_explained > 0.99);
}

TEST_CASE("kmeans edge cases") {
    Rng rng(3);
    std::vector<int> truth;
    const auto vectors = blob_data(rng, {Eigen::VectorXd::Zero(4)}, 12, 2.0, &truth);
    SUBCASE("k = 1 gives the global mean and zero variance explained") {
        Rng cr(4);
        const ClusterResult res = kmeans(vectors, 1, cr);
        ShapeVector mean = ShapeVector::Zero(4);
        for (const auto& v : vectors) mean += v;
        mean /= static_cast<double>(vectors.size());
        CHECK((res.centers.row(0).transpose() - mean).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(res.variance_explained == 0.0);
    }
    SUBCASE("k = N explains everything") {
        Rng cr(5);
        const ClusterResult res = kmeans(vectors, static_cast<int>(vectors.size()), cr);
        CHECK(res.wcss < 1e-16);
        CHECK(res.variance_explained == doctest::Approx(1.0));
    }
    SUBCASE("invalid k") {
        Rng cr(6);
        CHECK_THROWS_AS(kmeans(vectors, 0, cr), DataError);
        CHECK_THROWS_AS(kmeans(vectors, static_cast<int>(vectors.size()) + 1, cr), DataError);
    }
    SUBCASE("wcss is invariant to relabeling") {
        Rng cr(7);
        const ClusterResult res = kmeans(vectors, 3, cr);
        std::vector<int> relabeled(res.labels.size());
        const int perm[3] = {2, 0, 1};
        for (std::size_t i = 0; i < res.labels.size(); ++i) {
            relabeled[i] = perm[res.labels[i]];
        }
        CHECK(wcss_of_partition(vectors, res.labels, 3) ==
              doctest::Approx(wcss_of_partition(vectors, relabeled, 3)).epsilon(1e-12));
    }
}

TEST_CASE("kmedoids") {
    Rng rng(8);
    std::vector<int> truth;
    const auto vectors = blob_data(rng, {Eigen::VectorXd::Zero(5)}, 9, 3.0, &truth);
    SUBCASE("k = 1 medoid minimizes the total distance, exhaustively checked") {
        Rng cr(9);
        const ClusterResult res = kmedoids(vectors, 1, cr);
        REQUIRE(res.medoids.size() == 1);
        auto total_distance = [&](std::size_t m) {
            double t = 0.0;
            for (const auto& v : vectors) t += (v - vectors[m]).norm();
            return t;
        };
        double best = std::numeric_limits<double>::max();
        for (std::size_t m = 0; m < vectors.size(); ++m) {
            best = std::min(best, total_distance(m));
        }
        CHECK(total_distance(res.medoids[0]) == doctest::Approx(best).epsilon(1e-12));
    }
    SUBCASE("identical vectors: any medoid works, zero wcss") {
        std::vector<ShapeVector> same(6, Eigen::VectorXd::Constant(4, 3.0));
        Rng cr(10);
        const ClusterResult res = kmedoids(same, 2, cr);
        CHECK(res.wcss == 0.0);
    }
    SUBCASE("same seed, same medoids") {
        Rng a(11), b(11);
        const ClusterResult ra = kmedoids(vectors, 3, a);
        const ClusterResult rb = kmedoids(vectors, 3, b);
        CHECK(ra.medoids == rb.medoids);
        CHECK(ra.labels == rb.labels);
    }
    SUBCASE("separated blobs recovered") {
        Rng rng2(12);
        std::vector<int> t2;
        const auto far = blob_data(
            rng2, {Eigen::VectorXd::Zero(5), Eigen::VectorXd::Constant(5, 80.0)}, 8, 1.0, &t2);
        Rng cr(13);
        const ClusterResult res = kmedoids(far, 2, cr);
        CHECK(permuted_agreement(t2, res.labels, 2) == 1.0);
    }
}

TEST_CASE("elbow finds the cluster count of well-separated data") {
    int hits = 0;
    for (int seed = 0; seed < 20; ++seed) {
        Rng rng(100 + seed);
        std::vector<Eigen::VectorXd> centers;
        for (int c = 0; c < 4; ++c) {
            Eigen::VectorXd v = Eigen::VectorXd::Zero(8);
            v[c] = 60.0;
            centers.push_back(v);
        }
        std::vector<int> truth;
        const auto vectors = blob_data(rng, centers, 8, 1.0, &truth);
        Rng cr(200 + seed);
        const ElbowResult res = elbow(vectors, 8, cr);
        if (res.k_star == 4) ++hits;
    }
    CHECK(hits >= 18); // 90% of 20 seeds
}

TEST_CASE("elbow curve shape") {
    Rng rng(14);
    std::vector<int> truth;
    const auto vectors = blob_data(rng, {Eigen::VectorXd::Zero(6)}, 10, 1.0, &truth);
    Rng cr(15);
    const ElbowResult res = elbow(vectors, static_cast<int>(vectors.size()), cr);
    CHECK(res.variance_explained[0] == 0.0); // k = 1 convention
    CHECK(res.variance_explained[vectors.size() - 1] == doctest::Approx(1.0));
    for (Eigen::Index k = 1; k < res.variance_explained.size(); ++k) {
        CHECK(res.variance_explained[k] >= res.variance_explained[k - 1] - 0.02);
    }
    SUBCASE("a single tight blob resolves to one or two clusters") {
        std::vector<ShapeVector> same(8, Eigen::VectorXd::Constant(5, 1.0));
        Rng cr2(16);
        const ElbowResult flat = elbow(same, 6, cr2);
        CHECK(flat.k_star <= 2);
    }
    SUBCASE("k_max below 2 is rejected") {
        Rng cr2(17);
        CHECK_THROWS_AS(elbow(vectors, 1, cr2), DataError);
    }
}

TEST_CASE("cluster_mean_shapes") {
    CorrespondenceEnsemble ens;
    for (int n = 0; n < 4; ++n) {
        PointSet p;
        p.pts = Eigen::MatrixXd::Constant(3, 3, static_cast<double>(n));
        ens.shapes.push_back(std::move(p));
    }
    SUBCASE("single cluster gives the global mean") {
        const auto means = cluster_mean_shapes(ens, {0, 0, 0, 0});
        REQUIRE(means.size() == 1);
        CHECK(means[0].pts(0, 0) == doctest::Approx(1.5));
    }
    SUBCASE("singleton clusters return the shapes themselves") {
        const auto means = cluster_mean_shapes(ens, {0, 1, 0, 1});
        REQUIRE(means.size() == 2);
        CHECK(means[0].pts(0, 0) == doctest::Approx(1.0));
        CHECK(means[1].pts(0, 0) == doctest::Approx(2.0));
    }
    SUBCASE("permuting the shape order leaves the means unchanged") {
        CorrespondenceEnsemble permuted;
        permuted.shapes = {ens.shapes[2], ens.shapes[0], ens.shapes[3], ens.shapes[1]};
        // labels travel with their shapes: order {2, 0, 3, 1} carries {0, 0, 1, 1}
        const auto a = cluster_mean_shapes(ens, {0, 1, 0, 1});
        const auto b = cluster_mean_shapes(permuted, {0, 0, 1, 1});
        CHECK((a[0].pts - b[0].pts).cwiseAbs().maxCoeff() == 0.0);
        CHECK((a[1].pts - b[1].pts).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("empty cluster is an error") {
        CHECK_THROWS_AS(cluster_mean_shapes(ens, {0, 0, 2, 2}), DataError);
    }
}
