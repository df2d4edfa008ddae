#include <doctest.h>

#include "ssm/errors.hpp"
#include "ssm/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

using namespace ssm;

namespace {

CorrespondenceEnsemble random_ensemble(Rng& rng, int n, Eigen::Index m) {
    CorrespondenceEnsemble ens;
    for (int i = 0; i < n; ++i) {
        PointSet ps;
        ps.pts.resize(m, 3);
        for (Eigen::Index r = 0; r < m; ++r) {
            for (Eigen::Index c = 0; c < 3; ++c) {
                ps.pts(r, c) = rng.normal();
            }
        }
        ens.shapes.push_back(std::move(ps));
    }
    return ens;
}

// Independent generalization oracle: leave-one-out PCA through the full
// covariance eigendecomposition and projector reconstruction, no shared code
// with the implementation path.
double naive_generalization(const CorrespondenceEnsemble& ens, Eigen::Index k) {
    const Eigen::Index n = ens.size();
    const Eigen::Index dm = ens.dim() * ens.points();
    double total = 0.0;
    for (Eigen::Index leave = 0; leave < n; ++leave) {
        Eigen::MatrixXd rest(dm, n - 1);
        Eigen::Index col = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (i != leave) rest.col(col++) = ens.shape_vector(i);
        }
        const Eigen::VectorXd mu = rest.rowwise().mean();
        const Eigen::MatrixXd centered = rest.colwise() - mu;
        const Eigen::MatrixXd cov =
            centered * centered.transpose() / static_cast<double>(n - 2);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
        Eigen::MatrixXd basis(dm, k);
        for (Eigen::Index j = 0; j < k; ++j) {
            basis.col(j) = eig.eigenvectors().col(dm - 1 - j);
        }
        const Eigen::VectorXd z = ens.shape_vector(leave);
        const Eigen::VectorXd recon = mu + basis * (basis.transpose() * (z - mu));
        total += (z - recon).squaredNorm();
    }
    return total / static_cast<double>(n);
}

} // namespace

TEST_CASE("compactness is the cumulative eigenvalue sum") {
    PcaSubspace sub;
    sub.dim = 1;
    sub.points = 4;
    sub.mean = ShapeVector::Zero(4);
    sub.modes = Eigen::MatrixXd::Identity(4, 2);
    sub.eigenvalues = Eigen::Vector2d(4.0, 1.0);
    sub.total_variance = 5.0;
    const MetricCurve c = compactness(sub, 2);
    CHECK(c.values[0] == 4.0);
    CHECK(c.values[1] == 5.0);
    CHECK_THROWS_AS(compactness(sub, 3), DataError);
}

TEST_CASE("identical training shapes give a zero compactness curve") {
    Rng rng(42);
    CorrespondenceEnsemble ens;
    ens.shapes.assign(5, random_ensemble(rng, 1, 6).shapes[0]);
    const PcaSubspace sub = fit_pca(ens, ModeRule::fixed(3));
    const MetricCurve c = compactness(sub, 3);
    CHECK(c.values.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("compactness reaches the total variance and never decreases") {
    Rng rng(1);
    CorrespondenceEnsemble ens = random_ensemble(rng, 8, 10);
    const PcaSubspace sub = fit_pca(ens, ModeRule::fixed(7));
    const MetricCurve c = compactness(sub, 7);
    for (Eigen::Index k = 1; k < c.k_max(); ++k) {
        CHECK(c.values[k] >= c.values[k - 1]);
    }
    CHECK(c.values[6] == doctest::Approx(sub.total_variance).epsilon(1e-8));
}

TEST_CASE("generalization") {
    SUBCASE("identical shapes have zero error") {
        Rng rng(41);
        CorrespondenceEnsemble ens;
        ens.shapes.assign(5, random_ensemble(rng, 1, 6).shapes[0]);
        const MetricCurve g = generalization(ens, 2);
        CHECK(g.values.cwiseAbs().maxCoeff() < 1e-16);
    }
    SUBCASE("a dilation family is recovered from one mode") {
        // Pure scaling about the centroid survives rigid alignment, so the
        // aligned shapes stay on a 1-D line through shape space.
        Rng rng(2);
        PointSet base;
        base.pts.resize(12, 3);
        for (Eigen::Index r = 0; r < 12; ++r) {
            for (Eigen::Index c = 0; c < 3; ++c) base.pts(r, c) = rng.normal();
        }
        base.pts.rowwise() -= base.centroid();
        CorrespondenceEnsemble ens;
        for (double s : {0.8, 0.95, 1.1, 1.25, 1.4}) {
            ens.shapes.push_back(PointSet(Eigen::MatrixXd(s * base.pts)));
        }
        const MetricCurve g = generalization(ens, 1);
        CHECK(g.values[0] <= 1e-10);
    }
    SUBCASE("an affine line is recovered from one mode without alignment") {
        Rng rng(3);
        const Eigen::Index dm = 18;
        ShapeVector mu(dm), dir(dm);
        for (Eigen::Index i = 0; i < dm; ++i) {
            mu[i] = rng.normal();
            dir[i] = rng.normal();
        }
        CorrespondenceEnsemble ens;
        for (double t : {-2.0, -0.6, 0.3, 1.0, 2.2}) {
            ens.shapes.push_back(unflatten(mu + t * dir, 3));
        }
        GeneralizationOptions opts;
        opts.align_to_loo_mean = false;
        const MetricCurve g = generalization(ens, 1, opts);
        CHECK(g.values[0] <= 1e-10);
    }
    SUBCASE("matches the brute-force oracle") {
        Rng rng(4);
        CorrespondenceEnsemble ens = random_ensemble(rng, 5, 8);
        GeneralizationOptions opts;
        opts.align_to_loo_mean = false;
        const MetricCurve g = generalization(ens, 3, opts);
        for (Eigen::Index k = 1; k <= 3; ++k) {
            const double expected = naive_generalization(ens, k);
            CHECK(g.values[k - 1] == doctest::Approx(expected).epsilon(1e-9));
        }
    }
    SUBCASE("preconditions") {
        Rng rng(5);
        CorrespondenceEnsemble ens = random_ensemble(rng, 5, 8);
        CHECK_THROWS_AS(generalization(ens, 4), DataError); // K_max > N-2
        CorrespondenceEnsemble two = random_ensemble(rng, 2, 8);
        CHECK_THROWS_AS(generalization(two, 1), DataError);
    }
}

TEST_CASE("specificity") {
    SUBCASE("zero spectrum collapses to the distance from the mean") {
        CorrespondenceEnsemble train;
        PointSet a, b;
        a.pts = Eigen::MatrixXd::Constant(4, 3, 1.0);
        b.pts = Eigen::MatrixXd::Constant(4, 3, 1.0);
        train.shapes = {a, b};
        PcaSubspace sub = fit_pca(train, ModeRule::variance(0.97)); // one zero mode
        // Move the mean away from the training shapes to get a nonzero floor.
        sub.mean.array() += 0.5;
        Rng rng(6);
        const MetricCurve s = specificity(sub, train, 1, 50, rng);
        const double expected = (sub.mean - train.shape_vector(0)).squaredNorm();
        CHECK(s.values[0] == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("single training shape at the mean has unit expected distance") {
        // lambda = [1] and one unit mode: the squared distance of a draw is
        // n^2 with n standard normal, so the mean approaches E[n^2] = 1.
        const Eigen::Index dm = 12;
        PcaSubspace sub;
        sub.dim = 3;
        sub.points = 4;
        Rng rng(7);
        sub.mean.resize(dm);
        for (Eigen::Index i = 0; i < dm; ++i) sub.mean[i] = rng.normal();
        Eigen::VectorXd u = Eigen::VectorXd::Zero(dm);
        u[3] = 1.0;
        sub.modes = u;
        sub.eigenvalues = Eigen::VectorXd::Ones(1);
        sub.total_variance = 1.0;
        CorrespondenceEnsemble train;
        train.shapes.push_back(unflatten(sub.mean, 3));
        Rng draw(8);
        const MetricCurve s = specificity(sub, train, 1, 10000, draw);
        CHECK(s.values[0] == doctest::Approx(1.0).epsilon(0.10));
    }
    SUBCASE("sample-count stability") {
        Rng rng(9);
        CorrespondenceEnsemble ens = random_ensemble(rng, 6, 8);
        const PcaSubspace sub = fit_pca(ens, ModeRule::fixed(4));
        Rng a(10), b(11);
        const MetricCurve s1 = specificity(sub, ens, 4, 1000, a);
        const MetricCurve s2 = specificity(sub, ens, 4, 10000, b);
        for (Eigen::Index k = 0; k < 4; ++k) {
            CHECK(std::fabs(s1.values[k] - s2.values[k]) <= 0.05 * s2.values[k]);
        }
    }
}

TEST_CASE("generalization is non-increasing in K") {
    Rng rng(12);
    CorrespondenceEnsemble ens = random_ensemble(rng, 10, 8);
    const Eigen::Index k_max = 6;
    const MetricCurve g = generalization(ens, k_max);
    for (Eigen::Index k = 1; k < k_max; ++k) {
        CHECK(g.values[k] <= g.values[k - 1] + 1e-12);
    }
}

TEST_CASE("rms normalization and curve comparison") {
    MetricCurve c;
    c.name = "generalization";
    c.values = Eigen::Vector3d(4.0, 1.0, 0.25);
    const MetricCurve rms = rms_per_point(c, 4);
    CHECK(rms.values[0] == doctest::Approx(1.0));
    CHECK(rms.values[2] == doctest::Approx(0.25));

    MetricCurve d = c;
    d.values = Eigen::Vector3d(5.0, 0.5, 0.25);
    const CurveComparison cmp = compare_curves(c, d);
    CHECK(cmp.a_lower == 1);
    CHECK(cmp.b_lower == 1);
    CHECK(cmp.ties == 1);
}
