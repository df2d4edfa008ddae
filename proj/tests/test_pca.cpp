#include <doctest.h>

#include "ssm/errors.hpp"
#include "ssm/pca.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <filesystem>

using namespace ssm;

namespace {

CorrespondenceEnsemble random_ensemble(Rng& rng, int n, Eigen::Index m, Eigen::Index d = 3) {
    CorrespondenceEnsemble ens;
    for (int i = 0; i < n; ++i) {
        PointSet ps;
        ps.pts.resize(m, d);
        for (Eigen::Index r = 0; r < m; ++r) {
            for (Eigen::Index c = 0; c < d; ++c) {
                ps.pts(r, c) = rng.normal();
            }
        }
        ens.shapes.push_back(std::move(ps));
    }
    return ens;
}

// N=4 ensemble whose sample covariance has an exact, chosen spectrum: the
// coefficient matrix rows come from a scaled Hadamard design with zero mean
// and per-column norm sqrt(N-1).
CorrespondenceEnsemble exact_spectrum_ensemble(const Eigen::Vector3d& lambdas, Eigen::Index m,
                                               Rng& rng) {
    Eigen::MatrixXd coeff(4, 3);
    coeff << 1, 1, 1,
             1, -1, -1,
             -1, 1, -1,
             -1, -1, 1;
    coeff *= std::sqrt(3.0) / 2.0; // columns: mean 0, squared norm N-1 = 3

    const Eigen::Index dm = 3 * m;
    Eigen::MatrixXd basis(dm, 3);
    for (Eigen::Index i = 0; i < dm; ++i) {
        for (int j = 0; j < 3; ++j) basis(i, j) = rng.normal();
    }
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(basis)
                                  .householderQ() *
                              Eigen::MatrixXd::Identity(dm, 3);
    ShapeVector mu(dm);
    for (Eigen::Index i = 0; i < dm; ++i) mu[i] = rng.normal();

    CorrespondenceEnsemble ens;
    for (int n = 0; n < 4; ++n) {
        ShapeVector z = mu;
        for (int j = 0; j < 3; ++j) {
            z += coeff(n, j) * std::sqrt(lambdas[j]) * q.col(j);
        }
        ens.shapes.push_back(unflatten(z, 3));
    }
    return ens;
}

} // namespace

TEST_CASE("two distinct shapes give one nonzero eigenvalue and the midpoint mean") {
    Rng rng(1);
    CorrespondenceEnsemble ens = random_ensemble(rng, 2, 6);
    const PcaSubspace sub = fit_pca(ens, ModeRule::variance(0.99));
    REQUIRE(sub.mode_count() == 1);
    CHECK(sub.eigenvalues[0] > 0.0);
    const ShapeVector midpoint = 0.5 * (ens.shape_vector(0) + ens.shape_vector(1));
    CHECK((sub.mean - midpoint).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("variance rule picks the smallest K reaching the fraction") {
    Eigen::VectorXd spectrum(3);
    spectrum << 90, 8, 2;
    CHECK(select_mode_count(spectrum, 0.97) == 2); // 0.98 >= 0.97
    CHECK(select_mode_count(spectrum, 0.90) == 1);
    CHECK(select_mode_count(spectrum, 0.99) == 3);

    SUBCASE("the same rule applies to a fitted spectrum") {
        Rng rng(2);
        CorrespondenceEnsemble ens = exact_spectrum_ensemble({90, 8, 2}, 40, rng);
        const PcaSubspace full = fit_pca(ens, ModeRule::fixed(3));
        CHECK(full.eigenvalues[0] == doctest::Approx(90).epsilon(1e-8));
        CHECK(full.eigenvalues[1] == doctest::Approx(8).epsilon(1e-8));
        CHECK(full.eigenvalues[2] == doctest::Approx(2).epsilon(1e-8));
        const PcaSubspace sub = fit_pca(ens, ModeRule::variance(0.97));
        CHECK(sub.mode_count() == 2);
    }
}

TEST_CASE("project and reconstruct identities") {
    Rng rng(3);
    CorrespondenceEnsemble ens = random_ensemble(rng, 6, 8);
    const PcaSubspace sub = fit_pca(ens, ModeRule::fixed(4));

    SUBCASE("the mean projects to zero") {
        const ShapeCoefficients a = project(sub, sub.mean);
        CHECK(a.cwiseAbs().maxCoeff() < 1e-10);
    }
    SUBCASE("mean plus three units of the first mode") {
        const ShapeVector x = sub.mean + 3.0 * sub.modes.col(0);
        const ShapeCoefficients a = project(sub, x);
        CHECK(a[0] == doctest::Approx(3.0).epsilon(1e-10));
        CHECK(a.tail(3).cwiseAbs().maxCoeff() < 1e-10);
    }
    SUBCASE("reconstruct with zero coefficients returns the mean") {
        CHECK((reconstruct(sub, ShapeCoefficients::Zero(4)) - sub.mean).cwiseAbs().maxCoeff() ==
              0.0);
    }
    SUBCASE("linearity") {
        ShapeCoefficients a = ShapeCoefficients::Zero(4);
        a[0] = 1.0;
        a[1] = 1.0;
        const ShapeVector x = reconstruct(sub, a);
        CHECK((x - (sub.mean + sub.modes.col(0) + sub.modes.col(1))).cwiseAbs().maxCoeff() <
              1e-12);
    }
    SUBCASE("projection identity on the subspace") {
        Rng r2(4);
        ShapeCoefficients a(4);
        for (int i = 0; i < 4; ++i) a[i] = r2.normal();
        const ShapeVector x = reconstruct(sub, a);
        CHECK((reconstruct(sub, project(sub, x)) - x).cwiseAbs().maxCoeff() < 1e-10);
    }
    SUBCASE("projection minimizes the reconstruction error over coefficients") {
        Rng r2(5);
        ShapeVector x(sub.mean.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = r2.normal();
        const double best = (x - reconstruct(sub, project(sub, x))).squaredNorm();
        for (int trial = 0; trial < 100; ++trial) {
            ShapeCoefficients beta(4);
            for (int i = 0; i < 4; ++i) beta[i] = 3.0 * r2.normal();
            CHECK(best <= (x - reconstruct(sub, beta)).squaredNorm() + 1e-12);
        }
    }
}

TEST_CASE("sample_mode walks along one mode") {
    Rng rng(6);
    CorrespondenceEnsemble ens = random_ensemble(rng, 5, 7);
    const PcaSubspace sub = fit_pca(ens, ModeRule::fixed(3));

    CHECK((sample_mode(sub, 1, 0.0) - sub.mean).cwiseAbs().maxCoeff() == 0.0);
    const ShapeVector plus = sample_mode(sub, 1, 3.0);
    const ShapeVector minus = sample_mode(sub, 1, -3.0);
    CHECK((0.5 * (plus + minus) - sub.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((sample_mode(sub, 2, 1.0) - sub.mean).norm() ==
          doctest::Approx(std::sqrt(sub.eigenvalues[2])).epsilon(1e-10));
    CHECK_THROWS_AS(sample_mode(sub, 3, 1.0), DataError);
}

TEST_CASE("sample_random") {
    SUBCASE("degenerate spectrum always returns the mean") {
        CorrespondenceEnsemble ens;
        PointSet p;
        p.pts = Eigen::MatrixXd::Constant(5, 3, 2.0);
        ens.shapes.assign(4, p);
        const PcaSubspace sub = fit_pca(ens, ModeRule::variance(0.97));
        Rng rng(7);
        for (int i = 0; i < 5; ++i) {
            CHECK((sample_random(sub, 1, rng) - sub.mean).cwiseAbs().maxCoeff() == 0.0);
        }
    }
    SUBCASE("empirical variance along the first mode approximates lambda_1") {
        Rng rng(8);
        CorrespondenceEnsemble ens = random_ensemble(rng, 8, 10);
        const PcaSubspace sub = fit_pca(ens, ModeRule::fixed(4));
        Rng draw(9);
        double sum = 0.0, sumsq = 0.0;
        const int n = 10000;
        for (int i = 0; i < n; ++i) {
            const double c = sub.modes.col(0).dot(sample_random(sub, 4, draw) - sub.mean);
            sum += c;
            sumsq += c * c;
        }
        const double var = sumsq / n - (sum / n) * (sum / n);
        CHECK(var == doctest::Approx(sub.eigenvalues[0]).epsilon(0.10));
    }
    SUBCASE("same seed gives the identical sample") {
        Rng rng(10);
        CorrespondenceEnsemble ens = random_ensemble(rng, 5, 6);
        const PcaSubspace sub = fit_pca(ens, ModeRule::fixed(3));
        Rng a(42), b(42);
        CHECK((sample_random(sub, 3, a) - sample_random(sub, 3, b)).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("reconstruction error is non-increasing in the mode count") {
    Rng rng(11);
    CorrespondenceEnsemble ens = random_ensemble(rng, 8, 12);
    ShapeVector x(ens.dim() * ens.points());
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.normal();
    double prev = std::numeric_limits<double>::max();
    for (int k = 1; k <= 7; ++k) {
        const PcaSubspace sub = fit_pca(ens, ModeRule::fixed(k));
        const double err = (x - reconstruct(sub, project(sub, x))).squaredNorm();
        CHECK(err <= prev + 1e-9);
        prev = err;
    }
}

TEST_CASE("a global rotation of the ensemble rotates the mean") {
    Rng rng(12);
    CorrespondenceEnsemble ens = random_ensemble(rng, 6, 9);
    const Eigen::Matrix3d r =
        Eigen::AngleAxisd(0.8, Eigen::Vector3d(1, 2, -1).normalized()).toRotationMatrix();
    CorrespondenceEnsemble rotated = ens;
    for (auto& s : rotated.shapes) {
        s.pts = s.pts * r.transpose();
    }
    const PcaSubspace sub = fit_pca(ens, ModeRule::fixed(3));
    const PcaSubspace rsub = fit_pca(rotated, ModeRule::fixed(3));
    const PointSet mean_rotated(Eigen::MatrixXd(unflatten(sub.mean, 3).pts * r.transpose()));
    CHECK((flatten(mean_rotated) - rsub.mean).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("eigenvalues sum to the total sample variance") {
    Rng rng(13);
    CorrespondenceEnsemble ens = random_ensemble(rng, 7, 10);
    const PcaSubspace sub = fit_pca(ens, ModeRule::fixed(6));
    CHECK(sub.eigenvalues.sum() ==
          doctest::Approx(sub.total_variance).epsilon(1e-8));
    // Independent route: average squared distance to the mean.
    double total = 0.0;
    for (Eigen::Index n = 0; n < ens.size(); ++n) {
        total += (ens.shape_vector(n) - sub.mean).squaredNorm();
    }
    total /= static_cast<double>(ens.size() - 1);
    CHECK(sub.total_variance == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("requesting more modes than the rank reports the achievable rank") {
    Rng rng(14);
    CorrespondenceEnsemble ens = random_ensemble(rng, 4, 10);
    CHECK_THROWS_WITH_AS(fit_pca(ens, ModeRule::fixed(4)), doctest::Contains("achievable rank is 3"),
                         DataError);
    CHECK_THROWS_AS(fit_pca(CorrespondenceEnsemble{{ens.shapes[0]}}, ModeRule::fixed(1)),
                    DataError);
}

TEST_CASE("subspace serialization round trip") {
    Rng rng(15);
    CorrespondenceEnsemble ens = random_ensemble(rng, 6, 5);
    const PcaSubspace sub = fit_pca(ens, ModeRule::fixed(4));
    const auto dir = std::filesystem::temp_directory_path() / "ssm_pca_tests";
    std::filesystem::create_directories(dir);
    save_subspace(sub, dir / "sub.txt");
    const PcaSubspace back = load_subspace(dir / "sub.txt");
    CHECK((back.mean - sub.mean).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.modes - sub.modes).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.eigenvalues - sub.eigenvalues).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.total_variance == sub.total_variance);
    save_spectrum_csv(sub, dir / "spectrum.csv");
    CHECK(std::filesystem::exists(dir / "spectrum.csv"));
}
