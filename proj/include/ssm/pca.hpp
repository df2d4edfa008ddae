#ifndef SSM_PCA_HPP
#define SSM_PCA_HPP

#include "ssm/geometry.hpp"
#include "ssm/rng.hpp"

#include <filesystem>

namespace ssm {

// How many modes a fitted subspace keeps: either an exact count or the
// smallest count whose cumulative eigenvalue share reaches `fraction`.
struct ModeRule {
    enum class Kind { FixedCount, VarianceFraction };
    Kind kind = Kind::VarianceFraction;
    int count = 0;
    double fraction = 0.97;

    static ModeRule fixed(int k) { return {Kind::FixedCount, k, 0.0}; }
    static ModeRule variance(double f) { return {Kind::VarianceFraction, 0, f}; }
};

// PCA shape space: mean vector, orthonormal modes (columns of `modes`), and
// the eigenvalue spectrum in descending order (variance units, mm^2).
struct PcaSubspace {
    ShapeVector mean;      // dM
    Eigen::MatrixXd modes; // dM x K, orthonormal columns
    Eigen::VectorXd eigenvalues; // K, descending, >= 0
    double total_variance = 0.0; // sum_n ||z_n - mean||^2 / (N-1)
    Eigen::Index dim = 0;        // d
    Eigen::Index points = 0;     // M

    Eigen::Index mode_count() const { return modes.cols(); }
    void validate() const; // orthonormality, ordering, eigenvalue budget
};

using ShapeCoefficients = Eigen::VectorXd;

// Smallest K with cumulative share of `eigenvalues` >= fraction (1-based
// count); eigenvalues must be descending. A zero spectrum yields 1.
int select_mode_count(const Eigen::VectorXd& eigenvalues, double fraction);

// Sample-covariance PCA (divisor N-1) of the flattened ensemble, computed
// through the N x N Gram matrix so the cost never scales with (dM)^2.
// Modes with eigenvalues below 1e-12 * lambda_1 are treated as numerical
// noise: the variance rule never selects them, and a fixed count reaching
// past them is padded with orthonormal zero-variance directions.
PcaSubspace fit_pca(const CorrespondenceEnsemble& ens, const ModeRule& rule);

ShapeCoefficients project(const PcaSubspace& sub, const ShapeVector& x);
ShapeVector reconstruct(const PcaSubspace& sub, const ShapeCoefficients& a);

// mean + t * sqrt(lambda_k) * u_k; k is a zero-based mode index.
ShapeVector sample_mode(const PcaSubspace& sub, Eigen::Index k, double t);

// Gaussian draw over the first k_use modes: mean + sum n_j sqrt(lambda_j) u_j.
ShapeVector sample_random(const PcaSubspace& sub, Eigen::Index k_use, Rng& rng);

void save_subspace(const PcaSubspace& sub, const std::filesystem::path& path);
PcaSubspace load_subspace(const std::filesystem::path& path);
void save_spectrum_csv(const PcaSubspace& sub, const std::filesystem::path& path);

} // namespace ssm

#endif
