#ifndef SSM_SCREENING_HPP
#define SSM_SCREENING_HPP

#include "ssm/geometry.hpp"
#include "ssm/pca.hpp"
#include "ssm/volume.hpp"

#include <optional>
#include <vector>

namespace ssm {

// Smooth L1 surrogate: (1/beta) * [log(1+exp(-beta y)) + log(1+exp(beta y))],
// evaluated in the overflow-safe softplus form |y| + (2/beta) log1p(exp(-beta|y|)).
// Exceeds |y| by at most 2 ln2 / beta (the gap peaks at y = 0).
double smooth_l1(double y, double beta);

// d/dy of the surrogate: 1/(1+exp(-beta y)) - 1/(1+exp(beta y)) = tanh(beta y / 2).
double grad_smooth_l1(double y, double beta);

struct ScreeningConfig {
    // Sparsity weight. Unset: calibrated per sample so the L1 gradient
    // saturation equals 10% of the median initial per-point data-gradient
    // magnitude.
    std::optional<double> lambda;
    double beta = 1e6;            // smooth-L1 sharpness
    double initial_offset = 1e-6; // starting slack value per point (mm)
    double convergence_tol = 1e-6;
    int max_iters = 2000;
    // Step sizes; nonpositive values select scale-aware defaults
    // (1e-2 sqrt(lambda_1) for alpha, 1e-2 mean correspondence spacing for
    // offsets).
    double initial_alpha_rate = -1.0;
    double initial_offset_rate = -1.0;
    double rate_growth = 1.1;  // multiplier after an accepted step
    double rate_backoff = 2.0; // divisor after a rejected step
    // Rigidly align the sample to the subspace mean before screening; the
    // SDT stays in the subject frame and normals are rotated across.
    bool align_to_mean = true;

    void validate() const;
};

// Optimizer state: subspace coefficients, per-point scalar offsets along the
// current surface normals, and the normal history backing the
// finite-difference term of the alpha gradient.
struct ScreeningState {
    ShapeCoefficients alpha;
    Eigen::VectorXd offsets;      // M signed mm along the outward normal
    Eigen::MatrixXd normals;      // M x 3 unit rows, evaluated at x(alpha)
    ShapeCoefficients prev_alpha; // empty until the first accepted alpha step
    Eigen::MatrixXd prev_normals;
    double energy = 0.0;

    bool has_history() const { return prev_alpha.size() > 0; }
};

struct ScreeningResult {
    ShapeCoefficients alpha;
    Eigen::VectorXd offsets;
    ShapeVector reconstruction; // closest control x(alpha), mean frame
    Eigen::MatrixXd normals;    // final unit normals at x(alpha), mean frame
    std::vector<double> energy_trace;
    int iterations = 0;
    bool converged = false;
    double resolved_lambda = 0.0;
    SimilarityTransform alignment; // subject -> mean frame (identity if disabled)
};

// E(alpha, dx) = sum_i ||x~_i - (x_i(alpha) + dx_i n_i)||^2
//              + lambda sum_i smooth_l1(dx_i).
// `lambda` must already be resolved; state.normals must be populated.
double energy(const ShapeVector& sample, const ScreeningState& state, const PcaSubspace& sub,
              double lambda, double beta);

// Data-term gradient -2 (U + F)^T r, with F the per-mode finite-difference
// approximation of the normal derivative built from the state history.
// Columns whose alpha change is below 1e-12 are zeroed. Offsets are treated
// as fixed (alternating descent).
Eigen::VectorXd grad_alpha(const ShapeVector& sample, const ScreeningState& state,
                           const PcaSubspace& sub);

// Per-point gradient -2 r_i . n_i + lambda grad_smooth_l1(dx_i).
Eigen::VectorXd grad_offsets(const ShapeVector& sample, const ScreeningState& state,
                             const PcaSubspace& sub, double lambda, double beta);

// Alternating accept-if-decrease descent on (alpha, offsets); see the
// implementation for the iteration layout. The energy trace is
// non-increasing by construction; rejected candidates are never recorded.
ScreeningResult screen(const ShapeVector& sample, const ScalarVolume& sdt, const PcaSubspace& sub,
                       const ScreeningConfig& cfg);

// |dx_i| <= half_width maps to zero, everything else passes through.
Eigen::VectorXd threshold_offsets(const Eigen::VectorXd& offsets, double half_width = 0.005);

struct GroupDifference {
    Eigen::MatrixXd displacement; // M x d, mean_a - mean_b per correspondence
    Eigen::VectorXd magnitude;    // M
};

GroupDifference group_difference(const CorrespondenceEnsemble& group_a,
                                 const CorrespondenceEnsemble& group_b);

// Counts per offset-value bin; values outside the range land in the boundary
// bins so every offset is counted.
std::vector<double> offset_histogram(const Eigen::VectorXd& offsets,
                                     const std::vector<double>& bin_edges);

struct QuantileCurves {
    std::vector<double> quantiles;
    std::vector<std::vector<double>> curves; // one per requested quantile
    std::vector<double> envelope_lo;         // median - 1.5 IQR per bin
    std::vector<double> envelope_hi;         // median + 1.5 IQR per bin
};

// Pointwise (per-bin) quantiles across sample histograms, linear
// interpolation between order statistics; the non-outlying envelope is
// median +/- 1.5 IQR.
QuantileCurves offset_quantile_curves(const std::vector<std::vector<double>>& histograms,
                                      const std::vector<double>& quantiles);

} // namespace ssm

#endif
