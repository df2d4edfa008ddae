#ifndef SSM_METRICS_HPP
#define SSM_METRICS_HPP

#include "ssm/geometry.hpp"
#include "ssm/pca.hpp"
#include "ssm/rng.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ssm {

// One evaluation metric as a function of the mode count K = 1..K_max.
// Compactness carries variance units (mm^2); generalization and specificity
// carry squared millimeters.
struct MetricCurve {
    std::string name;
    Eigen::VectorXd values;                 // index k-1 holds the value at K = k
    std::optional<Eigen::VectorXd> stderrs; // per-K standard error (specificity)

    Eigen::Index k_max() const { return values.size(); }
};

struct GeneralizationOptions {
    // Procrustes-align each held-out shape to the leave-one-out mean before
    // projecting, so pose differences do not contaminate the metric.
    bool align_to_loo_mean = true;
    bool allow_scale = false;
};

// C(K): cumulative eigenvalue sum, non-decreasing in K.
MetricCurve compactness(const PcaSubspace& sub, Eigen::Index k_max);

// G(K): mean leave-one-out squared reconstruction error with K modes.
MetricCurve generalization(const CorrespondenceEnsemble& ens, Eigen::Index k_max,
                           const GeneralizationOptions& opts = {});

// S(K): mean squared distance from J model samples (first K modes, Gaussian
// coefficients) to the nearest training shape; stderr of the mean included.
MetricCurve specificity(const PcaSubspace& sub, const CorrespondenceEnsemble& train,
                        Eigen::Index k_max, Eigen::Index j_samples, Rng& rng);

// Divide by the point count and take the square root: per-point RMS in mm,
// for scale-comparable plots.
MetricCurve rms_per_point(const MetricCurve& curve, Eigen::Index points);

// Curve-wise comparison: counts the K values where each model is lower.
// Both orderings are reported for compactness because the literature uses
// "lower C(K) is more compact" and "higher captured variance is better"
// interchangeably; this report takes no side.
struct CurveComparison {
    std::string metric;
    int a_lower = 0;
    int b_lower = 0;
    int ties = 0;
};
CurveComparison compare_curves(const MetricCurve& a, const MetricCurve& b, double tol = 0.0);

// CSV with columns K, compactness, generalization, specificity,
// specificity_stderr (blank cells where a curve is missing or shorter).
void write_metrics_csv(const std::filesystem::path& path, const MetricCurve& compact,
                       const MetricCurve& general, const MetricCurve& specific,
                       const MetricCurve* general_rms = nullptr,
                       const MetricCurve* specific_rms = nullptr);

} // namespace ssm

#endif
