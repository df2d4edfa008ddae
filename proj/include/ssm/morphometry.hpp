#ifndef SSM_MORPHOMETRY_HPP
#define SSM_MORPHOMETRY_HPP

#include "ssm/geometry.hpp"
#include "ssm/tps.hpp"

#include <map>
#include <string>
#include <vector>

namespace ssm {

// Validation record for one experiment: measurement pairs (ground truth vs
// prediction, mm) and/or per-curve mean landmark errors (mm).
struct MeasurementReport {
    std::vector<double> truth;
    std::vector<double> predicted;
    std::vector<double> abs_difference;
    std::map<std::string, double> curve_errors; // mean Euclidean distance per curve
    double overall_mean_error = 0.0;            // mean over all landmark points
};

// Warps mean-space landmarks into a subject's space through a TPS fitted on
// the shared correspondences (mean -> subject). Curve names and point order
// are preserved.
LandmarkSet infer_landmarks(const PointSet& mean_correspondences, const LandmarkSet& mean_landmarks,
                            const PointSet& subject_correspondences, double regularization = 0.0);

// Similarity-transform alternative for pairwise-model predictions: fits
// mean -> subject over the correspondences and applies it to the landmarks.
LandmarkSet procrustes_fit_landmarks(const LandmarkSet& predicted,
                                     const PointSet& subject_correspondences,
                                     const PointSet& mean_correspondences, bool allow_scale = true);

// Groupwise pathway: each subject's landmarks are warped to the mean space
// (subject -> mean TPS over correspondences) and averaged per curve point.
LandmarkSet mean_warped_landmarks(const std::vector<LandmarkSet>& subject_landmarks,
                                  const std::vector<PointSet>& subject_correspondences,
                                  const PointSet& mean_correspondences, double regularization = 0.0);

// Best-fit plane projection followed by a direct least-squares conic fit
// constrained to an ellipse; returns (max diameter, min diameter) = (2a, 2b).
// Needs >= 5 ring points; throws NumericalError when the fit is not an
// ellipse.
std::pair<double, double> fit_ellipse_diameters(const PointSet& ring);

// Pointwise Euclidean distances between matching curves; per-curve means and
// the overall mean over all points. Curve names and point counts must match.
MeasurementReport landmark_errors(const LandmarkSet& predicted, const LandmarkSet& truth);

// Pairs scalar measurements (e.g. diameters) with their absolute differences.
MeasurementReport measurement_report(const std::vector<double>& truth,
                                     const std::vector<double>& predicted);

} // namespace ssm

#endif
