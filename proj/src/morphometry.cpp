#include "ssm/morphometry.hpp"

#include "ssm/align.hpp"
#include "ssm/errors.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace ssm {

LandmarkSet infer_landmarks(const PointSet& mean_correspondences, const LandmarkSet& mean_landmarks,
                            const PointSet& subject_correspondences, double regularization) {
    if (mean_correspondences.size() != subject_correspondences.size()) {
        throw DataError("infer_landmarks: mean and subject correspondences differ in count");
    }
    mean_landmarks.validate();
    const TpsWarp w = fit_tps(mean_correspondences, subject_correspondences, regularization);
    LandmarkSet out;
    for (const auto& [name, pts] : mean_landmarks.curves) {
        out.curves[name] = w.apply(PointSet(pts)).pts;
    }
    return out;
}

LandmarkSet procrustes_fit_landmarks(const LandmarkSet& predicted,
                                     const PointSet& subject_correspondences,
                                     const PointSet& mean_correspondences, bool allow_scale) {
    predicted.validate();
    const SimilarityTransform t =
        rigid_align(mean_correspondences, subject_correspondences, allow_scale);
    LandmarkSet out;
    for (const auto& [name, pts] : predicted.curves) {
        out.curves[name] = t.apply(PointSet(pts)).pts;
    }
    return out;
}

LandmarkSet mean_warped_landmarks(const std::vector<LandmarkSet>& subject_landmarks,
                                  const std::vector<PointSet>& subject_correspondences,
                                  const PointSet& mean_correspondences, double regularization) {
    if (subject_landmarks.empty() || subject_landmarks.size() != subject_correspondences.size()) {
        throw DataError("mean_warped_landmarks: need one landmark set per subject");
    }
    LandmarkSet accum;
    std::map<std::string, int> counts;
    for (std::size_t s = 0; s < subject_landmarks.size(); ++s) {
        const TpsWarp w = fit_tps(subject_correspondences[s], mean_correspondences, regularization);
        for (const auto& [name, pts] : subject_landmarks[s].curves) {
            const Eigen::MatrixXd warped = w.apply(PointSet(pts)).pts;
            auto it = accum.curves.find(name);
            if (it == accum.curves.end()) {
                accum.curves[name] = warped;
            } else {
                if (it->second.rows() != warped.rows()) {
                    throw DataError("mean_warped_landmarks: curve '" + name +
                                    "' has inconsistent point counts across subjects");
                }
                it->second += warped;
            }
            ++counts[name];
        }
    }
    for (auto& [name, pts] : accum.curves) {
        pts /= static_cast<double>(counts.at(name));
    }
    return accum;
}

std::pair<double, double> fit_ellipse_diameters(const PointSet& ring) {
    if (ring.dim() != 3) {
        throw DataError("fit_ellipse_diameters: ring points must be 3-D");
    }
    const Eigen::Index n = ring.size();
    if (n < 5) {
        std::ostringstream os;
        os << "fit_ellipse_diameters: need at least 5 points, got " << n;
        throw DataError(os.str());
    }

    // Project onto the best-fit plane (smallest-variance direction is the
    // plane normal).
    const Eigen::RowVector3d centroid = ring.pts.colwise().mean();
    const Eigen::MatrixXd centered = ring.pts.rowwise() - centroid;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(centered.transpose() * centered);
    const Eigen::Vector3d e1 = eig.eigenvectors().col(2); // largest variance
    const Eigen::Vector3d e2 = eig.eigenvectors().col(1);
    Eigen::VectorXd x = centered * e1;
    Eigen::VectorXd y = centered * e2;

    // Normalize scale for conditioning; diameters scale back linearly.
    const double scale = std::sqrt((x.squaredNorm() + y.squaredNorm()) / static_cast<double>(n));
    if (!(scale > 0.0)) {
        throw NumericalError("fit_ellipse_diameters: degenerate ring");
    }
    x /= scale;
    y /= scale;

    // Halir-Flusser stable direct least squares with the ellipse constraint
    // 4ac - b^2 = 1.
    Eigen::MatrixXd d1(n, 3), d2(n, 3);
    d1.col(0) = x.array().square();
    d1.col(1) = x.array() * y.array();
    d1.col(2) = y.array().square();
    d2.col(0) = x;
    d2.col(1) = y;
    d2.col(2) = Eigen::VectorXd::Ones(n);
    const Eigen::Matrix3d s1 = d1.transpose() * d1;
    const Eigen::Matrix3d s2 = d1.transpose() * d2;
    const Eigen::Matrix3d s3 = d2.transpose() * d2;
    const Eigen::Matrix3d t = -s3.fullPivLu().solve(s2.transpose());
    const Eigen::Matrix3d m0 = s1 + s2 * t;
    Eigen::Matrix3d m;
    m.row(0) = m0.row(2) / 2.0;
    m.row(1) = -m0.row(1);
    m.row(2) = m0.row(0) / 2.0;

    Eigen::EigenSolver<Eigen::Matrix3d> es(m);
    Eigen::Vector3d a1 = Eigen::Vector3d::Zero();
    bool found = false;
    for (int i = 0; i < 3; ++i) {
        if (std::abs(es.eigenvalues()[i].imag()) > 1e-8) continue;
        const Eigen::Vector3d v = es.eigenvectors().col(i).real();
        const double cond = 4.0 * v[0] * v[2] - v[1] * v[1];
        if (cond > 0.0) {
            a1 = v;
            found = true;
            break;
        }
    }
    if (!found) {
        throw NumericalError("fit_ellipse_diameters: conic fit did not produce an ellipse");
    }
    const Eigen::Vector3d a2 = t * a1;
    const double a = a1[0], b = a1[1], c = a1[2];
    const double d = a2[0], e = a2[1], f = a2[2];

    Eigen::Matrix2d q;
    q << a, b / 2.0, b / 2.0, c;
    const Eigen::Vector2d l(d, e);
    const Eigen::Vector2d center = q.fullPivLu().solve(-0.5 * l);
    const double rhs = -0.5 * l.dot(center) - f; // (p-c)^T Q (p-c) = rhs on the conic
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> qe(q);
    const double ax1 = rhs / qe.eigenvalues()[0];
    const double ax2 = rhs / qe.eigenvalues()[1];
    if (!(ax1 > 0.0) || !(ax2 > 0.0)) {
        throw NumericalError("fit_ellipse_diameters: conic fit did not produce an ellipse");
    }
    const double semi_major = std::sqrt(std::max(ax1, ax2)) * scale;
    const double semi_minor = std::sqrt(std::min(ax1, ax2)) * scale;
    return {2.0 * semi_major, 2.0 * semi_minor};
}

MeasurementReport landmark_errors(const LandmarkSet& predicted, const LandmarkSet& truth) {
    predicted.validate();
    truth.validate();
    if (predicted.curves.size() != truth.curves.size()) {
        throw DataError("landmark_errors: curve sets differ");
    }
    MeasurementReport report;
    double total = 0.0;
    Eigen::Index count = 0;
    for (const auto& [name, tpts] : truth.curves) {
        auto it = predicted.curves.find(name);
        if (it == predicted.curves.end()) {
            throw DataError("landmark_errors: missing predicted curve '" + name + "'");
        }
        const Eigen::MatrixXd& ppts = it->second;
        if (ppts.rows() != tpts.rows()) {
            throw DataError("landmark_errors: point count mismatch on curve '" + name + "'");
        }
        const Eigen::VectorXd dists = (ppts - tpts).rowwise().norm();
        report.curve_errors[name] = dists.mean();
        total += dists.sum();
        count += dists.size();
    }
    report.overall_mean_error = total / static_cast<double>(count);
    return report;
}

MeasurementReport measurement_report(const std::vector<double>& truth,
                                     const std::vector<double>& predicted) {
    if (truth.size() != predicted.size()) {
        throw DataError("measurement_report: value counts differ");
    }
    MeasurementReport report;
    report.truth = truth;
    report.predicted = predicted;
    report.abs_difference.resize(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        report.abs_difference[i] = std::abs(predicted[i] - truth[i]);
    }
    return report;
}

} // namespace ssm
