#include "ssm/align.hpp"

#include "ssm/errors.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <sstream>

namespace ssm {

SimilarityTransform rigid_align(const PointSet& source, const PointSet& target, bool allow_scale) {
    if (source.size() != target.size() || source.dim() != target.dim()) {
        throw DataError("rigid_align: source and target must share point count and dimension");
    }
    const Eigen::Index d = source.dim();
    if (source.size() < d) {
        throw DataError("rigid_align: need at least d points");
    }

    const Eigen::RowVectorXd cs = source.centroid();
    const Eigen::RowVectorXd ct = target.centroid();
    const Eigen::MatrixXd a = source.pts.rowwise() - cs;
    const Eigen::MatrixXd b = target.pts.rowwise() - ct;

    const double var_source = a.squaredNorm();
    if (var_source < 1e-20) {
        throw NumericalError("rigid_align: singular configuration, all source points coincide");
    }

    // Cross-covariance; R = V * D * U^T with D flipping the smallest singular
    // direction when the raw solution would be a reflection.
    const Eigen::MatrixXd h = a.transpose() * b; // d x d
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::VectorXd dsign = Eigen::VectorXd::Ones(d);
    if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) {
        dsign[d - 1] = -1.0;
    }
    SimilarityTransform t;
    t.rotation = svd.matrixV() * dsign.asDiagonal() * svd.matrixU().transpose();
    t.scale = 1.0;
    if (allow_scale) {
        t.scale = (svd.singularValues().array() * dsign.array()).sum() / var_source;
        if (!(t.scale > 0.0)) {
            throw NumericalError("rigid_align: non-positive optimal scale");
        }
    }
    t.translation = ct.transpose() - t.scale * (t.rotation * cs.transpose());
    return t;
}

ProcrustesResult generalized_procrustes(const CorrespondenceEnsemble& ens, bool allow_scale,
                                        double tol, int max_iters) {
    ens.validate();
    const Eigen::Index n = ens.size();
    if (n < 2) {
        throw DataError("generalized_procrustes: need at least 2 shapes");
    }
    const Eigen::Index d = ens.dim();

    // Reference starts as the first shape, centered; iterating against the
    // evolving mean avoids averaging shapes in arbitrary poses.
    PointSet mean;
    mean.pts = ens.shapes.front().pts.rowwise() - ens.shapes.front().centroid();
    const double ref_size = mean.pts.norm();

    ProcrustesResult result;
    result.aligned.shapes.resize(static_cast<std::size_t>(n));
    result.transforms.assign(static_cast<std::size_t>(n), SimilarityTransform::identity(d));

    for (int iter = 0; iter < max_iters; ++iter) {
        result.iterations = iter + 1;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto idx = static_cast<std::size_t>(i);
            result.transforms[idx] = rigid_align(ens.shapes[idx], mean, allow_scale);
            result.aligned.shapes[idx] = result.transforms[idx].apply(ens.shapes[idx]);
        }
        Eigen::MatrixXd next = Eigen::MatrixXd::Zero(mean.pts.rows(), d);
        for (const auto& s : result.aligned.shapes) {
            next += s.pts;
        }
        next /= static_cast<double>(n);
        next.rowwise() -= next.colwise().mean().eval();
        if (allow_scale) {
            // Pin the mean's size so scale alignment cannot collapse the ensemble.
            const double sz = next.norm();
            if (sz > 1e-20) {
                next *= ref_size / sz;
            }
        }
        const double change = (next - mean.pts).norm() / (mean.pts.norm() + 1e-300);
        mean.pts = next;
        if (change < tol) {
            result.converged = true;
            break;
        }
    }

    // Center the aligned ensemble mean at the origin exactly.
    Eigen::RowVectorXd grand = Eigen::RowVectorXd::Zero(d);
    for (const auto& s : result.aligned.shapes) {
        grand += s.centroid();
    }
    grand /= static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        result.aligned.shapes[idx].pts.rowwise() -= grand;
        result.transforms[idx].translation -= grand.transpose();
    }
    return result;
}

} // namespace ssm
