#include "ssm/tps.hpp"

#include "ssm/errors.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <sstream>

namespace ssm {

Eigen::Vector3d TpsWarp::apply(const Eigen::Vector3d& p) const {
    Eigen::Vector3d out = affine.row(0).transpose();
    out += affine.bottomRows(3).transpose() * p;
    for (Eigen::Index i = 0; i < source.size(); ++i) {
        const double r = (p - source.point3(i)).norm();
        out += r * weights.row(i).transpose();
    }
    return out;
}

PointSet TpsWarp::apply(const PointSet& pts) const {
    if (pts.dim() != 3) {
        throw DataError("TpsWarp: points must be 3-D");
    }
    PointSet out;
    out.pts.resize(pts.size(), 3);
    for (Eigen::Index i = 0; i < pts.size(); ++i) {
        out.pts.row(i) = apply(pts.point3(i)).transpose();
    }
    return out;
}

TpsWarp fit_tps(const PointSet& source, const PointSet& target, double regularization) {
    if (source.dim() != 3 || target.dim() != 3) {
        throw DataError("fit_tps: control points must be 3-D");
    }
    if (source.size() != target.size()) {
        throw DataError("fit_tps: source and target control counts differ");
    }
    const Eigen::Index m = source.size();
    if (m < 4) {
        throw DataError("fit_tps: need at least 4 control points");
    }
    if (regularization < 0.0) {
        throw DataError("fit_tps: regularization must be nonnegative");
    }

    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = i + 1; j < m; ++j) {
            if ((source.pts.row(i) - source.pts.row(j)).norm() < 1e-9) {
                std::ostringstream os;
                os << "fit_tps: duplicate control points " << i << " and " << j;
                throw NumericalError(os.str());
            }
        }
    }
    {
        const Eigen::MatrixXd centered = source.pts.rowwise() - source.centroid();
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
        if (svd.singularValues()[2] <= 1e-10 * svd.singularValues()[0]) {
            throw NumericalError("fit_tps: control points are coplanar, the 3-D system is singular");
        }
    }

    // Bordered system  [K - reg I, P; P^T, 0] [W; A] = [T; 0].
    // U(r) = r is a negative-definite kernel on the P^T W = 0 subspace, so
    // the ridge that damps the kernel weights carries a minus sign there.
    Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(m + 4, m + 4);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = i + 1; j < m; ++j) {
            const double r = (source.pts.row(i) - source.pts.row(j)).norm();
            sys(i, j) = r;
            sys(j, i) = r;
        }
        sys(i, i) = -regularization;
        sys(i, m) = 1.0;
        sys(m, i) = 1.0;
        sys.block(i, m + 1, 1, 3) = source.pts.row(i);
        sys.block(m + 1, i, 3, 1) = source.pts.row(i).transpose();
    }
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(m + 4, 3);
    rhs.topRows(m) = target.pts;

    Eigen::FullPivLU<Eigen::MatrixXd> lu(sys);
    if (!lu.isInvertible()) {
        throw NumericalError("fit_tps: singular TPS system");
    }
    const Eigen::MatrixXd sol = lu.solve(rhs);

    TpsWarp warp;
    warp.source = source;
    warp.target = target;
    warp.weights = sol.topRows(m);
    warp.affine = sol.bottomRows(4);
    warp.regularization = regularization;
    return warp;
}

} // namespace ssm
