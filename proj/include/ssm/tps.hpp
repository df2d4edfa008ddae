#ifndef SSM_TPS_HPP
#define SSM_TPS_HPP

#include "ssm/geometry.hpp"

namespace ssm {

// Thin-plate-spline warp between paired 3-D control points with the
// biharmonic kernel U(r) = r. With zero regularization the warp
// interpolates its controls exactly; `regularization` (mm^2) is added to
// the kernel diagonal for noisy correspondences.
struct TpsWarp {
    PointSet source;          // M control points (warp domain)
    PointSet target;          // M control points (warp range)
    Eigen::MatrixXd weights;  // M x 3 kernel weights, satisfy P^T W = 0
    Eigen::MatrixXd affine;   // 4 x 3, rows correspond to (1, x, y, z)
    double regularization = 0.0;

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const;
    PointSet apply(const PointSet& pts) const;
};

// Solves the bordered TPS linear system. Throws DataError for fewer than 4
// controls or mismatched pairs, and NumericalError for duplicate or coplanar
// controls (the offending points are named).
TpsWarp fit_tps(const PointSet& source, const PointSet& target, double regularization = 0.0);

inline PointSet warp(const TpsWarp& w, const PointSet& pts) { return w.apply(pts); }

} // namespace ssm

#endif
