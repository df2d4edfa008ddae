#include "ssm/geometry.hpp"

#include "ssm/errors.hpp"

#include <cmath>
#include <sstream>

namespace ssm {

void PointSet::validate() const {
    if (pts.rows() < 1) {
        throw DataError("point set must contain at least one point");
    }
    if (pts.cols() != 2 && pts.cols() != 3) {
        std::ostringstream os;
        os << "point dimension must be 2 or 3, got " << pts.cols();
        throw DataError(os.str());
    }
    if (!pts.allFinite()) {
        throw DataError("point set contains non-finite coordinates");
    }
}

PointSet make_point_set(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) {
        throw DataError("point set must contain at least one point");
    }
    const std::size_t d = rows.front().size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != d) {
            std::ostringstream os;
            os << "inconsistent dimension at row " << i + 1 << ": expected " << d
               << " values, got " << rows[i].size();
            throw DataError(os.str());
        }
        for (std::size_t j = 0; j < d; ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    PointSet ps(std::move(m));
    ps.validate();
    return ps;
}

ShapeVector flatten(const PointSet& ps) {
    // Row-major flattening: point i occupies entries [i*d, (i+1)*d).
    return ps.pts.transpose().reshaped();
}

PointSet unflatten(const ShapeVector& v, Eigen::Index dim) {
    if (dim < 1 || v.size() % dim != 0) {
        std::ostringstream os;
        os << "vector length " << v.size() << " is not divisible by dimension " << dim;
        throw DataError(os.str());
    }
    const Eigen::Index m = v.size() / dim;
    PointSet ps(Eigen::MatrixXd(v.reshaped(dim, m).transpose()));
    return ps;
}

PointSet mirror(const PointSet& ps, Eigen::Index axis) {
    if (axis < 0 || axis >= ps.dim()) {
        std::ostringstream os;
        os << "mirror: axis " << axis << " out of range for dimension " << ps.dim();
        throw DataError(os.str());
    }
    PointSet out = ps;
    out.pts.col(axis) = -out.pts.col(axis);
    return out;
}

std::vector<ShapeVector> CorrespondenceEnsemble::shape_vectors() const {
    std::vector<ShapeVector> out;
    out.reserve(shapes.size());
    for (const auto& s : shapes) {
        out.push_back(flatten(s));
    }
    return out;
}

void CorrespondenceEnsemble::validate() const {
    if (shapes.empty()) {
        throw DataError("ensemble is empty");
    }
    const Eigen::Index m = shapes.front().size();
    const Eigen::Index d = shapes.front().dim();
    for (std::size_t n = 0; n < shapes.size(); ++n) {
        shapes[n].validate();
        if (shapes[n].size() != m || shapes[n].dim() != d) {
            std::ostringstream os;
            os << "ensemble shape " << n << " has " << shapes[n].size() << " points in R^"
               << shapes[n].dim() << ", expected " << m << " in R^" << d;
            throw DataError(os.str());
        }
    }
}

SimilarityTransform SimilarityTransform::identity(Eigen::Index dim) {
    SimilarityTransform t;
    t.rotation = Eigen::MatrixXd::Identity(dim, dim);
    t.translation = Eigen::VectorXd::Zero(dim);
    t.scale = 1.0;
    return t;
}

PointSet SimilarityTransform::apply(const PointSet& ps) const {
    PointSet out;
    out.pts = (scale * (ps.pts * rotation.transpose())).rowwise() + translation.transpose();
    return out;
}

SimilarityTransform SimilarityTransform::inverse() const {
    SimilarityTransform inv;
    inv.rotation = rotation.transpose();
    inv.scale = 1.0 / scale;
    inv.translation = -inv.scale * (inv.rotation * translation);
    return inv;
}

double SimilarityTransform::orthogonality_defect() const {
    const Eigen::MatrixXd gram = rotation.transpose() * rotation;
    const double off = (gram - Eigen::MatrixXd::Identity(rotation.rows(), rotation.cols()))
                           .cwiseAbs()
                           .maxCoeff();
    return off + std::abs(rotation.determinant() - 1.0);
}

void LandmarkSet::validate() const {
    if (curves.empty()) {
        throw DataError("landmark set has no curves");
    }
    for (const auto& [name, pts] : curves) {
        if (pts.rows() < 1) {
            throw DataError("landmark curve '" + name + "' is empty");
        }
        if (pts.cols() != 3) {
            throw DataError("landmark curve '" + name + "' must have 3 coordinates per point");
        }
        if (!pts.allFinite()) {
            throw DataError("landmark curve '" + name + "' contains non-finite coordinates");
        }
    }
}

} // namespace ssm
