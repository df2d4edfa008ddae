#ifndef SSM_GEOMETRY_HPP
#define SSM_GEOMETRY_HPP

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

namespace ssm {

// Flattened shape vector in R^{dM}, interleaved per point (x1,y1,z1,x2,...).
using ShapeVector = Eigen::VectorXd;

// An ordered set of M points in R^d (d = 2 or 3), world-space millimeters.
// Row i of `pts` is point i; ordering carries correspondence.
struct PointSet {
    Eigen::MatrixXd pts; // M x d

    PointSet() = default;
    explicit PointSet(Eigen::MatrixXd p) : pts(std::move(p)) {}

    Eigen::Index size() const { return pts.rows(); }
    Eigen::Index dim() const { return pts.cols(); }

    Eigen::Vector3d point3(Eigen::Index i) const { return pts.row(i).head<3>(); }
    Eigen::RowVectorXd centroid() const { return pts.colwise().mean(); }

    // Throws DataError on empty sets, dimension != 2/3, or non-finite entries.
    void validate() const;
};

PointSet make_point_set(const std::vector<std::vector<double>>& rows);

ShapeVector flatten(const PointSet& ps);
PointSet unflatten(const ShapeVector& v, Eigen::Index dim);

// Mirrors the coordinates across the plane axis = 0 (e.g. to fold left-sided
// anatomy onto right-sided conventions). Point order is untouched.
PointSet mirror(const PointSet& ps, Eigen::Index axis);

// N shapes in correspondence: identical M and d across all members.
struct CorrespondenceEnsemble {
    std::vector<PointSet> shapes;

    Eigen::Index size() const { return static_cast<Eigen::Index>(shapes.size()); }
    Eigen::Index points() const { return shapes.empty() ? 0 : shapes.front().size(); }
    Eigen::Index dim() const { return shapes.empty() ? 0 : shapes.front().dim(); }

    ShapeVector shape_vector(Eigen::Index n) const { return flatten(shapes[static_cast<std::size_t>(n)]); }
    std::vector<ShapeVector> shape_vectors() const;

    void validate() const; // throws DataError unless all shapes agree in M and d
};

// Rigid/similarity map p -> scale * rotation * p + translation.
struct SimilarityTransform {
    Eigen::MatrixXd rotation;    // d x d, proper orthogonal
    Eigen::VectorXd translation; // d
    double scale = 1.0;

    static SimilarityTransform identity(Eigen::Index dim);

    Eigen::VectorXd apply(const Eigen::VectorXd& p) const { return scale * (rotation * p) + translation; }
    PointSet apply(const PointSet& ps) const;
    SimilarityTransform inverse() const;

    // Max deviation of R^T R from identity plus |det R - 1|.
    double orthogonality_defect() const;
};

// Named ordered landmark curves in R^3 (mm).
struct LandmarkSet {
    // std::map keeps curve order deterministic for file output.
    std::map<std::string, Eigen::MatrixXd> curves; // name -> n x 3

    bool empty() const { return curves.empty(); }
    void validate() const; // nonempty curves, finite, 3 columns
};

} // namespace ssm

#endif
