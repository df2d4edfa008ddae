#ifndef SSM_VOLUME_HPP
#define SSM_VOLUME_HPP

#include <Eigen/Dense>
#include <array>
#include <vector>

namespace ssm {

// Signed-distance grid (mm). Values are stored x-fastest: linear index
// i + dims[0]*(j + dims[1]*k) holds the sample at
// origin + (i*spacing.x, j*spacing.y, k*spacing.z).
struct ScalarVolume {
    std::array<int, 3> dims{0, 0, 0};
    Eigen::Vector3d origin = Eigen::Vector3d::Zero();
    Eigen::Vector3d spacing = Eigen::Vector3d::Ones();
    std::vector<double> values;

    double& at(int i, int j, int k) {
        return values[static_cast<std::size_t>(i) +
                      static_cast<std::size_t>(dims[0]) *
                          (static_cast<std::size_t>(j) +
                           static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(k))];
    }
    double at(int i, int j, int k) const {
        return values[static_cast<std::size_t>(i) +
                      static_cast<std::size_t>(dims[0]) *
                          (static_cast<std::size_t>(j) +
                           static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(k))];
    }

    Eigen::Vector3d index_coords(const Eigen::Vector3d& p) const {
        return (p - origin).cwiseQuotient(spacing);
    }

    // True when p (world mm) lies at least one voxel inside the grid on every
    // axis, the region where interpolation and differencing are well defined.
    bool in_interior(const Eigen::Vector3d& p) const;

    void validate() const; // positive dims/spacing, value count = product of dims

    // Trilinear interpolation; throws DataError if the 8-sample cell around p
    // leaves the grid.
    double interpolate(const Eigen::Vector3d& p) const;
};

// Central-difference gradient (step = half voxel spacing per axis) of the
// trilinearly interpolated field.
Eigen::Vector3d sdt_gradient(const ScalarVolume& vol, const Eigen::Vector3d& p);

// Unit outward surface normal at p. Throws DataError when p is outside the
// valid interior and NumericalError when the gradient vanishes.
Eigen::Vector3d sdt_normal(const ScalarVolume& vol, const Eigen::Vector3d& p);

} // namespace ssm

#endif
