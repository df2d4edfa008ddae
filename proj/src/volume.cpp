#include "ssm/volume.hpp"

#include "ssm/errors.hpp"

#include <cmath>
#include <sstream>

namespace ssm {

void ScalarVolume::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 2) {
            throw DataError("volume dims must be >= 2 on every axis");
        }
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
            throw DataError("volume spacing must be positive and finite");
        }
    }
    const std::size_t expected = static_cast<std::size_t>(dims[0]) *
                                 static_cast<std::size_t>(dims[1]) *
                                 static_cast<std::size_t>(dims[2]);
    if (values.size() != expected) {
        std::ostringstream os;
        os << "volume value count " << values.size() << " does not match dims product " << expected;
        throw DataError(os.str());
    }
}

bool ScalarVolume::in_interior(const Eigen::Vector3d& p) const {
    const Eigen::Vector3d q = index_coords(p);
    for (int a = 0; a < 3; ++a) {
        if (!(q[a] >= 1.0 && q[a] <= static_cast<double>(dims[a] - 2))) {
            return false;
        }
    }
    return true;
}

double ScalarVolume::interpolate(const Eigen::Vector3d& p) const {
    const Eigen::Vector3d q = index_coords(p);
    int c[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
        if (!(q[a] >= 0.0 && q[a] <= static_cast<double>(dims[a] - 1))) {
            std::ostringstream os;
            os << "point (" << p.x() << ", " << p.y() << ", " << p.z()
               << ") is outside the volume grid";
            throw DataError(os.str());
        }
        double base = std::floor(q[a]);
        // Points exactly on the upper boundary use the last full cell.
        if (base > static_cast<double>(dims[a] - 2)) {
            base = static_cast<double>(dims[a] - 2);
        }
        c[a] = static_cast<int>(base);
        f[a] = q[a] - base;
    }
    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz) {
        for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
                const double w = (dx ? f[0] : 1.0 - f[0]) * (dy ? f[1] : 1.0 - f[1]) *
                                 (dz ? f[2] : 1.0 - f[2]);
                acc += w * at(c[0] + dx, c[1] + dy, c[2] + dz);
            }
        }
    }
    return acc;
}

Eigen::Vector3d sdt_gradient(const ScalarVolume& vol, const Eigen::Vector3d& p) {
    if (!vol.in_interior(p)) {
        std::ostringstream os;
        os << "point (" << p.x() << ", " << p.y() << ", " << p.z()
           << ") is outside the one-voxel interior margin";
        throw DataError(os.str());
    }
    Eigen::Vector3d g;
    for (int a = 0; a < 3; ++a) {
        const double h = 0.5 * vol.spacing[a];
        Eigen::Vector3d lo = p, hi = p;
        lo[a] -= h;
        hi[a] += h;
        g[a] = (vol.interpolate(hi) - vol.interpolate(lo)) / (2.0 * h);
    }
    return g;
}

Eigen::Vector3d sdt_normal(const ScalarVolume& vol, const Eigen::Vector3d& p) {
    const Eigen::Vector3d g = sdt_gradient(vol, p);
    const double n = g.norm();
    if (!(n > 1e-12) || !g.allFinite()) {
        std::ostringstream os;
        os << "degenerate surface normal at (" << p.x() << ", " << p.y() << ", " << p.z()
           << "): gradient magnitude " << n;
        throw NumericalError(os.str());
    }
    return g / n;
}

} // namespace ssm
