#include "ssm/synthetic.hpp"

#include "ssm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ssm {

namespace {

// Quintic smoothstep: C2, 0 below lo, 1 above hi.
double smoothstep(double v, double lo, double hi) {
    const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0);
}

struct Geometry {
    Eigen::Vector3d half;      // box half extents
    Eigen::Vector3d spacing;   // SDT voxel spacing
    double round_radius = 0.0; // rounded edges/corners
    double inset = 0.0;        // face sampling margin
    double bump_cx = 0.0;      // bump center x for the shape at hand
    double sigma = 0.0;        // top bump radius
    double height = 0.0;       // top bump height
    // side bump (+x face); height 0 disables it
    double side_cy = 0.0, side_cz = 0.0, side_sigma = 1.0, side_height = 0.0;

    // Localization windows for the displacement warps. The top warp acts on
    // the stretch below the top face, the side warp below the +x face; both
    // fade to zero well before the opposite face.
    double phi(double z) const { return smoothstep(z, half.z() - 10.0, half.z() - 2.0); }
    double psi(double x) const { return smoothstep(x, half.x() - 10.0, half.x() - 2.0); }

    double top_disp(double x, double y) const {
        const double dx = x - bump_cx;
        return height * std::exp(-(dx * dx + y * y) / (2.0 * sigma * sigma));
    }
    double side_disp(double y, double z) const {
        if (side_height == 0.0) return 0.0;
        const double dy = y - side_cy;
        const double dz = z - side_cz;
        return side_height * std::exp(-(dy * dy + dz * dz) / (2.0 * side_sigma * side_sigma));
    }

    // Map from world space back to the unwarped rounded-box space.
    Eigen::Vector3d unwarp(const Eigen::Vector3d& p) const {
        const double x1 = p.x() - psi(p.x()) * side_disp(p.y(), p.z());
        const double z1 = p.z() - phi(p.z()) * top_disp(x1, p.y());
        return {x1, p.y(), z1};
    }

    double rounded_box_sdf(const Eigen::Vector3d& q) const {
        const Eigen::Vector3d d = q.cwiseAbs() - (half.array() - round_radius).matrix();
        const double outside = d.cwiseMax(0.0).norm();
        const double inside = std::min(d.maxCoeff(), 0.0);
        return outside + inside - round_radius;
    }

    double field(const Eigen::Vector3d& p) const { return rounded_box_sdf(unwarp(p)); }

    // Solve W(p) = q for the world-space surface point p over a rounded-box
    // base point q; the warp is a mild contraction so fixed-point iteration
    // converges to machine precision.
    Eigen::Vector3d warp_surface_point(const Eigen::Vector3d& q) const {
        Eigen::Vector3d p = q;
        for (int it = 0; it < 200; ++it) {
            const Eigen::Vector3d w = unwarp(p);
            const Eigen::Vector3d err = q - w;
            p += err;
            if (err.cwiseAbs().maxCoeff() < 1e-14) break;
        }
        return p;
    }
};

Geometry make_geometry(const BoxBumpSpec& spec, double s, const SideBumpParams* side) {
    Geometry g;
    g.half = 0.5 * spec.extents;
    const double domain = g.half.maxCoeff() + spec.domain_padding;
    g.spacing = Eigen::Vector3d::Constant(2.0 * domain / static_cast<double>(spec.grid_resolution - 1));
    g.round_radius = 2.0 * g.spacing.maxCoeff();
    g.inset = g.round_radius + 1.0;
    g.sigma = spec.bump_radius;
    g.height = spec.bump_height;
    g.bump_cx = -spec.bump_travel + 2.0 * spec.bump_travel * s;
    if (side) {
        g.side_cy = side->center_y;
        g.side_cz = side->center_z;
        g.side_sigma = side->radius;
        g.side_height = side->height;
    }
    return g;
}

// Fixed surface parameterization: cell-centered grids on the six flat faces,
// inset past the rounded edges. Order and counts never depend on the latent
// parameters, which is what makes point k a correspondence.
struct FaceLayout {
    int face;
    int nu, nv;
};

std::vector<FaceLayout> face_layouts(int b) {
    return {
        {0, b, b},         // +z: u along x, v along y
        {1, b, b},         // -z
        {2, b / 2, b},     // +x: u along y, v along z
        {3, b / 2, b},     // -x
        {4, b, b / 2},     // +y: u along x, v along z
        {5, b, b / 2},     // -y
    };
}

// Base (unwarped) surface point for one parameter triple.
Eigen::Vector3d base_point(const Geometry& g, const SurfaceParam& sp, int nu, int nv) {
    auto coord = [&](double half, double idx, int n) {
        const double lo = -half + g.inset;
        const double len = 2.0 * (half - g.inset);
        return lo + (idx + 0.5) * len / static_cast<double>(n);
    };
    const double hx = g.half.x(), hy = g.half.y(), hz = g.half.z();
    switch (sp.face) {
        case 0: return {coord(hx, sp.iu, nu), coord(hy, sp.iv, nv), hz};
        case 1: return {coord(hx, sp.iu, nu), coord(hy, sp.iv, nv), -hz};
        case 2: return {hx, coord(hy, sp.iu, nu), coord(hz, sp.iv, nv)};
        case 3: return {-hx, coord(hy, sp.iu, nu), coord(hz, sp.iv, nv)};
        case 4: return {coord(hx, sp.iu, nu), hy, coord(hz, sp.iv, nv)};
        case 5: return {coord(hx, sp.iu, nu), -hy, coord(hz, sp.iv, nv)};
        default: throw DataError("invalid face id");
    }
}

LandmarkSet analytic_landmarks(const Geometry& g) {
    LandmarkSet lm;
    Eigen::MatrixXd apex(1, 3);
    apex.row(0) = g.warp_surface_point({g.bump_cx, 0.0, g.half.z()}).transpose();
    lm.curves["apex"] = apex;

    Eigen::MatrixXd corners(8, 3);
    const double r = g.round_radius;
    int row = 0;
    for (int sx : {-1, 1}) {
        for (int sy : {-1, 1}) {
            for (int sz : {-1, 1}) {
                const Eigen::Vector3d center(sx * (g.half.x() - r), sy * (g.half.y() - r),
                                             sz * (g.half.z() - r));
                const Eigen::Vector3d dir =
                    Eigen::Vector3d(sx, sy, sz).normalized();
                corners.row(row++) = g.warp_surface_point(center + r * dir).transpose();
            }
        }
    }
    lm.curves["corners"] = corners;
    return lm;
}

PointSet sample_surface(const Geometry& g, const std::vector<SurfaceParam>& params,
                        const std::vector<FaceLayout>& layouts) {
    PointSet ps;
    ps.pts.resize(static_cast<Eigen::Index>(params.size()), 3);
    for (std::size_t k = 0; k < params.size(); ++k) {
        const auto& layout = layouts[static_cast<std::size_t>(params[k].face)];
        const Eigen::Vector3d q = base_point(g, params[k], layout.nu, layout.nv);
        ps.pts.row(static_cast<Eigen::Index>(k)) = g.warp_surface_point(q).transpose();
    }
    return ps;
}

ScalarVolume sample_field(const BoxBumpSpec& spec, const Geometry& g) {
    ScalarVolume vol;
    vol.dims = {spec.grid_resolution, spec.grid_resolution, spec.grid_resolution};
    const double domain = g.half.maxCoeff() + spec.domain_padding;
    vol.origin = Eigen::Vector3d::Constant(-domain);
    vol.spacing = g.spacing;
    vol.values.resize(static_cast<std::size_t>(spec.grid_resolution) * spec.grid_resolution *
                      spec.grid_resolution);
    std::size_t idx = 0;
    for (int k = 0; k < vol.dims[2]; ++k) {
        for (int j = 0; j < vol.dims[1]; ++j) {
            for (int i = 0; i < vol.dims[0]; ++i, ++idx) {
                const Eigen::Vector3d p = vol.origin + Eigen::Vector3d(i * vol.spacing.x(),
                                                                       j * vol.spacing.y(),
                                                                       k * vol.spacing.z());
                vol.values[idx] = g.field(p);
            }
        }
    }
    return vol;
}

} // namespace

void BoxBumpSpec::validate() const {
    if (!(extents.minCoeff() > 0.0)) throw DataError("box extents must be positive");
    if (sampling_density < 2 || sampling_density % 2 != 0) {
        throw DataError("sampling density must be an even count >= 2");
    }
    if (!(bump_radius > 0.0)) throw DataError("bump radius must be positive");
    if (bump_radius >= 0.5 * extents.minCoeff()) {
        throw DataError("bump radius must be below half the smallest box extent");
    }
    if (bump_height < 0.0) throw DataError("bump height must be nonnegative");
    if (bump_travel < 0.0) throw DataError("bump travel must be nonnegative");
    if (grid_resolution < 8) throw DataError("grid resolution must be at least 8");
    if (!(domain_padding > std::max(bump_height, 2.0))) {
        throw DataError("domain padding must exceed the bump height");
    }
}

std::vector<SurfaceParam> box_bump_surface_params(const BoxBumpSpec& spec) {
    spec.validate();
    std::vector<SurfaceParam> params;
    for (const auto& layout : face_layouts(spec.sampling_density)) {
        for (int iv = 0; iv < layout.nv; ++iv) {
            for (int iu = 0; iu < layout.nu; ++iu) {
                params.push_back({layout.face, iu, iv});
            }
        }
    }
    return params;
}

double box_bump_field(const BoxBumpSpec& spec, double s, const SideBumpParams* side,
                      const Eigen::Vector3d& p) {
    return make_geometry(spec, s, side).field(p);
}

PointSet box_bump_shape(const BoxBumpSpec& spec, double s, const SideBumpParams* side,
                        LandmarkSet* landmarks) {
    const Geometry g = make_geometry(spec, s, side);
    const auto layouts = face_layouts(spec.sampling_density);
    const auto params = box_bump_surface_params(spec);
    if (landmarks) {
        *landmarks = analytic_landmarks(g);
    }
    return sample_surface(g, params, layouts);
}

ScalarVolume box_bump_sdt(const BoxBumpSpec& spec, double s, const SideBumpParams* side) {
    return sample_field(spec, make_geometry(spec, s, side));
}

BoxBumpEnsemble generate_box_bump_ensemble(const BoxBumpSpec& spec, int n_shapes) {
    spec.validate();
    if (n_shapes < 2) {
        throw DataError("generate_box_bump_ensemble: need at least 2 shapes");
    }
    BoxBumpEnsemble out;
    out.truth.params = box_bump_surface_params(spec);
    for (int n = 0; n < n_shapes; ++n) {
        const double s = static_cast<double>(n) / static_cast<double>(n_shapes - 1);
        out.truth.latents.push_back(s);
        LandmarkSet lm;
        out.ensemble.shapes.push_back(box_bump_shape(spec, s, nullptr, &lm));
        out.truth.landmarks.push_back(std::move(lm));
        out.sdts.push_back(box_bump_sdt(spec, s, nullptr));
    }
    out.ensemble.validate();
    return out;
}

BoxBumpOutlier generate_side_bump_outlier(const BoxBumpSpec& spec, const SideBumpParams& side) {
    spec.validate();
    if (!(side.radius > 0.0)) {
        throw DataError("generate_side_bump_outlier: side bump radius must be positive");
    }

    BoxBumpOutlier out;
    out.truth.params = box_bump_surface_params(spec);
    out.truth.latents.push_back(side.top_position);

    LandmarkSet lm;
    out.points = box_bump_shape(spec, side.top_position, &side, &lm);
    out.truth.landmarks.push_back(std::move(lm));
    out.sdt = box_bump_sdt(spec, side.top_position, &side);

    // Mask: points moved by more than 10% of the side-bump height relative to
    // the same shape without the side bump.
    const PointSet plain = box_bump_shape(spec, side.top_position, nullptr);
    const double cutoff = 0.1 * std::fabs(side.height);
    out.truth.lesion_mask.resize(static_cast<std::size_t>(out.points.size()), false);
    for (Eigen::Index i = 0; i < out.points.size(); ++i) {
        const double moved = (out.points.pts.row(i) - plain.pts.row(i)).norm();
        out.truth.lesion_mask[static_cast<std::size_t>(i)] = moved > cutoff && cutoff > 0.0;
    }

    // The two bumps must not act on any common correspondence.
    if (spec.bump_height > 0.0 && std::fabs(side.height) > 0.0) {
        const BoxBumpSpec flat_spec = [&] {
            BoxBumpSpec c = spec;
            c.bump_height = 0.0;
            return c;
        }();
        const PointSet no_top = box_bump_shape(flat_spec, side.top_position, nullptr);
        const double top_cutoff = 0.1 * spec.bump_height;
        for (Eigen::Index i = 0; i < out.points.size(); ++i) {
            const double top_moved = (plain.pts.row(i) - no_top.pts.row(i)).norm();
            if (top_moved > top_cutoff && out.truth.lesion_mask[static_cast<std::size_t>(i)]) {
                std::ostringstream os;
                os << "generate_side_bump_outlier: overlapping bumps at correspondence " << i;
                throw DataError(os.str());
            }
        }
    }
    return out;
}

ClusterPopulation generate_cluster_population(const BoxBumpSpec& spec,
                                              const std::vector<ClusterArchetype>& archetypes,
                                              int n_per_cluster, double latent_jitter, Rng& rng) {
    spec.validate();
    if (archetypes.size() < 2) {
        throw DataError("generate_cluster_population: need at least 2 archetypes");
    }
    if (n_per_cluster < 1) {
        throw DataError("generate_cluster_population: need at least 1 shape per cluster");
    }
    if (latent_jitter < 0.0) {
        throw DataError("generate_cluster_population: jitter must be nonnegative");
    }

    auto family_shape = [&](const ClusterArchetype& arch, double s) {
        BoxBumpSpec member = spec;
        member.bump_height = arch.bump_height;
        member.bump_radius = arch.bump_radius;
        member.validate();
        return box_bump_shape(member, s, nullptr);
    };

    // Separation is measured in shape space: archetype centers must be at
    // least five times farther apart than the spread a jitter step induces.
    if (latent_jitter > 0.0) {
        std::vector<ShapeVector> centers;
        double spread = 0.0;
        for (const auto& arch : archetypes) {
            centers.push_back(flatten(family_shape(arch, arch.position)));
            const ShapeVector wiggled = flatten(family_shape(
                arch, std::clamp(arch.position + latent_jitter, 0.0, 1.0)));
            spread = std::max(spread, (wiggled - centers.back()).norm());
        }
        double min_sep = std::numeric_limits<double>::max();
        for (std::size_t a = 0; a < centers.size(); ++a) {
            for (std::size_t b = a + 1; b < centers.size(); ++b) {
                min_sep = std::min(min_sep, (centers[a] - centers[b]).norm());
            }
        }
        if (min_sep < 5.0 * spread) {
            throw DataError("generate_cluster_population: archetype separation must be at "
                            "least 5x the within-cluster jitter spread");
        }
    }

    ClusterPopulation out;
    for (std::size_t c = 0; c < archetypes.size(); ++c) {
        for (int n = 0; n < n_per_cluster; ++n) {
            const double s = std::clamp(
                archetypes[c].position + latent_jitter * rng.uniform(-1.0, 1.0), 0.0, 1.0);
            out.ensemble.shapes.push_back(family_shape(archetypes[c], s));
            out.labels.push_back(static_cast<int>(c));
        }
    }
    out.ensemble.validate();
    return out;
}

} // namespace ssm
