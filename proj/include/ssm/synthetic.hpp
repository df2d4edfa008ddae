#ifndef SSM_SYNTHETIC_HPP
#define SSM_SYNTHETIC_HPP

#include "ssm/geometry.hpp"
#include "ssm/rng.hpp"
#include "ssm/volume.hpp"

#include <vector>

namespace ssm {

// Rounded box with a Gaussian bump sliding along the top face. One fixed
// surface parameterization produces the correspondences, so point k occupies
// the same parametric location on every shape and the ground-truth
// correspondence is exact by construction.
struct BoxBumpSpec {
    Eigen::Vector3d extents{32.0, 24.0, 16.0}; // full edge lengths, mm
    int sampling_density = 8; // top-face grid is b x b; M = 4 b^2 (256 at b=8)
    double bump_radius = 3.0; // Gaussian sigma, mm
    double bump_height = 3.0; // mm; 0 collapses the ensemble to one shape
    double bump_travel = 1.0; // half-range of the bump-center path along x, mm
    int grid_resolution = 64; // SDT samples per axis
    double domain_padding = 6.0; // SDT margin beyond the box surface, mm
    std::uint64_t seed = 0;

    void validate() const;
};

// Ground-truth sidecar: latent parameters, per-point face/grid coordinates of
// the fixed parameterization, analytic landmarks, and (for outliers) the
// lesion-support mask.
struct SurfaceParam {
    int face = 0; // 0 +z, 1 -z, 2 +x, 3 -x, 4 +y, 5 -y
    int iu = 0;
    int iv = 0;
};

struct SyntheticTruth {
    std::vector<double> latents;           // per-shape bump position s
    std::vector<SurfaceParam> params;      // per-correspondence
    std::vector<LandmarkSet> landmarks;    // per-shape: "apex" and "corners"
    std::vector<bool> lesion_mask;         // per-correspondence (outliers)
};

struct BoxBumpEnsemble {
    CorrespondenceEnsemble ensemble;
    std::vector<ScalarVolume> sdts;
    SyntheticTruth truth;
};

// N shapes with bump positions evenly spaced over s in [0, 1].
BoxBumpEnsemble generate_box_bump_ensemble(const BoxBumpSpec& spec, int n_shapes);

struct SideBumpParams {
    double center_y = 0.0; // on the +x face, mm
    double center_z = 0.0;
    double radius = 4.0;   // Gaussian sigma, mm
    double height = 3.0;   // negative values dent the surface inward
    double top_position = 0.5; // regular bump latent s of the carrier shape
};

struct BoxBumpOutlier {
    PointSet points;
    ScalarVolume sdt;
    SyntheticTruth truth; // lesion_mask marks points displaced > 10% of height
};

// Regular ensemble member carrying an extra bump (or dent) on the +x side
// face. Throws DataError when the side bump support overlaps the top bump.
BoxBumpOutlier generate_side_bump_outlier(const BoxBumpSpec& spec, const SideBumpParams& side);

struct ClusterArchetype {
    double position = 0.5; // latent bump position s of the family
    double bump_height = 3.0;
    double bump_radius = 3.0;
};

struct ClusterPopulation {
    CorrespondenceEnsemble ensemble;
    std::vector<int> labels;
};

// k box-bump families at distinct latent positions and height/width
// archetypes, with uniform within-cluster jitter on the latent position.
// The archetype shapes must sit at least five times the jitter-induced
// spread apart in shape space.
ClusterPopulation generate_cluster_population(const BoxBumpSpec& spec,
                                              const std::vector<ClusterArchetype>& archetypes,
                                              int n_per_cluster, double latent_jitter, Rng& rng);

// Analytic implicit field of one shape (the field sampled into the SDTs);
// exposed so tests can evaluate it off-grid.
double box_bump_field(const BoxBumpSpec& spec, double s, const SideBumpParams* side,
                      const Eigen::Vector3d& p);

// Correspondences of a single shape (fixed parameterization, exact surface
// points) plus its analytic landmarks.
PointSet box_bump_shape(const BoxBumpSpec& spec, double s, const SideBumpParams* side,
                        LandmarkSet* landmarks = nullptr);

ScalarVolume box_bump_sdt(const BoxBumpSpec& spec, double s, const SideBumpParams* side);

std::vector<SurfaceParam> box_bump_surface_params(const BoxBumpSpec& spec);

} // namespace ssm

#endif
