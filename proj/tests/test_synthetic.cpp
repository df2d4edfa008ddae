#include <doctest.h>

#include "ssm/cluster.hpp"
#include "ssm/errors.hpp"
#include "ssm/pca.hpp"
#include "ssm/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>

using namespace ssm;

TEST_CASE("box-bump ensemble geometry") {
    BoxBumpSpec spec;
    spec.grid_resolution = 48;
    const BoxBumpEnsemble data = generate_box_bump_ensemble(spec, 8);
    CHECK(data.ensemble.size() == 8);
    CHECK(data.ensemble.points() == 256);
    CHECK(data.truth.latents.size() == 8);
    CHECK(data.truth.params.size() == 256);

    SUBCASE("correspondences sit on the analytic zero level set") {
        const double spacing = data.sdts.front().spacing.maxCoeff();
        for (std::size_t n = 0; n < 8; ++n) {
            const PointSet& shape = data.ensemble.shapes[n];
            for (Eigen::Index i = 0; i < shape.size(); ++i) {
                const double f = box_bump_field(spec, data.truth.latents[n], nullptr,
                                                shape.point3(i));
                CHECK(std::fabs(f) < 1e-3 * spacing);
            }
        }
    }
    SUBCASE("two shapes differ only through the top displacement field") {
        // Closed-form reference: each point solves z - phi(z) h_s(x, y) = z0
        // for its shape's bump position, with phi the quintic fade below the
        // top face. Undoing the displacement must land both shapes on the
        // same base point.
        const double hz = 0.5 * spec.extents.z();
        auto phi = [&](double z) {
            const double t = std::clamp((z - (hz - 10.0)) / 8.0, 0.0, 1.0);
            return t * t * t * (t * (6.0 * t - 15.0) + 10.0);
        };
        auto bump = [&](double x, double y, double s) {
            const double cx = -spec.bump_travel + 2.0 * spec.bump_travel * s;
            return spec.bump_height *
                   std::exp(-((x - cx) * (x - cx) + y * y) /
                            (2.0 * spec.bump_radius * spec.bump_radius));
        };
        const PointSet& a = data.ensemble.shapes[1];
        const PointSet& b = data.ensemble.shapes[6];
        const double sa = data.truth.latents[1];
        const double sb = data.truth.latents[6];
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            CHECK(std::fabs(a.pts(i, 0) - b.pts(i, 0)) < 1e-12);
            CHECK(std::fabs(a.pts(i, 1) - b.pts(i, 1)) < 1e-12);
            const double base_a = a.pts(i, 2) - phi(a.pts(i, 2)) * bump(a.pts(i, 0), a.pts(i, 1), sa);
            const double base_b = b.pts(i, 2) - phi(b.pts(i, 2)) * bump(b.pts(i, 0), b.pts(i, 1), sb);
            CHECK(std::fabs(base_a - base_b) < 1e-9);
        }
    }
    SUBCASE("apex landmark follows the closed form") {
        for (std::size_t n : {std::size_t(0), std::size_t(4)}) {
            const double s = data.truth.latents[n];
            const double cx = -spec.bump_travel + 2.0 * spec.bump_travel * s;
            const Eigen::RowVector3d apex = data.truth.landmarks[n].curves.at("apex").row(0);
            CHECK(std::fabs(apex.x() - cx) < 1e-9);
            CHECK(std::fabs(apex.y()) < 1e-9);
            CHECK(std::fabs(apex.z() - (0.5 * spec.extents.z() + spec.bump_height)) < 1e-9);
        }
    }
    SUBCASE("the apex-adjacent correspondence reaches the apex height within a voxel") {
        const PointSet mid = box_bump_shape(spec, 0.5, nullptr);
        const double apex_z = 0.5 * spec.extents.z() + spec.bump_height;
        double top = -1e9;
        for (Eigen::Index i = 0; i < mid.size(); ++i) {
            top = std::max(top, mid.pts(i, 2));
        }
        CHECK(std::fabs(top - apex_z) < data.sdts.front().spacing.maxCoeff());
    }
    SUBCASE("zero bump height collapses the ensemble") {
        BoxBumpSpec flat = spec;
        flat.bump_height = 0.0;
        const BoxBumpEnsemble still = generate_box_bump_ensemble(flat, 4);
        for (int n = 1; n < 4; ++n) {
            CHECK((still.ensemble.shapes[static_cast<std::size_t>(n)].pts -
                   still.ensemble.shapes[0].pts)
                      .cwiseAbs()
                      .maxCoeff() == 0.0);
        }
        const PcaSubspace sub = fit_pca(still.ensemble, ModeRule::variance(0.97));
        CHECK(sub.total_variance == 0.0);
    }
    SUBCASE("the dominant mode carries at least 90 percent of the variance") {
        const PcaSubspace sub = fit_pca(data.ensemble, ModeRule::fixed(5));
        CHECK(sub.eigenvalues[0] / sub.total_variance >= 0.9);
    }
    SUBCASE("generation is deterministic") {
        const BoxBumpEnsemble again = generate_box_bump_ensemble(spec, 8);
        for (std::size_t n = 0; n < 8; ++n) {
            CHECK((again.ensemble.shapes[n].pts - data.ensemble.shapes[n].pts)
                      .cwiseAbs()
                      .maxCoeff() == 0.0);
        }
        CHECK(again.sdts[3].values == data.sdts[3].values);
    }
}

TEST_CASE("side-bump outlier") {
    BoxBumpSpec spec;
    spec.grid_resolution = 48;
    SUBCASE("zero height leaves the shape untouched with an empty mask") {
        SideBumpParams side;
        side.height = 0.0;
        const BoxBumpOutlier out = generate_side_bump_outlier(spec, side);
        const PointSet plain = box_bump_shape(spec, side.top_position, nullptr);
        CHECK((out.points.pts - plain.pts).cwiseAbs().maxCoeff() == 0.0);
        CHECK(std::count(out.truth.lesion_mask.begin(), out.truth.lesion_mask.end(), true) == 0);
    }
    SUBCASE("the default mask is nonempty and contiguous on the +x face") {
        const BoxBumpOutlier out = generate_side_bump_outlier(spec, SideBumpParams{});
        const auto& mask = out.truth.lesion_mask;
        const auto& params = out.truth.params;
        std::set<std::pair<int, int>> face_cells;
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (mask[i] && params[i].face == 2) {
                face_cells.insert({params[i].iu, params[i].iv});
            }
        }
        REQUIRE(face_cells.size() >= 8);
        // 4-adjacency flood fill from one masked cell must reach them all.
        std::set<std::pair<int, int>> seen;
        std::queue<std::pair<int, int>> frontier;
        frontier.push(*face_cells.begin());
        seen.insert(*face_cells.begin());
        while (!frontier.empty()) {
            const auto [u, v] = frontier.front();
            frontier.pop();
            for (const auto& [du, dv] :
                 std::vector<std::pair<int, int>>{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
                const std::pair<int, int> next{u + du, v + dv};
                if (face_cells.count(next) && !seen.count(next)) {
                    seen.insert(next);
                    frontier.push(next);
                }
            }
        }
        CHECK(seen.size() == face_cells.size());
    }
    SUBCASE("a dented variant moves masked points inward") {
        SideBumpParams dent;
        dent.height = -2.5;
        const BoxBumpOutlier out = generate_side_bump_outlier(spec, dent);
        const PointSet plain = box_bump_shape(spec, dent.top_position, nullptr);
        int masked_side = 0;
        for (std::size_t i = 0; i < out.truth.lesion_mask.size(); ++i) {
            if (!out.truth.lesion_mask[i] || out.truth.params[i].face != 2) continue;
            ++masked_side;
            CHECK(out.points.pts(static_cast<Eigen::Index>(i), 0) <
                  plain.pts(static_cast<Eigen::Index>(i), 0));
        }
        CHECK(masked_side >= 8);
    }
    SUBCASE("overlapping bumps are rejected") {
        BoxBumpSpec wide = spec;
        wide.bump_travel = 8.0; // bump path reaches toward the +x edge
        SideBumpParams side;
        side.top_position = 1.0;
        side.center_z = 6.0;
        side.radius = 8.0;
        side.height = 10.0;
        CHECK_THROWS_WITH_AS(generate_side_bump_outlier(wide, side),
                             doctest::Contains("overlapping"), DataError);
    }
}

TEST_CASE("cluster population") {
    BoxBumpSpec spec;
    spec.grid_resolution = 48;
    spec.bump_travel = 7.5; // spread the family positions across the face
    const std::vector<ClusterArchetype> four = {
        {0.0, 2.5, 2.2}, {1.0 / 3.0, 3.0, 2.2}, {2.0 / 3.0, 3.5, 2.2}, {1.0, 4.0, 2.2}};
    SUBCASE("zero jitter gives identical members per cluster") {
        Rng rng(1);
        const ClusterPopulation pop = generate_cluster_population(spec, four, 3, 0.0, rng);
        REQUIRE(pop.ensemble.size() == 12);
        Rng cr(2);
        const ClusterResult res = kmeans(pop.ensemble.shape_vectors(), 4, cr);
        CHECK(res.wcss < 1e-12);
    }
    SUBCASE("two far archetypes are recovered by kmeans") {
        Rng rng(3);
        const ClusterPopulation pop = generate_cluster_population(
            spec, {{0.1, 3.0, 2.2}, {0.9, 3.0, 2.2}}, 6, 0.01, rng);
        Rng cr(4);
        const ClusterResult res = kmeans(pop.ensemble.shape_vectors(), 2, cr);
        // all members of the same truth cluster share a found label
        for (std::size_t i = 1; i < pop.labels.size(); ++i) {
            if (pop.labels[i] == pop.labels[0]) {
                CHECK(res.labels[i] == res.labels[0]);
            } else {
                CHECK(res.labels[i] != res.labels[0]);
            }
        }
    }
    SUBCASE("insufficient separation is rejected") {
        Rng rng(5);
        CHECK_THROWS_AS(generate_cluster_population(
                            spec, {{0.50, 3.0, 2.2}, {0.52, 3.0, 2.2}}, 3, 0.05, rng),
                        DataError);
    }
    SUBCASE("same seed reproduces the population") {
        Rng a(6), b(6);
        const ClusterPopulation pa = generate_cluster_population(spec, four, 2, 0.01, a);
        const ClusterPopulation pb = generate_cluster_population(spec, four, 2, 0.01, b);
        for (std::size_t i = 0; i < pa.ensemble.shapes.size(); ++i) {
            CHECK((pa.ensemble.shapes[i].pts - pb.ensemble.shapes[i].pts).cwiseAbs().maxCoeff() ==
                  0.0);
        }
    }
}

TEST_CASE("spec validation") {
    BoxBumpSpec spec;
    SUBCASE("bump radius must stay under half the smallest extent") {
        spec.bump_radius = 8.0; // extents.z()/2 = 8
        CHECK_THROWS_AS(spec.validate(), DataError);
    }
    SUBCASE("odd sampling density rejected") {
        spec.sampling_density = 7;
        CHECK_THROWS_AS(spec.validate(), DataError);
    }
    SUBCASE("ensemble needs two shapes") {
        CHECK_THROWS_AS(generate_box_bump_ensemble(spec, 1), DataError);
    }
}
