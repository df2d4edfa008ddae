#include "ssm/screening.hpp"

#include "ssm/align.hpp"
#include "ssm/errors.hpp"
#include "ssm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ssm {

double smooth_l1(double y, double beta) {
    if (!(beta > 0.0)) {
        throw DataError("smooth_l1: beta must be positive");
    }
    const double ay = std::fabs(y);
    return ay + (2.0 / beta) * std::log1p(std::exp(-beta * ay));
}

double grad_smooth_l1(double y, double beta) {
    if (!(beta > 0.0)) {
        throw DataError("grad_smooth_l1: beta must be positive");
    }
    return std::tanh(0.5 * beta * y);
}

void ScreeningConfig::validate() const {
    if (lambda && *lambda < 0.0) throw DataError("screening: lambda must be >= 0");
    if (beta < 1.0) throw DataError("screening: beta must be >= 1");
    if (!(convergence_tol > 0.0)) throw DataError("screening: tolerance must be positive");
    if (max_iters < 1) throw DataError("screening: max_iters must be positive");
    if (!(rate_growth > 1.0) || !(rate_backoff > 1.0)) {
        throw DataError("screening: rate factors must exceed 1");
    }
}

namespace {

// Residual r_i = sample_i - x_i(alpha) - dx_i * n_i for one point.
inline Eigen::Vector3d residual_at(const ShapeVector& sample, const ShapeVector& recon,
                                   const ScreeningState& state, Eigen::Index i) {
    const Eigen::Vector3d xs = sample.segment<3>(3 * i);
    const Eigen::Vector3d xr = recon.segment<3>(3 * i);
    return xs - xr - state.offsets[i] * state.normals.row(i).transpose();
}

double mean_nearest_neighbor_spacing(const PointSet& ps) {
    const Eigen::Index m = ps.size();
    double total = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        double best = std::numeric_limits<double>::max();
        for (Eigen::Index j = 0; j < m; ++j) {
            if (i == j) continue;
            best = std::min(best, (ps.pts.row(i) - ps.pts.row(j)).squaredNorm());
        }
        total += std::sqrt(best);
    }
    return total / static_cast<double>(m);
}

// Normal lookup that tolerates an aligned frame: volume queries happen in the
// subject frame and gradients rotate back into the working frame.
class NormalField {
public:
    NormalField(const ScalarVolume& vol, const SimilarityTransform& subject_to_frame)
        : vol_(vol),
          frame_to_subject_(subject_to_frame.inverse()),
          rot_(subject_to_frame.rotation) {}

    // Throws NumericalError naming the point index when the query leaves the
    // volume interior.
    Eigen::Vector3d at(const Eigen::Vector3d& p_frame, Eigen::Index point_index) const {
        const Eigen::Vector3d p = frame_to_subject_.apply(p_frame);
        if (!vol_.in_interior(p)) {
            std::ostringstream os;
            os << "screen: reconstructed point " << point_index << " at (" << p.x() << ", "
               << p.y() << ", " << p.z() << ") leaves the SDT volume";
            throw NumericalError(os.str());
        }
        return rot_ * sdt_normal(vol_, p);
    }

    // Candidate evaluation variant: reports feasibility instead of throwing,
    // so an oversized step is rejected rather than fatal.
    bool try_normals(const ShapeVector& recon, Eigen::MatrixXd& normals) const {
        const Eigen::Index m = recon.size() / 3;
        normals.resize(m, 3);
        for (Eigen::Index i = 0; i < m; ++i) {
            const Eigen::Vector3d p = frame_to_subject_.apply(recon.segment<3>(3 * i));
            if (!vol_.in_interior(p)) {
                return false;
            }
            normals.row(i) = (rot_ * sdt_normal(vol_, p)).transpose();
        }
        return true;
    }

private:
    const ScalarVolume& vol_;
    SimilarityTransform frame_to_subject_;
    Eigen::MatrixXd rot_;
};

} // namespace

double energy(const ShapeVector& sample, const ScreeningState& state, const PcaSubspace& sub,
              double lambda, double beta) {
    const Eigen::Index m = sub.points;
    if (sample.size() != sub.mean.size() || state.offsets.size() != m ||
        state.normals.rows() != m) {
        throw DataError("energy: inconsistent dimensions");
    }
    const ShapeVector recon = reconstruct(sub, state.alpha);
    double e = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        e += residual_at(sample, recon, state, i).squaredNorm();
        e += lambda * smooth_l1(state.offsets[i], beta);
    }
    return e;
}

Eigen::VectorXd grad_alpha(const ShapeVector& sample, const ScreeningState& state,
                           const PcaSubspace& sub) {
    const Eigen::Index m = sub.points;
    const Eigen::Index k = sub.mode_count();
    const ShapeVector recon = reconstruct(sub, state.alpha);

    ShapeVector r(3 * m);
    for (Eigen::Index i = 0; i < m; ++i) {
        r.segment<3>(3 * i) = residual_at(sample, recon, state, i);
    }

    Eigen::VectorXd g = -2.0 * (sub.modes.transpose() * r);
    if (state.has_history()) {
        // Finite-difference normal term: column k of the dM x K Jacobian is
        // dx o (n^(t) - n^(t-1)) / (alpha_k^(t) - alpha_k^(t-1)), with
        // vanishing-denominator columns zeroed.
        ShapeVector dn(3 * m);
        for (Eigen::Index i = 0; i < m; ++i) {
            dn.segment<3>(3 * i) =
                state.offsets[i] *
                (state.normals.row(i) - state.prev_normals.row(i)).transpose();
        }
        const double rdn = r.dot(dn);
        for (Eigen::Index j = 0; j < k; ++j) {
            const double da = state.alpha[j] - state.prev_alpha[j];
            if (std::fabs(da) >= 1e-12) {
                g[j] += -2.0 * rdn / da;
            }
        }
    }
    return g;
}

Eigen::VectorXd grad_offsets(const ShapeVector& sample, const ScreeningState& state,
                             const PcaSubspace& sub, double lambda, double beta) {
    const Eigen::Index m = sub.points;
    const ShapeVector recon = reconstruct(sub, state.alpha);
    Eigen::VectorXd g(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const Eigen::Vector3d eta = state.normals.row(i).transpose();
        g[i] = -2.0 * residual_at(sample, recon, state, i).dot(eta) +
               lambda * grad_smooth_l1(state.offsets[i], beta);
    }
    return g;
}

ScreeningResult screen(const ShapeVector& sample, const ScalarVolume& sdt, const PcaSubspace& sub,
                       const ScreeningConfig& cfg) {
    cfg.validate();
    sdt.validate();
    if (sub.dim != 3) {
        throw DataError("screen: only 3-D shape spaces are supported");
    }
    if (sample.size() != sub.mean.size()) {
        throw DataError("screen: sample length does not match the subspace");
    }
    const Eigen::Index m = sub.points;

    ScreeningResult result;
    result.alignment = SimilarityTransform::identity(3);
    ShapeVector x = sample;
    if (cfg.align_to_mean) {
        const PointSet sample_pts = unflatten(sample, 3);
        const PointSet mean_pts = unflatten(sub.mean, 3);
        result.alignment = rigid_align(sample_pts, mean_pts, /*allow_scale=*/false);
        x = flatten(result.alignment.apply(sample_pts));
    }
    const NormalField field(sdt, result.alignment);

    ScreeningState state;
    state.alpha = project(sub, x);
    state.offsets = Eigen::VectorXd::Constant(m, cfg.initial_offset);
    ShapeVector recon = reconstruct(sub, state.alpha);
    state.normals.resize(m, 3);
    for (Eigen::Index i = 0; i < m; ++i) {
        state.normals.row(i) = field.at(recon.segment<3>(3 * i), i).transpose();
    }

    // Sparsity weight: as configured, or 10% of the median initial per-point
    // data-gradient magnitude.
    double lambda;
    if (cfg.lambda) {
        lambda = *cfg.lambda;
    } else {
        std::vector<double> mags(static_cast<std::size_t>(m));
        for (Eigen::Index i = 0; i < m; ++i) {
            const Eigen::Vector3d eta = state.normals.row(i).transpose();
            mags[static_cast<std::size_t>(i)] =
                std::fabs(-2.0 * residual_at(x, recon, state, i).dot(eta));
        }
        std::nth_element(mags.begin(), mags.begin() + m / 2, mags.end());
        lambda = 0.1 * mags[static_cast<std::size_t>(m / 2)];
    }
    result.resolved_lambda = lambda;

    double omega = cfg.initial_alpha_rate > 0.0
                       ? cfg.initial_alpha_rate
                       : 1e-2 * std::sqrt(std::max(sub.eigenvalues[0], 1e-12));
    Eigen::VectorXd gamma = Eigen::VectorXd::Constant(
        m, cfg.initial_offset_rate > 0.0
               ? cfg.initial_offset_rate
               : 1e-2 * mean_nearest_neighbor_spacing(unflatten(sub.mean, 3)));

    state.energy = energy(x, state, sub, lambda, cfg.beta);
    result.energy_trace.push_back(state.energy);

    constexpr int kMaxBacktracks = 60;
    constexpr int kDivergenceStreak = 100;
    int rejected_streak = 0;
    bool converged = false;
    int iter = 0;

    for (iter = 0; iter < cfg.max_iters; ++iter) {
        const ShapeCoefficients alpha_before = state.alpha;
        const Eigen::VectorXd offsets_before = state.offsets;
        bool alpha_accepted = false;
        bool offsets_accepted = false;
        bool any_rejection = false;

        // Alpha step. Candidates are judged on the full energy with their own
        // refreshed normals, so an accepted update decreases the true
        // objective E(alpha, dx) including the normals' dependence on alpha.
        const Eigen::VectorXd g = grad_alpha(x, state, sub);
        if (g.norm() > 1e-15 * (1.0 + std::fabs(state.energy))) {
            for (int attempt = 0; attempt < kMaxBacktracks; ++attempt) {
                ScreeningState cand = state;
                cand.alpha = state.alpha - omega * g;
                const ShapeVector cand_recon = reconstruct(sub, cand.alpha);
                const bool feasible = field.try_normals(cand_recon, cand.normals);
                const double cand_energy =
                    feasible ? energy(x, cand, sub, lambda, cfg.beta)
                             : std::numeric_limits<double>::infinity();
                if (cand_energy < state.energy) {
                    state.prev_alpha = state.alpha;
                    state.prev_normals = state.normals;
                    state.alpha = cand.alpha;
                    state.normals = cand.normals;
                    state.energy = cand_energy;
                    recon = cand_recon;
                    omega *= cfg.rate_growth;
                    alpha_accepted = true;
                    rejected_streak = 0;
                    break;
                }
                omega /= cfg.rate_backoff;
                any_rejection = true;
                if (++rejected_streak >= kDivergenceStreak) break;
            }
        }
        if (rejected_streak >= kDivergenceStreak) break;

        // Offset sweep. Given alpha and normals the energy is separable per
        // point, so each point carries its own rate and exact accept test.
        for (Eigen::Index i = 0; i < m; ++i) {
            const Eigen::Vector3d q =
                x.segment<3>(3 * i) - recon.segment<3>(3 * i);
            const Eigen::Vector3d eta = state.normals.row(i).transpose();
            const double proj = q.dot(eta);
            const double cur = state.offsets[i];
            auto point_energy = [&](double dx) {
                return q.squaredNorm() - 2.0 * dx * proj + dx * dx +
                       lambda * smooth_l1(dx, cfg.beta);
            };
            const double gi =
                -2.0 * (proj - cur) + lambda * grad_smooth_l1(cur, cfg.beta);
            if (std::fabs(gi) <= 1e-18) continue;
            const double cand = cur - gamma[i] * gi;
            const double e_old = point_energy(cur);
            const double e_new = point_energy(cand);
            if (e_new < e_old) {
                state.offsets[i] = cand;
                state.energy += e_new - e_old;
                gamma[i] *= cfg.rate_growth;
                offsets_accepted = true;
            } else {
                gamma[i] /= cfg.rate_backoff;
            }
        }
        if (offsets_accepted) {
            rejected_streak = 0;
        } else {
            any_rejection = true;
            if (++rejected_streak >= kDivergenceStreak) {
                result.energy_trace.push_back(state.energy);
                break;
            }
        }

        result.energy_trace.push_back(state.energy);

        const double rel_a =
            (state.alpha - alpha_before).norm() / std::max(alpha_before.norm(), 1.0);
        const double rel_o =
            (state.offsets - offsets_before).norm() / std::max(offsets_before.norm(), 1.0);
        const bool stalled = any_rejection && !alpha_accepted && !offsets_accepted;
        if (!stalled && rel_a < cfg.convergence_tol && rel_o < cfg.convergence_tol) {
            converged = true;
            ++iter;
            break;
        }
    }

    result.alpha = state.alpha;
    result.offsets = state.offsets;
    result.reconstruction = reconstruct(sub, state.alpha);
    result.normals = state.normals;
    result.iterations = iter;
    result.converged = converged;
    return result;
}

Eigen::VectorXd threshold_offsets(const Eigen::VectorXd& offsets, double half_width) {
    if (half_width < 0.0) {
        throw DataError("threshold_offsets: half_width must be >= 0");
    }
    Eigen::VectorXd out = offsets;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        if (std::fabs(out[i]) <= half_width) {
            out[i] = 0.0;
        }
    }
    return out;
}

GroupDifference group_difference(const CorrespondenceEnsemble& group_a,
                                 const CorrespondenceEnsemble& group_b) {
    group_a.validate();
    group_b.validate();
    if (group_a.points() != group_b.points() || group_a.dim() != group_b.dim()) {
        throw DataError("group_difference: groups disagree in correspondences or dimension");
    }
    Eigen::MatrixXd mean_a = Eigen::MatrixXd::Zero(group_a.points(), group_a.dim());
    Eigen::MatrixXd mean_b = mean_a;
    for (const auto& s : group_a.shapes) mean_a += s.pts;
    for (const auto& s : group_b.shapes) mean_b += s.pts;
    mean_a /= static_cast<double>(group_a.size());
    mean_b /= static_cast<double>(group_b.size());

    GroupDifference diff;
    diff.displacement = mean_a - mean_b;
    diff.magnitude = diff.displacement.rowwise().norm();
    return diff;
}

std::vector<double> offset_histogram(const Eigen::VectorXd& offsets,
                                     const std::vector<double>& bin_edges) {
    if (bin_edges.size() < 2) {
        throw DataError("offset_histogram: need at least 2 bin edges");
    }
    const std::size_t bins = bin_edges.size() - 1;
    std::vector<double> counts(bins, 0.0);
    for (Eigen::Index i = 0; i < offsets.size(); ++i) {
        const double v = offsets[i];
        auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), v);
        std::size_t idx;
        if (it == bin_edges.begin()) {
            idx = 0;
        } else {
            idx = static_cast<std::size_t>(std::distance(bin_edges.begin(), it)) - 1;
            idx = std::min(idx, bins - 1);
        }
        counts[idx] += 1.0;
    }
    return counts;
}

namespace {

// Type-7 quantile: linear interpolation between order statistics.
double linear_quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double h = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    const double f = h - std::floor(h);
    return v[lo] + f * (v[hi] - v[lo]);
}

} // namespace

QuantileCurves offset_quantile_curves(const std::vector<std::vector<double>>& histograms,
                                      const std::vector<double>& quantiles) {
    if (histograms.empty()) {
        throw DataError("offset_quantile_curves: no histograms");
    }
    const std::size_t bins = histograms.front().size();
    for (const auto& h : histograms) {
        if (h.size() != bins) {
            throw DataError("offset_quantile_curves: histograms must share binning");
        }
    }
    QuantileCurves out;
    out.quantiles = quantiles;
    out.curves.assign(quantiles.size(), std::vector<double>(bins, 0.0));
    out.envelope_lo.resize(bins);
    out.envelope_hi.resize(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        std::vector<double> column;
        column.reserve(histograms.size());
        for (const auto& h : histograms) column.push_back(h[b]);
        for (std::size_t qi = 0; qi < quantiles.size(); ++qi) {
            if (!(quantiles[qi] >= 0.0 && quantiles[qi] <= 1.0)) {
                throw DataError("offset_quantile_curves: quantiles must lie in [0, 1]");
            }
            out.curves[qi][b] = linear_quantile(column, quantiles[qi]);
        }
        const double q25 = linear_quantile(column, 0.25);
        const double q50 = linear_quantile(column, 0.50);
        const double q75 = linear_quantile(column, 0.75);
        const double iqr = q75 - q25;
        out.envelope_lo[b] = q50 - 1.5 * iqr;
        out.envelope_hi[b] = q50 + 1.5 * iqr;
    }
    return out;
}

} // namespace ssm
