#include "ssm/metrics.hpp"

#include "ssm/align.hpp"
#include "ssm/errors.hpp"
#include "ssm/io.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace ssm {

MetricCurve compactness(const PcaSubspace& sub, Eigen::Index k_max) {
    if (k_max < 1 || k_max > sub.mode_count()) {
        std::ostringstream os;
        os << "compactness: K_max " << k_max << " out of range [1, " << sub.mode_count() << "]";
        throw DataError(os.str());
    }
    MetricCurve curve;
    curve.name = "compactness";
    curve.values.resize(k_max);
    double acc = 0.0;
    for (Eigen::Index k = 0; k < k_max; ++k) {
        acc += sub.eigenvalues[k];
        curve.values[k] = acc;
    }
    return curve;
}

MetricCurve generalization(const CorrespondenceEnsemble& ens, Eigen::Index k_max,
                           const GeneralizationOptions& opts) {
    ens.validate();
    const Eigen::Index n = ens.size();
    if (n < 3) {
        throw DataError("generalization: need at least 3 shapes for leave-one-out");
    }
    if (k_max < 1 || k_max > n - 2) {
        std::ostringstream os;
        os << "generalization: K_max " << k_max << " exceeds the leave-one-out rank " << (n - 2);
        throw DataError(os.str());
    }

    MetricCurve curve;
    curve.name = "generalization";
    curve.values = Eigen::VectorXd::Zero(k_max);
    for (Eigen::Index leave = 0; leave < n; ++leave) {
        CorrespondenceEnsemble rest;
        rest.shapes.reserve(static_cast<std::size_t>(n - 1));
        for (Eigen::Index i = 0; i < n; ++i) {
            if (i != leave) rest.shapes.push_back(ens.shapes[static_cast<std::size_t>(i)]);
        }
        const PcaSubspace sub = fit_pca(rest, ModeRule::fixed(static_cast<int>(k_max)));

        PointSet held = ens.shapes[static_cast<std::size_t>(leave)];
        if (opts.align_to_loo_mean) {
            const PointSet loo_mean = unflatten(sub.mean, ens.dim());
            held = rigid_align(held, loo_mean, opts.allow_scale).apply(held);
        }
        const ShapeVector z = flatten(held);

        // With orthonormal modes the K-mode error is the full-rank residual
        // plus the energy of the truncated coefficients.
        const ShapeCoefficients alpha = project(sub, z);
        const double base = (z - reconstruct(sub, alpha)).squaredNorm();
        double tail = 0.0;
        for (Eigen::Index k = k_max - 1; k >= 0; --k) {
            curve.values[k] += base + tail;
            tail += alpha[k] * alpha[k];
        }
    }
    curve.values /= static_cast<double>(n);
    return curve;
}

MetricCurve specificity(const PcaSubspace& sub, const CorrespondenceEnsemble& train,
                        Eigen::Index k_max, Eigen::Index j_samples, Rng& rng) {
    train.validate();
    if (train.size() < 1) {
        throw DataError("specificity: empty training set");
    }
    if (k_max < 1 || k_max > sub.mode_count()) {
        throw DataError("specificity: K_max out of range");
    }
    if (j_samples < 1) {
        throw DataError("specificity: need at least one sample");
    }
    std::vector<ShapeVector> trainvecs = train.shape_vectors();

    MetricCurve curve;
    curve.name = "specificity";
    curve.values.resize(k_max);
    curve.stderrs = Eigen::VectorXd::Zero(k_max);
    for (Eigen::Index k = 1; k <= k_max; ++k) {
        double sum = 0.0, sumsq = 0.0;
        for (Eigen::Index j = 0; j < j_samples; ++j) {
            const ShapeVector z = sample_random(sub, k, rng);
            double best = std::numeric_limits<double>::max();
            for (const auto& t : trainvecs) {
                best = std::min(best, (z - t).squaredNorm());
            }
            sum += best;
            sumsq += best * best;
        }
        const double mean = sum / static_cast<double>(j_samples);
        curve.values[k - 1] = mean;
        if (j_samples > 1) {
            const double var =
                std::max(0.0, (sumsq - sum * mean) / static_cast<double>(j_samples - 1));
            (*curve.stderrs)[k - 1] = std::sqrt(var / static_cast<double>(j_samples));
        }
    }
    return curve;
}

MetricCurve rms_per_point(const MetricCurve& curve, Eigen::Index points) {
    if (points < 1) {
        throw DataError("rms_per_point: invalid point count");
    }
    MetricCurve out;
    out.name = curve.name + "_rms";
    out.values = (curve.values / static_cast<double>(points)).cwiseSqrt();
    return out;
}

CurveComparison compare_curves(const MetricCurve& a, const MetricCurve& b, double tol) {
    if (a.k_max() != b.k_max()) {
        throw DataError("compare_curves: curves cover different K ranges");
    }
    CurveComparison cmp;
    cmp.metric = a.name;
    for (Eigen::Index k = 0; k < a.k_max(); ++k) {
        const double diff = a.values[k] - b.values[k];
        if (diff < -tol) {
            ++cmp.a_lower;
        } else if (diff > tol) {
            ++cmp.b_lower;
        } else {
            ++cmp.ties;
        }
    }
    return cmp;
}

void write_metrics_csv(const std::filesystem::path& path, const MetricCurve& compact,
                       const MetricCurve& general, const MetricCurve& specific,
                       const MetricCurve* general_rms, const MetricCurve* specific_rms) {
    const Eigen::Index k_max =
        std::max({compact.k_max(), general.k_max(), specific.k_max()});
    std::vector<std::string> header = {"K", "compactness_mm2", "generalization_mm2",
                                       "specificity_mm2", "specificity_stderr_mm2"};
    if (general_rms) header.push_back("generalization_rms_mm");
    if (specific_rms) header.push_back("specificity_rms_mm");
    auto cell = [](const MetricCurve& c, Eigen::Index k) {
        return k < c.k_max() ? csv_cell(c.values[k]) : std::string();
    };
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index k = 0; k < k_max; ++k) {
        std::vector<std::string> row = {std::to_string(k + 1), cell(compact, k), cell(general, k),
                                        cell(specific, k)};
        row.push_back(specific.stderrs && k < specific.stderrs->size()
                          ? csv_cell((*specific.stderrs)[k])
                          : std::string());
        if (general_rms) row.push_back(cell(*general_rms, k));
        if (specific_rms) row.push_back(cell(*specific_rms, k));
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

} // namespace ssm
