#include "ssm/pca.hpp"

#include "ssm/errors.hpp"
#include "ssm/io.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ssm {

namespace {

constexpr double kNoiseRatio = 1e-12;

// Flip each column so its largest-magnitude entry is positive; makes the
// decomposition deterministic across solvers and platforms.
void fix_mode_signs(Eigen::MatrixXd& modes) {
    for (Eigen::Index j = 0; j < modes.cols(); ++j) {
        Eigen::Index arg = 0;
        modes.col(j).cwiseAbs().maxCoeff(&arg);
        if (modes(arg, j) < 0.0) {
            modes.col(j) = -modes.col(j);
        }
    }
}

// Append orthonormal columns (zero-variance padding) until `modes` has
// `target` columns, by Gram-Schmidt against the existing ones.
void complete_basis(Eigen::MatrixXd& modes, Eigen::Index target) {
    const Eigen::Index n = modes.rows();
    Eigen::Index have = modes.cols();
    modes.conservativeResize(n, target);
    for (Eigen::Index c = 0; have < target && c < n; ++c) {
        Eigen::VectorXd v = Eigen::VectorXd::Unit(n, c);
        v -= modes.leftCols(have) * (modes.leftCols(have).transpose() * v);
        const double nv = v.norm();
        if (nv > 0.5) {
            modes.col(have++) = v / nv;
        }
    }
    if (have < target) {
        throw NumericalError("fit_pca: unable to complete an orthonormal basis");
    }
}

} // namespace

void PcaSubspace::validate() const {
    const Eigen::Index k = mode_count();
    if (k < 1 || mean.size() != modes.rows() || eigenvalues.size() != k) {
        throw DataError("subspace fields are inconsistent");
    }
    const Eigen::MatrixXd gram = modes.transpose() * modes;
    if ((gram - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() > 1e-8) {
        throw NumericalError("subspace modes are not orthonormal");
    }
    for (Eigen::Index j = 0; j < k; ++j) {
        if (eigenvalues[j] < 0.0 || (j > 0 && eigenvalues[j] > eigenvalues[j - 1] + 1e-12)) {
            throw NumericalError("subspace eigenvalues must be nonnegative and descending");
        }
    }
    if (eigenvalues.sum() > total_variance + 1e-8 * (1.0 + total_variance)) {
        throw NumericalError("subspace eigenvalues exceed the total variance");
    }
}

int select_mode_count(const Eigen::VectorXd& eigenvalues, double fraction) {
    const double total = eigenvalues.sum();
    if (!(total > 0.0)) {
        return 1;
    }
    double acc = 0.0;
    for (Eigen::Index j = 0; j < eigenvalues.size(); ++j) {
        acc += eigenvalues[j];
        if (acc / total >= fraction - 1e-12) {
            return static_cast<int>(j + 1);
        }
    }
    return static_cast<int>(eigenvalues.size());
}

PcaSubspace fit_pca(const CorrespondenceEnsemble& ens, const ModeRule& rule) {
    ens.validate();
    const Eigen::Index n = ens.size();
    if (n < 2) {
        throw DataError("fit_pca: need at least 2 shapes");
    }
    const Eigen::Index dm = ens.dim() * ens.points();
    const Eigen::Index max_rank = std::min<Eigen::Index>(n - 1, dm);
    if (rule.kind == ModeRule::Kind::FixedCount &&
        (rule.count < 1 || rule.count > max_rank)) {
        std::ostringstream os;
        os << "fit_pca: requested " << rule.count << " modes, achievable rank is " << max_rank;
        throw DataError(os.str());
    }
    if (rule.kind == ModeRule::Kind::VarianceFraction &&
        !(rule.fraction > 0.0 && rule.fraction <= 1.0)) {
        throw DataError("fit_pca: variance fraction must lie in (0, 1]");
    }

    Eigen::MatrixXd data(dm, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        data.col(i) = ens.shape_vector(i);
    }
    PcaSubspace sub;
    sub.dim = ens.dim();
    sub.points = ens.points();
    sub.mean = data.rowwise().mean();
    data.colwise() -= sub.mean;
    sub.total_variance = data.squaredNorm() / static_cast<double>(n - 1);

    // Gram trick: eigenvectors v of A^T A lift to modes u = A v / ||A v||.
    const Eigen::MatrixXd gram = data.transpose() * data;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success) {
        throw NumericalError("fit_pca: Gram eigendecomposition failed");
    }

    Eigen::VectorXd all_values(max_rank);
    Eigen::MatrixXd all_modes(dm, max_rank);
    const double top = std::max(0.0, eig.eigenvalues()[n - 1]);
    Eigen::Index kept = 0;
    for (Eigen::Index j = 0; j < max_rank; ++j) {
        const double s = eig.eigenvalues()[n - 1 - j]; // descending
        if (s <= top * kNoiseRatio || s <= 0.0) {
            break;
        }
        all_values[j] = s / static_cast<double>(n - 1);
        all_modes.col(j) = data * eig.eigenvectors().col(n - 1 - j) / std::sqrt(s);
        kept = j + 1;
    }

    Eigen::Index k;
    if (rule.kind == ModeRule::Kind::FixedCount) {
        k = rule.count;
    } else {
        k = std::min<Eigen::Index>(kept, select_mode_count(all_values.head(kept), rule.fraction));
        k = std::max<Eigen::Index>(k, 1);
    }

    sub.modes = all_modes.leftCols(std::min(kept, k));
    sub.eigenvalues = Eigen::VectorXd::Zero(k);
    sub.eigenvalues.head(std::min(kept, k)) = all_values.head(std::min(kept, k));
    if (sub.modes.cols() > 0) {
        // The Gram lift u = A v / sqrt(s) erodes orthogonality for the small
        // eigenvalues; a thin QR restores it without reordering the modes.
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(sub.modes);
        Eigen::MatrixXd q =
            qr.householderQ() * Eigen::MatrixXd::Identity(dm, sub.modes.cols());
        const Eigen::MatrixXd r =
            qr.matrixQR().topRows(sub.modes.cols()).triangularView<Eigen::Upper>();
        for (Eigen::Index j = 0; j < q.cols(); ++j) {
            if (r(j, j) < 0.0) q.col(j) = -q.col(j);
        }
        sub.modes = std::move(q);
    }
    if (kept < k) {
        complete_basis(sub.modes, k);
    }
    fix_mode_signs(sub.modes);
    sub.validate();
    return sub;
}

ShapeCoefficients project(const PcaSubspace& sub, const ShapeVector& x) {
    if (x.size() != sub.mean.size()) {
        throw DataError("project: shape vector length does not match the subspace");
    }
    return sub.modes.transpose() * (x - sub.mean);
}

ShapeVector reconstruct(const PcaSubspace& sub, const ShapeCoefficients& a) {
    if (a.size() != sub.mode_count()) {
        throw DataError("reconstruct: coefficient count does not match the subspace");
    }
    return sub.modes * a + sub.mean;
}

ShapeVector sample_mode(const PcaSubspace& sub, Eigen::Index k, double t) {
    if (k < 0 || k >= sub.mode_count()) {
        std::ostringstream os;
        os << "sample_mode: mode " << k << " out of range [0, " << sub.mode_count() << ")";
        throw DataError(os.str());
    }
    return sub.mean + t * std::sqrt(sub.eigenvalues[k]) * sub.modes.col(k);
}

ShapeVector sample_random(const PcaSubspace& sub, Eigen::Index k_use, Rng& rng) {
    if (k_use < 1 || k_use > sub.mode_count()) {
        throw DataError("sample_random: mode count out of range");
    }
    ShapeVector x = sub.mean;
    for (Eigen::Index j = 0; j < k_use; ++j) {
        x += rng.normal() * std::sqrt(sub.eigenvalues[j]) * sub.modes.col(j);
    }
    return x;
}

void save_subspace(const PcaSubspace& sub, const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write file: " + path.string());
    }
    out << "PCASPACE1\n";
    out << "dim: " << sub.dim << "\npoints: " << sub.points << "\nmodes: " << sub.mode_count()
        << "\ntotal_variance: " << format_double(sub.total_variance) << '\n';
    out << "mean:";
    for (Eigen::Index i = 0; i < sub.mean.size(); ++i) {
        out << ' ' << format_double(sub.mean[i]);
    }
    out << "\neigenvalues:";
    for (Eigen::Index j = 0; j < sub.eigenvalues.size(); ++j) {
        out << ' ' << format_double(sub.eigenvalues[j]);
    }
    out << '\n';
    for (Eigen::Index j = 0; j < sub.mode_count(); ++j) {
        out << "mode:";
        for (Eigen::Index i = 0; i < sub.modes.rows(); ++i) {
            out << ' ' << format_double(sub.modes(i, j));
        }
        out << '\n';
    }
}

PcaSubspace load_subspace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open file: " + path.string());
    }
    std::string magic;
    std::getline(in, magic);
    if (magic != "PCASPACE1") {
        throw DataError(path.string() + ": missing PCASPACE1 magic line");
    }
    auto expect = [&](const std::string& key) {
        std::string got;
        if (!(in >> got) || got != key) {
            throw DataError(path.string() + ": expected '" + key + "'");
        }
    };
    PcaSubspace sub;
    Eigen::Index k = 0;
    expect("dim:");
    in >> sub.dim;
    expect("points:");
    in >> sub.points;
    expect("modes:");
    in >> k;
    expect("total_variance:");
    in >> sub.total_variance;
    const Eigen::Index dm = sub.dim * sub.points;
    if (k < 1 || dm < 1) {
        throw DataError(path.string() + ": invalid subspace header");
    }
    sub.mean.resize(dm);
    expect("mean:");
    for (Eigen::Index i = 0; i < dm; ++i) in >> sub.mean[i];
    sub.eigenvalues.resize(k);
    expect("eigenvalues:");
    for (Eigen::Index j = 0; j < k; ++j) in >> sub.eigenvalues[j];
    sub.modes.resize(dm, k);
    for (Eigen::Index j = 0; j < k; ++j) {
        expect("mode:");
        for (Eigen::Index i = 0; i < dm; ++i) in >> sub.modes(i, j);
    }
    if (!in) {
        throw DataError(path.string() + ": truncated subspace file");
    }
    sub.validate();
    return sub;
}

void save_spectrum_csv(const PcaSubspace& sub, const std::filesystem::path& path) {
    std::vector<std::vector<std::string>> rows;
    const double total = sub.total_variance > 0.0 ? sub.total_variance : 1.0;
    double acc = 0.0;
    for (Eigen::Index j = 0; j < sub.eigenvalues.size(); ++j) {
        acc += sub.eigenvalues[j];
        rows.push_back({std::to_string(j + 1), csv_cell(sub.eigenvalues[j]), csv_cell(acc / total)});
    }
    write_csv(path, {"mode", "eigenvalue_mm2", "cumulative_fraction"}, rows);
}

} // namespace ssm
