#include "ssm/mlp.hpp"

#include "ssm/errors.hpp"
#include "ssm/io.hpp"
#include "ssm/split.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace ssm {

namespace {

Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation act) {
    switch (act) {
        case Activation::Rectifier:
            return z.cwiseMax(0.0);
        case Activation::Tanh:
            return z.array().tanh();
        case Activation::Sigmoid:
            return (1.0 / (1.0 + (-z.array()).exp())).matrix();
    }
    throw ConfigError("unknown activation");
}

Eigen::MatrixXd activate_grad(const Eigen::MatrixXd& z, const Eigen::MatrixXd& a, Activation act) {
    switch (act) {
        case Activation::Rectifier:
            return (z.array() > 0.0).cast<double>();
        case Activation::Tanh:
            return 1.0 - a.array().square();
        case Activation::Sigmoid:
            return a.array() * (1.0 - a.array());
    }
    throw ConfigError("unknown activation");
}

inline double softplus(double z) {
    // log(1 + e^z) without overflow.
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Eigen::MatrixXd standardize(const MlpModel& model, const Eigen::MatrixXd& features) {
    return (features.rowwise() - model.feature_mean).array().rowwise() /
           model.feature_std.array();
}

// Logits for standardized inputs; optionally records the per-layer
// pre-activations and activations for backpropagation.
Eigen::VectorXd forward(const MlpModel& model, const Eigen::MatrixXd& x,
                        std::vector<Eigen::MatrixXd>* zs, std::vector<Eigen::MatrixXd>* as) {
    Eigen::MatrixXd cur = x;
    const std::size_t layers = model.weights.size();
    for (std::size_t l = 0; l + 1 < layers; ++l) {
        Eigen::MatrixXd z =
            (cur * model.weights[l].transpose()).rowwise() + model.biases[l].transpose();
        Eigen::MatrixXd a = activate(z, model.activation);
        if (zs) zs->push_back(z);
        if (as) as->push_back(a);
        cur = std::move(a);
    }
    return (cur * model.weights[layers - 1].transpose()).rowwise() +
           model.biases[layers - 1].transpose();
}

} // namespace

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::Rectifier:
            return "rectifier";
        case Activation::Tanh:
            return "tanh";
        case Activation::Sigmoid:
            return "sigmoid";
    }
    return "?";
}

Activation activation_from_name(const std::string& name) {
    if (name == "rectifier" || name == "relu") return Activation::Rectifier;
    if (name == "tanh") return Activation::Tanh;
    if (name == "sigmoid") return Activation::Sigmoid;
    throw ConfigError("unknown activation '" + name + "'");
}

int MlpConfig::parameter_count(int inputs) const {
    int count = 0;
    int in = inputs;
    for (int h : hidden) {
        count += h * in + h;
        in = h;
    }
    count += in + 1;
    return count;
}

std::string MlpConfig::describe() const {
    std::ostringstream os;
    os << "hidden=[";
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        if (i) os << ' ';
        os << hidden[i];
    }
    os << "] act=" << activation_name(activation) << " l2=" << l2 << " lr=" << learning_rate
       << " momentum=" << momentum;
    return os.str();
}

void MlpConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("mlp: learning rate must be positive");
    if (epochs < 1) throw ConfigError("mlp: epochs must be positive");
    if (batch_size < 1) throw ConfigError("mlp: batch size must be positive");
    if (l2 < 0.0) throw ConfigError("mlp: l2 must be nonnegative");
    for (int h : hidden) {
        if (h < 1) throw ConfigError("mlp: hidden layer sizes must be positive");
    }
}

Eigen::VectorXd MlpModel::predict_proba(const Eigen::MatrixXd& features) const {
    const Eigen::VectorXd logits = forward(*this, standardize(*this, features), nullptr, nullptr);
    Eigen::VectorXd p(logits.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = sigmoid(logits[i]);
    return p;
}

double loss_and_gradients(const MlpModel& model, const Eigen::MatrixXd& x,
                          const Eigen::VectorXd& labels, double l2, MlpGradients* grads) {
    const auto batch = static_cast<double>(x.rows());
    std::vector<Eigen::MatrixXd> zs, as;
    const Eigen::VectorXd logits = forward(model, x, &zs, &as);

    double loss = 0.0;
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
        loss += softplus(logits[i]) - labels[i] * logits[i];
    }
    loss /= batch;
    for (const auto& w : model.weights) {
        loss += 0.5 * l2 * w.squaredNorm();
    }
    if (!grads) {
        return loss;
    }

    const std::size_t layers = model.weights.size();
    grads->weights.resize(layers);
    grads->biases.resize(layers);

    // delta starts as dL/dlogit = (sigma(z) - y)/batch, then walks backwards.
    Eigen::MatrixXd delta(x.rows(), 1);
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
        delta(i, 0) = (sigmoid(logits[i]) - labels[i]) / batch;
    }
    for (std::size_t l = layers; l-- > 0;) {
        const Eigen::MatrixXd& input = (l == 0) ? x : as[l - 1];
        grads->weights[l] = delta.transpose() * input + l2 * model.weights[l];
        grads->biases[l] = delta.colwise().sum().transpose();
        if (l > 0) {
            delta = (delta * model.weights[l]).cwiseProduct(
                activate_grad(zs[l - 1], as[l - 1], model.activation));
        }
    }
    return loss;
}

MlpModel train_mlp(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                   const MlpConfig& cfg, TrainTrace* trace) {
    cfg.validate();
    const Eigen::Index n = features.rows();
    if (n != labels.size() || n < 2) {
        throw DataError("train_mlp: need matching features and labels, at least 2 samples");
    }
    if (!features.allFinite() || !labels.allFinite()) {
        throw DataError("train_mlp: non-finite features or labels");
    }
    int pos = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (labels[i] != 0.0 && labels[i] != 1.0) {
            throw DataError("train_mlp: labels must be 0 or 1");
        }
        pos += labels[i] == 1.0 ? 1 : 0;
    }
    if (pos == 0 || pos == n) {
        throw DataError("train_mlp: need samples from both classes");
    }

    MlpModel model;
    model.activation = cfg.activation;
    model.feature_mean = features.colwise().mean();
    Eigen::RowVectorXd var =
        (features.rowwise() - model.feature_mean).array().square().colwise().mean();
    model.feature_std = var.array().sqrt();
    for (Eigen::Index j = 0; j < model.feature_std.size(); ++j) {
        if (model.feature_std[j] < 1e-12) model.feature_std[j] = 1.0; // constant feature
    }
    const Eigen::MatrixXd x = standardize(model, features);

    std::vector<int> sizes;
    sizes.push_back(static_cast<int>(features.cols()));
    for (int h : cfg.hidden) sizes.push_back(h);
    sizes.push_back(1);

    Rng rng(cfg.seed);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const int fan_in = sizes[l];
        const int fan_out = sizes[l + 1];
        const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Eigen::MatrixXd w(fan_out, fan_in);
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            w(i / w.cols(), i % w.cols()) = rng.uniform(-r, r);
        }
        model.weights.push_back(std::move(w));
        model.biases.push_back(Eigen::VectorXd::Zero(fan_out));
    }

    MlpGradients velocity;
    velocity.weights.reserve(model.weights.size());
    velocity.biases.reserve(model.biases.size());
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        velocity.weights.push_back(Eigen::MatrixXd::Zero(model.weights[l].rows(),
                                                         model.weights[l].cols()));
        velocity.biases.push_back(Eigen::VectorXd::Zero(model.biases[l].size()));
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    MlpGradients grads;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
            const Eigen::Index len = std::min<Eigen::Index>(cfg.batch_size, n - start);
            Eigen::MatrixXd bx(len, x.cols());
            Eigen::VectorXd by(len);
            for (Eigen::Index i = 0; i < len; ++i) {
                bx.row(i) = x.row(order[static_cast<std::size_t>(start + i)]);
                by[i] = labels[order[static_cast<std::size_t>(start + i)]];
            }
            loss_and_gradients(model, bx, by, cfg.l2, &grads);
            for (std::size_t l = 0; l < model.weights.size(); ++l) {
                velocity.weights[l] =
                    cfg.momentum * velocity.weights[l] - cfg.learning_rate * grads.weights[l];
                velocity.biases[l] =
                    cfg.momentum * velocity.biases[l] - cfg.learning_rate * grads.biases[l];
                model.weights[l] += velocity.weights[l];
                model.biases[l] += velocity.biases[l];
            }
        }
        if (trace) {
            trace->epoch_loss.push_back(loss_and_gradients(model, x, labels, cfg.l2, nullptr));
        }
    }
    return model;
}

EvalMetrics evaluate(const MlpModel& model, const Eigen::MatrixXd& features,
                     const Eigen::VectorXd& labels) {
    const Eigen::Index n = features.rows();
    if (n < 1 || n != labels.size()) {
        throw DataError("evaluate: empty or mismatched evaluation set");
    }
    const Eigen::VectorXd p = model.predict_proba(features);

    int tp = 0, fp = 0, fn = 0, correct = 0, pos = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool truth = labels[i] == 1.0;
        const bool pred = p[i] >= 0.5;
        pos += truth ? 1 : 0;
        correct += (pred == truth) ? 1 : 0;
        tp += (pred && truth) ? 1 : 0;
        fp += (pred && !truth) ? 1 : 0;
        fn += (!pred && truth) ? 1 : 0;
    }
    EvalMetrics out;
    out.accuracy_pct = 100.0 * correct / static_cast<double>(n);
    const double denom = 2.0 * tp + fp + fn;
    out.f1_pct = denom > 0.0 ? 100.0 * 2.0 * tp / denom : 0.0;

    const int neg = static_cast<int>(n) - pos;
    if (pos > 0 && neg > 0) {
        // Rank statistic with midranks for ties.
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(),
                  [&](Eigen::Index a, Eigen::Index b) { return p[a] < p[b]; });
        std::vector<double> rank(static_cast<std::size_t>(n));
        std::size_t i = 0;
        while (i < idx.size()) {
            std::size_t j = i;
            while (j + 1 < idx.size() && p[idx[j + 1]] == p[idx[i]]) ++j;
            const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
            for (std::size_t t = i; t <= j; ++t) rank[static_cast<std::size_t>(idx[t])] = mid;
            i = j + 1;
        }
        double pos_rank_sum = 0.0;
        for (Eigen::Index s = 0; s < n; ++s) {
            if (labels[s] == 1.0) pos_rank_sum += rank[static_cast<std::size_t>(s)];
        }
        out.auc = (pos_rank_sum - 0.5 * pos * (pos + 1.0)) / (static_cast<double>(pos) * neg);
    }
    return out;
}

std::vector<std::vector<Eigen::Index>> stratified_folds(const Eigen::VectorXd& labels, int folds,
                                                        Rng& rng) {
    if (folds < 2) {
        throw ConfigError("stratified_folds: need at least 2 folds");
    }
    std::vector<std::vector<Eigen::Index>> fold_members(static_cast<std::size_t>(folds));
    for (double cls : {0.0, 1.0}) {
        std::vector<Eigen::Index> members;
        for (Eigen::Index i = 0; i < labels.size(); ++i) {
            if (labels[i] == cls) members.push_back(i);
        }
        if (members.size() < static_cast<std::size_t>(folds)) {
            std::ostringstream os;
            os << "stratified_folds: class " << cls << " has " << members.size()
               << " samples, need at least " << folds;
            throw DataError(os.str());
        }
        rng.shuffle(members);
        for (std::size_t i = 0; i < members.size(); ++i) {
            fold_members[i % static_cast<std::size_t>(folds)].push_back(members[i]);
        }
    }
    return fold_members;
}

MlpConfig cv_grid_search(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                         const std::vector<MlpConfig>& grid, int folds, Rng& rng) {
    if (grid.empty()) {
        throw ConfigError("cv_grid_search: empty config grid");
    }
    const std::vector<std::vector<Eigen::Index>> fold_members =
        stratified_folds(labels, folds, rng);

    double best_acc = -1.0;
    std::size_t best_idx = 0;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        double acc_sum = 0.0;
        bool trainable = true;
        for (int f = 0; f < folds && trainable; ++f) {
            std::vector<Eigen::Index> train_idx, val_idx;
            for (int g = 0; g < folds; ++g) {
                auto& members = fold_members[static_cast<std::size_t>(g)];
                auto& dst = (g == f) ? val_idx : train_idx;
                dst.insert(dst.end(), members.begin(), members.end());
            }
            Eigen::MatrixXd tx(static_cast<Eigen::Index>(train_idx.size()), features.cols());
            Eigen::VectorXd ty(static_cast<Eigen::Index>(train_idx.size()));
            for (std::size_t i = 0; i < train_idx.size(); ++i) {
                tx.row(static_cast<Eigen::Index>(i)) = features.row(train_idx[i]);
                ty[static_cast<Eigen::Index>(i)] = labels[train_idx[i]];
            }
            Eigen::MatrixXd vx(static_cast<Eigen::Index>(val_idx.size()), features.cols());
            Eigen::VectorXd vy(static_cast<Eigen::Index>(val_idx.size()));
            for (std::size_t i = 0; i < val_idx.size(); ++i) {
                vx.row(static_cast<Eigen::Index>(i)) = features.row(val_idx[i]);
                vy[static_cast<Eigen::Index>(i)] = labels[val_idx[i]];
            }
            try {
                const MlpModel model = train_mlp(tx, ty, grid[c]);
                acc_sum += evaluate(model, vx, vy).accuracy_pct;
            } catch (const ConfigError&) {
                trainable = false; // e.g. zero learning rate in the grid
            }
        }
        if (!trainable) continue;
        const double acc = acc_sum / folds;
        const bool better =
            acc > best_acc + 1e-12 ||
            (std::fabs(acc - best_acc) <= 1e-12 && best_acc >= 0.0 &&
             grid[c].parameter_count(static_cast<int>(features.cols())) <
                 grid[best_idx].parameter_count(static_cast<int>(features.cols())));
        if (best_acc < 0.0 || better) {
            best_acc = acc;
            best_idx = c;
        }
    }
    if (best_acc < 0.0) {
        throw ConfigError("cv_grid_search: no trainable configuration in the grid");
    }
    return grid[best_idx];
}

ClassifierReport repeated_split_experiment(const Eigen::MatrixXd& features,
                                           const Eigen::VectorXd& labels, int n_repeats,
                                           double test_fraction,
                                           const std::vector<MlpConfig>& grid, Rng& rng) {
    if (n_repeats < 1) {
        throw ConfigError("repeated_split_experiment: need at least one repeat");
    }
    const Eigen::Index n = features.rows();
    std::vector<int> label_ints(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) label_ints[static_cast<std::size_t>(i)] = labels[i] == 1.0 ? 1 : 0;

    std::vector<double> tr_acc, tr_f1, tr_auc, te_acc, te_f1, te_auc;
    bool auc_defined = true;
    for (int r = 0; r < n_repeats; ++r) {
        Rng split_rng = rng.split("repeat-split", static_cast<std::uint64_t>(r));
        const SplitIndices split = stratified_split(label_ints, 1.0 - test_fraction, split_rng);

        auto gather = [&](const std::vector<std::size_t>& idx, Eigen::MatrixXd& x,
                          Eigen::VectorXd& y) {
            x.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
            y.resize(static_cast<Eigen::Index>(idx.size()));
            for (std::size_t i = 0; i < idx.size(); ++i) {
                x.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(idx[i]));
                y[static_cast<Eigen::Index>(i)] = labels[static_cast<Eigen::Index>(idx[i])];
            }
        };
        Eigen::MatrixXd train_x, test_x;
        Eigen::VectorXd train_y, test_y;
        gather(split.train, train_x, train_y);
        gather(split.test, test_x, test_y);

        Rng cv_rng = rng.split("repeat-cv", static_cast<std::uint64_t>(r));
        MlpConfig best = cv_grid_search(train_x, train_y, grid, 3, cv_rng);
        best.seed = rng.split("repeat-train", static_cast<std::uint64_t>(r)).seed();
        const MlpModel model = train_mlp(train_x, train_y, best);

        const EvalMetrics train_m = evaluate(model, train_x, train_y);
        const EvalMetrics test_m = evaluate(model, test_x, test_y);
        tr_acc.push_back(train_m.accuracy_pct);
        tr_f1.push_back(train_m.f1_pct);
        te_acc.push_back(test_m.accuracy_pct);
        te_f1.push_back(test_m.f1_pct);
        if (train_m.auc && test_m.auc) {
            tr_auc.push_back(*train_m.auc);
            te_auc.push_back(*test_m.auc);
        } else {
            auc_defined = false;
        }
    }

    auto summarize = [](const std::vector<double>& v) {
        MeanStd ms;
        if (v.empty()) return ms;
        double s = 0.0;
        for (double x : v) s += x;
        ms.mean = s / static_cast<double>(v.size());
        double sq = 0.0;
        for (double x : v) sq += (x - ms.mean) * (x - ms.mean);
        ms.std = std::sqrt(sq / static_cast<double>(v.size()));
        return ms;
    };
    ClassifierReport report;
    report.repeats = n_repeats;
    report.single_repeat = n_repeats == 1;
    report.auc_defined = auc_defined;
    report.train_accuracy = summarize(tr_acc);
    report.train_f1 = summarize(tr_f1);
    report.train_auc = summarize(tr_auc);
    report.test_accuracy = summarize(te_acc);
    report.test_f1 = summarize(te_f1);
    report.test_auc = summarize(te_auc);
    return report;
}

std::vector<MlpConfig> default_config_grid(std::uint64_t seed) {
    std::vector<MlpConfig> grid;
    const std::vector<std::vector<int>> hiddens = {{}, {16}, {32, 16}};
    const std::vector<Activation> acts = {Activation::Rectifier, Activation::Tanh};
    const std::vector<double> l2s = {0.0, 1e-3};
    for (const auto& h : hiddens) {
        for (Activation a : acts) {
            for (double l2 : l2s) {
                MlpConfig cfg;
                cfg.hidden = h;
                cfg.activation = a;
                cfg.l2 = l2;
                cfg.seed = seed;
                grid.push_back(cfg);
            }
        }
    }
    return grid;
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write file: " + path.string());
    }
    out << "MLP1\n";
    out << "activation: " << activation_name(model.activation) << '\n';
    out << "layers: " << model.weights.size() << '\n';
    auto write_row = [&out](const auto& vec) {
        for (Eigen::Index i = 0; i < vec.size(); ++i) {
            out << ' ' << format_double(vec(i));
        }
        out << '\n';
    };
    out << "feature_mean:";
    write_row(model.feature_mean);
    out << "feature_std:";
    write_row(model.feature_std);
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        out << "layer: " << model.weights[l].rows() << ' ' << model.weights[l].cols() << '\n';
        for (Eigen::Index r = 0; r < model.weights[l].rows(); ++r) {
            out << "w:";
            write_row(model.weights[l].row(r));
        }
        out << "b:";
        write_row(model.biases[l]);
    }
}

MlpModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open file: " + path.string());
    }
    std::string magic;
    std::getline(in, magic);
    if (magic != "MLP1") {
        throw DataError(path.string() + ": missing MLP1 magic line");
    }
    auto expect = [&](const std::string& key) {
        std::string got;
        if (!(in >> got) || got != key) {
            throw DataError(path.string() + ": expected '" + key + "'");
        }
    };
    MlpModel model;
    std::string act;
    expect("activation:");
    in >> act;
    model.activation = activation_from_name(act);
    std::size_t layers = 0;
    expect("layers:");
    in >> layers;

    // Feature vectors: read the rest of the line after the key.
    auto read_values = [&](const std::string& key, std::vector<double>& vals) {
        expect(key);
        std::string line;
        std::getline(in, line);
        std::istringstream ls(line);
        double v;
        vals.clear();
        while (ls >> v) vals.push_back(v);
    };
    std::vector<double> vals;
    read_values("feature_mean:", vals);
    model.feature_mean = Eigen::Map<Eigen::RowVectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    std::vector<double> stds;
    read_values("feature_std:", stds);
    model.feature_std = Eigen::Map<Eigen::RowVectorXd>(stds.data(), static_cast<Eigen::Index>(stds.size()));

    for (std::size_t l = 0; l < layers; ++l) {
        expect("layer:");
        Eigen::Index rows = 0, cols = 0;
        in >> rows >> cols;
        Eigen::MatrixXd w(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
            expect("w:");
            for (Eigen::Index c = 0; c < cols; ++c) in >> w(r, c);
        }
        model.weights.push_back(std::move(w));
        expect("b:");
        Eigen::VectorXd b(rows);
        for (Eigen::Index r = 0; r < rows; ++r) in >> b[r];
        model.biases.push_back(std::move(b));
    }
    if (!in) {
        throw DataError(path.string() + ": truncated model file");
    }
    return model;
}

void write_classifier_report_csv(const ClassifierReport& report,
                                 const std::filesystem::path& path) {
    std::vector<std::vector<std::string>> rows;
    auto add = [&rows](const std::string& metric, const MeanStd& train, const MeanStd& test) {
        rows.push_back({metric, csv_cell(train.mean), csv_cell(train.std), csv_cell(test.mean),
                        csv_cell(test.std)});
    };
    add("accuracy_pct", report.train_accuracy, report.test_accuracy);
    add("f1_pct", report.train_f1, report.test_f1);
    if (report.auc_defined) {
        add("auc", report.train_auc, report.test_auc);
    }
    rows.push_back({"repeats", std::to_string(report.repeats), "", "", ""});
    write_csv(path, {"metric", "train_mean", "train_std", "test_mean", "test_std"}, rows);
}

} // namespace ssm
