#ifndef SSM_MLP_HPP
#define SSM_MLP_HPP

#include "ssm/rng.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ssm {

enum class Activation { Rectifier, Tanh, Sigmoid };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct MlpConfig {
    std::vector<int> hidden; // empty list trains a plain logistic model
    Activation activation = Activation::Rectifier;
    double l2 = 0.0;
    double learning_rate = 0.05;
    int epochs = 300;
    int batch_size = 8;
    double momentum = 0.0;
    std::uint64_t seed = 1;

    int parameter_count(int inputs) const;
    std::string describe() const;
    void validate() const;
};

// Binary classifier: standardized inputs, hidden layers with one activation,
// single logistic output. Inputs are z-scored with statistics captured from
// the training split.
struct MlpModel {
    std::vector<Eigen::MatrixXd> weights; // layer l: out x in
    std::vector<Eigen::VectorXd> biases;
    Activation activation = Activation::Rectifier;
    Eigen::RowVectorXd feature_mean;
    Eigen::RowVectorXd feature_std;

    // P(label = 1) per row of raw (unstandardized) features.
    Eigen::VectorXd predict_proba(const Eigen::MatrixXd& features) const;
};

struct MlpGradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
};

// Mean cross-entropy over the batch plus 0.5 * l2 * sum ||W||^2, with
// analytic parameter gradients. `standardized` rows bypass the z-score.
double loss_and_gradients(const MlpModel& model, const Eigen::MatrixXd& standardized,
                          const Eigen::VectorXd& labels, double l2, MlpGradients* grads);

struct TrainTrace {
    std::vector<double> epoch_loss; // full-dataset loss after each epoch
};

// Deterministic mini-batch gradient descent (optional momentum) from the
// config seed. Throws DataError on single-class labels or non-finite
// features.
MlpModel train_mlp(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                   const MlpConfig& cfg, TrainTrace* trace = nullptr);

struct EvalMetrics {
    double accuracy_pct = 0.0;
    double f1_pct = 0.0;
    std::optional<double> auc; // absent on single-class evaluation sets
};

// Accuracy and F1 at threshold 0.5 (F1 on the pathology class), AUC from the
// probability ranks with midrank tie handling.
EvalMetrics evaluate(const MlpModel& model, const Eigen::MatrixXd& features,
                     const Eigen::VectorXd& labels);

// Stratified fold assignment: per-class shuffle dealt round-robin, so every
// fold's class ratio stays within one sample of the global ratio.
std::vector<std::vector<Eigen::Index>> stratified_folds(const Eigen::VectorXd& labels, int folds,
                                                        Rng& rng);

// Mean validation accuracy over stratified folds per config; ties prefer the
// smaller network, then the lower grid index.
MlpConfig cv_grid_search(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                         const std::vector<MlpConfig>& grid, int folds, Rng& rng);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

struct ClassifierReport {
    MeanStd train_accuracy, train_f1, train_auc;
    MeanStd test_accuracy, test_f1, test_auc;
    int repeats = 0;
    bool single_repeat = false; // std fixed at 0 by convention
    bool auc_defined = true;    // false when any split lacked both classes
};

// Per repeat: stratified split, grid search on the training side (three-fold
// CV), final training, and train/test evaluation; reports mean +/- std.
ClassifierReport repeated_split_experiment(const Eigen::MatrixXd& features,
                                           const Eigen::VectorXd& labels, int n_repeats,
                                           double test_fraction,
                                           const std::vector<MlpConfig>& grid, Rng& rng);

std::vector<MlpConfig> default_config_grid(std::uint64_t seed);

void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);
void write_classifier_report_csv(const ClassifierReport& report,
                                 const std::filesystem::path& path);

} // namespace ssm

#endif
