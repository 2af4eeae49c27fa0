#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcbilstm/data.hpp"
#include "dcbilstm/dropout.hpp"
#include "dcbilstm/loss.hpp"
#include "dcbilstm/network.hpp"

namespace dcbilstm {

struct AdamConfig {
    double lr = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First and second moment estimates, one pair per parameter tensor.
struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
};

/// One bias-corrected Adam step over parallel lists of parameters and
/// gradients. Moments are allocated on the first call. An empty gradient
/// tensor marks a frozen parameter and is skipped.
void adam_update(AdamState& state, std::span<Tensor* const> params,
                 std::span<const Tensor* const> grads);
void adam_update(AdamState& state, Model& model, const ModelGrads& grads);

/// Rescales every column whose L2 norm exceeds s to norm exactly s.
Tensor max_norm_constrain(const Tensor& W, double s);
void max_norm_constrain_inplace(Tensor& W, double s);

/// How the softmax weights are regularized after each step.
enum class SoftmaxL2 { max_norm, weight_decay, none };
std::string to_string(SoftmaxL2 mode);
SoftmaxL2 parse_softmax_l2(const std::string& s);

/// Predicted class per row, ties broken toward the lowest class index.
std::vector<std::size_t> argmax_rows(const Tensor& probs);

/// Fraction of examples whose argmax prediction equals the label. Dropout
/// is off. Throws ConfigError for an empty example list.
double evaluate(const Model& model, std::span<const EncodedExample> examples,
                std::size_t batch_size = 200);

struct TrainConfig {
    ModelConfig model;
    AdamConfig adam;
    std::size_t epochs = 100;
    std::size_t patience = 10;
    std::size_t batch_size = 200;
    std::uint64_t seed = 1;
    SoftmaxL2 softmax_l2 = SoftmaxL2::max_norm;
    double weight_decay = 0.0;
    std::size_t eval_every = 1;

    std::filesystem::path train_path;
    std::filesystem::path dev_path;
    std::filesystem::path test_path;
    std::filesystem::path embeddings_path;
    DatasetFormat data_format = DatasetFormat::tsv;
    bool sst_binary = false;
    std::size_t cv_folds = 0;      // 0: use the given splits
    double dev_fraction = 0.1;     // held out of the training data when no dev file
    std::filesystem::path checkpoint_path;
    std::filesystem::path log_path;
    bool log_timing = false;

    void validate() const;
};

struct EpochRecord {
    std::optional<std::size_t> fold;
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    std::optional<double> dev_acc;
    std::optional<double> test_acc;
    std::map<std::string, double> grad_norm_per_layer;
    std::optional<double> wall_ms;
    std::uint64_t seed = 0;
};

struct FoldResult {
    std::optional<std::size_t> fold;
    std::size_t best_epoch = 0;
    std::optional<double> best_dev_acc;
    std::optional<double> test_acc;  // at the best epoch
    double final_train_acc = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::vector<FoldResult> folds;
    std::optional<double> mean_test_acc;
    std::uint64_t seed = 0;
};

/// Line-delimited JSON for the run log.
std::string to_json_line(const EpochRecord& record);
std::string to_json_line(const FoldResult& result);

/// In-memory data for one training run.
struct TrainData {
    std::vector<EncodedExample> train;
    std::vector<EncodedExample> dev;   // may be empty: no early stopping
    std::vector<EncodedExample> test;  // may be empty
};

struct TrainOutcome {
    Model best;
    std::vector<EpochRecord> epochs;
    FoldResult result;
};

/// Epoch loop: shuffle -> batches -> forward -> loss -> backward -> Adam ->
/// softmax constraint. With a dev set, keeps the best-dev model and stops
/// after `patience` epochs without improvement. Each record is also written
/// to `log` (if given) as soon as its epoch completes.
TrainOutcome train_model(const TrainConfig& cfg, Model model, const TrainData& data,
                         std::optional<std::size_t> fold = std::nullopt,
                         std::ostream* log = nullptr);

/// Loads data and embeddings named in `cfg`, trains (k folds when
/// cv_folds > 0), writes the run log and checkpoint(s).
TrainReport train(const TrainConfig& cfg, std::ostream* log = nullptr);

} // namespace dcbilstm
