#pragma once

// Fine-tuning (memorisation) and the unlearning loop.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "fifsl/model.hpp"
#include "fifsl/objective.hpp"

namespace fifsl {

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::sgd;
    double learning_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct OptimizerState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    std::uint64_t step = 0;
};

/// sgd: theta - lr * g. adam: bias-corrected first/second moments.
void optimizer_step(TinyLMParams& params, const TinyLMParams& grad, OptimizerState& state,
                    const OptimizerConfig& config);

struct StopRule {
    enum class Kind { none, mink_band, max_epochs } kind = Kind::none;
    double lo = 0.45;
    double hi = 0.55;
    /// Fine-tuning only: stop once the training NLL falls to this value.
    std::optional<double> target_nll;
};

struct TrainConfig {
    ObjectiveKind objective = ObjectiveKind::fifsl;
    OptimizerConfig optimizer;
    std::size_t epochs = 1;
    std::size_t batch_size = 4;
    std::uint64_t seed = 0;
    StopRule stop;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double mean_batch_loss = 0.0;
    std::vector<std::size_t> n_act;  // per batch
    std::size_t updates = 0;
    /// Fine-tuning: mean token NLL over the training set. Unlearning: mean L_i
    /// of the forget set under its loss mask, after the epoch.
    double train_mean_l = 0.0;
    std::optional<double> retain_nll;
    std::optional<double> mink_auc;

    std::size_t total_active() const;
    nlohmann::json to_json() const;
};

/// Evaluated at the end of every epoch on the updated parameters.
struct EpochProbe {
    std::function<double(const TinyLMParams&)> retain_nll;
    std::function<double(const TinyLMParams&)> mink_auc;
    /// Called once per finished epoch, after the other probes.
    std::function<void(const TinyLMParams&, const EpochRecord&)> on_epoch;
};

struct TrainResult {
    TinyLMParams params;
    std::vector<EpochRecord> epochs;
};

/// Standard cross-entropy fine-tuning (config.objective must be standard_ce).
TrainResult finetune(const TinyLMParams& params, std::span<const MaskedSample> corpus, const TrainConfig& config,
                     const EpochProbe& probe = {});

/// Unlearning over the forget set. Each batch: masked loss, penalty, gating,
/// active-sample mean and one optimizer step; a batch with no active sample
/// leaves the parameters untouched. Honors StopRule::mink_band when a
/// mink_auc probe is supplied.
TrainResult unlearn_run(const TinyLMParams& params, std::span<const MaskedSample> forget, const FiFSLConfig& fifsl,
                        const TrainConfig& config, const EpochProbe& probe = {});

/// Mean L_i of the samples under their own masks.
double mean_normalized_loss(const TinyLMParams& params, std::span<const MaskedSample> samples);

}  // namespace fifsl
