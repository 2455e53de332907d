#pragma once

// Causal neural n-gram language model.
//
//   history_t = [emb(x_{t-K}), ..., emb(x_{t-1})]   (PAD before the start)
//   hidden_t  = tanh(history_t * W_in + b_in)
//   logits_t  = hidden_t * W_out + b_out
//
// Row t of the logits predicts token t from the K tokens before it. All
// parameters live in one contiguous vector; the typed accessors are Eigen
// maps into it, which keeps optimizers and checkpoints trivial.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fifsl/corpus.hpp"
#include "fifsl/objective.hpp"

namespace fifsl {

struct ModelConfig {
    int vocab_size = 4;
    int context = 16;
    int embed_dim = 32;
    int hidden_dim = 64;
    double init_scale = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t parameter_count() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

using Logits = LogitMatrix<double>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class TinyLMParams {
public:
    using MatrixMap = Eigen::Map<RowMatrix>;
    using ConstMatrixMap = Eigen::Map<const RowMatrix>;
    using VectorMap = Eigen::Map<Eigen::RowVectorXd>;
    using ConstVectorMap = Eigen::Map<const Eigen::RowVectorXd>;

    /// All-zero parameters of the right shape.
    explicit TinyLMParams(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }

    Eigen::VectorXd& values() { return values_; }
    const Eigen::VectorXd& values() const { return values_; }

    MatrixMap embedding();  // [V x d]
    MatrixMap w_in();       // [K*d x h]
    VectorMap b_in();       // [h]
    MatrixMap w_out();      // [h x V]
    VectorMap b_out();      // [V]
    ConstMatrixMap embedding() const;
    ConstMatrixMap w_in() const;
    ConstVectorMap b_in() const;
    ConstMatrixMap w_out() const;
    ConstVectorMap b_out() const;

    friend bool operator==(const TinyLMParams& a, const TinyLMParams& b);

private:
    std::size_t offset_w_in() const;
    std::size_t offset_b_in() const;
    std::size_t offset_w_out() const;
    std::size_t offset_b_out() const;

    ModelConfig config_;
    Eigen::VectorXd values_;
};

/// Uniform in [-init_scale, init_scale], deterministic in config.seed.
TinyLMParams init_params(const ModelConfig& config);

Logits forward(const TinyLMParams& params, std::span<const int> tokens);

/// Gradient of sum_t <dlogits_t, logits_t> with respect to every parameter.
TinyLMParams backward(const TinyLMParams& params, std::span<const int> tokens, const Logits& dlogits);

/// Logits for the token following `history` (only the last K tokens matter).
Eigen::RowVectorXd next_logits(const TinyLMParams& params, std::span<const int> history);

/// Greedy continuation: argmax with ties to the lowest id, stopping after
/// EOS or `max_new` tokens. Returns the generated tokens only.
std::vector<int> greedy_generate(const TinyLMParams& params, std::span<const int> prompt, std::size_t max_new,
                                 int eos_id);

std::vector<TargetView> target_views(std::span<const MaskedSample> samples);

struct BatchGradient {
    ObjectiveOutput<double> objective;
    TinyLMParams grad;
};

/// Objective value over a batch and its gradient with respect to every parameter.
BatchGradient batch_loss_and_grad(const TinyLMParams& params, std::span<const MaskedSample> batch,
                                  ObjectiveKind kind, const FiFSLConfig& cfg);

/// Objective value only.
double batch_loss(const TinyLMParams& params, std::span<const MaskedSample> batch, ObjectiveKind kind,
                  const FiFSLConfig& cfg);

struct GradcheckResult {
    double max_rel_err = 0.0;
    std::size_t coordinates = 0;
    double max_abs_grad = 0.0;
};

/// Central differences against the analytic gradient. Checks every
/// coordinate when there are at most `max_coords`, otherwise a seeded random
/// subset of that size. Relative error uses max(|a|, |n|, 1e-8) as denominator.
GradcheckResult finite_diff_gradcheck(const TinyLMParams& params, std::span<const MaskedSample> batch,
                                      ObjectiveKind kind, const FiFSLConfig& cfg, double step = 1e-5,
                                      std::size_t max_coords = 0, std::uint64_t seed = 0);

void save_checkpoint(const std::filesystem::path& path, const TinyLMParams& params);
TinyLMParams load_checkpoint(const std::filesystem::path& path);

}  // namespace fifsl
