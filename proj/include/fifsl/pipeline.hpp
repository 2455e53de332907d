#pragma once

// End-to-end orchestration shared by the CLI and the acceptance suite:
// corpus -> split -> encode/mask -> fine-tune -> unlearn -> evaluate.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fifsl/corpus.hpp"
#include "fifsl/eval.hpp"
#include "fifsl/model.hpp"
#include "fifsl/objective.hpp"
#include "fifsl/trainer.hpp"

namespace fifsl {

inline constexpr int kSchemaVersion = 1;

struct RunConfig {
    // corpus
    std::size_t n_pairs = 200;
    std::uint64_t data_seed = 1;
    int max_width = 16;
    int name_suffixes = 1;
    double skip_tag_rate = 0.0;
    bool instruction_names = false;
    double forget_fraction = 0.1;
    double holdout_fraction = 0.1;
    std::uint64_t split_seed = 3;

    // masking
    std::string keywords_path;  // empty: built-in IEEE 1364-2005 list
    bool mask_structural = false;

    ModelConfig model;  // vocab_size is taken from the corpus
    TrainConfig finetune;
    TrainConfig unlearn;
    FiFSLConfig fifsl;
    /// Replace fifsl.l_min by the holdout NLL after the first fine-tuning epoch.
    bool auto_l_min = false;

    double mink_k_percent = 20.0;
    GenerationConfig generation;

    RunConfig();
    nlohmann::json to_json() const;
};

/// One split's samples in every form the stages need.
struct SplitData {
    std::vector<InstructionPair> pairs;
    std::vector<EncodedSample> encoded;
    std::vector<MaskedSample> response;  // all response tokens labelled
    std::vector<MaskedSample> syntax;    // keyword / skip-tag masked (forget only)
};

struct PreparedData {
    Vocabulary vocab;
    CorpusSplit split;
    SplitData forget;
    SplitData retain;
    SplitData holdout;
};

SyntheticOptions synthetic_options(const RunConfig& cfg);

/// The synthetic corpus described by the corpus section of `cfg`.
std::vector<InstructionPair> generate_corpus(const RunConfig& cfg);

KeywordSet load_keywords(const RunConfig& cfg);

PreparedData prepare_data(std::span<const InstructionPair> pairs, const RunConfig& cfg);

/// Same as prepare_data but with a fixed vocabulary and split.
PreparedData prepare_data(std::span<const InstructionPair> pairs, const RunConfig& cfg, Vocabulary vocab,
                          const nlohmann::json& split_manifest);

struct FinetuneOutcome {
    TinyLMParams params;
    std::vector<EpochRecord> epochs;
    std::optional<double> l_min_from_holdout;
};

using EpochCallback = std::function<void(const TinyLMParams&, const EpochRecord&)>;

FinetuneOutcome run_finetune(const PreparedData& data, const RunConfig& cfg, const EpochCallback& on_epoch = {});

/// Forget samples for the configured objective: syntax-masked for FiFSL,
/// full responses for GA and SimNPO.
std::span<const MaskedSample> unlearning_targets(const PreparedData& data, ObjectiveKind kind);

TrainResult run_unlearn(const TinyLMParams& params, const PreparedData& data, const RunConfig& cfg,
                        bool probe_each_epoch = true, const EpochCallback& on_epoch = {});

struct SampleScore {
    std::string id;
    std::string split;
    double nll = 0.0;
    double mink = 0.0;
    std::optional<double> leak;
    std::optional<double> bleu;
    std::optional<double> chrf;
};

struct EvalReport {
    double forget_nll = 0.0;
    double retain_nll = 0.0;
    double holdout_nll = 0.0;
    double mink_auc = 0.5;
    double privleak_rate = 0.0;
    double bleu = 0.0;  // retain-set greedy regenerations, [0, 1]
    double chrf = 0.0;  // same generations, [0, 100]
    std::vector<SampleScore> samples;

    nlohmann::json to_json() const;
    std::string to_csv() const;
};

EvalReport evaluate(const TinyLMParams& params, const PreparedData& data, const RunConfig& cfg);

/// MinK++ AUC of the forget set against the holdout set.
double forget_mink_auc(const TinyLMParams& params, const PreparedData& data, double k_percent);

}  // namespace fifsl
