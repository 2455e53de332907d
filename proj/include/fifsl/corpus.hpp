#pragma once

// Instruction/response corpora: JSONL I/O, the synthetic Verilog generator,
// lexeme-level vocabulary and encoding, forget/retain/holdout splits, and the
// per-sample loss masks consumed by training.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "fifsl/verilog_mask.hpp"

namespace fifsl {

struct InstructionPair {
    std::string id;
    std::string instruction;
    std::string response;
};

std::vector<InstructionPair> load_jsonl(const std::filesystem::path& path);
void save_jsonl(const std::filesystem::path& path, std::span<const InstructionPair> pairs);

struct SyntheticOptions {
    int max_width = 16;
    /// Identifiers are pool names with a suffix in [0, name_suffixes).
    int name_suffixes = 100;
    /// Probability of wrapping a response's port list in skip tags.
    double skip_tag_rate = 0.0;
    /// Spell out port names in the instruction. When false only the module
    /// name is given and port names must be recalled from training.
    bool instruction_names = true;
};

/// Counter, mux, adder and register modules with random names and widths.
/// Deterministic in `seed` across platforms.
std::vector<InstructionPair> generate_synthetic_corpus(std::size_t n, std::uint64_t seed,
                                                       const SyntheticOptions& options = {});

class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kSep = 3;
    static constexpr int kNumSpecial = 4;

    Vocabulary();

    int add(std::string_view lexeme);
    std::optional<int> find(std::string_view lexeme) const;
    int at(std::string_view lexeme) const;
    const std::string& lexeme(int id) const;
    int size() const { return static_cast<int>(lexemes_.size()); }
    static bool is_special(int id) { return id >= 0 && id < kNumSpecial; }

    nlohmann::json to_json() const;
    static Vocabulary from_json(const nlohmann::json& j);

private:
    std::vector<std::string> lexemes_;
    std::unordered_map<std::string, int> ids_;
};

/// BOS instruction... SEP response... EOS, one lexeme per token.
struct EncodedSample {
    std::string id;
    std::vector<int> tokens;
    /// Character span of each token in its source text (instruction or
    /// response); empty spans for specials.
    std::vector<Span> spans;
    /// Index of the first response token (the one after SEP).
    std::size_t response_begin = 0;

    std::size_t response_end() const { return tokens.size() - 1; }  // EOS position
    std::span<const int> response_tokens() const;
    std::span<const Span> response_spans() const;
    std::span<const int> prompt() const;  // BOS .. SEP inclusive
};

using LexFn = std::function<std::vector<Lexeme>(std::string_view)>;

struct EncodedCorpus {
    Vocabulary vocab;
    std::vector<EncodedSample> samples;
};

/// Builds the vocabulary over instructions and responses (skip tags,
/// whitespace and comments excluded) and encodes every pair.
EncodedCorpus build_vocab_and_encode(std::span<const InstructionPair> pairs, const LexFn& lexer = lex);

/// Encodes with an existing vocabulary; unknown lexemes are an error.
EncodedSample encode_pair(const InstructionPair& pair, const Vocabulary& vocab, const LexFn& lexer = lex);

std::vector<std::string> decode(std::span<const int> ids, const Vocabulary& vocab);

struct CorpusSplit {
    std::vector<InstructionPair> forget;
    std::vector<InstructionPair> retain;
    std::vector<InstructionPair> holdout;

    nlohmann::json manifest() const;
};

/// Holdout is carved out first (round(holdout_fraction * n) pairs); the
/// forget set is round(fraction * remaining) pairs; the rest is retained.
CorpusSplit split_forget_retain(std::span<const InstructionPair> pairs, double fraction, std::uint64_t seed,
                                double holdout_fraction = 0.1);

/// Rebuilds a split from a manifest written by CorpusSplit::manifest().
CorpusSplit split_from_manifest(std::span<const InstructionPair> pairs, const nlohmann::json& manifest);

/// A training example: token ids, per-position loss mask and labels. Row t
/// of the model's logits predicts token t, so mask[t] gates label tokens[t].
struct MaskedSample {
    std::string id;
    std::vector<int> token_ids;
    std::vector<std::uint8_t> mask;
    std::vector<int> labels;
    std::size_t valid_count = 0;
    std::size_t response_begin = 0;
};

/// Syntax-preserving mask: prompt positions and EOS are 0, response tokens
/// follow keyword and skip-tag masking projected through their source spans.
MaskedSample syntax_masked_sample(const InstructionPair& pair, const EncodedSample& encoded,
                                  const KeywordSet& keywords, bool mask_structural = false,
                                  const LexFn& lexer = lex);

/// Every response token and EOS unmasked: the plain conditional likelihood
/// log p(y | x) used by fine-tuning, GA, SimNPO and the utility metrics.
MaskedSample response_sample(const EncodedSample& encoded);

}  // namespace fifsl
