#pragma once

// Forget-quality and utility metrics.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fifsl/corpus.hpp"
#include "fifsl/model.hpp"

namespace fifsl {

/// Mean -log p(label) over every unmasked position of every sample,
/// token-weighted. Throws on an empty set.
double token_nll(const TinyLMParams& params, std::span<const MaskedSample> samples);

/// Calibrated min-k% membership score: each unmasked position's gold
/// log-probability is standardised against the model's log-probabilities
/// over the whole vocabulary at that position, and the lowest
/// ceil(k% * T) standardised values are averaged.
double mink_score(const TinyLMParams& params, const MaskedSample& sample, double k_percent = 20.0,
                  double sigma_floor = 1e-6);

/// P(member score > non-member score), ties counted half (Mann-Whitney U).
double mink_auc(std::span<const double> member_scores, std::span<const double> nonmember_scores);

/// Fraction of the reference's n-grams (with multiplicity, clipped by the
/// candidate's counts) that the candidate reproduces. References shorter than
/// n fall back to an exact sequence match.
double ngram_leak(std::span<const int> candidate, std::span<const int> reference, std::size_t n = 4);

struct GenerationConfig {
    /// 0 means "as many tokens as the reference response".
    std::size_t max_new_tokens = 0;
    std::size_t ngram_order = 4;
};

/// Greedy continuation of the instruction prompt, without the trailing EOS.
std::vector<int> generate_response(const TinyLMParams& params, const EncodedSample& sample,
                                   const GenerationConfig& gen = {});

/// Mean ngram_leak of greedy regenerations against the reference responses.
double privleak_rate(const TinyLMParams& params, std::span<const EncodedSample> forget,
                     const GenerationConfig& gen = {});

/// Sentence BLEU-4 with add-one smoothing on orders 2-4 and the brevity penalty.
double bleu4(std::span<const std::string> candidate, std::span<const std::string> reference);

/// chrF: character 1..6-gram precision and recall averaged over orders,
/// combined as F-beta with beta = 2; whitespace is ignored. Range [0, 100].
double chrf(std::string_view candidate, std::string_view reference, int max_order = 6, double beta = 2.0);

}  // namespace fifsl
