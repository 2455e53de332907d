#include "fifsl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "fifsl/error.hpp"

namespace fifsl {

double token_nll(const TinyLMParams& params, std::span<const MaskedSample> samples) {
    if (samples.empty()) throw Error("token_nll: empty sample set");
    double nll = 0.0;
    std::size_t count = 0;
    for (const auto& s : samples) {
        nll += syntax_ce<double>(forward(params, s.token_ids), TargetView{s.labels, s.mask}).sum_nll;
        count += s.valid_count;
    }
    if (count == 0) throw Error("token_nll: no labelled tokens");
    return nll / static_cast<double>(count);
}

double mink_score(const TinyLMParams& params, const MaskedSample& sample, double k_percent, double sigma_floor) {
    if (!(k_percent > 0.0 && k_percent <= 100.0)) throw Error("mink_score: k must lie in (0, 100]");
    const Logits logits = forward(params, sample.token_ids);
    std::vector<double> scores;
    for (Eigen::Index t = 0; t < logits.rows(); ++t) {
        if (!sample.mask[static_cast<std::size_t>(t)]) continue;
        const auto row = logits.row(t);
        const double shift = row.maxCoeff();
        const double log_z = std::log((row.array() - shift).exp().sum()) + shift;
        const Eigen::ArrayXd logp = row.array().transpose() - log_z;
        const double mu = logp.mean();
        const double sigma = std::sqrt((logp - mu).square().mean());
        const double gold = logp(sample.labels[static_cast<std::size_t>(t)]);
        scores.push_back((gold - mu) / std::max(sigma, sigma_floor));
    }
    if (scores.empty()) throw Error("mink_score: sample " + sample.id + " has no scored tokens");
    const auto k = static_cast<std::size_t>(
        std::clamp<double>(std::ceil(k_percent / 100.0 * static_cast<double>(scores.size()) - 1e-9), 1.0,
                           static_cast<double>(scores.size())));
    std::partial_sort(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(k), scores.end());
    return std::accumulate(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(k), 0.0) /
           static_cast<double>(k);
}

double mink_auc(std::span<const double> member_scores, std::span<const double> nonmember_scores) {
    if (member_scores.empty() || nonmember_scores.empty()) throw Error("mink_auc: empty score set");
    // Mid-ranks over the pooled scores; U = R_members - n1(n1+1)/2.
    struct Item {
        double score;
        bool member;
    };
    std::vector<Item> pooled;
    for (double s : member_scores) pooled.push_back({s, true});
    for (double s : nonmember_scores) pooled.push_back({s, false});
    std::sort(pooled.begin(), pooled.end(), [](const Item& a, const Item& b) { return a.score < b.score; });
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < pooled.size();) {
        std::size_t j = i;
        while (j < pooled.size() && pooled[j].score == pooled[i].score) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (std::size_t k = i; k < j; ++k)
            if (pooled[k].member) rank_sum += mid;
        i = j;
    }
    const auto n1 = static_cast<double>(member_scores.size());
    const auto n0 = static_cast<double>(nonmember_scores.size());
    return (rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0);
}

namespace {

template <typename T>
std::map<std::vector<T>, std::size_t> ngram_counts(std::span<const T> seq, std::size_t n) {
    std::map<std::vector<T>, std::size_t> counts;
    if (seq.size() < n) return counts;
    for (std::size_t i = 0; i + n <= seq.size(); ++i) ++counts[std::vector<T>(seq.begin() + i, seq.begin() + i + n)];
    return counts;
}

template <typename T>
std::pair<std::size_t, std::size_t> clipped_matches(std::span<const T> cand, std::span<const T> ref, std::size_t n) {
    const auto c = ngram_counts(cand, n);
    const auto r = ngram_counts(ref, n);
    std::size_t matched = 0, total_cand = 0;
    for (const auto& [g, k] : c) {
        total_cand += k;
        if (auto it = r.find(g); it != r.end()) matched += std::min(k, it->second);
    }
    return {matched, total_cand};
}

}  // namespace

double ngram_leak(std::span<const int> candidate, std::span<const int> reference, std::size_t n) {
    if (n == 0) throw Error("ngram_leak: order must be >= 1");
    if (reference.size() < n) return std::equal(candidate.begin(), candidate.end(), reference.begin(), reference.end());
    const auto [matched, total_ref] = clipped_matches(reference, candidate, n);
    return static_cast<double>(matched) / static_cast<double>(total_ref);
}

std::vector<int> generate_response(const TinyLMParams& params, const EncodedSample& sample,
                                   const GenerationConfig& gen) {
    const std::size_t budget = gen.max_new_tokens ? gen.max_new_tokens : sample.response_tokens().size();
    auto out = greedy_generate(params, sample.prompt(), budget, Vocabulary::kEos);
    if (!out.empty() && out.back() == Vocabulary::kEos) out.pop_back();
    return out;
}

double privleak_rate(const TinyLMParams& params, std::span<const EncodedSample> forget, const GenerationConfig& gen) {
    if (forget.empty()) throw Error("privleak_rate: empty forget set");
    double total = 0.0;
    for (const auto& s : forget) total += ngram_leak(generate_response(params, s, gen), s.response_tokens(), gen.ngram_order);
    return total / static_cast<double>(forget.size());
}

double bleu4(std::span<const std::string> candidate, std::span<const std::string> reference) {
    if (candidate.empty() || reference.empty()) return 0.0;
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        const auto [matched, total] = clipped_matches(candidate, reference, n);
        const double smooth = n == 1 ? 0.0 : 1.0;
        const double num = static_cast<double>(matched) + smooth;
        const double den = static_cast<double>(total) + smooth;
        if (num == 0.0) return 0.0;
        log_sum += std::log(num / den);
    }
    const auto c = static_cast<double>(candidate.size());
    const auto r = static_cast<double>(reference.size());
    const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
    return bp * std::exp(log_sum / 4.0);
}

double chrf(std::string_view candidate, std::string_view reference, int max_order, double beta) {
    auto strip = [](std::string_view s) {
        std::string out;
        for (char c : s)
            if (!(c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v')) out.push_back(c);
        return out;
    };
    const std::string cand = strip(candidate), ref = strip(reference);
    double prec = 0.0, rec = 0.0;
    int orders = 0;
    for (int n = 1; n <= max_order; ++n) {
        const auto order = static_cast<std::size_t>(n);
        if (cand.size() < order || ref.size() < order) break;
        const auto [matched, total_cand] =
            clipped_matches(std::span<const char>(cand), std::span<const char>(ref), order);
        const double total_ref = static_cast<double>(ref.size() - order + 1);
        prec += static_cast<double>(matched) / static_cast<double>(total_cand);
        rec += static_cast<double>(matched) / total_ref;
        ++orders;
    }
    if (orders == 0) return 0.0;
    prec /= orders;
    rec /= orders;
    if (prec + rec == 0.0) return 0.0;
    const double b2 = beta * beta;
    return 100.0 * (1.0 + b2) * prec * rec / (b2 * prec + rec);
}

}  // namespace fifsl
