#include <doctest.h>

#include <cmath>
#include <random>

#include "fifsl/error.hpp"
#include "fifsl/eval.hpp"
#include "fifsl/pipeline.hpp"

using namespace fifsl;

namespace {

std::vector<std::string> words(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ' ') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

MaskedSample sample_of(std::vector<int> ids) {
    MaskedSample s;
    s.id = "t";
    s.token_ids = std::move(ids);
    s.mask.assign(s.token_ids.size(), 1);
    s.mask[0] = 0;
    s.labels = apply_ignore_labels(s.token_ids, s.mask);
    s.valid_count = s.token_ids.size() - 1;
    return s;
}

TinyLMParams uniform_model(int vocab) {
    ModelConfig c;
    c.vocab_size = vocab;
    c.context = 2;
    c.embed_dim = 2;
    c.hidden_dim = 2;
    return TinyLMParams(c);
}

}  // namespace

TEST_CASE("token NLL") {
    const auto p = uniform_model(7);
    const std::vector<MaskedSample> s = {sample_of({1, 4, 5, 2})};
    CHECK(token_nll(p, s) == doctest::Approx(std::log(7.0)).epsilon(1e-14));
    const std::vector<MaskedSample> twice = {s[0], s[0]};
    CHECK(token_nll(p, twice) == token_nll(p, s));
    CHECK_THROWS_AS(token_nll(p, std::vector<MaskedSample>{}), Error);
}

TEST_CASE("MinK++ score") {
    const auto p = uniform_model(7);
    const auto s = sample_of({1, 4, 5, 2, 6});
    CHECK(mink_score(p, s, 20.0) == 0.0);
    CHECK_THROWS_AS(mink_score(p, s, 0.0), Error);
    CHECK_THROWS_AS(mink_score(p, s, 101.0), Error);

    ModelConfig c;
    c.vocab_size = 7;
    c.context = 2;
    c.embed_dim = 3;
    c.hidden_dim = 4;
    c.init_scale = 1.0;
    c.seed = 3;
    const auto q = init_params(c);
    const double all = mink_score(q, s, 100.0);
    // k = 100 is the plain mean of the per-token z-scores
    const Logits l = forward(q, s.token_ids);
    double sum = 0.0;
    for (Eigen::Index t = 1; t < l.rows(); ++t) {
        const Eigen::ArrayXd lp = l.row(t).array().transpose() - std::log(l.row(t).array().exp().sum());
        const double mu = lp.mean(), sd = std::sqrt((lp - mu).square().mean());
        sum += (lp(s.labels[static_cast<std::size_t>(t)]) - mu) / sd;
    }
    CHECK(all == doctest::Approx(sum / 4.0).epsilon(1e-12));
    CHECK(mink_score(q, s, 20.0) <= all);
}

TEST_CASE("MinK++ AUC") {
    const std::vector<double> a = {1, 3}, b = {2};
    CHECK(mink_auc(a, b) == 0.5);
    const std::vector<double> same = {0.1, 0.2, 0.3};
    CHECK(mink_auc(same, same) == 0.5);
    const std::vector<double> hi = {5, 6}, lo = {1, 2, 3};
    CHECK(mink_auc(hi, lo) == 1.0);
    CHECK(mink_auc(lo, hi) == 0.0);
    CHECK_THROWS_AS(mink_auc(std::vector<double>{}, lo), Error);

    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x(7), y(5);
        for (auto& v : x) v = n(rng);
        for (auto& v : y) v = n(rng) + 0.3;
        CHECK(mink_auc(x, y) + mink_auc(y, x) == doctest::Approx(1.0).epsilon(1e-15));
        double brute = 0.0;
        for (double u : x)
            for (double v : y) brute += u > v ? 1.0 : (u == v ? 0.5 : 0.0);
        CHECK(mink_auc(x, y) == doctest::Approx(brute / 35.0).epsilon(1e-15));
    }
}

TEST_CASE("n-gram leak") {
    const std::vector<int> ref = {1, 2, 3, 4, 5, 6, 7};  // 4 distinct 4-grams
    CHECK(ngram_leak(ref, ref) == 1.0);
    CHECK(ngram_leak(std::vector<int>{9, 9, 9, 9, 9}, ref) == 0.0);
    CHECK(ngram_leak(std::vector<int>{1, 2, 3, 4, 5, 9, 9}, ref) == 0.5);  // holds 1234 and 2345
    CHECK(ngram_leak(std::vector<int>{1, 2}, std::vector<int>{1, 2}) == 1.0);
    CHECK(ngram_leak(std::vector<int>{1, 3}, std::vector<int>{1, 2}) == 0.0);
    CHECK_THROWS_AS(ngram_leak(ref, ref, 0), Error);

    // appending reference n-grams never lowers the score
    std::vector<int> gen = {9, 1, 2, 3};
    double prev = ngram_leak(gen, ref);
    for (int t : {4, 5, 6, 7}) {
        gen.push_back(t);
        const double cur = ngram_leak(gen, ref);
        CHECK(cur >= prev);
        prev = cur;
    }
}

TEST_CASE("BLEU-4") {
    CHECK(bleu4(words("a b c d e"), words("a b c d e")) == doctest::Approx(1.0));
    CHECK(bleu4(words("a b c d"), words("a b c d e")) == doctest::Approx(std::exp(1.0 - 5.0 / 4.0)).epsilon(1e-12));
    CHECK(bleu4(words("a b c d"), words("a b c d e")) == doctest::Approx(0.7788).epsilon(1e-4));
    CHECK(bleu4(words("x y z"), words("a b c")) == 0.0);
    CHECK(bleu4({}, words("a")) == 0.0);
}

TEST_CASE("chrF") {
    CHECK(chrf("abc", "abc") == doctest::Approx(100.0));
    CHECK(chrf("abc", "xyz") == 0.0);
    // hand table: n=1 P=R=2/3, n=2 P=R=1/2, n=3 P=R=0 -> P=R=7/18 -> F=38.888...
    CHECK(chrf("abc", "abd") == doctest::Approx(700.0 / 18.0).epsilon(1e-12));
    // sacrebleu 2.x CHRF(word_order=0)
    CHECK(chrf("assign y = a & b;", "assign y = a | b;") == doctest::Approx(71.63239538239537).epsilon(1e-12));
    CHECK(chrf("module m(input clk);", "module mm (input clock);") ==
          doctest::Approx(64.43180326406919).epsilon(1e-12));
}

TEST_CASE("metrics are maximal on identical inputs over a synthetic corpus") {
    for (const auto& p : generate_synthetic_corpus(20, 9)) {
        std::vector<std::string> lexemes;
        for (const auto& lx : lex(p.response))
            if (is_modeled(lx.kind)) lexemes.push_back(lx.text);
        CHECK(bleu4(lexemes, lexemes) == doctest::Approx(1.0));
        CHECK(chrf(p.response, p.response) == doctest::Approx(100.0));
    }
}

TEST_CASE("evaluate: ranges and determinism") {
    RunConfig cfg;
    cfg.n_pairs = 20;
    cfg.forget_fraction = 0.2;
    cfg.holdout_fraction = 0.2;
    cfg.model.context = 4;
    cfg.model.embed_dim = 4;
    cfg.model.hidden_dim = 8;
    cfg.model.init_scale = 0.3;
    const auto data = prepare_data(generate_corpus(cfg), cfg);
    ModelConfig mc = cfg.model;
    mc.vocab_size = data.vocab.size();
    const auto p = init_params(mc);
    const auto a = evaluate(p, data, cfg);
    const auto b = evaluate(p, data, cfg);
    CHECK(a.to_json() == b.to_json());
    CHECK(a.to_csv() == b.to_csv());
    CHECK(a.mink_auc >= 0.0);
    CHECK(a.mink_auc <= 1.0);
    CHECK(a.privleak_rate >= 0.0);
    CHECK(a.privleak_rate <= 1.0);
    CHECK(a.bleu >= 0.0);
    CHECK(a.bleu <= 1.0);
    CHECK(a.chrf >= 0.0);
    CHECK(a.chrf <= 100.0);
    CHECK(std::isfinite(a.retain_nll));
    CHECK(a.samples.size() == 20);
    CHECK(a.to_json().at("schema_version") == 1);
    CHECK(privleak_rate(p, data.forget.encoded) == doctest::Approx(a.privleak_rate).epsilon(1e-15));
}
