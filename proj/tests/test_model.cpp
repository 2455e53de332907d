#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fifsl/error.hpp"
#include "fifsl/model.hpp"
#include "fifsl/testbed.hpp"

using namespace fifsl;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.vocab_size = 10;
    c.embed_dim = 4;
    c.context = 3;
    c.hidden_dim = 8;
    c.init_scale = 0.5;
    c.seed = 42;
    return c;
}

MaskedSample sample_of(std::vector<int> ids) {
    MaskedSample s;
    s.id = "t";
    s.token_ids = std::move(ids);
    s.mask.assign(s.token_ids.size(), 1);
    s.labels = s.token_ids;
    s.valid_count = s.token_ids.size();
    return s;
}

}  // namespace

TEST_CASE("parameter count and initialization") {
    const auto c = small_config();
    CHECK(c.parameter_count() == 234);
    const auto a = init_params(c), b = init_params(c);
    CHECK(a == b);
    CHECK(a.values().size() == 234);
    CHECK(a.values().cwiseAbs().maxCoeff() <= 0.5);
    auto c2 = c;
    c2.seed = 43;
    CHECK_FALSE(init_params(c2) == a);

    c2.init_scale = 0.0;
    const auto zero = init_params(c2);
    CHECK(zero.values().isZero(0.0));
    const Logits l = forward(zero, std::vector<int>{1, 2, 3});
    CHECK((l.array() == 0.0).all());

    ModelConfig bad = c;
    bad.context = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("forward: shapes, causality, determinism, range errors") {
    const auto p = init_params(small_config());
    const std::vector<int> x = {1, 4, 5, 6, 7, 2};
    const Logits a = forward(p, x);
    CHECK(a.rows() == 6);
    CHECK(a.cols() == 10);
    CHECK(forward(p, x) == a);

    for (std::size_t t = 0; t + 1 < x.size(); ++t) {
        auto y = x;
        for (std::size_t u = t + 1; u < y.size(); ++u) y[u] = 9;
        const Logits b = forward(p, y);
        // row t predicts token t from tokens before it, so rows 0..t+1 only see the unchanged prefix
        CHECK(b.topRows(static_cast<Eigen::Index>(t + 2)) == a.topRows(static_cast<Eigen::Index>(t + 2)));
    }
    CHECK_THROWS_AS(forward(p, std::vector<int>{1, 10}), Error);
    CHECK_THROWS_AS(forward(p, std::vector<int>{-1}), Error);
}

TEST_CASE("backward: zero upstream gives zero gradient") {
    const auto p = init_params(small_config());
    const std::vector<int> x = {1, 4, 5};
    const auto g = backward(p, x, Logits::Zero(3, 10));
    CHECK(g.values().isZero(0.0));
    CHECK_THROWS_AS(backward(p, x, Logits::Zero(2, 10)), Error);
}

TEST_CASE("backward: a repeated token accumulates both positions") {
    const auto p = init_params(small_config());
    const std::vector<int> x = {4, 5, 4, 6};
    Logits d = Logits::Zero(4, 10);
    d(3, 2) = 1.0;  // only row 3 sees the history (4, 5, 4)
    const auto full = backward(p, x, d);
    // Perturb the embedding of token 4 numerically.
    const double h = 1e-6;
    for (Eigen::Index j = 0; j < 4; ++j) {
        auto up = p, down = p;
        up.embedding()(4, j) += h;
        down.embedding()(4, j) -= h;
        const double fd = (forward(up, x)(3, 2) - forward(down, x)(3, 2)) / (2 * h);
        CHECK(full.embedding()(4, j) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("finite-difference gradient check on random instances") {
    for (auto kind : {ObjectiveKind::fifsl, ObjectiveKind::ga, ObjectiveKind::simnpo, ObjectiveKind::standard_ce}) {
        CAPTURE(to_string(kind));
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const auto inst = random_gradcheck_instance(seed, kind);
            const auto r = finite_diff_gradcheck(inst.params, inst.batch, kind, inst.fifsl);
            CHECK(r.coordinates == inst.params.values().size());
            CHECK(r.max_rel_err <= 1e-4);
            CHECK(r.max_abs_grad > 0.0);
        }
    }
}

TEST_CASE("fully gated batch: analytic and numeric gradients are zero") {
    auto inst = random_gradcheck_instance(3, ObjectiveKind::fifsl);
    inst.fifsl.l_min = 1e6;
    const auto g = batch_loss_and_grad(inst.params, inst.batch, ObjectiveKind::fifsl, inst.fifsl);
    CHECK(g.objective.n_act == 0);
    CHECK(g.grad.values().isZero(0.0));
    const auto r = finite_diff_gradcheck(inst.params, inst.batch, ObjectiveKind::fifsl, inst.fifsl);
    CHECK(r.max_rel_err == 0.0);
    CHECK(r.max_abs_grad == 0.0);
}

TEST_CASE("gradcheck subsampling and step validation") {
    const auto inst = random_gradcheck_instance(1, ObjectiveKind::ga);
    const auto r = finite_diff_gradcheck(inst.params, inst.batch, ObjectiveKind::ga, inst.fifsl, 1e-5, 20, 9);
    CHECK(r.coordinates == 20);
    CHECK_THROWS_AS(finite_diff_gradcheck(inst.params, inst.batch, ObjectiveKind::ga, inst.fifsl, 0.0), Error);
}

TEST_CASE("greedy generation") {
    ModelConfig c = small_config();
    c.init_scale = 0.0;
    auto p = init_params(c);
    p.b_out()(5) = 3.0;
    CHECK(greedy_generate(p, std::vector<int>{1}, 4, 2) == std::vector<int>{5, 5, 5, 5});
    p.b_out()(2) = 4.0;
    CHECK(greedy_generate(p, std::vector<int>{1}, 4, 2) == std::vector<int>{2});

    auto tie = init_params(c);
    CHECK(greedy_generate(tie, std::vector<int>{1}, 2, 9) == std::vector<int>{0, 0});

    const auto q = init_params(small_config());
    CHECK(greedy_generate(q, std::vector<int>{1, 3}, 6, 2) == greedy_generate(q, std::vector<int>{1, 3}, 6, 2));
}

TEST_CASE("batch_loss agrees with batch_loss_and_grad") {
    const auto inst = random_gradcheck_instance(5, ObjectiveKind::simnpo);
    const auto g = batch_loss_and_grad(inst.params, inst.batch, ObjectiveKind::simnpo, inst.fifsl);
    CHECK(batch_loss(inst.params, inst.batch, ObjectiveKind::simnpo, inst.fifsl) == g.objective.batch_loss);
}

TEST_CASE("masked-position logits do not affect FiFSL loss or gradient") {
    const auto inst = random_gradcheck_instance(8, ObjectiveKind::fifsl);
    const auto views = target_views(inst.batch);
    std::vector<Logits> logits;
    for (const auto& s : inst.batch) logits.push_back(forward(inst.params, s.token_ids));
    const auto base = fifsl_objective<double>(logits, views, inst.fifsl);
    auto perturbed = logits;
    for (std::size_t i = 0; i < perturbed.size(); ++i)
        for (Eigen::Index t = 0; t < perturbed[i].rows(); ++t)
            if (!inst.batch[i].mask[static_cast<std::size_t>(t)]) perturbed[i].row(t).array() += 10.0;
    const auto after = fifsl_objective<double>(perturbed, views, inst.fifsl);
    CHECK(after.batch_loss == base.batch_loss);
    for (std::size_t i = 0; i < base.dlogits.size(); ++i) CHECK(after.dlogits[i] == base.dlogits[i]);
}

TEST_CASE("checkpoint round trip is bitwise") {
    const auto p = init_params(small_config());
    const auto path = std::filesystem::temp_directory_path() / "fifsl_test.ckpt";
    save_checkpoint(path, p);
    const auto q = load_checkpoint(path);
    CHECK(q == p);
    CHECK(q.config() == p.config());

    std::ofstream(path, std::ios::binary) << "garbage";
    CHECK_THROWS_AS(load_checkpoint(path), Error);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/x.ckpt"), Error);
    std::filesystem::remove(path);
}

TEST_CASE("target views reject inconsistent samples") {
    auto s = sample_of({1, 2, 3});
    s.mask.pop_back();
    const std::vector<MaskedSample> batch = {s};
    const auto p = init_params(small_config());
    CHECK_THROWS_AS(batch_loss(p, batch, ObjectiveKind::ga, FiFSLConfig{}), Error);
}
