#include <doctest.h>

#include <cmath>
#include <limits>

#include "fifsl/error.hpp"
#include "fifsl/pipeline.hpp"
#include "fifsl/random.hpp"
#include "fifsl/testbed.hpp"

using namespace fifsl;

namespace {

TinyLMParams scalar_params(double v) {
    ModelConfig c;
    c.vocab_size = 4;
    c.context = 1;
    c.embed_dim = 1;
    c.hidden_dim = 1;
    TinyLMParams p(c);
    p.values().setConstant(v);
    return p;
}

// Small corpus and model shared by the training tests.
struct Desk {
    RunConfig cfg;
    PreparedData data;
    TinyLMParams init;

    Desk() : data(make()), init(TinyLMParams(ModelConfig{})) {
        ModelConfig mc = cfg.model;
        mc.vocab_size = data.vocab.size();
        init = init_params(mc);
    }

    PreparedData make() {
        cfg.n_pairs = 24;
        cfg.forget_fraction = 0.25;
        cfg.holdout_fraction = 0.2;
        cfg.model.context = 8;
        cfg.model.embed_dim = 8;
        cfg.model.hidden_dim = 16;
        cfg.finetune.epochs = 3;
        cfg.finetune.batch_size = 4;
        return prepare_data(generate_corpus(cfg), cfg);
    }
};

}  // namespace

TEST_CASE("sgd step") {
    auto p = scalar_params(1.0);
    auto g = scalar_params(2.0);
    OptimizerState st;
    optimizer_step(p, g, st, OptimizerConfig{OptimizerKind::sgd, 0.1});
    CHECK((p.values().array() == 0.8).all());

    auto q = scalar_params(1.0);
    optimizer_step(q, scalar_params(0.0), st, OptimizerConfig{OptimizerKind::sgd, 0.1});
    CHECK((q.values().array() == 1.0).all());
}

TEST_CASE("adam first step has magnitude lr regardless of gradient scale") {
    for (double c : {1e-4, 1.0, 250.0}) {
        auto p = scalar_params(0.0);
        OptimizerState st;
        optimizer_step(p, scalar_params(c), st, OptimizerConfig{OptimizerKind::adam, 1e-3});
        // m_hat = c, v_hat = c^2  =>  step = lr * c / (|c| + eps)
        CHECK(p.values()(0) == doctest::Approx(-1e-3 * c / (c + 1e-8)).epsilon(1e-12));
    }
}

TEST_CASE("adam matches the textbook recurrence over several steps") {
    auto p = scalar_params(0.5);
    OptimizerState st;
    const OptimizerConfig cfg{OptimizerKind::adam, 1e-2};
    double theta = 0.5, m = 0.0, v = 0.0;
    const double grads[] = {0.3, -0.1, 0.7, 0.2};
    for (int t = 1; t <= 4; ++t) {
        const double g = grads[t - 1];
        optimizer_step(p, scalar_params(g), st, cfg);
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
        theta -= 1e-2 * mh / (std::sqrt(vh) + 1e-8);
        CHECK(p.values()(0) == doctest::Approx(theta).epsilon(1e-13));
    }
}

TEST_CASE("epoch permutation is deterministic and a permutation") {
    const auto a = epoch_permutation(50, 7, 2);
    CHECK(a == epoch_permutation(50, 7, 2));
    CHECK(a != epoch_permutation(50, 7, 3));
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
}

TEST_CASE("finetune: zero learning rate leaves parameters unchanged") {
    Desk d;
    auto cfg = d.cfg.finetune;
    cfg.epochs = 1;
    cfg.optimizer = {OptimizerKind::sgd, 0.0};
    const auto res = finetune(d.init, d.data.retain.response, cfg);
    CHECK(res.params == d.init);
    REQUIRE(res.epochs.size() == 1);
}

TEST_CASE("finetune: objective check, determinism, loss decreases") {
    Desk d;
    auto bad = d.cfg.finetune;
    bad.objective = ObjectiveKind::ga;
    CHECK_THROWS_AS(finetune(d.init, d.data.retain.response, bad), Error);

    const auto a = finetune(d.init, d.data.retain.response, d.cfg.finetune);
    const auto b = finetune(d.init, d.data.retain.response, d.cfg.finetune);
    CHECK(a.params == b.params);
    REQUIRE(a.epochs.size() == b.epochs.size());
    for (std::size_t e = 0; e < a.epochs.size(); ++e) CHECK(a.epochs[e].to_json() == b.epochs[e].to_json());
    CHECK(a.epochs.back().train_mean_l < token_nll(d.init, d.data.retain.response));
}

TEST_CASE("finetune stops at the target NLL") {
    Desk d;
    auto cfg = d.cfg.finetune;
    cfg.epochs = 10;
    cfg.stop.target_nll = 1e6;
    CHECK(finetune(d.init, d.data.retain.response, cfg).epochs.size() == 1);
}

TEST_CASE("finetune reports divergence with epoch and batch") {
    Desk d;
    auto broken = d.init;
    broken.values()(3) = std::nan("");
    try {
        finetune(broken, d.data.retain.response, d.cfg.finetune);
        FAIL("expected divergence");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("non-finite loss at epoch 0, batch") != std::string::npos);
    }
}

TEST_CASE("non-finite learning rate is rejected") {
    TrainConfig cfg;
    cfg.optimizer.learning_rate = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.optimizer.learning_rate = 1e-3;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("unlearn_run: fully gated forget set performs no update") {
    Desk d;
    FiFSLConfig f;
    f.l_min = 1e6;
    auto cfg = d.cfg.unlearn;
    cfg.epochs = 2;
    const auto res = unlearn_run(d.init, d.data.forget.syntax, f, cfg);
    CHECK(res.params == d.init);
    for (const auto& e : res.epochs) {
        CHECK(e.updates == 0);
        CHECK(e.total_active() == 0);
    }
}

TEST_CASE("unlearn_run: records, bounds and determinism") {
    Desk d;
    auto cfg = d.cfg.unlearn;
    cfg.epochs = 2;
    const auto a = unlearn_run(d.init, d.data.forget.syntax, d.cfg.fifsl, cfg);
    const auto b = unlearn_run(d.init, d.data.forget.syntax, d.cfg.fifsl, cfg);
    CHECK(a.params == b.params);
    for (const auto& e : a.epochs) {
        CHECK(e.n_act.size() == (d.data.forget.syntax.size() + cfg.batch_size - 1) / cfg.batch_size);
        for (auto n : e.n_act) CHECK(n <= cfg.batch_size);
    }
    auto ce = cfg;
    ce.objective = ObjectiveKind::standard_ce;
    CHECK_THROWS_AS(unlearn_run(d.init, d.data.forget.syntax, d.cfg.fifsl, ce), Error);
    std::vector<MaskedSample> empty_sample = {d.data.forget.syntax[0]};
    empty_sample[0].valid_count = 0;
    CHECK_THROWS_AS(unlearn_run(d.init, empty_sample, d.cfg.fifsl, cfg), Error);
}

TEST_CASE("unlearn_run: mink band stop rule ends the run early") {
    Desk d;
    auto cfg = d.cfg.unlearn;
    cfg.epochs = 5;
    cfg.stop = {StopRule::Kind::mink_band, 0.0, 1.0, std::nullopt};
    EpochProbe probe;
    probe.mink_auc = [](const TinyLMParams&) { return 0.5; };
    CHECK(unlearn_run(d.init, d.data.forget.response, d.cfg.fifsl, cfg, probe).epochs.size() == 1);
}

TEST_CASE("unlearning leaves the loss at masked positions untouched by the objective") {
    // A masked position has a zero gradient row, so perturbing it cannot change the update.
    const auto inst = random_gradcheck_instance(21, ObjectiveKind::fifsl);
    const auto g = batch_loss_and_grad(inst.params, inst.batch, ObjectiveKind::fifsl, inst.fifsl);
    for (std::size_t i = 0; i < inst.batch.size(); ++i)
        for (std::size_t t = 0; t < inst.batch[i].mask.size(); ++t)
            if (!inst.batch[i].mask[t])
                CHECK((g.objective.dlogits[i].row(static_cast<Eigen::Index>(t)).array() == 0.0).all());
}

TEST_CASE("epoch callback sees every epoch") {
    Desk d;
    auto cfg = d.cfg.finetune;
    std::size_t calls = 0;
    EpochProbe probe;
    probe.on_epoch = [&](const TinyLMParams&, const EpochRecord& r) { CHECK(r.epoch == calls++); };
    finetune(d.init, d.data.retain.response, cfg, probe);
    CHECK(calls == cfg.epochs);
}
