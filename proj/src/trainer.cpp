#include "fifsl/trainer.hpp"

#include <cmath>
#include <string>

#include "fifsl/error.hpp"
#include "fifsl/eval.hpp"
#include "fifsl/random.hpp"

namespace fifsl {

void TrainConfig::validate() const {
    if (!(optimizer.learning_rate >= 0.0) || !std::isfinite(optimizer.learning_rate))
        throw Error("learning rate must be finite and >= 0");
    if (batch_size < 1) throw Error("batch_size must be >= 1");
}

std::size_t EpochRecord::total_active() const {
    std::size_t n = 0;
    for (auto a : n_act) n += a;
    return n;
}

nlohmann::json EpochRecord::to_json() const {
    nlohmann::json j = {{"epoch", epoch},         {"mean_batch_loss", mean_batch_loss},
                        {"n_act", n_act},         {"total_active", total_active()},
                        {"updates", updates},     {"train_mean_l", train_mean_l}};
    j["retain_nll"] = retain_nll ? nlohmann::json(*retain_nll) : nlohmann::json(nullptr);
    j["mink_auc"] = mink_auc ? nlohmann::json(*mink_auc) : nlohmann::json(nullptr);
    return j;
}

double mean_normalized_loss(const TinyLMParams& params, std::span<const MaskedSample> samples) {
    if (samples.empty()) throw Error("mean_normalized_loss: no samples");
    double total = 0.0;
    for (const auto& s : samples) {
        const auto ce = syntax_ce<double>(forward(params, s.token_ids), TargetView{s.labels, s.mask});
        total += ce.sum_nll / static_cast<double>(s.valid_count);
    }
    return total / static_cast<double>(samples.size());
}

namespace {

template <typename OnBatch>
void run_epoch(std::span<const MaskedSample> data, const TrainConfig& config, std::size_t epoch, OnBatch&& on_batch) {
    const auto order = epoch_permutation(data.size(), config.seed, epoch);
    std::vector<MaskedSample> batch;
    for (std::size_t start = 0, b = 0; start < order.size(); start += config.batch_size, ++b) {
        batch.clear();
        for (std::size_t k = start; k < std::min(order.size(), start + config.batch_size); ++k)
            batch.push_back(data[order[k]]);
        on_batch(std::span<const MaskedSample>(batch), b);
    }
}

[[noreturn]] void diverged(std::size_t epoch, std::size_t batch) {
    throw Error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch));
}

void apply_probe(EpochRecord& rec, const TinyLMParams& params, const EpochProbe& probe) {
    if (probe.retain_nll) rec.retain_nll = probe.retain_nll(params);
    if (probe.mink_auc) rec.mink_auc = probe.mink_auc(params);
}

}  // namespace

TrainResult finetune(const TinyLMParams& params, std::span<const MaskedSample> corpus, const TrainConfig& config,
                     const EpochProbe& probe) {
    config.validate();
    if (config.objective != ObjectiveKind::standard_ce) throw Error("finetune requires the standard_ce objective");
    if (corpus.empty()) throw Error("finetune: empty corpus");
    TrainResult res{params, {}};
    OptimizerState state;
    const FiFSLConfig unused;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        double loss_sum = 0.0;
        std::size_t batches = 0;
        run_epoch(corpus, config, epoch, [&](std::span<const MaskedSample> batch, std::size_t b) {
            BatchGradient g = batch_loss_and_grad(res.params, batch, ObjectiveKind::standard_ce, unused);
            if (!std::isfinite(g.objective.batch_loss) || !g.grad.values().allFinite()) diverged(epoch, b);
            optimizer_step(res.params, g.grad, state, config.optimizer);
            if (!res.params.values().allFinite()) diverged(epoch, b);
            rec.n_act.push_back(g.objective.n_act);
            ++rec.updates;
            loss_sum += g.objective.batch_loss;
            ++batches;
        });
        rec.mean_batch_loss = loss_sum / static_cast<double>(batches);
        rec.train_mean_l = token_nll(res.params, corpus);
        if (!std::isfinite(rec.train_mean_l)) diverged(epoch, batches);
        apply_probe(rec, res.params, probe);
        res.epochs.push_back(rec);
        if (probe.on_epoch) probe.on_epoch(res.params, rec);
        if (config.stop.target_nll && rec.train_mean_l <= *config.stop.target_nll) break;
    }
    return res;
}

TrainResult unlearn_run(const TinyLMParams& params, std::span<const MaskedSample> forget, const FiFSLConfig& fifsl,
                        const TrainConfig& config, const EpochProbe& probe) {
    config.validate();
    fifsl.validate();
    if (config.objective == ObjectiveKind::standard_ce) throw Error("unlearn_run needs an unlearning objective");
    if (forget.empty()) throw Error("unlearn_run: empty forget set");
    for (const auto& s : forget)
        if (s.valid_count == 0) throw Error("forget sample " + s.id + " has no valid tokens");
    TrainResult res{params, {}};
    OptimizerState state;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        double loss_sum = 0.0;
        std::size_t batches = 0;
        run_epoch(forget, config, epoch, [&](std::span<const MaskedSample> batch, std::size_t b) {
            BatchGradient g = batch_loss_and_grad(res.params, batch, config.objective, fifsl);
            if (!std::isfinite(g.objective.batch_loss) || !g.grad.values().allFinite()) diverged(epoch, b);
            rec.n_act.push_back(g.objective.n_act);
            loss_sum += g.objective.batch_loss;
            ++batches;
            if (g.objective.n_act == 0) return;
            optimizer_step(res.params, g.grad, state, config.optimizer);
            if (!res.params.values().allFinite()) diverged(epoch, b);
            ++rec.updates;
        });
        rec.mean_batch_loss = loss_sum / static_cast<double>(batches);
        rec.train_mean_l = mean_normalized_loss(res.params, forget);
        if (!std::isfinite(rec.train_mean_l)) diverged(epoch, batches);
        apply_probe(rec, res.params, probe);
        res.epochs.push_back(rec);
        if (probe.on_epoch) probe.on_epoch(res.params, rec);
        if (config.stop.kind == StopRule::Kind::mink_band && rec.mink_auc && *rec.mink_auc >= config.stop.lo &&
            *rec.mink_auc <= config.stop.hi)
            break;
    }
    return res;
}

}  // namespace fifsl
