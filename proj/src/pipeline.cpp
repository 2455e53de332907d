#include "fifsl/pipeline.hpp"

#include <cmath>
#include <sstream>

#include "fifsl/error.hpp"

namespace fifsl {

using nlohmann::json;

RunConfig::RunConfig() {
    model.context = 32;

    finetune.objective = ObjectiveKind::standard_ce;
    finetune.optimizer = {OptimizerKind::adam, 3e-3};
    finetune.epochs = 40;
    finetune.batch_size = 1;
    finetune.seed = 11;
    finetune.stop.target_nll = 0.05;

    unlearn.objective = ObjectiveKind::fifsl;
    unlearn.optimizer = {OptimizerKind::adam, 1e-2};
    unlearn.epochs = 1;
    unlearn.batch_size = 4;
    unlearn.seed = 13;
    unlearn.stop.kind = StopRule::Kind::max_epochs;
}

namespace {

json train_json(const TrainConfig& t) {
    const char* stop = t.stop.kind == StopRule::Kind::mink_band   ? "mink_band"
                       : t.stop.kind == StopRule::Kind::max_epochs ? "max_epochs"
                                                                   : "none";
    json j = {{"objective", to_string(t.objective)},
              {"optimizer", t.optimizer.kind == OptimizerKind::adam ? "adam" : "sgd"},
              {"learning_rate", t.optimizer.learning_rate},
              {"adam_beta1", t.optimizer.beta1},
              {"adam_beta2", t.optimizer.beta2},
              {"adam_epsilon", t.optimizer.epsilon},
              {"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"seed", t.seed},
              {"stop_rule", stop},
              {"mink_band", {t.stop.lo, t.stop.hi}}};
    j["target_nll"] = t.stop.target_nll ? json(*t.stop.target_nll) : json(nullptr);
    return j;
}

}  // namespace

json RunConfig::to_json() const {
    return {{"corpus",
             {{"n_pairs", n_pairs},
              {"data_seed", data_seed},
              {"max_width", max_width},
              {"name_suffixes", name_suffixes},
              {"skip_tag_rate", skip_tag_rate},
              {"instruction_names", instruction_names},
              {"forget_fraction", forget_fraction},
              {"holdout_fraction", holdout_fraction},
              {"split_seed", split_seed}}},
            {"mask", {{"keywords", keywords_path.empty() ? "builtin:ieee1364" : keywords_path},
                      {"mask_structural", mask_structural}}},
            {"model",
             {{"vocab_size", model.vocab_size},
              {"context", model.context},
              {"embed_dim", model.embed_dim},
              {"hidden_dim", model.hidden_dim},
              {"init_scale", model.init_scale},
              {"seed", model.seed}}},
            {"finetune", train_json(finetune)},
            {"unlearn", train_json(unlearn)},
            {"fifsl", {{"beta", fifsl.beta}, {"gamma", fifsl.gamma}, {"l_min", fifsl.l_min}, {"auto_l_min", auto_l_min}}},
            {"eval",
             {{"mink_k_percent", mink_k_percent},
              {"max_new_tokens", generation.max_new_tokens},
              {"ngram_order", generation.ngram_order}}}};
}

SyntheticOptions synthetic_options(const RunConfig& cfg) {
    SyntheticOptions o;
    o.max_width = cfg.max_width;
    o.name_suffixes = cfg.name_suffixes;
    o.skip_tag_rate = cfg.skip_tag_rate;
    o.instruction_names = cfg.instruction_names;
    return o;
}

std::vector<InstructionPair> generate_corpus(const RunConfig& cfg) {
    return generate_synthetic_corpus(cfg.n_pairs, cfg.data_seed, synthetic_options(cfg));
}

KeywordSet load_keywords(const RunConfig& cfg) {
    return cfg.keywords_path.empty() ? KeywordSet::ieee1364() : KeywordSet::from_file(cfg.keywords_path);
}

namespace {

SplitData make_split(std::vector<InstructionPair> pairs, const Vocabulary& vocab, const KeywordSet* keywords,
                     bool mask_structural) {
    SplitData d;
    d.pairs = std::move(pairs);
    for (const auto& p : d.pairs) {
        d.encoded.push_back(encode_pair(p, vocab));
        d.response.push_back(response_sample(d.encoded.back()));
        if (keywords) d.syntax.push_back(syntax_masked_sample(p, d.encoded.back(), *keywords, mask_structural));
    }
    return d;
}

PreparedData assemble(Vocabulary vocab, CorpusSplit split, const RunConfig& cfg) {
    const KeywordSet keywords = load_keywords(cfg);
    PreparedData data{std::move(vocab), std::move(split), {}, {}, {}};
    data.forget = make_split(data.split.forget, data.vocab, &keywords, cfg.mask_structural);
    data.retain = make_split(data.split.retain, data.vocab, nullptr, false);
    data.holdout = make_split(data.split.holdout, data.vocab, nullptr, false);
    return data;
}

}  // namespace

PreparedData prepare_data(std::span<const InstructionPair> pairs, const RunConfig& cfg) {
    auto encoded = build_vocab_and_encode(pairs);
    auto split = split_forget_retain(pairs, cfg.forget_fraction, cfg.split_seed, cfg.holdout_fraction);
    return assemble(std::move(encoded.vocab), std::move(split), cfg);
}

PreparedData prepare_data(std::span<const InstructionPair> pairs, const RunConfig& cfg, Vocabulary vocab,
                          const json& split_manifest) {
    return assemble(std::move(vocab), split_from_manifest(pairs, split_manifest), cfg);
}

FinetuneOutcome run_finetune(const PreparedData& data, const RunConfig& cfg, const EpochCallback& on_epoch) {
    ModelConfig mc = cfg.model;
    mc.vocab_size = data.vocab.size();
    std::vector<MaskedSample> train = data.retain.response;
    train.insert(train.end(), data.forget.response.begin(), data.forget.response.end());

    FinetuneOutcome out{init_params(mc), {}, std::nullopt};
    EpochProbe probe;
    probe.on_epoch = on_epoch;
    if (cfg.auto_l_min && !data.holdout.response.empty()) {
        probe.retain_nll = [&](const TinyLMParams& p) { return token_nll(p, data.holdout.response); };
    }
    auto res = finetune(out.params, train, cfg.finetune, probe);
    out.params = std::move(res.params);
    out.epochs = std::move(res.epochs);
    if (cfg.auto_l_min && !out.epochs.empty() && out.epochs.front().retain_nll)
        out.l_min_from_holdout = *out.epochs.front().retain_nll;
    return out;
}

std::span<const MaskedSample> unlearning_targets(const PreparedData& data, ObjectiveKind kind) {
    return kind == ObjectiveKind::fifsl ? std::span<const MaskedSample>(data.forget.syntax)
                                        : std::span<const MaskedSample>(data.forget.response);
}

double forget_mink_auc(const TinyLMParams& params, const PreparedData& data, double k_percent) {
    std::vector<double> members, nonmembers;
    for (const auto& s : data.forget.response) members.push_back(mink_score(params, s, k_percent));
    for (const auto& s : data.holdout.response) nonmembers.push_back(mink_score(params, s, k_percent));
    return mink_auc(members, nonmembers);
}

TrainResult run_unlearn(const TinyLMParams& params, const PreparedData& data, const RunConfig& cfg,
                        bool probe_each_epoch, const EpochCallback& on_epoch) {
    EpochProbe probe;
    probe.on_epoch = on_epoch;
    if (probe_each_epoch) {
        probe.retain_nll = [&](const TinyLMParams& p) { return token_nll(p, data.retain.response); };
        if (!data.holdout.response.empty())
            probe.mink_auc = [&](const TinyLMParams& p) { return forget_mink_auc(p, data, cfg.mink_k_percent); };
    }
    return unlearn_run(params, unlearning_targets(data, cfg.unlearn.objective), cfg.fifsl, cfg.unlearn, probe);
}

// ---------------------------------------------------------------- evaluation

json EvalReport::to_json() const {
    json rows = json::array();
    for (const auto& s : samples) {
        json r = {{"id", s.id}, {"split", s.split}, {"nll", s.nll}, {"mink", s.mink}};
        r["leak"] = s.leak ? json(*s.leak) : json(nullptr);
        r["bleu"] = s.bleu ? json(*s.bleu) : json(nullptr);
        r["chrf"] = s.chrf ? json(*s.chrf) : json(nullptr);
        rows.push_back(std::move(r));
    }
    return {{"schema_version", kSchemaVersion},
            {"mean_nll", {{"forget", forget_nll}, {"retain", retain_nll}, {"holdout", holdout_nll}}},
            {"mink_auc", mink_auc},
            {"privleak_rate", privleak_rate},
            {"bleu", bleu},
            {"chrf", chrf},
            {"samples", rows}};
}

std::string EvalReport::to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "id,split,nll,mink,leak,bleu,chrf\n";
    auto opt = [&](const std::optional<double>& v) {
        if (v) out << *v;
    };
    for (const auto& s : samples) {
        out << s.id << ',' << s.split << ',' << s.nll << ',' << s.mink << ',';
        opt(s.leak);
        out << ',';
        opt(s.bleu);
        out << ',';
        opt(s.chrf);
        out << '\n';
    }
    return out.str();
}

EvalReport evaluate(const TinyLMParams& params, const PreparedData& data, const RunConfig& cfg) {
    EvalReport rep;
    auto score_split = [&](const SplitData& d, const char* name, bool leak, bool utility) {
        std::vector<double> minks;
        for (std::size_t i = 0; i < d.response.size(); ++i) {
            SampleScore s;
            s.id = d.response[i].id;
            s.split = name;
            s.nll = token_nll(params, std::span<const MaskedSample>(&d.response[i], 1));
            s.mink = mink_score(params, d.response[i], cfg.mink_k_percent);
            if (leak || utility) {
                const auto gen = generate_response(params, d.encoded[i], cfg.generation);
                const auto ref = d.encoded[i].response_tokens();
                if (leak) s.leak = ngram_leak(gen, ref, cfg.generation.ngram_order);
                if (utility) {
                    const auto cand_lex = decode(gen, data.vocab);
                    const auto ref_lex = decode(ref, data.vocab);
                    s.bleu = bleu4(cand_lex, ref_lex);
                    std::string cand_text, ref_text;
                    for (const auto& l : cand_lex) cand_text += l;
                    for (const auto& l : ref_lex) ref_text += l;
                    s.chrf = chrf(cand_text, ref_text);
                }
            }
            minks.push_back(s.mink);
            rep.samples.push_back(std::move(s));
        }
        return minks;
    };
    const auto forget_minks = score_split(data.forget, "forget", true, false);
    const auto retain_start = rep.samples.size();
    score_split(data.retain, "retain", false, true);
    const auto holdout_minks = score_split(data.holdout, "holdout", false, false);

    rep.forget_nll = token_nll(params, data.forget.response);
    rep.retain_nll = token_nll(params, data.retain.response);
    rep.holdout_nll = data.holdout.response.empty() ? 0.0 : token_nll(params, data.holdout.response);
    rep.mink_auc = holdout_minks.empty() ? 0.5 : mink_auc(forget_minks, holdout_minks);

    double leak = 0.0, bleu = 0.0, chrf_sum = 0.0;
    for (std::size_t i = 0; i < retain_start; ++i) leak += *rep.samples[i].leak;
    rep.privleak_rate = leak / static_cast<double>(retain_start);
    const std::size_t n_retain = data.retain.response.size();
    for (std::size_t i = retain_start; i < retain_start + n_retain; ++i) {
        bleu += *rep.samples[i].bleu;
        chrf_sum += *rep.samples[i].chrf;
    }
    rep.bleu = bleu / static_cast<double>(n_retain);
    rep.chrf = chrf_sum / static_cast<double>(n_retain);
    return rep;
}

}  // namespace fifsl
