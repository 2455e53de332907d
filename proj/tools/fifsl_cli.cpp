// fifsl: data generation, masking, fine-tuning, unlearning, evaluation and
// gradient checks from one config file.
//
// Exit status: 0 success, 1 I/O or data error, 2 usage error, 3 check failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fifsl/error.hpp"
#include "fifsl/pipeline.hpp"
#include "fifsl/testbed.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fifsl;

namespace {

constexpr int kExitData = 1;
constexpr int kExitUsage = 2;
constexpr int kExitCheck = 3;

// Run-level settings shared by every subcommand. Each is reachable as a
// flag (--ft-lr) or as a config key (ft_lr).
struct Settings {
    RunConfig cfg;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> model_seed, ft_seed, unlearn_seed, data_seed, split_seed;
    std::string objective = "fifsl";
    std::string optimizer = "adam";
    std::string ft_optimizer = "adam";
    std::string stop = "max_epochs";
    double ft_target_nll = RunConfig().finetune.stop.target_nll.value_or(0.0);
    std::size_t max_new_tokens = 0;
    std::size_t ngram = 4;
};

std::string names(const std::string& key) {
    std::string dashed = key;
    for (auto& c : dashed)
        if (c == '_') c = '-';
    return dashed == key ? "--" + key : "--" + dashed + ",--" + key;
}

void add_settings(CLI::App& app, Settings& s) {
    auto& c = s.cfg;
    auto opt = [&](const std::string& key, auto& target, const std::string& help) {
        return app.add_option(names(key), target, help)->capture_default_str()->group("Run settings");
    };
    auto flag = [&](const std::string& key, bool& target, const std::string& help) {
        return app.add_flag(names(key), target, help)->group("Run settings");
    };
    app.add_option("--seed", s.seed, "Master seed; derives every stage seed unless that seed is set explicitly")
        ->group("Run settings");

    opt("n_pairs", c.n_pairs, "Synthetic corpus size");
    app.add_option(names("data_seed"), s.data_seed, "Synthetic corpus seed")->group("Run settings");
    opt("max_width", c.max_width, "Largest synthetic bus width");
    opt("name_suffixes", c.name_suffixes, "Distinct numeric suffixes per identifier pool name");
    opt("skip_tag_rate", c.skip_tag_rate, "Probability of skip tags around a port list");
    flag("instruction_names", c.instruction_names, "Spell out port names in instructions");
    opt("forget_fraction", c.forget_fraction, "Forget share of the non-holdout pairs");
    opt("holdout_fraction", c.holdout_fraction, "Holdout share of all pairs");
    app.add_option(names("split_seed"), s.split_seed, "Split seed")->group("Run settings");

    opt("keywords", c.keywords_path, "Reserved-word list (default: built-in IEEE 1364-2005)");
    flag("mask_structural", c.mask_structural, "Also mask operators and delimiters");

    opt("context", c.model.context, "Model context K");
    opt("embed_dim", c.model.embed_dim, "Embedding width d");
    opt("hidden_dim", c.model.hidden_dim, "Hidden width h");
    opt("init_scale", c.model.init_scale, "Uniform init half-width");
    app.add_option(names("model_seed"), s.model_seed, "Initialization seed")->group("Run settings");

    opt("ft_optimizer", s.ft_optimizer, "Fine-tuning optimizer")->check(CLI::IsMember({"sgd", "adam"}));
    opt("ft_lr", c.finetune.optimizer.learning_rate, "Fine-tuning learning rate");
    opt("ft_epochs", c.finetune.epochs, "Fine-tuning epoch budget");
    opt("ft_batch_size", c.finetune.batch_size, "Fine-tuning batch size");
    opt("ft_target_nll", s.ft_target_nll, "Stop fine-tuning at this training NLL (0 disables)");
    app.add_option(names("ft_seed"), s.ft_seed, "Fine-tuning shuffle seed")->group("Run settings");

    opt("objective", s.objective, "Unlearning objective")->check(CLI::IsMember({"fifsl", "ga", "simnpo"}));
    opt("optimizer", s.optimizer, "Unlearning optimizer")->check(CLI::IsMember({"sgd", "adam"}));
    opt("lr", c.unlearn.optimizer.learning_rate, "Unlearning learning rate");
    opt("adam_beta1", c.unlearn.optimizer.beta1, "Adam beta1 (both stages)");
    opt("adam_beta2", c.unlearn.optimizer.beta2, "Adam beta2 (both stages)");
    opt("adam_epsilon", c.unlearn.optimizer.epsilon, "Adam epsilon (both stages)");
    opt("epochs", c.unlearn.epochs, "Unlearning epoch budget");
    opt("batch_size", c.unlearn.batch_size, "Unlearning batch size");
    app.add_option(names("unlearn_seed"), s.unlearn_seed, "Unlearning shuffle seed")->group("Run settings");
    opt("stop", s.stop, "Unlearning stop rule")->check(CLI::IsMember({"none", "mink_band", "max_epochs"}));
    opt("mink_lo", c.unlearn.stop.lo, "Lower edge of the MinK++ AUC stop band");
    opt("mink_hi", c.unlearn.stop.hi, "Upper edge of the MinK++ AUC stop band");

    opt("beta", c.fifsl.beta, "FiFSL / SimNPO sharpness");
    opt("gamma", c.fifsl.gamma, "FiFSL / SimNPO margin");
    opt("l_min", c.fifsl.l_min, "FiFSL penalty floor");
    flag("auto_l_min", c.auto_l_min, "Use the holdout NLL after the first fine-tuning epoch as l_min");

    opt("mink_k", c.mink_k_percent, "MinK++ k percent");
    opt("max_new_tokens", s.max_new_tokens, "Generation budget (0: reference length)");
    opt("ngram", s.ngram, "Leak n-gram order");
}

OptimizerKind optimizer_kind(const std::string& s) { return s == "adam" ? OptimizerKind::adam : OptimizerKind::sgd; }

// Folds the string-typed and optional settings into the RunConfig.
RunConfig resolve(const Settings& s) {
    RunConfig c = s.cfg;
    if (s.seed) {
        c.data_seed = *s.seed;
        c.split_seed = *s.seed + 2;
        c.model.seed = *s.seed + 5;
        c.finetune.seed = *s.seed + 10;
        c.unlearn.seed = *s.seed + 12;
    }
    if (s.data_seed) c.data_seed = *s.data_seed;
    if (s.split_seed) c.split_seed = *s.split_seed;
    if (s.model_seed) c.model.seed = *s.model_seed;
    if (s.ft_seed) c.finetune.seed = *s.ft_seed;
    if (s.unlearn_seed) c.unlearn.seed = *s.unlearn_seed;

    c.finetune.optimizer.kind = optimizer_kind(s.ft_optimizer);
    c.finetune.optimizer.beta1 = c.unlearn.optimizer.beta1;
    c.finetune.optimizer.beta2 = c.unlearn.optimizer.beta2;
    c.finetune.optimizer.epsilon = c.unlearn.optimizer.epsilon;
    c.finetune.stop.target_nll = s.ft_target_nll > 0.0 ? std::optional<double>(s.ft_target_nll) : std::nullopt;
    c.unlearn.objective = parse_objective(s.objective);
    c.unlearn.optimizer.kind = optimizer_kind(s.optimizer);
    c.unlearn.stop.kind = s.stop == "mink_band"    ? StopRule::Kind::mink_band
                          : s.stop == "max_epochs" ? StopRule::Kind::max_epochs
                                                   : StopRule::Kind::none;
    c.generation.max_new_tokens = s.max_new_tokens;
    c.generation.ngram_order = s.ngram;
    c.fifsl.validate();
    c.finetune.validate();
    c.unlearn.validate();
    return c;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

void require_file(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw Error("no such file: " + path.string());
}

std::string epoch_name(const char* stage, std::size_t epoch) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "checkpoints/%s-epoch-%03zu.ckpt", stage, epoch);
    return buf;
}

json seeds_json(const RunConfig& c) {
    return {{"data", c.data_seed},
            {"split", c.split_seed},
            {"model", c.model.seed},
            {"finetune", c.finetune.seed},
            {"unlearn", c.unlearn.seed}};
}

json epochs_json(const std::vector<EpochRecord>& epochs) {
    json arr = json::array();
    for (const auto& e : epochs) arr.push_back(e.to_json());
    return arr;
}

// ---------------------------------------------------------------- commands

int cmd_gen_data(const RunConfig& c, const fs::path& out) {
    const auto pairs = generate_corpus(c);
    save_jsonl(out, pairs);
    std::cout << "wrote " << pairs.size() << " pairs to " << out.string() << "\n";
    return 0;
}

int cmd_mask(const RunConfig& c, const fs::path& in, const fs::path& out) {
    require_file(in);
    const auto pairs = load_jsonl(in);
    const auto encoded = build_vocab_and_encode(pairs);
    const KeywordSet keywords = load_keywords(c);
    std::string text;
    std::size_t masked = 0, total = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto s = syntax_masked_sample(pairs[i], encoded.samples[i], keywords, c.mask_structural);
        json rec = {{"id", s.id},
                    {"tokens", decode(s.token_ids, encoded.vocab)},
                    {"token_ids", s.token_ids},
                    {"mask", s.mask},
                    {"labels", s.labels}};
        text += rec.dump() + "\n";
        masked += s.mask.size() - s.valid_count;
        total += s.mask.size();
    }
    write_text(out, text);
    std::cout << "wrote " << pairs.size() << " masked samples to " << out.string() << " (" << masked << "/" << total
              << " positions masked)\n";
    return 0;
}

int cmd_finetune(const RunConfig& c, const std::string& corpus, const fs::path& dir) {
    std::vector<InstructionPair> pairs;
    if (corpus.empty()) {
        pairs = generate_corpus(c);
    } else {
        require_file(corpus);
        pairs = load_jsonl(corpus);
    }
    const PreparedData data = prepare_data(pairs, c);
    fs::create_directories(dir / "checkpoints");
    save_jsonl(dir / "corpus.jsonl", pairs);
    write_json(dir / "vocab.json", data.vocab.to_json());
    write_json(dir / "split.json", data.split.manifest());

    json checkpoints = json::array();
    auto outcome = run_finetune(data, c, [&](const TinyLMParams& p, const EpochRecord& rec) {
        const std::string name = epoch_name("finetune", rec.epoch);
        save_checkpoint(dir / name, p);
        checkpoints.push_back(name);
        std::cerr << "finetune epoch " << rec.epoch << ": train nll " << rec.train_mean_l << "\n";
    });
    save_checkpoint(dir / "finetune.ckpt", outcome.params);
    const EvalReport report = evaluate(outcome.params, data, c);

    json manifest = {{"schema_version", kSchemaVersion},
                     {"stage", "finetune"},
                     {"config", c.to_json()},
                     {"seeds", seeds_json(c)},
                     {"artifacts",
                      {{"corpus", "corpus.jsonl"},
                       {"vocab", "vocab.json"},
                       {"split", "split.json"},
                       {"checkpoints", checkpoints},
                       {"final", "finetune.ckpt"}}},
                     {"epochs", epochs_json(outcome.epochs)},
                     {"eval", report.to_json()}};
    manifest["l_min_from_holdout"] = outcome.l_min_from_holdout ? json(*outcome.l_min_from_holdout) : json(nullptr);
    write_json(dir / "finetune_manifest.json", manifest);
    std::cout << "fine-tuned " << outcome.epochs.size() << " epochs, train nll "
              << (outcome.epochs.empty() ? 0.0 : outcome.epochs.back().train_mean_l) << "; wrote "
              << (dir / "finetune_manifest.json").string() << "\n";
    return 0;
}

// Corpus, vocabulary and split saved by `finetune` in a run directory.
PreparedData load_run(const RunConfig& c, const fs::path& run) {
    for (const char* f : {"corpus.jsonl", "vocab.json", "split.json"}) require_file(run / f);
    const auto pairs = load_jsonl(run / "corpus.jsonl");
    return prepare_data(pairs, c, Vocabulary::from_json(read_json(run / "vocab.json")), read_json(run / "split.json"));
}

int cmd_unlearn(RunConfig c, const fs::path& run, const std::string& checkpoint, const std::string& out_dir) {
    const fs::path start = checkpoint.empty() ? run / "finetune.ckpt" : fs::path(checkpoint);
    require_file(start);
    const fs::path dir = out_dir.empty() ? run : fs::path(out_dir);
    if (c.auto_l_min) {
        require_file(run / "finetune_manifest.json");
        const json ft = read_json(run / "finetune_manifest.json");
        if (ft.at("l_min_from_holdout").is_null())
            throw Error("auto_l_min: " + (run / "finetune_manifest.json").string() + " has no holdout NLL");
        c.fifsl.l_min = ft.at("l_min_from_holdout").get<double>();
    }
    const PreparedData data = load_run(c, run);
    const TinyLMParams params = load_checkpoint(start);
    const EvalReport before = evaluate(params, data, c);
    fs::create_directories(dir / "checkpoints");

    json checkpoints = json::array();
    auto result = run_unlearn(params, data, c, true, [&](const TinyLMParams& p, const EpochRecord& rec) {
        const std::string name = epoch_name("unlearn", rec.epoch);
        save_checkpoint(dir / name, p);
        checkpoints.push_back(name);
        std::cerr << "unlearn epoch " << rec.epoch << ": active " << rec.total_active() << ", updates " << rec.updates
                  << ", forget mean L " << rec.train_mean_l << "\n";
    });
    save_checkpoint(dir / "unlearn.ckpt", result.params);
    const EvalReport after = evaluate(result.params, data, c);

    json manifest = {{"schema_version", kSchemaVersion},
                     {"stage", "unlearn"},
                     {"config", c.to_json()},
                     {"seeds", seeds_json(c)},
                     {"artifacts", {{"start", start.filename().string()}, {"checkpoints", checkpoints}, {"final", "unlearn.ckpt"}}},
                     {"epochs", epochs_json(result.epochs)},
                     {"eval_before", before.to_json()},
                     {"eval", after.to_json()}};
    write_json(dir / "unlearn_manifest.json", manifest);
    std::cout << "unlearned " << result.epochs.size() << " epochs (" << to_string(c.unlearn.objective)
              << "): mink_auc " << before.mink_auc << " -> " << after.mink_auc << ", privleak " << before.privleak_rate
              << " -> " << after.privleak_rate << ", retain nll " << before.retain_nll << " -> " << after.retain_nll
              << "\n";
    return 0;
}

int cmd_eval(const RunConfig& c, const fs::path& run, const std::string& checkpoint, const std::string& out,
             const std::string& csv) {
    fs::path ckpt = checkpoint;
    if (ckpt.empty()) ckpt = fs::exists(run / "unlearn.ckpt") ? run / "unlearn.ckpt" : run / "finetune.ckpt";
    require_file(ckpt);
    const PreparedData data = load_run(c, run);
    const EvalReport report = evaluate(load_checkpoint(ckpt), data, c);
    const std::string text = report.to_json().dump(2) + "\n";
    if (out.empty())
        std::cout << text;
    else
        write_text(out, text);
    if (!csv.empty()) write_text(csv, report.to_csv());
    return 0;
}

int cmd_gradcheck(const RunConfig& c, std::uint64_t seed, std::size_t instances, double step, double threshold,
                  std::size_t coords) {
    const ObjectiveKind kind = c.unlearn.objective;
    double worst = 0.0;
    for (std::size_t i = 0; i < instances; ++i) {
        const auto inst = random_gradcheck_instance(seed + i, kind);
        const auto r = finite_diff_gradcheck(inst.params, inst.batch, kind, inst.fifsl, step, coords, seed + i);
        worst = std::max(worst, r.max_rel_err);
    }
    std::cout << "max_rel_err=" << worst << "\n";
    return worst <= threshold ? 0 : kExitCheck;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Syntax-preserving unlearning toolkit for Verilog language models"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);
    app.fallthrough();
    app.set_config("--config", "", "INI config file (flags override file values)");
    app.set_version_flag("--version", "fifsl 1.0");

    Settings settings;
    add_settings(app, settings);

    std::string out, in, corpus, out_dir, run_dir, checkpoint, csv;
    std::size_t instances = 1, coords = 0;
    double step = 1e-5, threshold = 1e-4;

    auto* gen = app.add_subcommand("gen-data", "Write a synthetic instruction/response corpus as JSONL");
    gen->add_option("--out", out, "Output JSONL path")->required();

    auto* mask = app.add_subcommand("mask", "Write syntax-preserving masks for a JSONL corpus");
    mask->add_option("--in", in, "Input JSONL corpus")->required();
    mask->add_option("--out", out, "Output JSONL path")->required();

    auto* ft = app.add_subcommand("finetune", "Fine-tune the model on retain and forget sets");
    ft->add_option("--corpus", corpus, "Input JSONL corpus (default: generate from settings)");
    ft->add_option("--out-dir,--out_dir", out_dir, "Run directory")->required();

    auto* un = app.add_subcommand("unlearn", "Unlearn the forget set from a fine-tuned run");
    un->add_option("--run-dir,--run_dir", run_dir, "Run directory written by finetune")->required();
    un->add_option("--checkpoint", checkpoint, "Starting checkpoint (default: <run-dir>/finetune.ckpt)");
    un->add_option("--out-dir,--out_dir", out_dir, "Output directory (default: the run directory)");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint and emit a JSON report");
    ev->add_option("--run-dir,--run_dir", run_dir, "Run directory written by finetune")->required();
    ev->add_option("--checkpoint", checkpoint, "Checkpoint (default: unlearn.ckpt, else finetune.ckpt)");
    ev->add_option("--out", out, "Report path (default: stdout)");
    ev->add_option("--csv", csv, "Per-sample score table path");

    auto* gc = app.add_subcommand("gradcheck", "Check analytic gradients against central differences");
    gc->add_option("--instances", instances, "Random instances to check")->capture_default_str();
    gc->add_option("--step", step, "Finite-difference step")->capture_default_str();
    gc->add_option("--threshold", threshold, "Largest accepted relative error")->capture_default_str();
    gc->add_option("--coords", coords, "Random coordinates per instance (0: all)")->capture_default_str();

    auto* show = app.add_subcommand("show-config", "Print the resolved run configuration as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::FileError& e) {
        std::cerr << e.what() << "\n";
        return kExitData;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    RunConfig c;
    try {
        c = resolve(settings);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*show) {
            json j = c.to_json();
            j["schema_version"] = kSchemaVersion;
            j["seeds"] = seeds_json(c);
            std::cout << j.dump(2) << "\n";
            return 0;
        }
        if (*gen) return cmd_gen_data(c, out);
        if (*mask) return cmd_mask(c, in, out);
        if (*ft) return cmd_finetune(c, corpus, out_dir);
        if (*un) return cmd_unlearn(c, run_dir, checkpoint, out_dir);
        if (*ev) return cmd_eval(c, run_dir, checkpoint, out, csv);
        if (*gc) return cmd_gradcheck(c, settings.seed.value_or(0), instances, step, threshold, coords);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
