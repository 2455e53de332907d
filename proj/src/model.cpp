#include "fifsl/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <bit>
#include <cstring>
#include <fstream>
#include <random>
#include <string>

#include "fifsl/corpus.hpp"
#include "fifsl/error.hpp"
#include "fifsl/random.hpp"

namespace fifsl {

void ModelConfig::validate() const {
    if (vocab_size < Vocabulary::kNumSpecial) throw Error("vocab_size must be >= 4");
    if (context < 1) throw Error("context must be >= 1");
    if (embed_dim < 1 || hidden_dim < 1) throw Error("embed_dim and hidden_dim must be >= 1");
    if (!(init_scale >= 0.0)) throw Error("init_scale must be >= 0");
}

std::size_t ModelConfig::parameter_count() const {
    const auto v = static_cast<std::size_t>(vocab_size), k = static_cast<std::size_t>(context),
               d = static_cast<std::size_t>(embed_dim), h = static_cast<std::size_t>(hidden_dim);
    return v * d + k * d * h + h + h * v + v;
}

TinyLMParams::TinyLMParams(const ModelConfig& config) : config_(config) {
    config_.validate();
    values_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(config_.parameter_count()));
}

std::size_t TinyLMParams::offset_w_in() const {
    return static_cast<std::size_t>(config_.vocab_size) * static_cast<std::size_t>(config_.embed_dim);
}
std::size_t TinyLMParams::offset_b_in() const {
    return offset_w_in() + static_cast<std::size_t>(config_.context * config_.embed_dim) *
                               static_cast<std::size_t>(config_.hidden_dim);
}
std::size_t TinyLMParams::offset_w_out() const { return offset_b_in() + static_cast<std::size_t>(config_.hidden_dim); }
std::size_t TinyLMParams::offset_b_out() const {
    return offset_w_out() + static_cast<std::size_t>(config_.hidden_dim) * static_cast<std::size_t>(config_.vocab_size);
}

TinyLMParams::MatrixMap TinyLMParams::embedding() { return {values_.data(), config_.vocab_size, config_.embed_dim}; }
TinyLMParams::MatrixMap TinyLMParams::w_in() {
    return {values_.data() + offset_w_in(), config_.context * config_.embed_dim, config_.hidden_dim};
}
TinyLMParams::VectorMap TinyLMParams::b_in() { return {values_.data() + offset_b_in(), config_.hidden_dim}; }
TinyLMParams::MatrixMap TinyLMParams::w_out() {
    return {values_.data() + offset_w_out(), config_.hidden_dim, config_.vocab_size};
}
TinyLMParams::VectorMap TinyLMParams::b_out() { return {values_.data() + offset_b_out(), config_.vocab_size}; }

TinyLMParams::ConstMatrixMap TinyLMParams::embedding() const {
    return {values_.data(), config_.vocab_size, config_.embed_dim};
}
TinyLMParams::ConstMatrixMap TinyLMParams::w_in() const {
    return {values_.data() + offset_w_in(), config_.context * config_.embed_dim, config_.hidden_dim};
}
TinyLMParams::ConstVectorMap TinyLMParams::b_in() const { return {values_.data() + offset_b_in(), config_.hidden_dim}; }
TinyLMParams::ConstMatrixMap TinyLMParams::w_out() const {
    return {values_.data() + offset_w_out(), config_.hidden_dim, config_.vocab_size};
}
TinyLMParams::ConstVectorMap TinyLMParams::b_out() const {
    return {values_.data() + offset_b_out(), config_.vocab_size};
}

bool operator==(const TinyLMParams& a, const TinyLMParams& b) {
    return a.config_ == b.config_ && a.values_.size() == b.values_.size() &&
           std::memcmp(a.values_.data(), b.values_.data(),
                       static_cast<std::size_t>(a.values_.size()) * sizeof(double)) == 0;
}

TinyLMParams init_params(const ModelConfig& config) {
    TinyLMParams p(config);
    std::mt19937_64 rng(config.seed);
    for (double& v : p.values()) v = config.init_scale * (2.0 * uniform_unit(rng) - 1.0);
    return p;
}

namespace {

void check_tokens(const TinyLMParams& params, std::span<const int> tokens) {
    const int v = params.config().vocab_size;
    for (std::size_t t = 0; t < tokens.size(); ++t)
        if (tokens[t] < 0 || tokens[t] >= v)
            throw Error("token id " + std::to_string(tokens[t]) + " at position " + std::to_string(t) +
                        " outside vocabulary of " + std::to_string(v));
}

// Token feeding history slot j of position t, PAD before the sequence start.
inline int history_token(std::span<const int> tokens, std::ptrdiff_t t, int slot, int context) {
    const std::ptrdiff_t src = t - context + slot;
    return src < 0 ? Vocabulary::kPad : tokens[static_cast<std::size_t>(src)];
}

// [T x K*d] concatenated history embeddings.
RowMatrix gather_history(const TinyLMParams& params, std::span<const int> tokens) {
    const auto& cfg = params.config();
    const auto emb = params.embedding();
    RowMatrix x(static_cast<Eigen::Index>(tokens.size()), cfg.context * cfg.embed_dim);
    for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(tokens.size()); ++t)
        for (int j = 0; j < cfg.context; ++j)
            x.row(t).segment(j * cfg.embed_dim, cfg.embed_dim) = emb.row(history_token(tokens, t, j, cfg.context));
    return x;
}

}  // namespace

Logits forward(const TinyLMParams& params, std::span<const int> tokens) {
    check_tokens(params, tokens);
    const RowMatrix x = gather_history(params, tokens);
    RowMatrix hidden = x * params.w_in();
    hidden.rowwise() += params.b_in();
    hidden = hidden.array().tanh().matrix();
    Logits logits = hidden * params.w_out();
    logits.rowwise() += params.b_out();
    return logits;
}

TinyLMParams backward(const TinyLMParams& params, std::span<const int> tokens, const Logits& dlogits) {
    const auto& cfg = params.config();
    if (dlogits.rows() != static_cast<Eigen::Index>(tokens.size()) || dlogits.cols() != cfg.vocab_size)
        throw Error("backward: dlogits is " + std::to_string(dlogits.rows()) + "x" + std::to_string(dlogits.cols()) +
                    ", expected " + std::to_string(tokens.size()) + "x" + std::to_string(cfg.vocab_size));
    check_tokens(params, tokens);
    TinyLMParams grad(cfg);
    if (tokens.empty()) return grad;

    const RowMatrix x = gather_history(params, tokens);
    RowMatrix hidden = x * params.w_in();
    hidden.rowwise() += params.b_in();
    hidden = hidden.array().tanh().matrix();

    grad.w_out().noalias() = hidden.transpose() * dlogits;
    grad.b_out() = dlogits.colwise().sum();
    RowMatrix dpre = dlogits * params.w_out().transpose();
    dpre.array() *= 1.0 - hidden.array().square();
    grad.w_in().noalias() = x.transpose() * dpre;
    grad.b_in() = dpre.colwise().sum();
    const RowMatrix dx = dpre * params.w_in().transpose();

    auto demb = grad.embedding();
    for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(tokens.size()); ++t)
        for (int j = 0; j < cfg.context; ++j)
            demb.row(history_token(tokens, t, j, cfg.context)) += dx.row(t).segment(j * cfg.embed_dim, cfg.embed_dim);
    return grad;
}

Eigen::RowVectorXd next_logits(const TinyLMParams& params, std::span<const int> history) {
    check_tokens(params, history);
    const auto& cfg = params.config();
    const auto emb = params.embedding();
    Eigen::RowVectorXd x(cfg.context * cfg.embed_dim);
    const auto t = static_cast<std::ptrdiff_t>(history.size());
    for (int j = 0; j < cfg.context; ++j)
        x.segment(j * cfg.embed_dim, cfg.embed_dim) = emb.row(history_token(history, t, j, cfg.context));
    const Eigen::RowVectorXd hidden = ((x * params.w_in()) + params.b_in()).array().tanh().matrix();
    return hidden * params.w_out() + params.b_out();
}

std::vector<int> greedy_generate(const TinyLMParams& params, std::span<const int> prompt, std::size_t max_new,
                                 int eos_id) {
    if (prompt.empty()) throw Error("greedy_generate: empty prompt");
    std::vector<int> seq(prompt.begin(), prompt.end());
    std::vector<int> out;
    while (out.size() < max_new) {
        const Eigen::RowVectorXd logits = next_logits(params, seq);
        Eigen::Index best = 0;
        for (Eigen::Index v = 1; v < logits.size(); ++v)
            if (logits(v) > logits(best)) best = v;
        const int id = static_cast<int>(best);
        out.push_back(id);
        seq.push_back(id);
        if (id == eos_id) break;
    }
    return out;
}

// ---------------------------------------------------------------- checkpoints
//
// Little-endian container:
//   magic "FIFSLCK\0", u32 version, i32 V, K, d, h, f64 init_scale,
//   u64 seed, u64 n, f64[n] values

namespace {

constexpr std::array<char, 8> kMagic = {'F', 'I', 'F', 'S', 'L', 'C', 'K', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw Error("truncated checkpoint");
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TinyLMParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    const auto& c = params.config();
    out.write(kMagic.data(), kMagic.size());
    put(out, kCheckpointVersion);
    put<std::int32_t>(out, c.vocab_size);
    put<std::int32_t>(out, c.context);
    put<std::int32_t>(out, c.embed_dim);
    put<std::int32_t>(out, c.hidden_dim);
    put(out, c.init_scale);
    put<std::uint64_t>(out, c.seed);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(params.values().size()));
    out.write(reinterpret_cast<const char*>(params.values().data()),
              static_cast<std::streamsize>(params.values().size() * static_cast<Eigen::Index>(sizeof(double))));
    if (!out) throw Error("failed writing checkpoint " + path.string());
}

TinyLMParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint " + path.string());
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw Error(path.string() + " is not a checkpoint");
    if (get<std::uint32_t>(in) != kCheckpointVersion) throw Error("unsupported checkpoint version in " + path.string());
    ModelConfig c;
    c.vocab_size = get<std::int32_t>(in);
    c.context = get<std::int32_t>(in);
    c.embed_dim = get<std::int32_t>(in);
    c.hidden_dim = get<std::int32_t>(in);
    c.init_scale = get<double>(in);
    c.seed = get<std::uint64_t>(in);
    TinyLMParams p(c);
    if (get<std::uint64_t>(in) != static_cast<std::uint64_t>(p.values().size()))
        throw Error("checkpoint parameter count does not match its config");
    in.read(reinterpret_cast<char*>(p.values().data()),
            static_cast<std::streamsize>(p.values().size() * static_cast<Eigen::Index>(sizeof(double))));
    if (!in) throw Error("truncated checkpoint " + path.string());
    return p;
}

}  // namespace fifsl

// ---------------------------------------------------------------- batch objective

namespace fifsl {

std::vector<TargetView> target_views(std::span<const MaskedSample> samples) {
    std::vector<TargetView> views;
    views.reserve(samples.size());
    for (const auto& s : samples) views.push_back({s.labels, s.mask});
    return views;
}

namespace {

std::vector<Logits> batch_logits(const TinyLMParams& params, std::span<const MaskedSample> batch) {
    std::vector<Logits> logits;
    logits.reserve(batch.size());
    for (const auto& s : batch) logits.push_back(forward(params, s.token_ids));
    return logits;
}

}  // namespace

BatchGradient batch_loss_and_grad(const TinyLMParams& params, std::span<const MaskedSample> batch,
                                  ObjectiveKind kind, const FiFSLConfig& cfg) {
    const auto logits = batch_logits(params, batch);
    const auto targets = target_views(batch);
    BatchGradient out{evaluate_objective<double>(kind, logits, targets, cfg), TinyLMParams(params.config())};
    for (std::size_t i = 0; i < batch.size(); ++i) {
        // Gated samples carry an all-zero gradient block; skip the work.
        if (!out.objective.dlogits[i].any()) continue;
        out.grad.values() += backward(params, batch[i].token_ids, out.objective.dlogits[i]).values();
    }
    return out;
}

double batch_loss(const TinyLMParams& params, std::span<const MaskedSample> batch, ObjectiveKind kind,
                  const FiFSLConfig& cfg) {
    const auto logits = batch_logits(params, batch);
    const auto targets = target_views(batch);
    return evaluate_objective<double>(kind, logits, targets, cfg).batch_loss;
}

GradcheckResult finite_diff_gradcheck(const TinyLMParams& params, std::span<const MaskedSample> batch,
                                      ObjectiveKind kind, const FiFSLConfig& cfg, double step,
                                      std::size_t max_coords, std::uint64_t seed) {
    if (!(step > 0.0)) throw Error("gradcheck step must be positive");
    const auto analytic = batch_loss_and_grad(params, batch, kind, cfg);
    const auto n = static_cast<std::size_t>(params.values().size());
    std::vector<std::size_t> coords;
    if (max_coords == 0 || max_coords >= n) {
        coords.resize(n);
        std::iota(coords.begin(), coords.end(), std::size_t{0});
    } else {
        std::mt19937_64 rng(seed);
        auto order = permutation(n, rng);
        coords.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(max_coords));
    }
    TinyLMParams probe = params;
    GradcheckResult res;
    res.coordinates = coords.size();
    for (std::size_t c : coords) {
        const auto k = static_cast<Eigen::Index>(c);
        const double orig = probe.values()(k);
        probe.values()(k) = orig + step;
        const double up = batch_loss(probe, batch, kind, cfg);
        probe.values()(k) = orig - step;
        const double down = batch_loss(probe, batch, kind, cfg);
        probe.values()(k) = orig;
        if (!std::isfinite(up) || !std::isfinite(down)) throw Error("gradcheck: non-finite loss");
        const double numeric = (up - down) / (2.0 * step);
        const double a = analytic.grad.values()(k);
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        res.max_rel_err = std::max(res.max_rel_err, std::abs(a - numeric) / denom);
        res.max_abs_grad = std::max(res.max_abs_grad, std::abs(a));
    }
    return res;
}

}  // namespace fifsl
