#pragma once

// Unlearning objectives over per-sample logits.
//
// Every objective works on a batch given as one [T_i x V] logit matrix per
// sample (samples need not share a length) and returns the batch loss with
// its exact gradient with respect to those logits. Row t of a sample's logits
// is the model's prediction for label t.
//
//   syntax_ce      masked token cross-entropy and its per-row gradient factor
//   fifsl_*        token-normalised loss -> softplus penalty -> floor gating
//   ga_objective   gradient ascent on the sequence log-likelihood
//   simnpo_*       length-normalised reference-free NPO

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fifsl/error.hpp"
#include "fifsl/verilog_mask.hpp"

namespace fifsl {

template <typename Scalar>
using LogitMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------- scalar kernels

/// log(1 + e^z) without overflow for large |z|.
template <typename Scalar>
Scalar softplus(Scalar z) {
    using std::exp;
    using std::log1p;
    return z > Scalar(0) ? z + log1p(exp(-z)) : log1p(exp(z));
}

template <typename Scalar>
Scalar sigmoid(Scalar z) {
    using std::exp;
    if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-z));
    const Scalar e = exp(z);
    return e / (Scalar(1) + e);
}

/// log sigma(z) = -softplus(-z).
template <typename Scalar>
Scalar log_sigmoid(Scalar z) {
    return -softplus(-z);
}

struct FiFSLConfig {
    double beta = 2.5;
    double gamma = 0.0;
    double l_min = 0.35;

    void validate() const {
        if (!(beta > 0.0) || !std::isfinite(beta)) throw Error("FiFSL beta must be positive and finite");
        if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw Error("FiFSL gamma must be >= 0");
        if (!(l_min >= 0.0) || !std::isfinite(l_min)) throw Error("FiFSL l_min must be >= 0");
    }
};

/// (2/beta) softplus(-beta (L - gamma)).
template <typename Scalar>
Scalar fifsl_penalty(Scalar l, const FiFSLConfig& cfg) {
    const Scalar beta(cfg.beta);
    return Scalar(2) / beta * softplus(-beta * (l - Scalar(cfg.gamma)));
}

/// d(penalty)/dL = -2 sigma(-beta (L - gamma)), strictly inside (-2, 0).
template <typename Scalar>
Scalar fifsl_sensitivity(Scalar l, const FiFSLConfig& cfg) {
    return Scalar(-2) * sigmoid(-Scalar(cfg.beta) * (l - Scalar(cfg.gamma)));
}

/// Loss value at which the penalty equals the floor: samples above it are gated out.
inline double fifsl_gate_threshold(const FiFSLConfig& cfg) {
    return cfg.gamma - std::log(std::expm1(cfg.beta * cfg.l_min / 2.0)) / cfg.beta;
}

// ---------------------------------------------------------------- masked cross-entropy

/// Labels and loss mask for one sample.
struct TargetView {
    std::span<const int> labels;
    std::span<const std::uint8_t> mask;
};

template <typename Scalar>
struct SyntaxCE {
    Scalar sum_nll = Scalar(0);
    /// m_t (p_t - e(y_t)), zero rows at masked positions.
    LogitMatrix<Scalar> grad_factor;
};

template <typename Scalar, typename Derived>
SyntaxCE<Scalar> syntax_ce(const Eigen::MatrixBase<Derived>& logits, const TargetView& target) {
    const Eigen::Index rows = logits.rows();
    const Eigen::Index vocab = logits.cols();
    if (static_cast<std::size_t>(rows) != target.labels.size() || target.labels.size() != target.mask.size())
        throw Error("syntax_ce: logits have " + std::to_string(rows) + " rows but " +
                    std::to_string(target.labels.size()) + " labels and " + std::to_string(target.mask.size()) +
                    " mask bits");
    SyntaxCE<Scalar> out;
    out.grad_factor = LogitMatrix<Scalar>::Zero(rows, vocab);
    for (Eigen::Index t = 0; t < rows; ++t) {
        if (!target.mask[static_cast<std::size_t>(t)]) continue;
        const int y = target.labels[static_cast<std::size_t>(t)];
        if (y < 0 || y >= vocab)
            throw Error("syntax_ce: label " + std::to_string(y) + " at unmasked position " + std::to_string(t) +
                        " outside vocabulary of " + std::to_string(vocab));
        const auto row = logits.row(t);
        const Scalar shift = row.maxCoeff();
        auto p = out.grad_factor.row(t);
        p = (row.array() - shift).exp().matrix();
        const Scalar z = p.sum();
        out.sum_nll += std::log(z) - (row(y) - shift);
        p /= z;
        p(y) -= Scalar(1);
    }
    return out;
}

// ---------------------------------------------------------------- FiFSL

template <typename Scalar>
struct SampleLoss {
    Scalar l = Scalar(0);    // token-normalised NLL
    Scalar phi = Scalar(0);  // penalty (objective value for the sample)
    bool active = false;
    std::size_t valid_count = 0;
};

template <typename Scalar>
struct FiFSLForward {
    std::vector<SampleLoss<Scalar>> per_sample;
    std::size_t n_act = 0;
    Scalar batch_loss = Scalar(0);
};

template <typename Scalar>
FiFSLForward<Scalar> fifsl_forward(std::span<const Scalar> sum_nll, std::span<const std::size_t> valid_counts,
                                   const FiFSLConfig& cfg) {
    cfg.validate();
    if (sum_nll.size() != valid_counts.size()) throw Error("fifsl_forward: sums and counts differ in length");
    FiFSLForward<Scalar> out;
    out.per_sample.resize(sum_nll.size());
    Scalar total(0);
    for (std::size_t i = 0; i < sum_nll.size(); ++i) {
        if (!std::isfinite(static_cast<double>(sum_nll[i])))
            throw Error("fifsl_forward: non-finite loss for sample " + std::to_string(i));
        if (valid_counts[i] == 0) throw Error("fifsl_forward: sample " + std::to_string(i) + " has no valid tokens");
        auto& s = out.per_sample[i];
        s.valid_count = valid_counts[i];
        s.l = sum_nll[i] / static_cast<Scalar>(valid_counts[i]);
        s.phi = fifsl_penalty(s.l, cfg);
        s.active = s.phi > Scalar(cfg.l_min);
        if (s.active) {
            ++out.n_act;
            total += s.phi;
        }
    }
    out.batch_loss = out.n_act ? total / static_cast<Scalar>(out.n_act) : Scalar(0);
    return out;
}

template <typename Scalar>
std::vector<LogitMatrix<Scalar>> fifsl_backward(std::span<const SampleLoss<Scalar>> per_sample,
                                                std::span<const LogitMatrix<Scalar>> grad_factors,
                                                const FiFSLConfig& cfg) {
    if (per_sample.size() != grad_factors.size()) throw Error("fifsl_backward: batch size mismatch");
    std::size_t n_act = 0;
    for (const auto& s : per_sample) n_act += s.active ? 1 : 0;
    std::vector<LogitMatrix<Scalar>> dlogits(per_sample.size());
    for (std::size_t i = 0; i < per_sample.size(); ++i) {
        const auto& s = per_sample[i];
        if (!s.active) {
            dlogits[i] = LogitMatrix<Scalar>::Zero(grad_factors[i].rows(), grad_factors[i].cols());
            continue;
        }
        const Scalar scale = fifsl_sensitivity(s.l, cfg) / static_cast<Scalar>(n_act) /
                             static_cast<Scalar>(s.valid_count);
        dlogits[i] = scale * grad_factors[i];
    }
    return dlogits;
}

// ---------------------------------------------------------------- batch objectives

enum class ObjectiveKind { standard_ce, fifsl, ga, simnpo };

inline std::string_view to_string(ObjectiveKind k) {
    switch (k) {
        case ObjectiveKind::standard_ce: return "standard_ce";
        case ObjectiveKind::fifsl: return "fifsl";
        case ObjectiveKind::ga: return "ga";
        case ObjectiveKind::simnpo: return "simnpo";
    }
    return "?";
}

inline ObjectiveKind parse_objective(std::string_view s) {
    if (s == "standard_ce" || s == "ce") return ObjectiveKind::standard_ce;
    if (s == "fifsl") return ObjectiveKind::fifsl;
    if (s == "ga") return ObjectiveKind::ga;
    if (s == "simnpo") return ObjectiveKind::simnpo;
    throw Error("unknown objective '" + std::string(s) + "'");
}

template <typename Scalar>
struct ObjectiveOutput {
    std::vector<SampleLoss<Scalar>> per_sample;
    std::size_t n_act = 0;
    Scalar batch_loss = Scalar(0);
    std::vector<LogitMatrix<Scalar>> dlogits;
};

namespace detail {

template <typename Scalar>
std::vector<SyntaxCE<Scalar>> batch_ce(std::span<const LogitMatrix<Scalar>> logits, std::span<const TargetView> targets) {
    if (logits.size() != targets.size()) throw Error("objective: logits and targets differ in batch size");
    if (logits.empty()) throw Error("objective: empty batch");
    std::vector<SyntaxCE<Scalar>> ce;
    ce.reserve(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) ce.push_back(syntax_ce<Scalar>(logits[i], targets[i]));
    return ce;
}

inline std::size_t count_ones(std::span<const std::uint8_t> mask) {
    std::size_t n = 0;
    for (auto m : mask) n += m ? 1 : 0;
    return n;
}

}  // namespace detail

/// Full FiFSL pass: syntax_ce per sample, then forward and backward.
template <typename Scalar>
ObjectiveOutput<Scalar> fifsl_objective(std::span<const LogitMatrix<Scalar>> logits,
                                        std::span<const TargetView> targets, const FiFSLConfig& cfg) {
    auto ce = detail::batch_ce<Scalar>(logits, targets);
    std::vector<Scalar> sums;
    std::vector<std::size_t> counts;
    std::vector<LogitMatrix<Scalar>> factors;
    for (std::size_t i = 0; i < ce.size(); ++i) {
        sums.push_back(ce[i].sum_nll);
        counts.push_back(detail::count_ones(targets[i].mask));
        factors.push_back(std::move(ce[i].grad_factor));
    }
    auto fwd = fifsl_forward<Scalar>(sums, counts, cfg);
    ObjectiveOutput<Scalar> out;
    out.dlogits = fifsl_backward<Scalar>(fwd.per_sample, factors, cfg);
    out.per_sample = std::move(fwd.per_sample);
    out.n_act = fwd.n_act;
    out.batch_loss = fwd.batch_loss;
    return out;
}

/// Mean over samples of log p(y | x); minimising it ascends the NLL.
template <typename Scalar>
ObjectiveOutput<Scalar> ga_objective(std::span<const LogitMatrix<Scalar>> logits, std::span<const TargetView> targets) {
    auto ce = detail::batch_ce<Scalar>(logits, targets);
    const Scalar inv_b = Scalar(1) / static_cast<Scalar>(ce.size());
    ObjectiveOutput<Scalar> out;
    for (std::size_t i = 0; i < ce.size(); ++i) {
        const std::size_t n = detail::count_ones(targets[i].mask);
        SampleLoss<Scalar> s;
        s.valid_count = n;
        s.l = n ? ce[i].sum_nll / static_cast<Scalar>(n) : Scalar(0);
        s.phi = -ce[i].sum_nll;
        s.active = true;
        out.batch_loss += inv_b * s.phi;
        out.per_sample.push_back(s);
        out.dlogits.push_back(-inv_b * ce[i].grad_factor);
    }
    out.n_act = ce.size();
    return out;
}

/// Per-sample (2/beta) softplus(-(beta * L - gamma)) with L the
/// length-normalised NLL; plain batch mean.
template <typename Scalar>
ObjectiveOutput<Scalar> simnpo_objective(std::span<const LogitMatrix<Scalar>> logits,
                                         std::span<const TargetView> targets, double beta, double gamma) {
    if (!(beta > 0.0)) throw Error("SimNPO beta must be positive");
    auto ce = detail::batch_ce<Scalar>(logits, targets);
    const Scalar inv_b = Scalar(1) / static_cast<Scalar>(ce.size());
    const Scalar b(beta), g(gamma);
    ObjectiveOutput<Scalar> out;
    for (std::size_t i = 0; i < ce.size(); ++i) {
        const std::size_t n = detail::count_ones(targets[i].mask);
        if (n == 0) throw Error("simnpo: sample " + std::to_string(i) + " has an empty response");
        SampleLoss<Scalar> s;
        s.valid_count = n;
        s.l = ce[i].sum_nll / static_cast<Scalar>(n);
        s.phi = Scalar(2) / b * softplus(-(b * s.l - g));
        s.active = true;
        out.batch_loss += inv_b * s.phi;
        const Scalar scale = inv_b * Scalar(-2) * sigmoid(g - b * s.l) / static_cast<Scalar>(n);
        out.per_sample.push_back(s);
        out.dlogits.push_back(scale * ce[i].grad_factor);
    }
    out.n_act = ce.size();
    return out;
}

/// Mean over samples of the token-normalised NLL (fine-tuning loss).
template <typename Scalar>
ObjectiveOutput<Scalar> ce_objective(std::span<const LogitMatrix<Scalar>> logits, std::span<const TargetView> targets) {
    auto ce = detail::batch_ce<Scalar>(logits, targets);
    const Scalar inv_b = Scalar(1) / static_cast<Scalar>(ce.size());
    ObjectiveOutput<Scalar> out;
    for (std::size_t i = 0; i < ce.size(); ++i) {
        const std::size_t n = detail::count_ones(targets[i].mask);
        if (n == 0) throw Error("cross-entropy: sample " + std::to_string(i) + " has no labelled tokens");
        SampleLoss<Scalar> s;
        s.valid_count = n;
        s.l = ce[i].sum_nll / static_cast<Scalar>(n);
        s.phi = s.l;
        s.active = true;
        out.batch_loss += inv_b * s.l;
        out.per_sample.push_back(s);
        out.dlogits.push_back(inv_b / static_cast<Scalar>(n) * ce[i].grad_factor);
    }
    out.n_act = ce.size();
    return out;
}

template <typename Scalar>
ObjectiveOutput<Scalar> evaluate_objective(ObjectiveKind kind, std::span<const LogitMatrix<Scalar>> logits,
                                           std::span<const TargetView> targets, const FiFSLConfig& cfg) {
    switch (kind) {
        case ObjectiveKind::standard_ce: return ce_objective<Scalar>(logits, targets);
        case ObjectiveKind::fifsl: return fifsl_objective<Scalar>(logits, targets, cfg);
        case ObjectiveKind::ga: return ga_objective<Scalar>(logits, targets);
        case ObjectiveKind::simnpo: return simnpo_objective<Scalar>(logits, targets, cfg.beta, cfg.gamma);
    }
    throw Error("unknown objective kind");
}

}  // namespace fifsl
