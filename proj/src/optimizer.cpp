#include "fifsl/error.hpp"
#include "fifsl/trainer.hpp"

namespace fifsl {

void optimizer_step(TinyLMParams& params, const TinyLMParams& grad, OptimizerState& state,
                    const OptimizerConfig& config) {
    auto& theta = params.values();
    const auto& g = grad.values();
    if (theta.size() != g.size()) throw Error("optimizer_step: parameter and gradient sizes differ");
    if (config.kind == OptimizerKind::sgd) {
        theta -= config.learning_rate * g;
        ++state.step;
        return;
    }
    if (state.m.size() != theta.size()) {
        state.m = Eigen::VectorXd::Zero(theta.size());
        state.v = Eigen::VectorXd::Zero(theta.size());
        state.step = 0;
    }
    ++state.step;
    state.m = config.beta1 * state.m + (1.0 - config.beta1) * g;
    state.v = config.beta2 * state.v + (1.0 - config.beta2) * g.cwiseAbs2();
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    theta.array() -= config.learning_rate * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + config.epsilon);
}

}  // namespace fifsl
