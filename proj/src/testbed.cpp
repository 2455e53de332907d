#include "fifsl/testbed.hpp"

#include <algorithm>
#include <random>

#include "fifsl/random.hpp"

namespace fifsl {

GradcheckInstance random_gradcheck_instance(std::uint64_t seed, ObjectiveKind kind) {
    std::mt19937_64 rng(splitmix64(seed ^ 0x6772616463686bULL));
    auto between = [&](int lo, int hi) { return lo + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(hi - lo + 1))); };
    auto real = [&](double lo, double hi) { return lo + (hi - lo) * uniform_unit(rng); };

    ModelConfig mc;
    mc.vocab_size = between(5, 20);
    mc.context = between(1, 4);
    mc.embed_dim = between(2, 5);
    mc.hidden_dim = between(3, 6);
    mc.init_scale = 0.5;
    mc.seed = rng();

    GradcheckInstance inst{init_params(mc), {}, {}};
    const int batch = between(1, 4);
    for (int b = 0; b < batch; ++b) {
        MaskedSample s;
        s.id = "rand-" + std::to_string(b);
        const int len = between(3, 12);
        for (int t = 0; t < len; ++t) {
            s.token_ids.push_back(between(0, mc.vocab_size - 1));
            s.mask.push_back(uniform_unit(rng) < 0.6 ? 1 : 0);
        }
        s.mask[static_cast<std::size_t>(between(0, len - 1))] = 1;
        s.labels = apply_ignore_labels(s.token_ids, s.mask);
        s.valid_count = static_cast<std::size_t>(std::count(s.mask.begin(), s.mask.end(), 1));
        inst.batch.push_back(std::move(s));
    }

    inst.fifsl.beta = real(0.5, 4.0);
    inst.fifsl.gamma = real(0.0, 0.5);
    inst.fifsl.l_min = 0.0;
    if (kind == ObjectiveKind::fifsl) {
        const auto views = target_views(inst.batch);
        std::vector<double> phis;
        for (std::size_t i = 0; i < inst.batch.size(); ++i) {
            const auto ce = syntax_ce<double>(forward(inst.params, inst.batch[i].token_ids), views[i]);
            phis.push_back(fifsl_penalty(ce.sum_nll / static_cast<double>(inst.batch[i].valid_count), inst.fifsl));
        }
        std::sort(phis.begin(), phis.end());
        // Widest gap between consecutive penalties, or half the smallest one.
        double best_gap = 0.5 * phis.front();
        double floor = 0.5 * phis.front();
        for (std::size_t i = 0; i + 1 < phis.size(); ++i) {
            if (phis[i + 1] - phis[i] > best_gap) {
                best_gap = phis[i + 1] - phis[i];
                floor = 0.5 * (phis[i] + phis[i + 1]);
            }
        }
        inst.fifsl.l_min = floor;
    }
    return inst;
}

}  // namespace fifsl
