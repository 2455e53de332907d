#pragma once

// Small random (params, batch) instances for gradient checks.

#include <cstdint>
#include <vector>

#include "fifsl/model.hpp"

namespace fifsl {

struct GradcheckInstance {
    TinyLMParams params;
    std::vector<MaskedSample> batch;
    FiFSLConfig fifsl;
};

/// V in [5, 20], T in [3, 12], batch in [1, 4], random masks with at least
/// one unmasked position per sample. For FiFSL the floor is placed between
/// two sample penalties (or below all of them) with a margin, so that the
/// gate does not flip under a finite-difference step and at least one sample
/// is active.
GradcheckInstance random_gradcheck_instance(std::uint64_t seed, ObjectiveKind kind);

}  // namespace fifsl
