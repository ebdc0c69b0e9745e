#pragma once

// Trial drivers shared by the unit tests (few trials) and the acceptance binary (many).

#include <cstdint>
#include <string>
#include <vector>

#include "docrec/bias.hpp"
#include "docrec/engines.hpp"
#include "docrec/model.hpp"
#include "docrec/rng.hpp"
#include "docrec/train.hpp"

namespace harness {

using namespace docrec;

/// Small generator settings so tiny-model trials stay fast.
EngineConfig small_engine(Domain d);

/// Raw head outputs of one decoder position, flattened; patch scores are cut to the image's
/// real patch count.
template <typename T>
std::vector<std::vector<double>> position_logits(const BatchForward<T>& fwd, int item, int length_of_item,
                                                 int patch_count, int coord_heads);

/// Largest change of any logit of item 0 when it is batched with longer / larger items.
struct PaddingTrial {
    double max_diff = 0.0;
    bool padded = false;  // item 0 actually received padding
};
template <typename T>
PaddingTrial padding_trial(Domain domain, Bias bias, std::uint64_t seed);

/// Largest change of a logit at a position that cannot see the perturbed input, over all
/// perturbable positions of one random plan.
struct LeakageTrial {
    double max_forbidden_diff = 0.0;
    double max_allowed_diff = 0.0;  // sanity: perturbations do reach dependent positions
    int perturbations = 0;
};
LeakageTrial leakage_trial(Domain domain, Bias bias, std::uint64_t seed);

/// Analytic vs central-difference gradients of the batch loss on a tiny float64 model.
struct GradCheck {
    double max_rel_error = 0.0;
    int checked = 0;
    double loss = 0.0;  // objective value at the unperturbed parameters
    std::string worst;
};
GradCheck gradient_check(Domain domain, Bias bias, std::uint64_t seed, int samples, double h = 1e-5);

/// Union of retained patches covers every ink pixel, and every patch holds ink.
bool patch_coverage_holds(const DocumentImage& img, std::uint8_t threshold);

/// Random image with sparse ink, sizes not necessarily multiples of 10.
DocumentImage random_image(CounterRng& rng);

}  // namespace harness
