#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bae/network.hpp"

namespace bae {

struct GradcheckResult {
    std::string kind;     // layer kind under test
    std::string network;  // layer list of the probe network
    double max_rel_error = 0.0;
    std::size_t checked = 0;  // scalar derivatives compared
    bool passed = false;
};

/// Compares backward() against central differences of L = sum(r * net(x)) for
/// every parameter and every input element. Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
GradcheckResult check_gradients(const Network& net, const Tensor& input, const Tensor& output_weights,
                                double step = 1e-5, double tolerance = 1e-4);

/// Random small probe networks (<= 32 parameters) for each layer kind plus
/// a mixed conv/pool/dense stack; inputs are redrawn until no activation or
/// max-pool window sits within 1e-3 of a kink.
std::vector<GradcheckResult> run_gradcheck(std::uint64_t seed, std::size_t configs_per_kind, double step = 1e-5,
                                           double tolerance = 1e-4);

}  // namespace bae
