#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hart/numerics/params.hpp"
#include "hart/numerics/tape.hpp"

namespace hart::num {

// Builds a scalar on the given tape from the parameters.
using ScalarFn = std::function<Var(Tape&, const ParameterSet&)>;

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor);
    // the floor keeps entries that are zero up to rounding from dominating.
    double denominator_floor = 1e-8;
};

struct ParamCheck {
    std::string name;
    std::size_t checked = 0;
    std::size_t flagged = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
};

struct GradCheckReport {
    std::vector<ParamCheck> params;
    double max_rel_error = 0.0;
    std::size_t flagged = 0;
    bool passed() const { return flagged == 0; }
};

// Compares reverse-mode gradients of f with central differences
// (f(p+h) - f(p-h)) / 2h for every element of every trainable parameter.
// `params` is perturbed in place and restored before returning.
GradCheckReport check_gradients(const ScalarFn& f, ParameterSet& params,
                                const GradCheckOptions& opts = {});

}  // namespace hart::num
