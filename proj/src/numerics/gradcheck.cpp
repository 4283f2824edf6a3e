#include "hart/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hart/numerics/ops.hpp"

namespace hart::num {
namespace {

double evaluate(const ScalarFn& f, const ParameterSet& params) {
    Tape tape(false);
    const Var out = f(tape, params);
    const Tensor& v = tape.value(out);
    if (v.numel() != 1) {
        throw ShapeError("check_gradients: function returned " + shape_str(v.shape()) +
                         ", expected a scalar");
    }
    return v[0];
}

}  // namespace

GradCheckReport check_gradients(const ScalarFn& f, ParameterSet& params,
                                const GradCheckOptions& opts) {
    if (opts.step <= 0.0) throw std::invalid_argument("check_gradients: step must be > 0");

    Gradients grads(params);
    {
        Tape tape(true);
        const Var out = f(tape, params);
        if (tape.value(out).numel() != 1) {
            throw ShapeError("check_gradients: function returned " +
                             shape_str(tape.value(out).shape()) + ", expected a scalar");
        }
        tape.backward(out, &grads);
    }

    GradCheckReport report;
    for (ParamId id : params.ids()) {
        if (!params.trainable(id)) continue;
        ParamCheck pc;
        pc.name = params.name(id);
        Tensor& value = params.value(id);
        for (std::size_t i = 0; i < value.numel(); ++i) {
            const double orig = value[i];
            value[i] = orig + opts.step;
            const double fp = evaluate(f, params);
            value[i] = orig - opts.step;
            const double fm = evaluate(f, params);
            value[i] = orig;

            const double numeric = (fp - fm) / (2.0 * opts.step);
            const double analytic = grads.has(id) ? grads.get(id)[i] : 0.0;
            const double abs_err = std::abs(analytic - numeric);
            const double denom =
                std::max({std::abs(analytic), std::abs(numeric), opts.denominator_floor});
            const double rel = abs_err / denom;
            pc.max_abs_error = std::max(pc.max_abs_error, abs_err);
            pc.max_rel_error = std::max(pc.max_rel_error, rel);
            if (rel > opts.tolerance) ++pc.flagged;
            ++pc.checked;
        }
        report.max_rel_error = std::max(report.max_rel_error, pc.max_rel_error);
        report.flagged += pc.flagged;
        report.params.push_back(std::move(pc));
    }
    return report;
}

}  // namespace hart::num
