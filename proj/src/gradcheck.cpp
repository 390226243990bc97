#include "facefuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "facefuse/errors.hpp"

namespace facefuse {

namespace {

GradCheckResult compare(const Tensor& analytic, const std::function<Real(std::size_t, Real)>& probe,
                        const Tensor& x, Real eps) {
    GradCheckResult res;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const Real base = x[i];
        const Real plus = probe(i, base + eps);
        const Real minus = probe(i, base - eps);
        const Real numeric = (plus - minus) / (2.0 * eps);
        const Real a = analytic[i];
        const Real denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
        const Real rel = std::fabs(a - numeric) / denom;
        if (rel > res.max_rel_err) {
            res.max_rel_err = rel;
            res.worst_index = i;
            res.analytic_at_worst = a;
            res.numeric_at_worst = numeric;
        }
    }
    return res;
}

}  // namespace

GradCheckResult grad_check(const TapeFn& fn, const Tensor& x, Real eps) {
    Tensor analytic;
    {
        Tape tape;
        Var leaf = tape.leaf(x);
        Var loss = fn(tape, leaf);
        if (loss.value().numel() != 1) {
            throw ContractError("grad_check function must produce a scalar loss");
        }
        tape.backward(loss);
        analytic = tape.grad(leaf);
    }
    Tensor probe_x = x;
    auto probe = [&](std::size_t i, Real v) {
        const Real saved = probe_x[i];
        probe_x[i] = v;
        Tape tape;
        Var leaf = tape.leaf(probe_x);
        Var loss = fn(tape, leaf);
        probe_x[i] = saved;
        return loss.value()[0];
    };
    return compare(analytic, probe, x, eps);
}

GradCheckResult grad_check_against(const std::function<Real(const Tensor&)>& loss, const Tensor& x,
                                   const Tensor& analytic, Real eps) {
    if (!x.same_shape(analytic)) {
        throw DimensionError("grad_check_against shape mismatch: x" + shape_str(x.shape()) +
                             " vs grad" + shape_str(analytic.shape()));
    }
    Tensor probe_x = x;
    auto probe = [&](std::size_t i, Real v) {
        const Real saved = probe_x[i];
        probe_x[i] = v;
        const Real out = loss(probe_x);
        probe_x[i] = saved;
        return out;
    };
    return compare(analytic, probe, x, eps);
}

}  // namespace facefuse
