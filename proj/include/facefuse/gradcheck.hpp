#pragma once

#include <functional>
#include <string>

#include "facefuse/tape.hpp"
#include "facefuse/tensor.hpp"

namespace facefuse {

// Builds a scalar loss on the given tape from a leaf holding the current
// input values. Called repeatedly with perturbed inputs.
using TapeFn = std::function<Var(Tape&, Var)>;

struct GradCheckResult {
    Real max_rel_err = 0.0;
    std::size_t worst_index = 0;
    Real analytic_at_worst = 0.0;
    Real numeric_at_worst = 0.0;
    bool ok(Real threshold) const { return max_rel_err < threshold; }
};

// Central-difference check of d(loss)/d(x) for every element of x.
// rel err = |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult grad_check(const TapeFn& fn, const Tensor& x, Real eps = 1e-5);

// Same comparison for a precomputed analytic gradient against a scalar
// function of the flattened values (used for multi-input end-to-end checks).
GradCheckResult grad_check_against(const std::function<Real(const Tensor&)>& loss,
                                   const Tensor& x, const Tensor& analytic, Real eps = 1e-5);

}  // namespace facefuse
