#pragma once

#include <vector>

#include "facefuse/tape.hpp"

namespace facefuse::ops {

/// out[n,k] = sum_d x[n,d]*w[d,k] + b[k]
Var affine(Var x, Var w, Var b);

/// 3x3 convolution, stride 1, pad 1: spatial size is preserved.
/// x: [N,C,H,W], k: [F,C,3,3] -> [N,F,H,W]
Var conv2d(Var x, Var k);

/// 2x2 max pooling with stride 2; H and W must be even. Gradient routes to
/// the max position; ties go to the first element in row-major window order.
Var maxpool2(Var x);

Var relu(Var x);

/// Softmax over the last axis (K >= 2), computed with max-subtraction.
Var softmax(Var x);

/// Concatenate along `axis`; all other extents must agree.
Var concat(const std::vector<Var>& parts, std::size_t axis);

Var reshape(Var x, Shape shape);

/// Drop the last axis by selecting one index along it.
Var select_last(Var x, std::size_t index);

Var add(Var a, Var b);
Var scale(Var a, Real c);
Var square(Var x);
Var sum(Var x);
Var weighted_sum(Var x, Tensor weights);

/// Negative log-likelihood over rows of the last axis:
///   scale * sum_r -log(max(probs[r, labels[r]], 1e-12))
/// labels.size() must equal numel/K; each label in [0,K).
Var cross_entropy(Var probs, const std::vector<int>& labels, Real scale);

}  // namespace facefuse::ops
