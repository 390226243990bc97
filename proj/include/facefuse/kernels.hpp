#pragma once

#include <cstddef>
#include <vector>

#include "facefuse/tensor.hpp"

namespace facefuse::kernels {

/// Kernel backend selector. Serial is the reference implementation; Parallel
/// runs the same loop nests under OpenMP. Parallel loops cover independent
/// output elements and keep every reduction in a fixed serial order, so both
/// backends produce bitwise-identical results for any thread count.
enum class Backend { Serial, Parallel };

Backend backend();
void set_backend(Backend b);

// Backward kernels accumulate (+=) into gradient buffers the caller has
// zero-initialized. Shape validation happens at the op layer; kernels assume
// consistent arguments.

namespace serial {
void affine_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& out);
void affine_backward(const Tensor& x, const Tensor& w, const Tensor& gout,
                     Tensor& gx, Tensor& gw, Tensor& gb);
void conv2d_forward(const Tensor& x, const Tensor& k, Tensor& out);
void conv2d_backward(const Tensor& x, const Tensor& k, const Tensor& gout,
                     Tensor& gx, Tensor& gk);
void maxpool2_forward(const Tensor& x, Tensor& out, std::vector<std::size_t>& argmax);
void maxpool2_backward(const Tensor& gout, const std::vector<std::size_t>& argmax, Tensor& gx);
void relu_forward(const Tensor& x, Tensor& out);
void relu_backward(const Tensor& x, const Tensor& gout, Tensor& gx);
void softmax_forward(const Tensor& x, std::size_t k, Tensor& out);
void softmax_backward(const Tensor& out, const Tensor& gout, std::size_t k, Tensor& gx);
}  // namespace serial

namespace omp {
void affine_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& out);
void affine_backward(const Tensor& x, const Tensor& w, const Tensor& gout,
                     Tensor& gx, Tensor& gw, Tensor& gb);
void conv2d_forward(const Tensor& x, const Tensor& k, Tensor& out);
void conv2d_backward(const Tensor& x, const Tensor& k, const Tensor& gout,
                     Tensor& gx, Tensor& gk);
void maxpool2_forward(const Tensor& x, Tensor& out, std::vector<std::size_t>& argmax);
void maxpool2_backward(const Tensor& gout, const std::vector<std::size_t>& argmax, Tensor& gx);
void relu_forward(const Tensor& x, Tensor& out);
void relu_backward(const Tensor& x, const Tensor& gout, Tensor& gx);
void softmax_forward(const Tensor& x, std::size_t k, Tensor& out);
void softmax_backward(const Tensor& out, const Tensor& gout, std::size_t k, Tensor& gx);
}  // namespace omp

// Dispatching entry points; honor backend().
void affine_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& out);
void affine_backward(const Tensor& x, const Tensor& w, const Tensor& gout,
                     Tensor& gx, Tensor& gw, Tensor& gb);
void conv2d_forward(const Tensor& x, const Tensor& k, Tensor& out);
void conv2d_backward(const Tensor& x, const Tensor& k, const Tensor& gout,
                     Tensor& gx, Tensor& gk);
void maxpool2_forward(const Tensor& x, Tensor& out, std::vector<std::size_t>& argmax);
void maxpool2_backward(const Tensor& gout, const std::vector<std::size_t>& argmax, Tensor& gx);
void relu_forward(const Tensor& x, Tensor& out);
void relu_backward(const Tensor& x, const Tensor& gout, Tensor& gx);
void softmax_forward(const Tensor& x, std::size_t k, Tensor& out);
void softmax_backward(const Tensor& out, const Tensor& gout, std::size_t k, Tensor& gx);

}  // namespace facefuse::kernels
