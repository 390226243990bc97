#include "facefuse/kernels.hpp"

namespace facefuse::kernels {

namespace {
Backend g_backend = Backend::Serial;
}

Backend backend() { return g_backend; }
void set_backend(Backend b) { g_backend = b; }

#define FACEFUSE_DISPATCH(fn, ...)                    \
    if (g_backend == Backend::Parallel) {             \
        omp::fn(__VA_ARGS__);                         \
    } else {                                          \
        serial::fn(__VA_ARGS__);                      \
    }

void affine_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& out) {
    FACEFUSE_DISPATCH(affine_forward, x, w, b, out)
}

void affine_backward(const Tensor& x, const Tensor& w, const Tensor& gout,
                     Tensor& gx, Tensor& gw, Tensor& gb) {
    FACEFUSE_DISPATCH(affine_backward, x, w, gout, gx, gw, gb)
}

void conv2d_forward(const Tensor& x, const Tensor& k, Tensor& out) {
    FACEFUSE_DISPATCH(conv2d_forward, x, k, out)
}

void conv2d_backward(const Tensor& x, const Tensor& k, const Tensor& gout,
                     Tensor& gx, Tensor& gk) {
    FACEFUSE_DISPATCH(conv2d_backward, x, k, gout, gx, gk)
}

void maxpool2_forward(const Tensor& x, Tensor& out, std::vector<std::size_t>& argmax) {
    FACEFUSE_DISPATCH(maxpool2_forward, x, out, argmax)
}

void maxpool2_backward(const Tensor& gout, const std::vector<std::size_t>& argmax, Tensor& gx) {
    FACEFUSE_DISPATCH(maxpool2_backward, gout, argmax, gx)
}

void relu_forward(const Tensor& x, Tensor& out) {
    FACEFUSE_DISPATCH(relu_forward, x, out)
}

void relu_backward(const Tensor& x, const Tensor& gout, Tensor& gx) {
    FACEFUSE_DISPATCH(relu_backward, x, gout, gx)
}

void softmax_forward(const Tensor& x, std::size_t k, Tensor& out) {
    FACEFUSE_DISPATCH(softmax_forward, x, k, out)
}

void softmax_backward(const Tensor& out, const Tensor& gout, std::size_t k, Tensor& gx) {
    FACEFUSE_DISPATCH(softmax_backward, out, gout, k, gx)
}

#undef FACEFUSE_DISPATCH

}  // namespace facefuse::kernels
