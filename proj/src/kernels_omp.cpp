#include <algorithm>
#include <cmath>

#include "facefuse/kernels.hpp"

// OpenMP kernels. Same loop nests as kernels_serial.cpp with worksharing
// pragmas on independent-output loops; every reduction stays inside one
// thread in a fixed order, so results are bitwise identical to the serial
// reference for any thread count.

namespace facefuse::kernels::omp {

void affine_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& out) {
    const std::size_t n_rows = x.extent(0), d = x.extent(1), k = w.extent(1);
    const Real* xp = x.data();
    const Real* wp = w.data();
    const Real* bp = b.data();
    Real* op = out.data();
#pragma omp parallel for schedule(static)
    for (std::size_t n = 0; n < n_rows; ++n) {
        for (std::size_t j = 0; j < k; ++j) {
            Real acc = bp[j];
            for (std::size_t i = 0; i < d; ++i) acc += xp[n * d + i] * wp[i * k + j];
            op[n * k + j] = acc;
        }
    }
}

void affine_backward(const Tensor& x, const Tensor& w, const Tensor& gout,
                     Tensor& gx, Tensor& gw, Tensor& gb) {
    const std::size_t n_rows = x.extent(0), d = x.extent(1), k = w.extent(1);
    const Real* xp = x.data();
    const Real* wp = w.data();
    const Real* gp = gout.data();
    Real* gxp = gx.data();
    Real* gwp = gw.data();
    Real* gbp = gb.data();
#pragma omp parallel for schedule(static)
    for (std::size_t n = 0; n < n_rows; ++n) {
        for (std::size_t i = 0; i < d; ++i) {
            Real acc = 0.0;
            for (std::size_t j = 0; j < k; ++j) acc += gp[n * k + j] * wp[i * k + j];
            gxp[n * d + i] += acc;
        }
    }
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            Real acc = 0.0;
            for (std::size_t n = 0; n < n_rows; ++n) acc += xp[n * d + i] * gp[n * k + j];
            gwp[i * k + j] += acc;
        }
    }
#pragma omp parallel for schedule(static)
    for (std::size_t j = 0; j < k; ++j) {
        Real acc = 0.0;
        for (std::size_t n = 0; n < n_rows; ++n) acc += gp[n * k + j];
        gbp[j] += acc;
    }
}

void conv2d_forward(const Tensor& x, const Tensor& k, Tensor& out) {
    const std::size_t nb = x.extent(0), c_in = x.extent(1), h = x.extent(2), w = x.extent(3);
    const std::size_t f_out = k.extent(0);
    const Real* xp = x.data();
    const Real* kp = k.data();
    Real* op = out.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (std::size_t n = 0; n < nb; ++n) {
        for (std::size_t f = 0; f < f_out; ++f) {
            for (std::size_t oh = 0; oh < h; ++oh) {
                for (std::size_t ow = 0; ow < w; ++ow) {
                    Real acc = 0.0;
                    for (std::size_t c = 0; c < c_in; ++c) {
                        for (std::size_t dy = 0; dy < 3; ++dy) {
                            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + dy) - 1;
                            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t dx = 0; dx < 3; ++dx) {
                                const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + dx) - 1;
                                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
                                acc += xp[((n * c_in + c) * h + ih) * w + iw] *
                                       kp[((f * c_in + c) * 3 + dy) * 3 + dx];
                            }
                        }
                    }
                    op[((n * f_out + f) * h + oh) * w + ow] = acc;
                }
            }
        }
    }
}

void conv2d_backward(const Tensor& x, const Tensor& k, const Tensor& gout,
                     Tensor& gx, Tensor& gk) {
    const std::size_t nb = x.extent(0), c_in = x.extent(1), h = x.extent(2), w = x.extent(3);
    const std::size_t f_out = k.extent(0);
    const Real* xp = x.data();
    const Real* kp = k.data();
    const Real* gp = gout.data();
    Real* gxp = gx.data();
    Real* gkp = gk.data();
    // gx: scatter stays within one batch sample, so parallelize over n only.
#pragma omp parallel for schedule(static)
    for (std::size_t n = 0; n < nb; ++n) {
        for (std::size_t f = 0; f < f_out; ++f) {
            for (std::size_t oh = 0; oh < h; ++oh) {
                for (std::size_t ow = 0; ow < w; ++ow) {
                    const Real g = gp[((n * f_out + f) * h + oh) * w + ow];
                    for (std::size_t c = 0; c < c_in; ++c) {
                        for (std::size_t dy = 0; dy < 3; ++dy) {
                            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + dy) - 1;
                            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t dx = 0; dx < 3; ++dx) {
                                const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + dx) - 1;
                                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
                                gxp[((n * c_in + c) * h + ih) * w + iw] +=
                                    g * kp[((f * c_in + c) * 3 + dy) * 3 + dx];
                            }
                        }
                    }
                }
            }
        }
    }
    // gk: each filter's accumulation is private to one thread.
#pragma omp parallel for schedule(static)
    for (std::size_t f = 0; f < f_out; ++f) {
        for (std::size_t n = 0; n < nb; ++n) {
            for (std::size_t oh = 0; oh < h; ++oh) {
                for (std::size_t ow = 0; ow < w; ++ow) {
                    const Real g = gp[((n * f_out + f) * h + oh) * w + ow];
                    for (std::size_t c = 0; c < c_in; ++c) {
                        for (std::size_t dy = 0; dy < 3; ++dy) {
                            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + dy) - 1;
                            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t dx = 0; dx < 3; ++dx) {
                                const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + dx) - 1;
                                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
                                gkp[((f * c_in + c) * 3 + dy) * 3 + dx] +=
                                    g * xp[((n * c_in + c) * h + ih) * w + iw];
                            }
                        }
                    }
                }
            }
        }
    }
}

void maxpool2_forward(const Tensor& x, Tensor& out, std::vector<std::size_t>& argmax) {
    const std::size_t nb = x.extent(0), ch = x.extent(1), h = x.extent(2), w = x.extent(3);
    const std::size_t oh = h / 2, ow = w / 2;
    const Real* xp = x.data();
    Real* op = out.data();
    argmax.assign(out.numel(), 0);
    std::size_t* ap = argmax.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (std::size_t n = 0; n < nb; ++n) {
        for (std::size_t c = 0; c < ch; ++c) {
            for (std::size_t y = 0; y < oh; ++y) {
                for (std::size_t z = 0; z < ow; ++z) {
                    std::size_t best = ((n * ch + c) * h + 2 * y) * w + 2 * z;
                    Real best_v = xp[best];
                    for (std::size_t dy = 0; dy < 2; ++dy) {
                        for (std::size_t dx = 0; dx < 2; ++dx) {
                            const std::size_t idx = ((n * ch + c) * h + 2 * y + dy) * w + 2 * z + dx;
                            if (xp[idx] > best_v) {
                                best_v = xp[idx];
                                best = idx;
                            }
                        }
                    }
                    const std::size_t o = ((n * ch + c) * oh + y) * ow + z;
                    op[o] = best_v;
                    ap[o] = best;
                }
            }
        }
    }
}

void maxpool2_backward(const Tensor& gout, const std::vector<std::size_t>& argmax, Tensor& gx) {
    const Real* gp = gout.data();
    Real* gxp = gx.data();
    const std::size_t n = gout.numel();
    // Disjoint windows: distinct outputs write distinct inputs.
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) gxp[argmax[i]] += gp[i];
}

void relu_forward(const Tensor& x, Tensor& out) {
    const Real* xp = x.data();
    Real* op = out.data();
    const std::size_t n = x.numel();
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) op[i] = xp[i] > 0.0 ? xp[i] : 0.0;
}

void relu_backward(const Tensor& x, const Tensor& gout, Tensor& gx) {
    const Real* xp = x.data();
    const Real* gp = gout.data();
    Real* gxp = gx.data();
    const std::size_t n = x.numel();
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) gxp[i] += xp[i] > 0.0 ? gp[i] : 0.0;
}

void softmax_forward(const Tensor& x, std::size_t k, Tensor& out) {
    const std::size_t rows = x.numel() / k;
    const Real* xp = x.data();
    Real* op = out.data();
#pragma omp parallel for schedule(static)
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* row = xp + r * k;
        Real m = row[0];
        for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
        Real denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const Real e = std::exp(row[j] - m);
            op[r * k + j] = e;
            denom += e;
        }
        for (std::size_t j = 0; j < k; ++j) op[r * k + j] /= denom;
    }
}

void softmax_backward(const Tensor& out, const Tensor& gout, std::size_t k, Tensor& gx) {
    const std::size_t rows = out.numel() / k;
    const Real* op = out.data();
    const Real* gp = gout.data();
    Real* gxp = gx.data();
#pragma omp parallel for schedule(static)
    for (std::size_t r = 0; r < rows; ++r) {
        Real dot = 0.0;
        for (std::size_t j = 0; j < k; ++j) dot += gp[r * k + j] * op[r * k + j];
        for (std::size_t j = 0; j < k; ++j) {
            gxp[r * k + j] += op[r * k + j] * (gp[r * k + j] - dot);
        }
    }
}

}  // namespace facefuse::kernels::omp
