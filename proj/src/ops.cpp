#include "facefuse/ops.hpp"

#include <cmath>
#include <cstring>
#include <memory>

#include "facefuse/kernels.hpp"

namespace facefuse::ops {

namespace {

constexpr Real kLogClamp = 1e-12;

Tape& same_tape(std::initializer_list<Var> vars) {
    Tape* t = nullptr;
    for (const Var& v : vars) {
        if (!v.valid()) throw ContractError("op received an invalid Var");
        if (t == nullptr) t = v.tape;
        if (v.tape != t) throw ContractError("op inputs live on different tapes");
    }
    return *t;
}

void accumulate(Tensor& dst, const Tensor& src) {
    Real* d = dst.data();
    const Real* s = src.data();
    for (std::size_t i = 0; i < dst.numel(); ++i) d[i] += s[i];
}

}  // namespace

Var affine(Var x, Var w, Var b) {
    Tape& t = same_tape({x, w, b});
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = b.value();
    if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1) {
        throw DimensionError("affine expects x[NxD], w[DxK], b[K]; got x" + shape_str(xv.shape()) +
                             " w" + shape_str(wv.shape()) + " b" + shape_str(bv.shape()));
    }
    if (xv.extent(1) != wv.extent(0)) {
        throw DimensionError("affine inner dimensions disagree: x" + shape_str(xv.shape()) +
                             " vs w" + shape_str(wv.shape()));
    }
    if (wv.extent(1) != bv.extent(0)) {
        throw DimensionError("affine bias width " + std::to_string(bv.extent(0)) +
                             " does not match w" + shape_str(wv.shape()));
    }
    Tensor out({xv.extent(0), wv.extent(1)});
    kernels::affine_forward(xv, wv, bv, out);
    ensure_finite(out, "affine");
    auto backward = [](Tape& tp, std::int32_t id, const Tensor& gout) {
        const auto& n = tp.node(id);
        kernels::affine_backward(tp.node(n.inputs[0]).value, tp.node(n.inputs[1]).value, gout,
                                 tp.grad_buffer(n.inputs[0]), tp.grad_buffer(n.inputs[1]),
                                 tp.grad_buffer(n.inputs[2]));
    };
    return t.push(std::move(out), {x.id, w.id, b.id}, backward);
}

Var conv2d(Var x, Var k) {
    Tape& t = same_tape({x, k});
    const Tensor& xv = x.value();
    const Tensor& kv = k.value();
    if (xv.rank() != 4 || kv.rank() != 4) {
        throw DimensionError("conv2d expects x[NxCxHxW], k[FxCx3x3]; got x" + shape_str(xv.shape()) +
                             " k" + shape_str(kv.shape()));
    }
    if (kv.extent(2) != 3 || kv.extent(3) != 3) {
        throw DimensionError("conv2d kernel spatial size must be 3x3, got " + shape_str(kv.shape()));
    }
    if (xv.extent(1) != kv.extent(1)) {
        throw DimensionError("conv2d channel mismatch: input has " + std::to_string(xv.extent(1)) +
                             " channels, kernel expects " + std::to_string(kv.extent(1)));
    }
    Tensor out({xv.extent(0), kv.extent(0), xv.extent(2), xv.extent(3)});
    kernels::conv2d_forward(xv, kv, out);
    ensure_finite(out, "conv2d");
    auto backward = [](Tape& tp, std::int32_t id, const Tensor& gout) {
        const auto& n = tp.node(id);
        kernels::conv2d_backward(tp.node(n.inputs[0]).value, tp.node(n.inputs[1]).value, gout,
                                 tp.grad_buffer(n.inputs[0]), tp.grad_buffer(n.inputs[1]));
    };
    return t.push(std::move(out), {x.id, k.id}, backward);
}

Var maxpool2(Var x) {
    Tape& t = same_tape({x});
    const Tensor& xv = x.value();
    if (xv.rank() != 4) {
        throw DimensionError("maxpool2 expects x[NxCxHxW], got " + shape_str(xv.shape()));
    }
    if (xv.extent(2) % 2 != 0 || xv.extent(3) % 2 != 0) {
        throw DimensionError("maxpool2 requires even spatial extents, got " + shape_str(xv.shape()));
    }
    Tensor out({xv.extent(0), xv.extent(1), xv.extent(2) / 2, xv.extent(3) / 2});
    std::vector<std::size_t> argmax;
    kernels::maxpool2_forward(xv, out, argmax);
    ensure_finite(out, "maxpool2");
    auto backward = [](Tape& tp, std::int32_t id, const Tensor& gout) {
        const auto& n = tp.node(id);
        kernels::maxpool2_backward(gout, n.aux, tp.grad_buffer(n.inputs[0]));
    };
    return t.push(std::move(out), {x.id}, backward, std::move(argmax));
}

Var relu(Var x) {
    Tape& t = same_tape({x});
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    kernels::relu_forward(xv, out);
    ensure_finite(out, "relu");
    auto backward = [](Tape& tp, std::int32_t id, const Tensor& gout) {
        const auto& n = tp.node(id);
        kernels::relu_backward(tp.node(n.inputs[0]).value, gout, tp.grad_buffer(n.inputs[0]));
    };
    return t.push(std::move(out), {x.id}, backward);
}

Var softmax(Var x) {
    Tape& t = same_tape({x});
    const Tensor& xv = x.value();
    if (xv.rank() == 0 || xv.shape().back() < 2) {
        throw DimensionError("softmax needs a last axis of at least 2, got " + shape_str(xv.shape()));
    }
    const std::size_t k = xv.shape().back();
    Tensor out(xv.shape());
    kernels::softmax_forward(xv, k, out);
    ensure_finite(out, "softmax");
    auto backward = [k](Tape& tp, std::int32_t id, const Tensor& gout) {
        const auto& n = tp.node(id);
        kernels::softmax_backward(n.value, gout, k, tp.grad_buffer(n.inputs[0]));
    };
    return t.push(std::move(out), {x.id}, backward);
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
    if (parts.empty()) throw ContractError("concat needs at least one part");
    Tape& t = same_tape({parts.front()});
    for (const Var& p : parts) same_tape({parts.front(), p});

    const Shape& first = parts.front().value().shape();
    if (axis >= first.size()) {
        throw DimensionError("concat axis " + std::to_string(axis) + " out of range for " +
                             shape_str(first));
    }
    std::size_t total = 0;
    for (const Var& p : parts) {
        const Shape& s = p.value().shape();
        if (s.size() != first.size()) {
            throw DimensionError("concat rank mismatch: " + shape_str(first) + " vs " + shape_str(s));
        }
        for (std::size_t a = 0; a < s.size(); ++a) {
            if (a != axis && s[a] != first[a]) {
                throw DimensionError("concat extent mismatch on axis " + std::to_string(a) + ": " +
                                     shape_str(first) + " vs " + shape_str(s));
            }
        }
        total += s[axis];
    }

    Shape out_shape = first;
    out_shape[axis] = total;
    Tensor out(out_shape);

    std::size_t outer = 1, inner = 1;
    for (std::size_t a = 0; a < axis; ++a) outer *= first[a];
    for (std::size_t a = axis + 1; a < first.size(); ++a) inner *= first[a];

    std::vector<std::size_t> extents;
    extents.reserve(parts.size());
    std::vector<std::int32_t> inputs;
    inputs.reserve(parts.size());
    {
        std::size_t offset = 0;
        for (const Var& p : parts) {
            const Tensor& pv = p.value();
            const std::size_t e = pv.shape()[axis];
            for (std::size_t o = 0; o < outer; ++o) {
                std::memcpy(out.data() + (o * total + offset) * inner,
                            pv.data() + o * e * inner, e * inner * sizeof(Real));
            }
            offset += e;
            extents.push_back(e);
            inputs.push_back(p.id);
        }
    }

    // aux layout: [outer, inner, total, extents...]
    std::vector<std::size_t> aux{outer, inner, total};
    aux.insert(aux.end(), extents.begin(), extents.end());

    auto backward = [](Tape& tp, std::int32_t id, const Tensor& gout) {
        const auto& n = tp.node(id);
        const std::size_t outer = n.aux[0], inner = n.aux[1], total = n.aux[2];
        std::size_t offset = 0;
        for (std::size_t p = 0; p < n.inputs.size(); ++p) {
            const std::size_t e = n.aux[3 + p];
            Tensor& g = tp.grad_buffer(n.inputs[p]);
            for (std::size_t o = 0; o < outer; ++o) {
                const Real* src = gout.data() + (o * total + offset) * inner;
                Real* dst = g.data() + o * e * inner;
                for (std::size_t i = 0; i < e * inner; ++i) dst[i] += src[i];
            }
            offset += e;
        }
    };
    return t.push(std::move(out), std::move(inputs), backward, std::move(aux));
}

Var reshape(Var x, Shape shape) {
    Tape& t = same_tape({x});
    const Tensor& xv = x.value();
    if (shape_numel(shape) != xv.numel()) {
        throw DimensionError("reshape from " + shape_str(xv.shape()) + " to " + shape_str(shape) +
                             " changes element count");
    }
    Tensor out(std::move(shape), xv.values());
    auto backward = [](Tape& tp, std::int32_t id, const Tensor& gout) {
        const auto& n = tp.node(id);
        Tensor& g = tp.grad_buffer(n.inputs[0]);
        const Real* src = gout.data();
        Real* dst = g.data();
        for (std::size_t i = 0; i < gout.numel(); ++i) dst[i] += src[i];
    };
    return t.push(std::move(out), {x.id}, backward);
}

Var select_last(Var x, std::size_t index) {
    Tape& t = same_tape({x});
    const Tensor& xv = x.value();
    if (xv.rank() < 2) {
        throw DimensionError("select_last needs rank >= 2, got " + shape_str(xv.shape()));
    }
    const std::size_t k = xv.shape().back();
    if (index >= k) {
        throw DimensionError("select_last index " + std::to_string(index) + " out of range for " +
                             shape_str(xv.shape()));
    }
    Shape out_shape(xv.shape().begin(), xv.shape().end() - 1);
    Tensor out(out_shape);
    const std::size_t rows = out.numel();
    for (std::size_t r = 0; r < rows; ++r) out[r] = xv[r * k + index];
    auto backward = [k, index](Tape& tp, std::int32_t id, const Tensor& gout) {
        const auto& n = tp.node(id);
        Tensor& g = tp.grad_buffer(n.inputs[0]);
        for (std::size_t r = 0; r < gout.numel(); ++r) g[r * k + index] += gout[r];
    };
    return t.push(std::move(out), {x.id}, backward);
}

Var add(Var a, Var b) {
    Tape& t = same_tape({a, b});
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (!av.same_shape(bv)) {
        throw DimensionError("add shape mismatch: " + shape_str(av.shape()) + " vs " +
                             shape_str(bv.shape()));
    }
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
    ensure_finite(out, "add");
    auto backward = [](Tape& tp, std::int32_t id, const Tensor& gout) {
        const auto& n = tp.node(id);
        accumulate(tp.grad_buffer(n.inputs[0]), gout);
        accumulate(tp.grad_buffer(n.inputs[1]), gout);
    };
    return t.push(std::move(out), {a.id, b.id}, backward);
}

Var scale(Var a, Real c) {
    Tape& t = same_tape({a});
    const Tensor& av = a.value();
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * c;
    ensure_finite(out, "scale");
    auto backward = [c](Tape& tp, std::int32_t id, const Tensor& gout) {
        const auto& n = tp.node(id);
        Tensor& g = tp.grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < gout.numel(); ++i) g[i] += c * gout[i];
    };
    return t.push(std::move(out), {a.id}, backward);
}

Var square(Var x) {
    Tape& t = same_tape({x});
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] * xv[i];
    ensure_finite(out, "square");
    auto backward = [](Tape& tp, std::int32_t id, const Tensor& gout) {
        const auto& n = tp.node(id);
        const Tensor& xv = tp.node(n.inputs[0]).value;
        Tensor& g = tp.grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < gout.numel(); ++i) g[i] += 2.0 * xv[i] * gout[i];
    };
    return t.push(std::move(out), {x.id}, backward);
}

Var sum(Var x) {
    Tape& t = same_tape({x});
    const Tensor& xv = x.value();
    Real acc = 0.0;
    for (std::size_t i = 0; i < xv.numel(); ++i) acc += xv[i];
    Tensor out = Tensor::scalar(acc);
    ensure_finite(out, "sum");
    auto backward = [](Tape& tp, std::int32_t id, const Tensor& gout) {
        const auto& n = tp.node(id);
        Tensor& g = tp.grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += gout[0];
    };
    return t.push(std::move(out), {x.id}, backward);
}

Var weighted_sum(Var x, Tensor weights) {
    Tape& t = same_tape({x});
    const Tensor& xv = x.value();
    if (!xv.same_shape(weights)) {
        throw DimensionError("weighted_sum shape mismatch: " + shape_str(xv.shape()) + " vs " +
                             shape_str(weights.shape()));
    }
    Real acc = 0.0;
    for (std::size_t i = 0; i < xv.numel(); ++i) acc += xv[i] * weights[i];
    Tensor out = Tensor::scalar(acc);
    ensure_finite(out, "weighted_sum");
    auto w = std::make_shared<Tensor>(std::move(weights));
    auto backward = [w](Tape& tp, std::int32_t id, const Tensor& gout) {
        const auto& n = tp.node(id);
        Tensor& g = tp.grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += (*w)[i] * gout[0];
    };
    return t.push(std::move(out), {x.id}, backward);
}

Var cross_entropy(Var probs, const std::vector<int>& labels, Real scale) {
    Tape& t = same_tape({probs});
    const Tensor& pv = probs.value();
    if (pv.rank() == 0 || pv.shape().back() < 2) {
        throw DimensionError("cross_entropy needs a last axis of at least 2, got " +
                             shape_str(pv.shape()));
    }
    const std::size_t k = pv.shape().back();
    const std::size_t rows = pv.numel() / k;
    if (labels.size() != rows) {
        throw DimensionError("cross_entropy got " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(rows) + " rows");
    }
    Real acc = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const int lab = labels[r];
        if (lab < 0 || static_cast<std::size_t>(lab) >= k) {
            throw DataError("cross_entropy label " + std::to_string(lab) + " out of range [0," +
                            std::to_string(k) + ") at row " + std::to_string(r));
        }
        acc -= std::log(std::max(pv[r * k + static_cast<std::size_t>(lab)], kLogClamp));
    }
    Tensor out = Tensor::scalar(scale * acc);
    ensure_finite(out, "cross_entropy");
    auto labs = std::make_shared<std::vector<int>>(labels);
    auto backward = [labs, k, scale](Tape& tp, std::int32_t id, const Tensor& gout) {
        const auto& n = tp.node(id);
        const Tensor& pv = tp.node(n.inputs[0]).value;
        Tensor& g = tp.grad_buffer(n.inputs[0]);
        for (std::size_t r = 0; r < labs->size(); ++r) {
            const std::size_t idx = r * k + static_cast<std::size_t>((*labs)[r]);
            if (pv[idx] > kLogClamp) {
                g[idx] += gout[0] * scale * (-1.0 / pv[idx]);
            }
            // clamped rows contribute a constant, hence zero gradient
        }
    };
    return t.push(std::move(out), {probs.id}, backward);
}

}  // namespace facefuse::ops
