#include "facefuse/layers.hpp"

#include <cmath>
#include <set>

namespace facefuse {

namespace {

const Var& find_param(const VarSet& params, const std::string& key) {
    auto it = params.find(key);
    if (it == params.end()) {
        throw ContractError("parameter '" + key + "' missing from staged set");
    }
    return it->second;
}

[[noreturn]] void layer_shape_error(const LayerSpec& spec, const Shape& got,
                                    const std::string& want) {
    throw DimensionError("layer '" + spec.name + "' (" + layer_kind_name(spec.kind) + ") expects " +
                         want + ", got " + shape_str(got));
}

}  // namespace

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv3x3: return "conv3x3";
        case LayerKind::Maxpool2: return "maxpool2";
        case LayerKind::Affine: return "affine";
        case LayerKind::Relu: return "relu";
        case LayerKind::Softmax: return "softmax";
    }
    throw ContractError("unknown layer kind");
}

LayerSpec conv3x3(std::string name, std::size_t in_channels, std::size_t out_channels) {
    if (in_channels == 0 || out_channels == 0) {
        throw ConfigError("conv3x3 '" + name + "' needs positive channel counts");
    }
    return {LayerKind::Conv3x3, in_channels, out_channels, std::move(name)};
}

LayerSpec maxpool2_layer(std::string name) { return {LayerKind::Maxpool2, 0, 0, std::move(name)}; }

LayerSpec affine_layer(std::string name, std::size_t in_width, std::size_t out_width) {
    if (in_width == 0 || out_width == 0) {
        throw ConfigError("affine '" + name + "' needs positive widths");
    }
    return {LayerKind::Affine, in_width, out_width, std::move(name)};
}

LayerSpec relu_layer(std::string name) { return {LayerKind::Relu, 0, 0, std::move(name)}; }

LayerSpec softmax_layer(std::string name) { return {LayerKind::Softmax, 0, 0, std::move(name)}; }

void validate_specs(const std::vector<LayerSpec>& specs) {
    std::set<std::string> seen;
    for (const LayerSpec& s : specs) {
        if (s.name.empty()) throw ConfigError("layer with empty name");
        if (!seen.insert(s.name).second) {
            throw ConfigError("duplicate layer name '" + s.name + "'");
        }
    }
}

ParamSet init_params(const std::vector<LayerSpec>& specs, std::uint64_t seed) {
    validate_specs(specs);
    std::mt19937_64 rng(seed);
    ParamSet params;
    for (const LayerSpec& s : specs) {
        switch (s.kind) {
            case LayerKind::Conv3x3: {
                const Real fan_in = static_cast<Real>(s.in_width * 9);
                params.emplace(s.name + ".w",
                               random_normal({s.width, s.in_width, 3, 3},
                                             std::sqrt(2.0 / fan_in), rng));
                break;
            }
            case LayerKind::Affine: {
                const Real fan_in = static_cast<Real>(s.in_width);
                params.emplace(s.name + ".w",
                               random_normal({s.in_width, s.width}, std::sqrt(2.0 / fan_in), rng));
                params.emplace(s.name + ".b", Tensor::zeros({s.width}));
                break;
            }
            default:
                break;
        }
    }
    return params;
}

std::size_t param_count(const std::vector<LayerSpec>& specs) {
    std::size_t n = 0;
    for (const LayerSpec& s : specs) {
        switch (s.kind) {
            case LayerKind::Conv3x3: n += s.width * s.in_width * 9; break;
            case LayerKind::Affine: n += s.in_width * s.width + s.width; break;
            default: break;
        }
    }
    return n;
}

Shape infer_shape(const std::vector<LayerSpec>& specs, Shape in) {
    for (const LayerSpec& s : specs) {
        switch (s.kind) {
            case LayerKind::Conv3x3:
                if (in.size() != 4 || in[1] != s.in_width) {
                    layer_shape_error(s, in, "NxCxHxW with C=" + std::to_string(s.in_width));
                }
                in[1] = s.width;
                break;
            case LayerKind::Maxpool2:
                if (in.size() != 4 || in[2] % 2 != 0 || in[3] % 2 != 0) {
                    layer_shape_error(s, in, "NxCxHxW with even H,W");
                }
                in[2] /= 2;
                in[3] /= 2;
                break;
            case LayerKind::Affine:
                if (in.size() != 2 || in[1] != s.in_width) {
                    layer_shape_error(s, in, "NxD with D=" + std::to_string(s.in_width));
                }
                in[1] = s.width;
                break;
            case LayerKind::Relu:
                break;
            case LayerKind::Softmax:
                if (in.empty() || in.back() < 2) {
                    layer_shape_error(s, in, "a last axis of at least 2");
                }
                break;
        }
    }
    return in;
}

VarSet stage_params(Tape& tape, const ParamSet& params) {
    VarSet vars;
    for (const auto& [name, tensor] : params) {
        vars.emplace(name, tape.leaf(tensor));
    }
    return vars;
}

Var forward_stack(const std::vector<LayerSpec>& specs, const VarSet& params, Var x) {
    for (const LayerSpec& s : specs) {
        const Shape& in = x.value().shape();
        switch (s.kind) {
            case LayerKind::Conv3x3:
                if (in.size() != 4 || in[1] != s.in_width) {
                    layer_shape_error(s, in, "NxCxHxW with C=" + std::to_string(s.in_width));
                }
                x = ops::conv2d(x, find_param(params, s.name + ".w"));
                break;
            case LayerKind::Maxpool2:
                if (in.size() != 4 || in[2] % 2 != 0 || in[3] % 2 != 0) {
                    layer_shape_error(s, in, "NxCxHxW with even H,W");
                }
                x = ops::maxpool2(x);
                break;
            case LayerKind::Affine:
                if (in.size() != 2 || in[1] != s.in_width) {
                    layer_shape_error(s, in, "NxD with D=" + std::to_string(s.in_width));
                }
                x = ops::affine(x, find_param(params, s.name + ".w"),
                                find_param(params, s.name + ".b"));
                break;
            case LayerKind::Relu:
                x = ops::relu(x);
                break;
            case LayerKind::Softmax:
                if (in.empty() || in.back() < 2) {
                    layer_shape_error(s, in, "a last axis of at least 2");
                }
                x = ops::softmax(x);
                break;
        }
    }
    return x;
}

}  // namespace facefuse
