#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "facefuse/ops.hpp"
#include "facefuse/tape.hpp"
#include "facefuse/tensor.hpp"

namespace facefuse {

enum class LayerKind { Conv3x3, Maxpool2, Affine, Relu, Softmax };

const char* layer_kind_name(LayerKind kind);

struct LayerSpec {
    LayerKind kind;
    std::size_t in_width = 0;   // conv: input channels; affine: input width
    std::size_t width = 0;      // conv: filter count; affine: output width
    std::string name;
};

LayerSpec conv3x3(std::string name, std::size_t in_channels, std::size_t out_channels);
LayerSpec maxpool2_layer(std::string name);
LayerSpec affine_layer(std::string name, std::size_t in_width, std::size_t out_width);
LayerSpec relu_layer(std::string name);
LayerSpec softmax_layer(std::string name);

// Lexicographic key order keeps parameter iteration stable, which pins
// optimizer state alignment across runs.
using ParamSet = std::map<std::string, Tensor>;
using VarSet = std::map<std::string, Var>;

void validate_specs(const std::vector<LayerSpec>& specs);

// Fan-in-scaled zero-mean normal weights (stddev sqrt(2/fan_in)), zero
// biases. Conv layers carry only a kernel (no bias term).
ParamSet init_params(const std::vector<LayerSpec>& specs, std::uint64_t seed);

std::size_t param_count(const std::vector<LayerSpec>& specs);

// Output shape of the stack on `in`, validating every layer; throws
// DimensionError naming the offending layer.
Shape infer_shape(const std::vector<LayerSpec>& specs, Shape in);

// Registers every tensor in `params` as a tape leaf, keyed by name.
VarSet stage_params(Tape& tape, const ParamSet& params);

Var forward_stack(const std::vector<LayerSpec>& specs, const VarSet& params, Var x);

}  // namespace facefuse
