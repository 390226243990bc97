#include "facefuse/model.hpp"

namespace facefuse {

const char* scenario_name(Scenario s) {
    switch (s) {
        case Scenario::NPD: return "npd";
        case Scenario::GT: return "gt";
        case Scenario::PA: return "pa";
    }
    throw ContractError("unknown scenario");
}

Scenario parse_scenario(const std::string& s) {
    if (s == "npd") return Scenario::NPD;
    if (s == "gt") return Scenario::GT;
    if (s == "pa") return Scenario::PA;
    throw ConfigError("unknown scenario '" + s + "' (expected npd, gt, or pa)");
}

void ArchConfig::validate() const {
    if (input_channels == 0 || input_h == 0 || input_w == 0) {
        throw ConfigError("architecture input extents must be positive");
    }
    if (stage_channels.empty()) throw ConfigError("architecture needs at least one conv stage");
    if (stage_channels.size() != stage_convs.size()) {
        throw ConfigError("arch.stage_channels and arch.stage_convs must have equal length");
    }
    for (std::size_t c : stage_channels) {
        if (c == 0) throw ConfigError("stage channel width must be positive");
    }
    for (std::size_t n : stage_convs) {
        if (n == 0) throw ConfigError("convs per stage must be positive");
    }
    if (fc_width == 0) throw ConfigError("arch.fc_width must be positive");
    const std::size_t div = std::size_t{1} << pool_stages();
    if (input_h % div != 0 || input_w % div != 0) {
        throw ConfigError("input " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                          " is not divisible by 2^" + std::to_string(pool_stages()) +
                          " pooling stages");
    }
}

std::vector<LayerSpec> ArchConfig::feature_specs() const {
    std::vector<LayerSpec> specs;
    std::size_t in_c = input_channels;
    for (std::size_t s = 0; s < stage_channels.size(); ++s) {
        const std::string stage = "s" + std::to_string(s + 1);
        for (std::size_t c = 0; c < stage_convs[s]; ++c) {
            const std::string idx = stage + "c" + std::to_string(c + 1);
            specs.push_back(conv3x3("conv_" + idx, in_c, stage_channels[s]));
            specs.push_back(relu_layer("relu_" + idx));
            in_c = stage_channels[s];
        }
        specs.push_back(maxpool2_layer("pool_" + stage));
    }
    return specs;
}

std::vector<LayerSpec> ArchConfig::attribute_specs(std::size_t T) const {
    return {
        affine_layer("attr_fc1", pooled_width(), fc_width),
        relu_layer("attr_relu1"),
        affine_layer("attr_fc2", fc_width, T * 2),
    };
}

std::vector<LayerSpec> ArchConfig::identity_specs(std::size_t C, std::size_t fusion_width) const {
    return {
        affine_layer("id_fc1", pooled_width() + fusion_width, fc_width),
        relu_layer("id_relu1"),
        affine_layer("id_fc2", fc_width, C),
        softmax_layer("id_softmax"),
    };
}

FusionModel FusionModel::init(Scenario scenario, ArchConfig arch, std::size_t T, std::size_t C,
                              std::uint64_t seed) {
    arch.validate();
    if (T == 0) throw ConfigError("attribute count T must be positive");
    if (C < 2) throw ConfigError("identity count C must be at least 2");
    FusionModel m;
    m.scenario = scenario;
    m.arch = std::move(arch);
    m.T = T;
    m.C = C;
    m.w1 = init_params(m.arch.feature_specs(), seed);
    m.w21 = init_params(m.arch.attribute_specs(T), seed + 1);
    m.w22 = init_params(m.arch.identity_specs(C, m.fusion_width()), seed + 2);
    m.validate();
    return m;
}

void FusionModel::validate() const {
    arch.validate();
    auto it = w22.find("id_fc1.w");
    if (it == w22.end()) throw ContractError("identity branch missing id_fc1.w");
    if (it->second.extent(0) != identity_in_width()) {
        throw ContractError("identity branch input width " + std::to_string(it->second.extent(0)) +
                            " does not match pooled width + fusion slot " +
                            std::to_string(identity_in_width()));
    }
    auto out = w22.find("id_fc2.w");
    if (out == w22.end()) throw ContractError("identity branch missing id_fc2.w");
    if (out->second.extent(1) != C) {
        throw ContractError("identity branch output width does not match identity count");
    }
    auto attr = w21.find("attr_fc2.w");
    if (attr == w21.end()) throw ContractError("attribute branch missing attr_fc2.w");
    if (attr->second.extent(1) != T * 2) {
        throw ContractError("attribute branch output width does not match 2T");
    }
}

StagedModel stage(Tape& tape, const FusionModel& model) {
    return {stage_params(tape, model.w1), stage_params(tape, model.w21),
            stage_params(tape, model.w22)};
}

Var features(const FusionModel& model, const VarSet& p1, Var x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 4 || xv.extent(1) != model.arch.input_channels ||
        xv.extent(2) != model.arch.input_h || xv.extent(3) != model.arch.input_w) {
        throw DimensionError("features expects Nx" + std::to_string(model.arch.input_channels) +
                             "x" + std::to_string(model.arch.input_h) + "x" +
                             std::to_string(model.arch.input_w) + " input, got " +
                             shape_str(xv.shape()));
    }
    Var out = forward_stack(model.arch.feature_specs(), p1, x);
    return ops::reshape(out, {out.value().extent(0), model.arch.pooled_width()});
}

Var predict_attributes(const FusionModel& model, const VarSet& p21, Var feats) {
    Var logits = forward_stack(model.arch.attribute_specs(model.T), p21, feats);
    Var pairs = ops::reshape(logits, {logits.value().extent(0), model.T, 2});
    return ops::softmax(pairs);
}

Var positive_slice(Var attribute_probs) { return ops::select_last(attribute_probs, 1); }

Var fuse(Var feats, Var attrs, Scenario scenario) {
    if (scenario == Scenario::NPD) {
        throw ContractError("fuse is not applicable under the npd scenario");
    }
    const Tensor& fv = feats.value();
    const Tensor& av = attrs.value();
    if (fv.rank() != 2 || av.rank() != 2 || fv.extent(0) != av.extent(0)) {
        throw DimensionError("fuse expects matching NxD_pool and NxT, got " +
                             shape_str(fv.shape()) + " and " + shape_str(av.shape()));
    }
    return ops::concat({feats, attrs}, 1);
}

Var predict_identity(const FusionModel& model, const VarSet& p22, Var fused) {
    return forward_stack(model.arch.identity_specs(model.C, model.fusion_width()), p22, fused);
}

}  // namespace facefuse
