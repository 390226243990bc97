#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "facefuse/layers.hpp"

namespace facefuse {

enum class Scenario { NPD, GT, PA };

const char* scenario_name(Scenario s);
Scenario parse_scenario(const std::string& s);

struct ArchConfig {
    std::size_t input_channels = 3;
    std::size_t input_h = 64;
    std::size_t input_w = 64;
    std::vector<std::size_t> stage_channels = {16, 32, 64, 128, 128};
    std::vector<std::size_t> stage_convs = {1, 1, 2, 2, 2};
    std::size_t fc_width = 256;

    void validate() const;
    std::size_t pool_stages() const { return stage_channels.size(); }
    std::size_t pooled_h() const { return input_h >> pool_stages(); }
    std::size_t pooled_w() const { return input_w >> pool_stages(); }
    std::size_t pooled_width() const {
        return stage_channels.back() * pooled_h() * pooled_w();
    }

    std::vector<LayerSpec> feature_specs() const;
    std::vector<LayerSpec> attribute_specs(std::size_t T) const;
    std::vector<LayerSpec> identity_specs(std::size_t C, std::size_t fusion_width) const;
};

// Every scenario instantiates all three parameter sets with identical shapes
// except the identity branch input, which loses the fusion slot under NPD.
struct FusionModel {
    Scenario scenario = Scenario::NPD;
    ArchConfig arch;
    std::size_t T = 0;
    std::size_t C = 0;
    ParamSet w1;
    ParamSet w21;
    ParamSet w22;

    static FusionModel init(Scenario scenario, ArchConfig arch, std::size_t T, std::size_t C,
                            std::uint64_t seed);

    std::size_t fusion_width() const { return scenario == Scenario::NPD ? 0 : T; }
    std::size_t identity_in_width() const { return arch.pooled_width() + fusion_width(); }
    void validate() const;
};

struct StagedModel {
    VarSet p1;
    VarSet p21;
    VarSet p22;
};

struct Batch {
    Tensor images;                // N x C x H x W
    std::vector<int> identities;  // N
    Tensor attributes;            // N x T with values in {0,1}
};

StagedModel stage(Tape& tape, const FusionModel& model);

// Flattened output of the final pooling stage, N x D_pool.
Var features(const FusionModel& model, const VarSet& p1, Var x);

// T independent binary distributions per sample, N x T x 2.
Var predict_attributes(const FusionModel& model, const VarSet& p21, Var feats);

// Positive-category probability per attribute, N x T.
Var positive_slice(Var attribute_probs);

// Concatenates the attribute payload onto pooled features. PA passes the
// on-tape positive slice; GT passes a leaf holding {0,1} bits.
Var fuse(Var feats, Var attrs, Scenario scenario);

// C-way identity distribution, N x C.
Var predict_identity(const FusionModel& model, const VarSet& p22, Var fused);

}  // namespace facefuse
