#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "facefuse/optim.hpp"

namespace facefuse {

// Everything a run needs to resume or evaluate: model weights, both
// optimizer states, the full serialized run config, and the dataset
// bookkeeping (fingerprint, kept attributes, channel means). All tensors
// are stored at 64-bit so a round-trip is bitwise exact.
struct Checkpoint {
    FusionModel model;
    GroupOptState opt1;
    GroupOptState opt2;
    std::string config_text;
    std::uint64_t dataset_fingerprint = 0;
    std::vector<std::size_t> kept_attributes;
    std::vector<std::string> kept_attribute_names;
    std::vector<Real> means;
    std::uint64_t epoch = 0;
};

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace facefuse
