#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "facefuse/dataset.hpp"
#include "facefuse/optim.hpp"

namespace facefuse {

using KeyValues = std::map<std::string, std::string>;

// key=value lines; blank lines and '#' comments are skipped.
KeyValues parse_keyvalues(const std::string& text, const std::string& source);
KeyValues load_config_file(const std::filesystem::path& path);
std::string format_real(Real v);  // %.17g, round-trip exact

enum class TrainMode { Joint, AttributesOnly };

struct RunConfig {
    Scenario scenario = Scenario::NPD;
    ArchConfig arch;
    HyperParams hp;
    std::size_t batch = 16;
    std::size_t epochs = 50;
    TrainMode mode = TrainMode::Joint;
    Real train_fraction = 0.8;
    bool keep_epoch_checkpoints = false;
    std::string manifest;
    std::uint64_t seed = 1;
    std::string out = "run";

    // Rejects unknown keys so typos never pass silently.
    static RunConfig from_keyvalues(const KeyValues& kv);
    KeyValues to_keyvalues() const;      // every knob materialized
    std::string serialized() const;      // canonical sorted key=value text
};

struct SynthConfig {
    SynthSpec spec;
    std::uint64_t seed = 1;
    std::string out = "synth";
    bool force = false;

    static SynthConfig from_keyvalues(const KeyValues& kv);
};

}  // namespace facefuse
