#include "facefuse/config.hpp"

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

namespace facefuse {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::optional<std::string> take(KeyValues& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long x = std::stoull(v, &pos);
        if (pos == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw ConfigError("key '" + key + "' expects a non-negative integer, got '" + v + "'");
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    return static_cast<std::size_t>(parse_u64(key, v));
}

Real parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const Real x = std::stod(v, &pos);
        if (pos == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw ConfigError("key '" + key + "' expects a real number, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError("key '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::string cur;
    std::istringstream ss(v);
    while (std::getline(ss, cur, ',')) out.push_back(parse_size(key, cur));
    if (out.empty()) throw ConfigError("key '" + key + "' expects a comma-separated list");
    return out;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

}  // namespace

std::string format_real(Real v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

KeyValues parse_keyvalues(const std::string& text, const std::string& source) {
    KeyValues kv;
    std::istringstream lines(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError(source + ":" + std::to_string(lineno) +
                              ": expected key=value, got '" + t + "'");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (kv.count(key)) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": duplicate key '" + key +
                              "'");
        }
        kv.emplace(key, value);
    }
    return kv;
}

KeyValues load_config_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_keyvalues(text, path.string());
}

RunConfig RunConfig::from_keyvalues(const KeyValues& in) {
    KeyValues kv = in;
    RunConfig c;
    if (auto v = take(kv, "model.scenario")) c.scenario = parse_scenario(*v);
    if (auto v = take(kv, "arch.input_channels")) {
        c.arch.input_channels = parse_size("arch.input_channels", *v);
    }
    if (auto v = take(kv, "arch.input_h")) c.arch.input_h = parse_size("arch.input_h", *v);
    if (auto v = take(kv, "arch.input_w")) c.arch.input_w = parse_size("arch.input_w", *v);
    if (auto v = take(kv, "arch.stage_channels")) {
        c.arch.stage_channels = parse_size_list("arch.stage_channels", *v);
    }
    if (auto v = take(kv, "arch.stage_convs")) {
        c.arch.stage_convs = parse_size_list("arch.stage_convs", *v);
    }
    if (auto v = take(kv, "arch.fc_width")) c.arch.fc_width = parse_size("arch.fc_width", *v);
    if (auto v = take(kv, "opt.alpha")) c.hp.alpha = parse_real("opt.alpha", *v);
    if (auto v = take(kv, "opt.beta1")) c.hp.beta1 = parse_real("opt.beta1", *v);
    if (auto v = take(kv, "opt.beta2")) c.hp.beta2 = parse_real("opt.beta2", *v);
    if (auto v = take(kv, "opt.eps_guard")) c.hp.eps_guard = parse_real("opt.eps_guard", *v);
    if (auto v = take(kv, "train.batch")) c.batch = parse_size("train.batch", *v);
    if (auto v = take(kv, "train.epochs")) c.epochs = parse_size("train.epochs", *v);
    if (auto v = take(kv, "train.mode")) {
        if (*v == "joint") {
            c.mode = TrainMode::Joint;
        } else if (*v == "attributes-only") {
            c.mode = TrainMode::AttributesOnly;
        } else {
            throw ConfigError("train.mode must be joint or attributes-only, got '" + *v + "'");
        }
    }
    if (auto v = take(kv, "train.fraction")) c.train_fraction = parse_real("train.fraction", *v);
    if (auto v = take(kv, "train.keep_epoch_checkpoints")) {
        c.keep_epoch_checkpoints = parse_bool("train.keep_epoch_checkpoints", *v);
    }
    if (auto v = take(kv, "data.manifest")) c.manifest = *v;
    if (auto v = take(kv, "seed")) c.seed = parse_u64("seed", *v);
    if (auto v = take(kv, "out")) c.out = *v;
    if (!kv.empty()) {
        throw ConfigError("unknown config key '" + kv.begin()->first + "'");
    }

    c.hp.validate();
    c.arch.validate();
    if (c.batch == 0) throw ConfigError("train.batch must be positive");
    if (c.epochs == 0) throw ConfigError("train.epochs must be positive");
    if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) {
        throw ConfigError("train.fraction must lie in (0,1)");
    }
    if (c.out.empty()) throw ConfigError("out must not be empty");
    return c;
}

KeyValues RunConfig::to_keyvalues() const {
    KeyValues kv;
    kv["model.scenario"] = scenario_name(scenario);
    kv["arch.input_channels"] = std::to_string(arch.input_channels);
    kv["arch.input_h"] = std::to_string(arch.input_h);
    kv["arch.input_w"] = std::to_string(arch.input_w);
    kv["arch.stage_channels"] = join_sizes(arch.stage_channels);
    kv["arch.stage_convs"] = join_sizes(arch.stage_convs);
    kv["arch.fc_width"] = std::to_string(arch.fc_width);
    kv["opt.alpha"] = format_real(hp.alpha);
    kv["opt.beta1"] = format_real(hp.beta1);
    kv["opt.beta2"] = format_real(hp.beta2);
    kv["opt.eps_guard"] = format_real(hp.eps_guard);
    kv["train.batch"] = std::to_string(batch);
    kv["train.epochs"] = std::to_string(epochs);
    kv["train.mode"] = mode == TrainMode::Joint ? "joint" : "attributes-only";
    kv["train.fraction"] = format_real(train_fraction);
    kv["train.keep_epoch_checkpoints"] = keep_epoch_checkpoints ? "true" : "false";
    kv["data.manifest"] = manifest;
    kv["seed"] = std::to_string(seed);
    kv["out"] = out;
    return kv;
}

std::string RunConfig::serialized() const {
    std::string out_text;
    for (const auto& [k, v] : to_keyvalues()) {
        out_text += k;
        out_text += "=";
        out_text += v;
        out_text += "\n";
    }
    return out_text;
}

SynthConfig SynthConfig::from_keyvalues(const KeyValues& in) {
    KeyValues kv = in;
    SynthConfig c;
    if (auto v = take(kv, "synth.identities")) {
        c.spec.num_identities = parse_size("synth.identities", *v);
    }
    if (auto v = take(kv, "synth.images")) {
        c.spec.images_per_identity = parse_size("synth.images", *v);
    }
    if (auto v = take(kv, "synth.channels")) c.spec.channels = parse_size("synth.channels", *v);
    if (auto v = take(kv, "synth.size")) c.spec.image_size = parse_size("synth.size", *v);
    if (auto v = take(kv, "synth.pairs")) {
        c.spec.confusable_pairs = parse_size("synth.pairs", *v);
    }
    if (auto v = take(kv, "synth.transient")) {
        c.spec.transient_attributes = parse_size("synth.transient", *v);
    }
    if (auto v = take(kv, "synth.noise")) c.spec.noise = parse_real("synth.noise", *v);
    if (auto v = take(kv, "seed")) c.seed = parse_u64("seed", *v);
    if (auto v = take(kv, "out")) c.out = *v;
    if (auto v = take(kv, "force")) c.force = parse_bool("force", *v);
    if (!kv.empty()) {
        throw ConfigError("unknown config key '" + kv.begin()->first + "'");
    }
    c.spec.validate();
    if (c.out.empty()) throw ConfigError("out must not be empty");
    return c;
}

}  // namespace facefuse
