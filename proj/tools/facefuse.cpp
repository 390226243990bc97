#include <iostream>
#include <string>
#include <vector>

#include "facefuse/commands.hpp"

namespace {

using namespace facefuse;

void usage(std::ostream& os) {
    os << "usage: facefuse <command> [--config=FILE] [--key=value ...]\n"
          "\n"
          "commands:\n"
          "  train      train a model (requires data.manifest)\n"
          "  eval       evaluate a checkpoint (--checkpoint=PATH [--split=test]\n"
          "             [--data.manifest=PATH] [--model.scenario=...] [--out=DIR])\n"
          "  gradcheck  run the finite-difference gradient suite\n"
          "  gen-synth  generate a synthetic labeled dataset (--out=DIR)\n"
          "  compare    merge metrics files (compare A.csv B.csv ... [--out=DIR])\n"
          "\n"
          "config keys are key=value lines; --key=value flags override the file.\n"
          "common flags: --seed=N --out=PATH\n";
}

struct Args {
    KeyValues flags;
    std::vector<std::string> positional;
    std::string config_path;
};

Args parse_args(int argc, char** argv, int first) {
    Args args;
    for (int i = first; i < argc; ++i) {
        const std::string a = argv[i];
        if (a.rfind("--", 0) == 0) {
            const std::size_t eq = a.find('=');
            if (eq == std::string::npos || eq == 2) {
                throw ConfigError("flag '" + a + "' must have the form --key=value");
            }
            const std::string key = a.substr(2, eq - 2);
            if (key == "config") {
                args.config_path = a.substr(eq + 1);
                continue;
            }
            if (args.flags.count(key)) throw ConfigError("duplicate flag --" + key);
            args.flags.emplace(key, a.substr(eq + 1));
        } else {
            args.positional.push_back(a);
        }
    }
    return args;
}

KeyValues merged_config(const Args& args) {
    KeyValues kv;
    if (!args.config_path.empty()) kv = load_config_file(args.config_path);
    for (const auto& [k, v] : args.flags) kv[k] = v;
    return kv;
}

std::string take_flag(KeyValues& kv, const std::string& key, const std::string& fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    std::string v = it->second;
    kv.erase(it);
    return v;
}

int dispatch(int argc, char** argv) {
    if (argc < 2) {
        usage(std::cerr);
        return 1;
    }
    const std::string cmd = argv[1];
    if (cmd == "--help" || cmd == "-h" || cmd == "help") {
        usage(std::cout);
        return 0;
    }
    Args args = parse_args(argc, argv, 2);

    if (cmd == "train") {
        if (!args.positional.empty()) {
            throw ConfigError("train takes no positional arguments");
        }
        const RunConfig cfg = RunConfig::from_keyvalues(merged_config(args));
        return run_train(cfg, std::cout);
    }
    if (cmd == "eval") {
        if (!args.positional.empty() || !args.config_path.empty()) {
            throw ConfigError("eval takes only --key=value flags");
        }
        KeyValues kv = args.flags;
        EvalOptions opt;
        opt.checkpoint = take_flag(kv, "checkpoint", "");
        opt.manifest = take_flag(kv, "data.manifest", "");
        opt.scenario = take_flag(kv, "model.scenario", "");
        opt.split = take_flag(kv, "split", "test");
        opt.out = take_flag(kv, "out", "");
        if (!kv.empty()) throw ConfigError("unknown eval flag '--" + kv.begin()->first + "'");
        return run_eval(opt, std::cout);
    }
    if (cmd == "gradcheck") {
        if (!args.positional.empty() || !args.flags.empty() || !args.config_path.empty()) {
            throw ConfigError("gradcheck takes no arguments");
        }
        return run_gradcheck(std::cout);
    }
    if (cmd == "gen-synth") {
        if (!args.positional.empty()) {
            throw ConfigError("gen-synth takes no positional arguments");
        }
        const SynthConfig cfg = SynthConfig::from_keyvalues(merged_config(args));
        return run_gen_synth(cfg, std::cout);
    }
    if (cmd == "compare") {
        if (!args.config_path.empty()) throw ConfigError("compare does not read a config file");
        KeyValues kv = args.flags;
        CompareOptions opt;
        opt.inputs = args.positional;
        opt.out = take_flag(kv, "out", "compare");
        if (!kv.empty()) throw ConfigError("unknown compare flag '--" + kv.begin()->first + "'");
        return run_compare(opt, std::cout);
    }
    std::cerr << "error: unknown command '" << cmd << "'\n";
    usage(std::cerr);
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
