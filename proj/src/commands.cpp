#include "facefuse/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "facefuse/gradcheck.hpp"

namespace facefuse {

namespace {

void check_arch_matches_dataset(const ArchConfig& arch, const Dataset& d) {
    const Shape want{arch.input_channels, arch.input_h, arch.input_w};
    if (d.image_shape != want) {
        throw ConfigError("arch expects input " + shape_str(want) + " but dataset '" +
                          d.manifest_path.string() + "' provides " + shape_str(d.image_shape));
    }
}

std::vector<std::vector<std::size_t>> chunked(const std::vector<std::size_t>& order,
                                              std::size_t batch) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < order.size(); i += batch) {
        const std::size_t end = std::min(order.size(), i + batch);
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

std::vector<std::string> subset_names(const std::vector<std::string>& names,
                                      const std::vector<std::size_t>& kept) {
    std::vector<std::string> out;
    out.reserve(kept.size());
    for (std::size_t j : kept) out.push_back(names[j]);
    return out;
}

}  // namespace

int run_train(const RunConfig& cfg, std::ostream& log) {
    if (cfg.manifest.empty()) throw ConfigError("data.manifest is required for train");
    const Dataset d = load_dataset(cfg.manifest);
    check_arch_matches_dataset(cfg.arch, d);

    const auto [train_idx, test_idx] = split_per_identity(d, cfg.train_fraction, cfg.seed);
    const std::vector<std::size_t> kept = filter_identity_attributes(d, train_idx);
    if (kept.empty()) {
        throw DataError("no attribute is constant per identity on the train split; "
                        "nothing to fuse or predict");
    }
    const std::vector<std::string> kept_names = subset_names(d.attribute_names, kept);
    const std::vector<Real> means = channel_means(d, train_idx);
    const std::size_t C = d.identity_count();

    FusionModel model = FusionModel::init(cfg.scenario, cfg.arch, kept.size(), C, cfg.seed);
    auto [opt1, opt2] = make_opt_states(model);
    const std::string config_text = cfg.serialized();

    const std::filesystem::path out_dir(cfg.out);
    std::filesystem::create_directories(out_dir);
    MetricsWriter metrics(out_dir / "metrics.csv", config_text, d.fingerprint, kept_names);

    log << "train: scenario=" << scenario_name(cfg.scenario) << " mode="
        << (cfg.mode == TrainMode::Joint ? "joint" : "attributes-only") << " train="
        << train_idx.size() << " test=" << test_idx.size() << " identities=" << C
        << " attributes=" << kept.size() << "\n";

    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&t0] {
        return std::chrono::duration<Real>(std::chrono::steady_clock::now() - t0).count();
    };

    std::size_t iteration = 0;
    StepResult last;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = train_idx;
        std::mt19937_64 rng(mix_seed(cfg.seed, epoch));
        deterministic_shuffle(order, rng);
        for (const auto& chunk : chunked(order, cfg.batch)) {
            const Batch batch = make_batch(d, chunk, means, kept);
            if (cfg.mode == TrainMode::Joint) {
                last = joint_step(model, opt1, opt2, cfg.hp, batch);
            } else {
                last = step_attributes(model, opt1, cfg.hp, batch);
            }
            ++iteration;
            metrics.row(epoch, iteration, last.l1, last.l2, last.id_acc, last.attr_acc,
                        elapsed());
        }
        Checkpoint ck{model, opt1, opt2, config_text, d.fingerprint,
                      kept,  kept_names, means, epoch};
        save_checkpoint(ck, out_dir / "checkpoint.fuse");
        if (cfg.keep_epoch_checkpoints) {
            save_checkpoint(ck, out_dir / ("checkpoint_epoch" + std::to_string(epoch) + ".fuse"));
        }
    }

    log << "train: " << iteration << " iterations in " << format_real(elapsed()) << "s";
    if (last.l1) log << "  final l1=" << format_real(*last.l1);
    if (last.l2) log << "  final l2=" << format_real(*last.l2);
    log << "\n";
    log << "train: wrote " << (out_dir / "metrics.csv").string() << " and "
        << (out_dir / "checkpoint.fuse").string() << "\n";
    return 0;
}

std::vector<std::size_t> map_attribute_columns(const Dataset& d,
                                               const std::vector<std::string>& names) {
    std::vector<std::size_t> cols;
    cols.reserve(names.size());
    for (const std::string& name : names) {
        const auto it = std::find(d.attribute_names.begin(), d.attribute_names.end(), name);
        if (it == d.attribute_names.end()) {
            throw DataError("dataset '" + d.manifest_path.string() +
                            "' lacks attribute '" + name + "' required by the checkpoint");
        }
        cols.push_back(static_cast<std::size_t>(it - d.attribute_names.begin()));
    }
    return cols;
}

EvalReport evaluate_subset(const Checkpoint& ck, const Dataset& d,
                           const std::vector<std::size_t>& indices,
                           const std::vector<std::size_t>& attr_cols, std::size_t batch_size) {
    if (indices.empty()) throw DataError("evaluation subset is empty");
    if (batch_size == 0) throw ConfigError("evaluation batch size must be positive");
    const FusionModel& model = ck.model;

    EvalReport report;
    report.attribute_accuracy.assign(model.T, 0.0);
    std::size_t id_hits = 0;
    std::vector<std::size_t> attr_hits(model.T, 0);

    for (const auto& chunk : chunked(indices, batch_size)) {
        const Batch batch = make_batch(d, chunk, ck.means, attr_cols);
        const std::size_t n = chunk.size();
        Tape tape;
        StagedModel staged = stage(tape, model);
        Var x = tape.leaf(batch.images);
        Var feats = features(model, staged.p1, x);
        Var attr_probs = predict_attributes(model, staged.p21, feats);
        Var fused = feats;
        if (model.scenario == Scenario::GT) {
            fused = fuse(feats, tape.leaf(batch.attributes), model.scenario);
        } else if (model.scenario == Scenario::PA) {
            fused = fuse(feats, positive_slice(attr_probs), model.scenario);
        }
        Var id_probs = predict_identity(model, staged.p22, fused);

        id_hits += static_cast<std::size_t>(std::llround(
            identity_accuracy(id_probs.value(), batch.identities) * static_cast<Real>(n)));
        const std::vector<Real> acc = attribute_accuracy(attr_probs.value(), batch.attributes);
        for (std::size_t j = 0; j < model.T; ++j) {
            attr_hits[j] += static_cast<std::size_t>(
                std::llround(acc[j] * static_cast<Real>(n)));
        }
    }

    report.samples = indices.size();
    report.identity_accuracy = static_cast<Real>(id_hits) / static_cast<Real>(indices.size());
    for (std::size_t j = 0; j < model.T; ++j) {
        report.attribute_accuracy[j] =
            static_cast<Real>(attr_hits[j]) / static_cast<Real>(indices.size());
    }
    return report;
}

int run_eval(const EvalOptions& opt, std::ostream& log) {
    if (opt.checkpoint.empty()) throw ConfigError("eval requires --checkpoint=PATH");
    if (opt.split != "train" && opt.split != "test" && opt.split != "all") {
        throw ConfigError("eval split must be train, test, or all; got '" + opt.split + "'");
    }
    const Checkpoint ck = load_checkpoint(opt.checkpoint);
    if (!opt.scenario.empty() && parse_scenario(opt.scenario) != ck.model.scenario) {
        throw ConfigError("scenario mismatch: checkpoint '" + opt.checkpoint +
                          "' was trained under '" + scenario_name(ck.model.scenario) +
                          "' but eval requested '" + opt.scenario + "'");
    }
    const RunConfig cfg =
        RunConfig::from_keyvalues(parse_keyvalues(ck.config_text, "checkpoint config"));
    const std::string manifest = opt.manifest.empty() ? cfg.manifest : opt.manifest;
    if (manifest.empty()) throw ConfigError("eval needs a dataset manifest");
    const Dataset d = load_dataset(manifest);
    check_arch_matches_dataset(ck.model.arch, d);

    bool fingerprint_mismatch = false;
    if (d.fingerprint != ck.dataset_fingerprint) {
        fingerprint_mismatch = true;
        log << "warning: dataset fingerprint " << hex64(d.fingerprint)
            << " differs from the checkpoint's " << hex64(ck.dataset_fingerprint) << "\n";
    }
    const std::vector<std::size_t> attr_cols = map_attribute_columns(d, ck.kept_attribute_names);

    const auto [train_idx, test_idx] = split_per_identity(d, cfg.train_fraction, cfg.seed);
    std::vector<std::size_t> subset;
    if (opt.split == "train") {
        subset = train_idx;
    } else if (opt.split == "test") {
        subset = test_idx;
    } else {
        subset.resize(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) subset[i] = i;
    }

    const EvalReport report = evaluate_subset(ck, d, subset, attr_cols, cfg.batch);

    log << "eval: scenario=" << scenario_name(ck.model.scenario) << " split=" << opt.split << " ("
        << report.samples << " samples)\n";
    log << "identity_accuracy=" << format_real(report.identity_accuracy) << "\n";
    for (std::size_t j = 0; j < ck.kept_attribute_names.size(); ++j) {
        log << "attr:" << ck.kept_attribute_names[j] << "="
            << format_real(report.attribute_accuracy[j]) << "\n";
    }

    const std::filesystem::path out_dir =
        opt.out.empty() ? std::filesystem::path(opt.checkpoint).parent_path()
                        : std::filesystem::path(opt.out);
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
    const std::filesystem::path out_file = out_dir / ("eval_" + opt.split + ".csv");
    std::ofstream os(out_file, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write '" + out_file.string() + "'");
    os << "# facefuse-eval v1\n";
    os << "# fingerprint " << hex64(d.fingerprint) << "\n";
    if (fingerprint_mismatch) {
        os << "# warning fingerprint differs from checkpoint "
           << hex64(ck.dataset_fingerprint) << "\n";
    }
    std::istringstream cfg_lines(ck.config_text);
    std::string line;
    while (std::getline(cfg_lines, line)) {
        if (!line.empty()) os << "# cfg " << line << "\n";
    }
    os << "metric,value\n";
    os << "scenario," << scenario_name(ck.model.scenario) << "\n";
    os << "split," << opt.split << "\n";
    os << "samples," << report.samples << "\n";
    os << "identity_accuracy," << format_real(report.identity_accuracy) << "\n";
    for (std::size_t j = 0; j < ck.kept_attribute_names.size(); ++j) {
        os << "attr:" << ck.kept_attribute_names[j] << ","
           << format_real(report.attribute_accuracy[j]) << "\n";
    }
    log << "eval: wrote " << out_file.string() << "\n";
    return 0;
}

int run_gen_synth(const SynthConfig& cfg, std::ostream& log) {
    const std::filesystem::path out_dir(cfg.out);
    if (std::filesystem::exists(out_dir) && !std::filesystem::is_empty(out_dir) && !cfg.force) {
        throw ConfigError("output directory '" + cfg.out +
                          "' is not empty; pass --force=true to overwrite");
    }
    const SynthGroundTruth gt = gen_synthetic(cfg.spec, cfg.seed, out_dir);
    log << "gen-synth: wrote " << gt.manifest.string() << "\n";
    log << "identities=" << cfg.spec.num_identities << " images_per_identity="
        << cfg.spec.images_per_identity << " attributes=" << gt.attribute_names.size() << "\n";
    log << "identity attribute map (identity: bits " << gt.identity_attributes[0].size()
        << " wide):\n";
    for (std::size_t id = 0; id < gt.identity_attributes.size(); ++id) {
        log << "  " << id << ":";
        for (int b : gt.identity_attributes[id]) log << " " << b;
        log << "\n";
    }
    log << "confusable_pairs=" << gt.confusable_pairs.size();
    for (const auto& [a, b] : gt.confusable_pairs) log << " (" << a << "," << b << ")";
    log << "\n";
    return 0;
}

}  // namespace facefuse
