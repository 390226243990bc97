#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include "facefuse/commands.hpp"

namespace facefuse {

namespace {

std::string cfg_value(const KeyValues& kv, const std::string& key) {
    auto it = kv.find(key);
    return it == kv.end() ? std::string("?") : it->second;
}

// Last row carrying a value for the given extractor.
template <typename F>
std::optional<Real> final_value(const MetricsFile& mf, F&& get) {
    for (auto it = mf.rows.rbegin(); it != mf.rows.rend(); ++it) {
        if (auto v = get(*it)) return v;
    }
    return std::nullopt;
}

void embed_provenance(std::ofstream& os, const std::vector<std::string>& paths,
                      const std::vector<MetricsFile>& files, bool mismatch) {
    os << "# facefuse-compare v1\n";
    if (mismatch) os << "# warning dataset fingerprints differ across runs\n";
    for (std::size_t i = 0; i < files.size(); ++i) {
        os << "# run" << i + 1 << " path=" << paths[i] << " fingerprint="
           << hex64(files[i].fingerprint) << "\n";
        for (const auto& [k, v] : files[i].cfg) {
            os << "# cfg" << i + 1 << " " << k << "=" << v << "\n";
        }
    }
}

}  // namespace

int run_compare(const CompareOptions& opt, std::ostream& log) {
    if (opt.inputs.size() < 2) {
        throw ConfigError("compare needs at least 2 metrics files, got " +
                          std::to_string(opt.inputs.size()));
    }
    std::vector<MetricsFile> files;
    files.reserve(opt.inputs.size());
    for (const std::string& path : opt.inputs) files.push_back(read_metrics(path));

    bool mismatch = false;
    for (const MetricsFile& mf : files) {
        if (mf.fingerprint != files.front().fingerprint) mismatch = true;
    }
    if (mismatch) log << "warning: dataset fingerprints differ across runs\n";

    std::vector<std::string> labels;
    std::vector<bool> separate;
    for (std::size_t i = 0; i < files.size(); ++i) {
        const std::string scenario = cfg_value(files[i].cfg, "model.scenario");
        const std::string mode = cfg_value(files[i].cfg, "train.mode");
        const bool sep = mode == "attributes-only";
        separate.push_back(sep);
        labels.push_back("run" + std::to_string(i + 1) + ":" + scenario + (sep ? "-sep" : ""));
    }

    const std::filesystem::path out_dir(opt.out);
    std::filesystem::create_directories(out_dir);

    // Convergence: one primary-loss column per run (l1 for attributes-only
    // runs, l2 otherwise), aligned on iteration.
    std::set<std::size_t> iterations;
    std::vector<std::map<std::size_t, Real>> loss_by_iter(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) {
        for (const MetricsRowData& row : files[i].rows) {
            const auto v = separate[i] ? row.l1 : row.l2;
            if (v) {
                loss_by_iter[i][row.iteration] = *v;
                iterations.insert(row.iteration);
            }
        }
    }
    const std::filesystem::path conv_path = out_dir / "compare_convergence.csv";
    {
        std::ofstream os(conv_path, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot write '" + conv_path.string() + "'");
        embed_provenance(os, opt.inputs, files, mismatch);
        os << "iteration";
        for (const std::string& l : labels) os << "," << l;
        os << "\n";
        for (std::size_t it : iterations) {
            os << it;
            for (std::size_t i = 0; i < files.size(); ++i) {
                os << ",";
                auto f = loss_by_iter[i].find(it);
                if (f != loss_by_iter[i].end()) os << format_real(f->second);
            }
            os << "\n";
        }
    }

    // Long format for plotting.
    const std::filesystem::path long_path = out_dir / "compare_long.csv";
    {
        std::ofstream os(long_path, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot write '" + long_path.string() + "'");
        embed_provenance(os, opt.inputs, files, mismatch);
        os << "run,scenario,mode,epoch,iteration,metric,value\n";
        for (std::size_t i = 0; i < files.size(); ++i) {
            const std::string scenario = cfg_value(files[i].cfg, "model.scenario");
            const std::string mode = cfg_value(files[i].cfg, "train.mode");
            auto emit = [&](const MetricsRowData& row, const std::string& metric,
                            const std::optional<Real>& v) {
                if (!v) return;
                os << labels[i] << "," << scenario << "," << mode << "," << row.epoch << ","
                   << row.iteration << "," << metric << "," << format_real(*v) << "\n";
            };
            for (const MetricsRowData& row : files[i].rows) {
                emit(row, "l1", row.l1);
                emit(row, "l2", row.l2);
                emit(row, "id_acc", row.id_acc);
                for (std::size_t j = 0; j < files[i].attribute_names.size(); ++j) {
                    emit(row, "attr:" + files[i].attribute_names[j], row.attr_acc[j]);
                }
            }
        }
    }

    log << "compare: " << files.size() << " runs\n";
    for (std::size_t i = 0; i < files.size(); ++i) {
        log << "  " << labels[i] << " rows=" << files[i].rows.size();
        if (auto v = final_value(files[i], [](const MetricsRowData& r) { return r.l1; })) {
            log << " final_l1=" << format_real(*v);
        }
        if (auto v = final_value(files[i], [](const MetricsRowData& r) { return r.l2; })) {
            log << " final_l2=" << format_real(*v);
        }
        log << "\n";
    }

    // Joint-vs-separate attribute deltas, averaged within each bucket.
    std::map<std::string, std::pair<std::vector<Real>, std::vector<Real>>> per_attr;
    for (std::size_t i = 0; i < files.size(); ++i) {
        for (std::size_t j = 0; j < files[i].attribute_names.size(); ++j) {
            const auto v = final_value(
                files[i], [j](const MetricsRowData& r) { return r.attr_acc[j]; });
            if (!v) continue;
            auto& bucket = per_attr[files[i].attribute_names[j]];
            (separate[i] ? bucket.second : bucket.first).push_back(*v);
        }
    }
    bool have_pairs = false;
    for (const auto& [name, bucket] : per_attr) {
        if (!bucket.first.empty() && !bucket.second.empty()) have_pairs = true;
    }
    if (have_pairs) {
        const std::filesystem::path attr_path = out_dir / "compare_attributes.csv";
        std::ofstream os(attr_path, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot write '" + attr_path.string() + "'");
        embed_provenance(os, opt.inputs, files, mismatch);
        os << "attribute,joint,separate,delta\n";
        log << "compare: joint vs separate final attribute accuracy\n";
        for (const auto& [name, bucket] : per_attr) {
            if (bucket.first.empty() || bucket.second.empty()) continue;
            auto mean = [](const std::vector<Real>& v) {
                Real s = 0.0;
                for (Real x : v) s += x;
                return s / static_cast<Real>(v.size());
            };
            const Real joint = mean(bucket.first);
            const Real sep = mean(bucket.second);
            os << name << "," << format_real(joint) << "," << format_real(sep) << ","
               << format_real(joint - sep) << "\n";
            log << "  attr:" << name << " joint=" << format_real(joint)
                << " separate=" << format_real(sep) << " delta=" << format_real(joint - sep)
                << "\n";
        }
        log << "compare: wrote " << attr_path.string() << "\n";
    }

    log << "compare: wrote " << conv_path.string() << " and " << long_path.string() << "\n";
    return 0;
}

}  // namespace facefuse
