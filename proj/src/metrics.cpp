#include "facefuse/metrics.hpp"

#include <sstream>

namespace facefuse {

namespace {

constexpr const char* kVersionLine = "# facefuse-metrics v1";

std::vector<std::string> split_on(const std::string& line, char sep) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

std::optional<Real> parse_opt_real(const std::string& s, const std::string& where) {
    if (s.empty()) return std::nullopt;
    try {
        std::size_t pos = 0;
        const Real v = std::stod(s, &pos);
        if (pos == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw FormatError(where + ": bad numeric field '" + s + "'");
}

}  // namespace

MetricsWriter::MetricsWriter(const std::filesystem::path& path, const std::string& config_text,
                             std::uint64_t fingerprint,
                             const std::vector<std::string>& attribute_names)
    : n_attrs_(attribute_names.size()) {
    os_.open(path, std::ios::binary | std::ios::trunc);
    if (!os_) throw IoError("cannot open metrics file '" + path.string() + "'");
    os_ << kVersionLine << "\n";
    os_ << "# fingerprint " << hex64(fingerprint) << "\n";
    std::istringstream cfg(config_text);
    std::string line;
    while (std::getline(cfg, line)) {
        if (!line.empty()) os_ << "# cfg " << line << "\n";
    }
    os_ << "epoch,iteration,l1,l2,id_acc";
    for (const std::string& name : attribute_names) os_ << ",attr:" << name;
    os_ << ",seconds\n";
    os_.flush();
}

void MetricsWriter::row(std::size_t epoch, std::size_t iteration, std::optional<Real> l1,
                        std::optional<Real> l2, std::optional<Real> id_acc,
                        const std::vector<Real>& attr_acc, Real seconds) {
    if (!attr_acc.empty() && attr_acc.size() != n_attrs_) {
        throw DimensionError("metrics row has " + std::to_string(attr_acc.size()) +
                             " attribute accuracies, header names " + std::to_string(n_attrs_));
    }
    if (epoch < last_epoch_ || iteration <= last_iteration_) {
        throw ContractError("metrics rows must advance in (epoch, iteration) order");
    }
    last_epoch_ = epoch;
    last_iteration_ = iteration;
    os_ << epoch << "," << iteration << ",";
    if (l1) os_ << format_real(*l1);
    os_ << ",";
    if (l2) os_ << format_real(*l2);
    os_ << ",";
    if (id_acc) os_ << format_real(*id_acc);
    for (std::size_t j = 0; j < n_attrs_; ++j) {
        os_ << ",";
        if (!attr_acc.empty()) os_ << format_real(attr_acc[j]);
    }
    os_ << "," << format_real(seconds) << "\n";
    os_.flush();
    if (!os_) throw IoError("metrics write failed");
}

MetricsFile read_metrics(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open metrics file '" + path.string() + "'");
    const std::string name = path.string();

    MetricsFile mf;
    std::string line;
    std::size_t lineno = 0;
    bool have_version = false, have_header = false;
    std::string cfg_text;
    std::size_t n_attrs = 0;

    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = name + ":" + std::to_string(lineno);
        if (!have_version) {
            if (line != kVersionLine) {
                throw FormatError(where + ": expected '" + kVersionLine + "'");
            }
            have_version = true;
            continue;
        }
        if (line.rfind("# fingerprint ", 0) == 0) {
            mf.fingerprint = std::stoull(line.substr(14), nullptr, 16);
            continue;
        }
        if (line.rfind("# cfg ", 0) == 0) {
            cfg_text += line.substr(6);
            cfg_text += "\n";
            continue;
        }
        if (!have_header) {
            const auto cols = split_on(line, ',');
            if (cols.size() < 6 || cols[0] != "epoch" || cols[1] != "iteration" ||
                cols[2] != "l1" || cols[3] != "l2" || cols[4] != "id_acc" ||
                cols.back() != "seconds") {
                throw FormatError(where + ": unexpected metrics header '" + line + "'");
            }
            for (std::size_t i = 5; i + 1 < cols.size(); ++i) {
                if (cols[i].rfind("attr:", 0) != 0) {
                    throw FormatError(where + ": expected attr: column, got '" + cols[i] + "'");
                }
                mf.attribute_names.push_back(cols[i].substr(5));
            }
            n_attrs = mf.attribute_names.size();
            have_header = true;
            continue;
        }
        const auto fields = split_on(line, ',');
        if (fields.size() != 6 + n_attrs) {
            throw FormatError(where + ": expected " + std::to_string(6 + n_attrs) +
                              " fields, got " + std::to_string(fields.size()));
        }
        MetricsRowData row;
        row.epoch = static_cast<std::size_t>(std::stoull(fields[0]));
        row.iteration = static_cast<std::size_t>(std::stoull(fields[1]));
        row.l1 = parse_opt_real(fields[2], where);
        row.l2 = parse_opt_real(fields[3], where);
        row.id_acc = parse_opt_real(fields[4], where);
        for (std::size_t j = 0; j < n_attrs; ++j) {
            row.attr_acc.push_back(parse_opt_real(fields[5 + j], where));
        }
        const auto sec = parse_opt_real(fields.back(), where);
        if (!sec) throw FormatError(where + ": missing seconds field");
        row.seconds = *sec;
        mf.rows.push_back(std::move(row));
    }
    if (!have_version || !have_header) {
        throw FormatError(name + ": missing metrics version or header line");
    }
    mf.cfg = parse_keyvalues(cfg_text, name + " (embedded cfg)");
    return mf;
}

std::string strip_seconds_column(const std::string& metrics_text) {
    std::istringstream lines(metrics_text);
    std::string line, out;
    while (std::getline(lines, line)) {
        if (!line.empty() && line[0] != '#') {
            const std::size_t comma = line.find_last_of(',');
            if (comma != std::string::npos) line.erase(comma);
        }
        out += line;
        out += "\n";
    }
    return out;
}

}  // namespace facefuse
