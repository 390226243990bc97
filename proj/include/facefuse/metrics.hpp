#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "facefuse/config.hpp"

namespace facefuse {

// Comma-separated metrics log, flushed per row so a crashed run leaves a
// parseable prefix. Header embeds the serialized run config and dataset
// fingerprint; the wall-clock column is the only non-deterministic field.
class MetricsWriter {
public:
    MetricsWriter(const std::filesystem::path& path, const std::string& config_text,
                  std::uint64_t fingerprint, const std::vector<std::string>& attribute_names);

    void row(std::size_t epoch, std::size_t iteration, std::optional<Real> l1,
             std::optional<Real> l2, std::optional<Real> id_acc,
             const std::vector<Real>& attr_acc, Real seconds);

private:
    std::ofstream os_;
    std::size_t n_attrs_;
    std::size_t last_epoch_ = 0;
    std::size_t last_iteration_ = 0;
};

struct MetricsRowData {
    std::size_t epoch = 0;
    std::size_t iteration = 0;
    std::optional<Real> l1;
    std::optional<Real> l2;
    std::optional<Real> id_acc;
    std::vector<std::optional<Real>> attr_acc;
    Real seconds = 0.0;
};

struct MetricsFile {
    std::uint64_t fingerprint = 0;
    KeyValues cfg;
    std::vector<std::string> attribute_names;
    std::vector<MetricsRowData> rows;
};

MetricsFile read_metrics(const std::filesystem::path& path);

// Metrics text minus the wall-clock column, for determinism comparisons.
std::string strip_seconds_column(const std::string& metrics_text);

}  // namespace facefuse
