#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bae/boosted.hpp"

namespace bae {

/// Unreadable or inconsistent model archive.
class ArchiveError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kModelFormatVersion = 1;

/// Writes the ensemble (specs, stage count, every parameter) to `path`.
/// Optimizer state is not stored. See docs/model_format.md.
void save_model(const EnsembleModel& model, const std::string& path);
/// Reads a file written by save_model. Throws ArchiveError on a bad magic,
/// unknown version, truncation, checksum mismatch, or inconsistent shapes;
/// nothing is returned unless the whole file checks out.
EnsembleModel load_model(const std::string& path);

/// In-memory forms of the same layout.
std::vector<unsigned char> serialize_model(const EnsembleModel& model);
EnsembleModel deserialize_model(const std::vector<unsigned char>& bytes);

struct MetricRecord {
    std::string name;    // auc, nmi_best, val_mse, ...
    double value = 0.0;  // must be finite
    std::string method;  // boosted-ae, single-ae, pca, ...
    std::optional<std::size_t> stage;
    std::optional<int> class_label;

    friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

struct EvalReport {
    std::string run_id;
    nlohmann::json config = nlohmann::json::object();
    std::vector<MetricRecord> metrics;
    TrainTrace trace;

    void add(MetricRecord record) { metrics.push_back(std::move(record)); }
    /// First metric with this name (and method, when given).
    std::optional<double> find(const std::string& name, const std::string& method = {}) const;
    /// Appends another report's metrics and trace rows; config keys are merged.
    void merge(const EvalReport& other);

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

nlohmann::json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& doc);

/// Writes into `dir` (created if needed):
///   report.json  the whole report
///   trace.csv    stage,iteration,train_mse,val_mse
///   metrics.csv  name,value,method,stage,class
///   auc.csv      method,class,auc
///   nmi.csv      method,nmi_best,nmi_mean,nmi_std
void emit_report(const EvalReport& report, const std::string& dir);
/// Reads report.json from `dir`.
EvalReport load_report(const std::string& dir);

}  // namespace bae
