#pragma once

// Confusion matrices, support-weighted precision/recall/F1, result records
// and report files.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cirgest::eval {

struct ConfusionMatrix {
    std::vector<std::string> labels;
    std::vector<std::vector<std::uint64_t>> counts;  // rows = truth, cols = prediction
    std::uint64_t excluded_count = 0;

    std::uint64_t total() const;
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// nullopt predictions are error responses: excluded and counted. A valid
/// prediction outside `labels` also counts as excluded; an unknown truth is a
/// data error.
ConfusionMatrix confusion(const std::vector<std::optional<std::string>>& predictions,
                          const std::vector<std::string>& truths, const std::vector<std::string>& labels);

struct ClassMetrics {
    std::string label;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t support = 0;
    // Never predicted, so precision is 0 by convention.
    bool precision_undefined = false;
};

struct Metrics {
    std::vector<ClassMetrics> per_class;
    double precision = 0.0;  // support-weighted averages
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
    std::uint64_t total = 0;
    std::uint64_t excluded_count = 0;
};

Metrics weighted_metrics(const ConfusionMatrix& cm);

enum class Status { ok, parse_failed, transport_error };

std::string_view to_string(Status s);
Status parse_status(std::string_view name);

struct ResultRecord {
    std::string sample_id;
    std::string truth;
    std::optional<std::string> predicted;
    Status status = Status::ok;
    std::string reasoning;
    std::string model;
    std::string category;
    std::optional<double> score;

    friend bool operator==(const ResultRecord&, const ResultRecord&) = default;
};

std::string to_jsonl_line(const ResultRecord& r);
ResultRecord result_from_jsonl_line(std::string_view line);
void write_results(const std::filesystem::path& path, const std::vector<ResultRecord>& results);
std::vector<ResultRecord> read_results(const std::filesystem::path& path);

struct ReportEntry {
    std::string model;
    std::string category;
    Metrics metrics;
    std::map<std::string, std::uint64_t> excluded_by_status;
};

struct ReportMeta {
    std::string config_hash;
    std::map<std::string, std::uint64_t> seeds;
};

/// One metrics entry per (model, category) found in `results`, ordered by
/// category then model. `labels_of_category` gives each category's label set.
std::vector<ReportEntry> summarize(const std::vector<ResultRecord>& results,
                                   const std::map<std::string, std::vector<std::string>>& labels_of_category);

/// Column order of report.csv.
inline constexpr const char* kReportCsvHeader =
    "category,model,precision,recall,f1,accuracy,support,excluded_count,config_hash,seeds";

std::string report_csv(const std::vector<ReportEntry>& entries, const ReportMeta& meta);
std::string report_txt(const std::vector<ReportEntry>& entries, const ReportMeta& meta);
void write_report(const std::filesystem::path& dir, const std::vector<ReportEntry>& entries,
                  const ReportMeta& meta);

}  // namespace cirgest::eval
