#include "cirgest/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "cirgest/error.hpp"
#include "cirgest/labels.hpp"
#include "util.hpp"

namespace cirgest::eval {

using nlohmann::json;

namespace {

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string seeds_cell(const std::map<std::string, std::uint64_t>& seeds) {
    std::string s;
    for (const auto& [k, v] : seeds) {
        if (!s.empty()) s += ';';
        s += k + "=" + std::to_string(v);
    }
    return s;
}

int category_rank(const std::string& name) {
    for (std::size_t i = 0; i < kCategories.size(); ++i) {
        if (to_string(kCategories[i]) == name) return static_cast<int>(i);
    }
    return static_cast<int>(kCategories.size());
}

}  // namespace

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts) {
        for (auto c : row) t += c;
    }
    return t;
}

ConfusionMatrix confusion(const std::vector<std::optional<std::string>>& predictions,
                          const std::vector<std::string>& truths, const std::vector<std::string>& labels) {
    if (predictions.size() != truths.size()) fail(ErrorCode::data, "prediction and truth counts differ");
    ConfusionMatrix cm;
    cm.labels = labels;
    cm.counts.assign(labels.size(), std::vector<std::uint64_t>(labels.size(), 0));
    const auto index = [&](const std::string& l) -> std::optional<std::size_t> {
        auto it = std::find(labels.begin(), labels.end(), l);
        if (it == labels.end()) return std::nullopt;
        return static_cast<std::size_t>(it - labels.begin());
    };
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const auto t = index(truths[i]);
        if (!t) fail(ErrorCode::data, "truth label '" + truths[i] + "' is not in the label set");
        const auto p = predictions[i] ? index(*predictions[i]) : std::nullopt;
        if (!p) {
            ++cm.excluded_count;
            continue;
        }
        ++cm.counts[*t][*p];
    }
    return cm;
}

Metrics weighted_metrics(const ConfusionMatrix& cm) {
    const std::size_t n = cm.labels.size();
    if (n == 0 || cm.counts.size() != n) fail(ErrorCode::metric, "empty confusion matrix");
    const std::uint64_t total = cm.total();
    if (total == 0) fail(ErrorCode::metric, "confusion matrix has no evaluated samples");

    Metrics m;
    m.total = total;
    m.excluded_count = cm.excluded_count;
    std::uint64_t diag = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t row = 0, col = 0;
        for (std::size_t j = 0; j < n; ++j) {
            row += cm.counts[i][j];
            col += cm.counts[j][i];
        }
        const auto tp = static_cast<double>(cm.counts[i][i]);
        diag += cm.counts[i][i];
        ClassMetrics c;
        c.label = cm.labels[i];
        c.support = row;
        c.precision_undefined = col == 0;
        c.precision = col == 0 ? 0.0 : tp / static_cast<double>(col);
        c.recall = row == 0 ? 0.0 : tp / static_cast<double>(row);
        c.f1 = c.precision + c.recall == 0.0 ? 0.0 : 2.0 * c.precision * c.recall / (c.precision + c.recall);
        const auto w = static_cast<double>(row);
        m.precision += w * c.precision;
        m.recall += w * c.recall;
        m.f1 += w * c.f1;
        m.per_class.push_back(std::move(c));
    }
    // One division at the end keeps an all-correct matrix at exactly 1.
    m.precision /= static_cast<double>(total);
    m.recall /= static_cast<double>(total);
    m.f1 /= static_cast<double>(total);
    m.accuracy = static_cast<double>(diag) / static_cast<double>(total);
    return m;
}

std::string_view to_string(Status s) {
    switch (s) {
        case Status::ok: return "ok";
        case Status::parse_failed: return "parse_failed";
        case Status::transport_error: return "transport_error";
    }
    return "ok";
}

Status parse_status(std::string_view name) {
    if (name == "ok") return Status::ok;
    if (name == "parse_failed") return Status::parse_failed;
    if (name == "transport_error") return Status::transport_error;
    fail(ErrorCode::data, "unknown status '" + std::string(name) + "'");
}

std::string to_jsonl_line(const ResultRecord& r) {
    json j;
    j["sample_id"] = r.sample_id;
    j["truth"] = r.truth;
    j["predicted"] = r.predicted ? json(*r.predicted) : json(nullptr);
    j["status"] = std::string(to_string(r.status));
    j["reasoning"] = r.reasoning;
    j["model"] = r.model;
    j["category"] = r.category;
    if (r.score) j["score"] = *r.score;
    return j.dump();
}

ResultRecord result_from_jsonl_line(std::string_view line) {
    try {
        const json j = json::parse(line);
        ResultRecord r;
        r.sample_id = j.at("sample_id").get<std::string>();
        r.truth = j.at("truth").get<std::string>();
        if (j.contains("predicted") && !j["predicted"].is_null()) r.predicted = j["predicted"].get<std::string>();
        r.status = parse_status(j.value("status", std::string("ok")));
        r.reasoning = j.value("reasoning", std::string());
        r.model = j.value("model", std::string());
        r.category = j.value("category", std::string());
        if (j.contains("score") && !j["score"].is_null()) r.score = j["score"].get<double>();
        if ((r.status == Status::ok) != r.predicted.has_value()) {
            fail(ErrorCode::data, "result '" + r.sample_id + "': status and predicted label disagree");
        }
        return r;
    } catch (const json::exception& e) {
        fail(ErrorCode::data, std::string("malformed result line: ") + e.what());
    }
}

void write_results(const std::filesystem::path& path, const std::vector<ResultRecord>& results) {
    std::string text;
    for (const auto& r : results) text += to_jsonl_line(r) + "\n";
    detail::write_text(path, text);
}

std::vector<ResultRecord> read_results(const std::filesystem::path& path) {
    std::istringstream is(detail::read_text(path));
    std::vector<ResultRecord> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(result_from_jsonl_line(line));
    }
    return out;
}

std::vector<ReportEntry> summarize(const std::vector<ResultRecord>& results,
                                   const std::map<std::string, std::vector<std::string>>& labels_of_category) {
    std::map<std::pair<std::string, std::string>, std::vector<const ResultRecord*>> groups;
    for (const auto& r : results) groups[{r.category, r.model}].push_back(&r);

    std::vector<ReportEntry> out;
    for (const auto& [key, rs] : groups) {
        auto it = labels_of_category.find(key.first);
        if (it == labels_of_category.end()) fail(ErrorCode::data, "no label set for category '" + key.first + "'");
        std::vector<std::optional<std::string>> pred;
        std::vector<std::string> truth;
        ReportEntry e;
        e.category = key.first;
        e.model = key.second;
        for (const auto* r : rs) {
            pred.push_back(r->status == Status::ok ? r->predicted : std::nullopt);
            truth.push_back(r->truth);
            if (r->status != Status::ok) ++e.excluded_by_status[std::string(to_string(r->status))];
        }
        e.metrics = weighted_metrics(confusion(pred, truth, it->second));
        out.push_back(std::move(e));
    }
    std::stable_sort(out.begin(), out.end(), [](const ReportEntry& a, const ReportEntry& b) {
        const int ra = category_rank(a.category), rb = category_rank(b.category);
        if (ra != rb) return ra < rb;
        if (a.category != b.category) return a.category < b.category;
        return a.model < b.model;
    });
    return out;
}

std::string report_csv(const std::vector<ReportEntry>& entries, const ReportMeta& meta) {
    std::string s = std::string(kReportCsvHeader) + "\n";
    const std::string seeds = seeds_cell(meta.seeds);
    for (const auto& e : entries) {
        s += e.category + "," + e.model + "," + fixed4(e.metrics.precision) + "," + fixed4(e.metrics.recall) +
             "," + fixed4(e.metrics.f1) + "," + fixed4(e.metrics.accuracy) + "," +
             std::to_string(e.metrics.total) + "," + std::to_string(e.metrics.excluded_count) + "," +
             meta.config_hash + "," + seeds + "\n";
    }
    return s;
}

std::string report_txt(const std::vector<ReportEntry>& entries, const ReportMeta& meta) {
    std::ostringstream os;
    os << "Weighted average performance (support-weighted over true classes)\n";
    os << "config_hash: " << meta.config_hash << "\n";
    os << "seeds: " << seeds_cell(meta.seeds) << "\n";
    bool footnote = false;
    std::string current;
    for (const auto& e : entries) {
        if (e.category != current) {
            current = e.category;
            os << "\n" << current << "\n";
            char head[128];
            std::snprintf(head, sizeof head, "  %-22s %9s %9s %9s %8s %9s\n", "model", "precision", "recall", "f1",
                          "support", "excluded");
            os << head;
        }
        bool undefined = false;
        for (const auto& c : e.metrics.per_class) undefined = undefined || c.precision_undefined;
        footnote = footnote || undefined;
        char row[192];
        std::snprintf(row, sizeof row, "  %-22s %9.4f %9.4f %9.4f %8llu %9llu%s\n", e.model.c_str(),
                      e.metrics.precision, e.metrics.recall, e.metrics.f1,
                      static_cast<unsigned long long>(e.metrics.total),
                      static_cast<unsigned long long>(e.metrics.excluded_count), undefined ? " *" : "");
        os << row;
        for (const auto& [status, n] : e.excluded_by_status) {
            os << "      excluded " << status << ": " << n << "\n";
        }
    }
    if (footnote) os << "\n* at least one class was never predicted; its precision counts as 0.\n";
    return os.str();
}

void write_report(const std::filesystem::path& dir, const std::vector<ReportEntry>& entries,
                  const ReportMeta& meta) {
    std::filesystem::create_directories(dir);
    detail::write_text(dir / "report.csv", report_csv(entries, meta));
    detail::write_text(dir / "report.txt", report_txt(entries, meta));
}

}  // namespace cirgest::eval
