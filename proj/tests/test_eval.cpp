#include <algorithm>
#include <sstream>

#include "cirgest/eval.hpp"
#include "support.hpp"

using namespace cirgest;
using namespace cirgest::eval;

namespace {

using Preds = std::vector<std::optional<std::string>>;

ConfusionMatrix matrix(std::vector<std::string> labels, std::vector<std::vector<std::uint64_t>> counts) {
    ConfusionMatrix cm;
    cm.labels = std::move(labels);
    cm.counts = std::move(counts);
    return cm;
}

// Per-definition recomputation from raw prediction/truth pairs.
struct Oracle {
    double precision = 0, recall = 0, f1 = 0;
};

Oracle oracle(const std::vector<std::string>& pred, const std::vector<std::string>& truth,
              const std::vector<std::string>& labels) {
    Oracle o;
    const double n = static_cast<double>(truth.size());
    for (const auto& l : labels) {
        double tp = 0, predicted = 0, actual = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            tp += pred[i] == l && truth[i] == l;
            predicted += pred[i] == l;
            actual += truth[i] == l;
        }
        const double p = predicted > 0 ? tp / predicted : 0.0;
        const double r = actual > 0 ? tp / actual : 0.0;
        const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
        o.precision += actual / n * p;
        o.recall += actual / n * r;
        o.f1 += actual / n * f;
    }
    return o;
}

std::vector<ResultRecord> fake_results() {
    std::vector<ResultRecord> out;
    const std::map<std::string, std::vector<std::string>> cats{
        {"shapes", {"circle", "cross", "check"}}, {"letters", {"A", "B"}}, {"digits", {"1", "2"}}};
    int n = 0;
    for (const auto& model : {"knn", "svm", "llm:mock:nearest"}) {
        for (const auto& [cat, labels] : cats) {
            for (std::size_t i = 0; i < 6; ++i) {
                ResultRecord r;
                r.sample_id = labels[i % labels.size()] + "_" + std::to_string(i);
                r.truth = labels[i % labels.size()];
                r.predicted = labels[(i + (n++ % 4 == 0)) % labels.size()];
                r.model = model;
                r.category = cat;
                r.score = 0.5;
                if (std::string(model).starts_with("llm") && i == 5) {
                    r.status = Status::parse_failed;
                    r.predicted.reset();
                }
                out.push_back(r);
            }
        }
    }
    return out;
}

std::map<std::string, std::vector<std::string>> fake_label_sets() {
    return {{"shapes", {"circle", "cross", "check"}}, {"letters", {"A", "B"}}, {"digits", {"1", "2"}}};
}

}  // namespace

TEST_CASE("perfect predictions give a diagonal matrix") {
    const std::vector<std::string> labels{"A", "B", "C"};
    const std::vector<std::string> truth{"A", "B", "C", "A", "C"};
    const Preds pred(truth.begin(), truth.end());
    const auto cm = confusion(pred, truth, labels);
    CHECK(cm.counts == std::vector<std::vector<std::uint64_t>>{{2, 0, 0}, {0, 1, 0}, {0, 0, 2}});
    CHECK(cm.excluded_count == 0);
    const auto m = weighted_metrics(cm);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == 1.0);
    for (const auto& c : m.per_class) CHECK(c.f1 == 1.0);
}

TEST_CASE("all parse failures are excluded") {
    const std::vector<std::string> truth{"A", "B", "A", "C"};
    const auto cm = confusion(Preds(4), truth, {"A", "B", "C"});
    CHECK(cm.total() == 0);
    CHECK(cm.excluded_count == 4);
    CHECK_CODE(weighted_metrics(cm), ErrorCode::metric);
    CHECK_CODE(weighted_metrics(ConfusionMatrix{}), ErrorCode::metric);
}

TEST_CASE("hand-tallied eight pairs") {
    const std::vector<std::string> truth{"A", "A", "A", "B", "B", "C", "C", "C"};
    const Preds pred{"A", "B", "A", "B", std::nullopt, "A", "C", "Q"};
    const auto cm = confusion(pred, truth, {"A", "B", "C"});
    CHECK(cm.counts == std::vector<std::vector<std::uint64_t>>{{2, 1, 0}, {0, 1, 0}, {1, 0, 1}});
    CHECK(cm.excluded_count == 2);
    CHECK(cm.total() == 6);
    CHECK_CODE(confusion(Preds{"A"}, {"Z"}, {"A"}), ErrorCode::data);
    CHECK_CODE(confusion(Preds{"A"}, {}, {"A"}), ErrorCode::data);
}

TEST_CASE("two-class hand computation") {
    const auto m = weighted_metrics(matrix({"A", "B"}, {{2, 0}, {1, 1}}));
    CHECK(m.per_class[0].precision == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(m.per_class[0].recall == 1.0);
    CHECK(m.per_class[0].f1 == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(m.per_class[1].precision == 1.0);
    CHECK(m.per_class[1].recall == 0.5);
    CHECK(m.per_class[1].f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(std::abs(m.f1 - 11.0 / 15.0) < 1e-9);
    CHECK(m.accuracy == 0.75);
}

TEST_CASE("never-predicted class has zero precision") {
    const auto m = weighted_metrics(matrix({"A", "B"}, {{3, 0}, {2, 0}}));
    CHECK(m.per_class[1].precision_undefined);
    CHECK(m.per_class[1].precision == 0.0);
    CHECK(m.per_class[1].f1 == 0.0);
    CHECK_FALSE(m.per_class[0].precision_undefined);
}

TEST_CASE("random five-class fixtures match an independent recomputation") {
    std::mt19937_64 rng(17);
    const std::vector<std::string> labels{"A", "B", "C", "D", "E"};
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::string> truth, pred;
        for (int i = 0; i < 60; ++i) {
            truth.push_back(labels[rng() % 5]);
            pred.push_back(rng() % 3 == 0 ? labels[rng() % 5] : truth.back());
        }
        const auto m = weighted_metrics(confusion(Preds(pred.begin(), pred.end()), truth, labels));
        const auto o = oracle(pred, truth, labels);
        CHECK(m.precision == doctest::Approx(o.precision).epsilon(1e-12));
        CHECK(m.recall == doctest::Approx(o.recall).epsilon(1e-12));
        CHECK(m.f1 == doctest::Approx(o.f1).epsilon(1e-12));
        // Support-weighted recall is accuracy.
        CHECK(m.recall == doctest::Approx(m.accuracy).epsilon(1e-12));
        for (double v : {m.precision, m.recall, m.f1}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }

        // Label order does not change the averages.
        auto shuffled = labels;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        const auto m2 = weighted_metrics(confusion(Preds(pred.begin(), pred.end()), truth, shuffled));
        CHECK(m2.f1 == doctest::Approx(m.f1).epsilon(1e-12));
        CHECK(m2.precision == doctest::Approx(m.precision).epsilon(1e-12));
    }
}

TEST_CASE("result records round trip") {
    testing::TempDir dir("results");
    auto rs = fake_results();
    rs[0].reasoning = "line one\nline \"two\"";
    rs[1].score.reset();
    rs[2].status = Status::transport_error;
    rs[2].predicted.reset();
    write_results(dir.path() / "r.jsonl", rs);
    CHECK(read_results(dir.path() / "r.jsonl") == rs);
    CHECK(result_from_jsonl_line(to_jsonl_line(rs[0])) == rs[0]);
    CHECK(parse_status("parse_failed") == Status::parse_failed);
    CHECK_CODE(parse_status("weird"), ErrorCode::data);
    CHECK_CODE(result_from_jsonl_line("[]"), ErrorCode::data);
}

TEST_CASE("report shape, header and ordering") {
    const auto entries = summarize(fake_results(), fake_label_sets());
    REQUIRE(entries.size() == 9);
    CHECK(entries[0].category == "shapes");
    CHECK(entries[3].category == "letters");
    CHECK(entries[8].category == "digits");
    CHECK(entries[0].model == "knn");
    CHECK(entries[1].model == "llm:mock:nearest");
    CHECK(entries[1].excluded_by_status.at("parse_failed") == 1);
    CHECK(entries[1].metrics.excluded_count == 1);
    CHECK(entries[1].metrics.total == 5);

    const ReportMeta meta{"deadbeef", {{"sim_seed", 1}, {"split_seed", 2}}};
    const auto csv = report_csv(entries, meta);
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);
    CHECK(line == "category,model,precision,recall,f1,accuracy,support,excluded_count,config_hash,seeds");
    CHECK(line == kReportCsvHeader);
    int rows = 0;
    while (std::getline(is, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 9);
        CHECK(line.find(",deadbeef,sim_seed=1;split_seed=2") != std::string::npos);
    }
    CHECK(rows == 9);

    const auto txt = report_txt(entries, meta);
    CHECK(txt.find("shapes") < txt.find("letters"));
    CHECK(txt.find("letters") < txt.find("digits"));
    CHECK(txt.find("excluded parse_failed: 1") != std::string::npos);
    CHECK(txt.find("deadbeef") != std::string::npos);

    auto bad = fake_results();
    bad[0].category = "colours";
    CHECK_CODE(summarize(bad, fake_label_sets()), ErrorCode::data);
}

TEST_CASE("report regenerated from persisted results is identical") {
    testing::TempDir dir("report");
    const ReportMeta meta{"abc", {{"sim_seed", 7}}};
    const auto rs = fake_results();
    write_results(dir.path() / "r.jsonl", rs);
    write_report(dir.path() / "a", summarize(rs, fake_label_sets()), meta);
    write_report(dir.path() / "b", summarize(read_results(dir.path() / "r.jsonl"), fake_label_sets()), meta);
    for (const char* f : {"report.csv", "report.txt"}) {
        CHECK(testing::read_file(dir.path() / "a" / f) == testing::read_file(dir.path() / "b" / f));
    }
}
