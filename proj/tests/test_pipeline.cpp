#include <set>

#include "cirgest/pipeline.hpp"
#include "support.hpp"

using namespace cirgest;
namespace fs = std::filesystem;

namespace {

config::RunConfig small_config() {
    config::RunConfig c;
    c.labels = labels_of(Category::letters);
    c.samples_per_label = 4;
    c.sim_seed = 11;
    c.split_seed = 12;
    c.train_seed = 13;
    c.hyperparams.rf_trees = 10;
    return c;
}

pipeline::PipelineOptions letters_only() {
    pipeline::PipelineOptions o;
    o.jobs = 2;
    o.categories = {Category::letters};
    return o;
}

std::set<std::string> tree(const fs::path& root) {
    std::set<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out.insert(fs::relative(e.path(), root).generic_string());
    }
    return out;
}

}  // namespace

TEST_CASE("sample ids and seeds") {
    CHECK(pipeline::sample_id("A", 7) == "A_007");
    CHECK(pipeline::trajectory_seed(1, "A", 0) != pipeline::trajectory_seed(1, "A", 1));
    CHECK(pipeline::trajectory_seed(1, "A", 0) != pipeline::trajectory_seed(1, "B", 0));
    CHECK(pipeline::trajectory_seed(1, "A", 0) != pipeline::noise_seed(1, "A", 0));
    CHECK(pipeline::trajectory_seed(1, "A", 0) == pipeline::trajectory_seed(1, "A", 0));
}

TEST_CASE("parallel_for covers every index and rethrows") {
    std::vector<int> hits(100, 0);
    pipeline::parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
    for (int h : hits) CHECK(h == 1);
    CHECK_THROWS_AS(pipeline::parallel_for(10, 3, [](std::size_t i) {
                        if (i == 5) fail(ErrorCode::data, "boom");
                    }),
                    Error);
}

TEST_CASE("one recording") {
    const auto cfg = small_config();
    dataset::SampleRecord rec;
    const auto rx = pipeline::simulate_recording(cfg, "B", 2, &rec);
    CHECK(rec.sample_id == "B_002");
    CHECK(rec.seed == pipeline::trajectory_seed(cfg.sim_seed, "B", 2));
    CHECK(rec.duration_s == doctest::Approx(static_cast<double>(rx.samples.size()) / rx.sample_rate_hz));
    const auto img = pipeline::extract_image(cfg, rx);
    CHECK(img.height == cfg.receiver.tap_count);
    CHECK(img.width > 100);
    const auto again = pipeline::simulate_recording(cfg, "B", 2);
    CHECK(again.samples == rx.samples);
}

TEST_CASE("offline pipeline artifacts, determinism and the nearest-label mock") {
    testing::TempDir a("pipe_a"), b("pipe_b");
    const auto cfg = small_config();
    const auto ea = pipeline::run_pipeline(cfg, a.path(), letters_only());
    const auto eb = pipeline::run_pipeline(cfg, b.path(), letters_only());
    REQUIRE(ea.size() == 4);
    CHECK(ea[0].model == "knn");
    CHECK(ea[1].model == "llm:mock:nearest");

    const auto files = tree(a.path());
    CHECK(files == tree(b.path()));
    for (const char* f : {"config.json", "sim/manifest.jsonl", "extract/manifest.jsonl", "extract/split.jsonl",
                          "models/knn_letters.json", "models/svm_letters.json", "models/rf_letters.json",
                          "libraries/letters.bin", "results/llm_letters.jsonl", "report.csv", "report.txt",
                          "sim/audio/A_000.wav", "extract/images/E_003.png"}) {
        CHECK_MESSAGE(files.count(f), f);
    }
    for (const auto& f : files) {
        CHECK_MESSAGE(testing::read_file(a.path() / f) == testing::read_file(b.path() / f), f);
    }

    // The nearest-label mock reproduces 1-NN over the same train split.
    const auto manifest = dataset::read_manifest(a.path() / "extract" / "split.jsonl");
    const auto feats = pipeline::load_features(manifest, a.path() / "extract", 1);
    const auto ts = pipeline::training_set(manifest, feats, Category::letters);
    baselines::Hyperparams hp;
    hp.knn_k = 1;
    const auto knn1 = baselines::train(baselines::Kind::knn, ts.vectors, ts.labels, hp, 0, ts.sample_ids);
    const auto want = pipeline::evaluate_model(knn1, "knn1", manifest, feats, Category::letters);
    const auto got = eval::read_results(a.path() / "results" / "llm_letters.jsonl");
    REQUIRE(got.size() == want.size());
    CHECK(got.size() == 5);
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].sample_id == want[i].sample_id);
        CHECK(got[i].predicted == want[i].predicted);
    }

    const auto lib = dataset::load_library(a.path() / "libraries" / "letters.bin");
    CHECK(lib.size() == 15);
    for (const auto& r : got) CHECK_FALSE(lib.contains(r.sample_id));
}

TEST_CASE("pipeline configuration errors carry the stage") {
    testing::TempDir dir("pipe_err");
    auto cfg = small_config();
    cfg.samples_per_label = 1;
    try {
        pipeline::run_pipeline(cfg, dir.path(), letters_only());
        FAIL("expected a split error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::split);
        CHECK(std::string(e.what()).starts_with("split: "));
    }
}
