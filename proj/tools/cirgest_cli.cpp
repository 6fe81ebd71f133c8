// cirgest: command-line front end for the gesture-sensing workflow.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cirgest/baselines.hpp"
#include "cirgest/config.hpp"
#include "cirgest/dataset.hpp"
#include "cirgest/error.hpp"
#include "cirgest/eval.hpp"
#include "cirgest/pipeline.hpp"
#include "cirgest/receiver.hpp"
#include "cirgest/retrieval.hpp"
#include "cirgest/signal.hpp"
#include "cirgest/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cirgest;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kProvider = 4, kInternal = 5 };

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::size_t jobs = 1;
    std::string provider;
    std::string category;
    bool verbose = false;
};

// JSON lines with --verbose, short plain lines otherwise.
class Log {
public:
    explicit Log(const Globals& g) : g_(g) {}

    void info(const std::string& event, const json& fields = json::object()) const {
        if (g_.verbose) {
            json j = fields;
            j["level"] = "info";
            j["event"] = event;
            std::cerr << j.dump() << "\n";
            return;
        }
        std::string line = event;
        for (const auto& [k, v] : fields.items()) line += " " + k + "=" + (v.is_string() ? v.get<std::string>() : v.dump());
        std::cerr << line << "\n";
    }

    void error(const std::string& message, const char* code) const {
        if (g_.verbose) {
            std::cerr << json{{"level", "error"}, {"code", code}, {"message", message}}.dump() << "\n";
        } else {
            std::cerr << "error (" << code << "): " << message << "\n";
        }
    }

private:
    const Globals& g_;
};

config::RunConfig load_config(const Globals& g) {
    config::RunConfig cfg = g.config_path.empty() ? config::RunConfig{} : config::load(g.config_path);
    if (g.seed) {
        cfg.sim_seed = *g.seed;
        cfg.split_seed = *g.seed;
        cfg.train_seed = *g.seed;
    }
    if (!g.provider.empty()) cfg.provider.provider = g.provider;
    if (!g.category.empty()) cfg.labels = labels_of(parse_category(g.category));
    cfg.validate();
    return cfg;
}

std::string rebase(const std::string& path, const fs::path& from_dir, const fs::path& to_dir) {
    if (path.empty()) return path;
    const fs::path abs = fs::absolute(dataset::resolve(from_dir, path)).lexically_normal();
    return abs.lexically_proximate(fs::absolute(to_dir).lexically_normal()).generic_string();
}

std::string absolute_of(const std::string& path, const fs::path& base_dir) {
    return path.empty() ? path : fs::absolute(dataset::resolve(base_dir, path)).lexically_normal().generic_string();
}

fs::path dir_of(const fs::path& file) {
    return file.has_parent_path() ? file.parent_path() : fs::path(".");
}

std::vector<Category> selected_categories(const Globals& g) {
    if (!g.category.empty()) return {parse_category(g.category)};
    return {kCategories.begin(), kCategories.end()};
}

const char* code_name(ErrorCode c) { return to_string(c); }

int exit_for(ErrorCode c) {
    switch (c) {
        case ErrorCode::argument:
        case ErrorCode::config: return kUsage;
        case ErrorCode::provider: return kProvider;
        default: return kData;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acoustic channel-impulse-response gesture sensing toolkit"};
    app.fallthrough();
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "Run configuration (JSON)");
    app.add_option("--seed", g.seed, "Overrides the simulation, split and training seeds");
    app.add_option("--jobs", g.jobs, "Worker threads for dataset stages")->check(CLI::PositiveNumber);
    app.add_option("--provider", g.provider, "LLM provider (http, mock:nearest, ...)");
    app.add_option("--category", g.category, "Restrict to one category (shapes, letters, digits)");
    app.add_flag("--verbose", g.verbose, "JSON-lines logging");
    const Log log(g);

    // synth
    auto* synth = app.add_subcommand("synth", "Write the looping sounding waveform as WAV");
    double seconds = 0.0;
    std::string synth_out;
    bool pcm16 = false;
    synth->add_option("--seconds", seconds, "Duration")->required()->check(CLI::PositiveNumber);
    synth->add_option("--out", synth_out, "Output WAV")->required();
    synth->add_flag("--pcm16", pcm16, "16-bit PCM instead of float32");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Simulate a labelled recording set");
    std::string sim_out;
    std::vector<std::string> sim_labels;
    std::optional<std::size_t> sim_count;
    simulate->add_option("--out", sim_out, "Output directory")->required();
    simulate->add_option("--labels", sim_labels, "Gesture labels (default: all)");
    simulate->add_option("--samples-per-label", sim_count, "Recordings per label");

    // extract
    auto* extract = app.add_subcommand("extract", "Recordings to dCIR images");
    std::string ex_in, ex_out;
    extract->add_option("--in", ex_in, "WAV file or directory holding manifest.jsonl")->required();
    extract->add_option("--out", ex_out, "Output directory (or .png for a single WAV)")->required();

    // split
    auto* split = app.add_subcommand("split", "Stratified train/test assignment");
    std::string sp_manifest, sp_out;
    split->add_option("--manifest", sp_manifest, "Input manifest")->required();
    split->add_option("--out", sp_out, "Output manifest")->required();

    // library
    auto* library = app.add_subcommand("library", "Per-class vector library from train samples");
    std::string lib_manifest, lib_out;
    library->add_option("--manifest", lib_manifest, "Split manifest")->required();
    library->add_option("--out", lib_out, "Output library file")->required();

    // retrieve
    auto* retrieve = app.add_subcommand("retrieve", "Nearest library entries for an image");
    std::string rt_lib, rt_query;
    std::size_t rt_k = 0;
    bool rt_json = false;
    retrieve->add_option("--lib", rt_lib, "Library file")->required();
    retrieve->add_option("--query", rt_query, "Query PNG")->required();
    retrieve->add_option("--k", rt_k, "k nearest overall instead of one per class");
    retrieve->add_flag("--json", rt_json, "Print JSON");

    // baseline
    auto* baseline = app.add_subcommand("baseline", "Conventional classifiers");
    baseline->require_subcommand(1);
    auto* bl_train = baseline->add_subcommand("train", "Train on the train split");
    auto* bl_eval = baseline->add_subcommand("eval", "Classify the test split");
    std::string bl_kind, bl_manifest, bl_out, bl_model;
    bl_train->add_option("--kind", bl_kind, "knn, svm or rf")->required();
    bl_train->add_option("--manifest", bl_manifest, "Split manifest")->required();
    bl_train->add_option("--out", bl_out, "Model file")->required();
    bl_eval->add_option("--model", bl_model, "Model file")->required();
    bl_eval->add_option("--manifest", bl_manifest, "Split manifest")->required();
    bl_eval->add_option("--out", bl_out, "Results JSONL")->required();

    // classify
    auto* classify = app.add_subcommand("classify", "Retrieval-augmented LLM classification");
    std::string cl_lib, cl_manifest, cl_out;
    classify->add_option("--lib", cl_lib, "Library file")->required();
    classify->add_option("--test-manifest", cl_manifest, "Manifest of images to classify")->required();
    classify->add_option("--out", cl_out, "Results JSONL")->required();

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Metrics and reports from result files");
    std::vector<std::string> ev_results;
    std::string ev_out;
    evaluate->add_option("--results", ev_results, "Result JSONL files")->required();
    evaluate->add_option("--out", ev_out, "Report directory")->required();

    // pipeline
    auto* pipeline_cmd = app.add_subcommand("pipeline", "End-to-end run with every artifact persisted");
    std::string pl_out;
    bool pl_no_llm = false;
    pipeline_cmd->add_option("--out", pl_out, "Output directory")->required();
    pipeline_cmd->add_flag("--no-llm", pl_no_llm, "Skip the LLM stage");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*synth) {
            const auto cfg = load_config(g);
            const double rate = cfg.signal.sample_rate_hz;
            const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
            if (n == 0) fail(ErrorCode::argument, "--seconds is shorter than one sample");
            const std::size_t frames = (n + cfg.signal.frame_length() - 1) / cfg.signal.frame_length();
            auto tx = signal::transmit_waveform(cfg.signal, frames);
            tx.samples.resize(n);
            wav::write(synth_out, tx.samples, rate, pcm16 ? wav::SampleFormat::pcm16 : wav::SampleFormat::float32);
            log.info("synth", {{"out", synth_out}, {"samples", n}, {"frames", frames}});
        } else if (*simulate) {
            auto cfg = load_config(g);
            if (simulate->count("--labels")) {
                cfg.labels.clear();
                for (const auto& l : sim_labels) {
                    const auto c = canonical_label(l);
                    if (!c) fail(ErrorCode::argument, "unknown gesture label '" + l + "'");
                    cfg.labels.push_back(*c);
                }
            }
            if (sim_count) cfg.samples_per_label = *sim_count;
            cfg.validate();
            const auto m = pipeline::simulate_dataset(cfg, sim_out, g.jobs);
            log.info("simulate", {{"out", sim_out}, {"records", m.size()}, {"config_hash", config::config_hash(cfg)}});
        } else if (*extract) {
            const auto cfg = load_config(g);
            if (fs::is_directory(ex_in)) {
                const auto m = dataset::read_manifest(fs::path(ex_in) / "manifest.jsonl");
                const auto out = pipeline::extract_dataset(m, ex_in, cfg, ex_out, g.jobs);
                log.info("extract", {{"out", ex_out}, {"records", out.size()}});
            } else {
                const auto audio = wav::read(ex_in);
                const auto img = pipeline::extract_image(cfg, {audio.samples, audio.sample_rate_hz});
                fs::path out = ex_out;
                if (out.extension() != ".png") out = out / (fs::path(ex_in).stem().string() + ".png");
                if (out.has_parent_path()) fs::create_directories(out.parent_path());
                image::write_png(out, img);
                log.info("extract", {{"out", out.string()}, {"width", img.width}, {"height", img.height}});
            }
        } else if (*split) {
            const auto cfg = load_config(g);
            auto m = dataset::read_manifest(sp_manifest);
            m = dataset::split(m, cfg.split_ratio, cfg.split_seed);
            for (auto& r : m) {
                r.image_path = rebase(r.image_path, dir_of(sp_manifest), dir_of(sp_out));
                r.audio_path = rebase(r.audio_path, dir_of(sp_manifest), dir_of(sp_out));
            }
            dataset::write_manifest(sp_out, m);
            std::size_t train = 0;
            for (const auto& r : m) train += r.split == dataset::Split::train;
            log.info("split", {{"out", sp_out}, {"train", train}, {"test", m.size() - train}});
        } else if (*library) {
            const auto cfg = load_config(g);
            if (g.category.empty()) fail(ErrorCode::argument, "library needs --category");
            const Category cat = parse_category(g.category);
            auto m = dataset::read_manifest(lib_manifest);
            const auto features = pipeline::load_features(m, dir_of(lib_manifest), g.jobs);
            // Library entries point at their images relative to the library file.
            for (auto& r : m) r.image_path = rebase(r.image_path, dir_of(lib_manifest), dir_of(lib_out));
            const auto lib = dataset::build_library(m, cat, features, config::config_hash(cfg));
            dataset::save_library(lib_out, lib);
            log.info("library", {{"out", lib_out}, {"category", g.category}, {"entries", lib.size()}});
        } else if (*retrieve) {
            const auto lib = dataset::load_library(rt_lib);
            const auto q = dataset::extract_features(image::read_png(rt_query));
            const auto hits = rt_k ? retrieval::knn_query(q.values, lib, rt_k) : retrieval::retrieve_per_class(q.values, lib);
            if (rt_json) {
                json arr = json::array();
                for (const auto& h : hits) {
                    arr.push_back({{"sample_id", h.sample_id},
                                   {"gesture_label", h.gesture_label},
                                   {"distance", h.distance},
                                   {"image_path", h.image_path}});
                }
                std::cout << arr.dump(2) << "\n";
            } else {
                for (const auto& h : hits) {
                    std::printf("%-8s %-16s %.6f\n", h.gesture_label.c_str(), h.sample_id.c_str(), h.distance);
                }
            }
        } else if (*bl_train) {
            const auto cfg = load_config(g);
            if (g.category.empty()) fail(ErrorCode::argument, "baseline train needs --category");
            const Category cat = parse_category(g.category);
            const auto kind = baselines::parse_kind(bl_kind);
            const auto m = dataset::read_manifest(bl_manifest);
            const auto features = pipeline::load_features(m, dir_of(bl_manifest), g.jobs);
            const auto ts = pipeline::training_set(m, features, cat);
            const auto model = baselines::train(kind, ts.vectors, ts.labels, cfg.hyperparams, cfg.train_seed, ts.sample_ids);
            pipeline::save_model(bl_out, model, config::config_hash(cfg));
            log.info("baseline.train", {{"kind", bl_kind}, {"category", g.category}, {"train", ts.vectors.size()}});
        } else if (*bl_eval) {
            const auto model = pipeline::load_model(bl_model);
            const auto cat = *category_of(model.label_set.front());
            const auto m = dataset::read_manifest(bl_manifest);
            const auto features = pipeline::load_features(m, dir_of(bl_manifest), g.jobs);
            const auto res = pipeline::evaluate_model(model, std::string(baselines::to_string(model.kind)), m, features, cat);
            eval::write_results(bl_out, res);
            log.info("baseline.eval", {{"out", bl_out}, {"results", res.size()}});
        } else if (*classify) {
            const auto cfg = load_config(g);
            const auto loaded = dataset::load_library(cl_lib);
            // Absolute image paths let library and manifest live in different places.
            std::map<std::string, std::vector<dataset::LibraryEntry>> classes = loaded.classes();
            for (auto& [label, entries] : classes) {
                for (auto& e : entries) e.image_path = absolute_of(e.image_path, dir_of(cl_lib));
            }
            const dataset::VectorLibrary lib(loaded.category(), std::move(classes), loaded.config_hash());
            auto m = dataset::read_manifest(cl_manifest);
            dataset::Manifest tests;
            for (auto& r : m) {
                if (r.category != lib.category() || r.split == dataset::Split::train) continue;
                r.split = dataset::Split::test;
                r.image_path = absolute_of(r.image_path, dir_of(cl_manifest));
                tests.push_back(r);
            }
            const auto features = pipeline::load_features(tests, ".", g.jobs);
            const auto res = pipeline::classify_with_llm(tests, ".", features, lib, cfg.provider);
            eval::write_results(cl_out, res);
            std::size_t ok = 0;
            for (const auto& r : res) ok += r.status == eval::Status::ok;
            log.info("classify", {{"out", cl_out}, {"results", res.size()}, {"ok", ok}});
        } else if (*evaluate) {
            const auto cfg = load_config(g);
            std::vector<eval::ResultRecord> all;
            for (const auto& p : ev_results) {
                for (auto& r : eval::read_results(p)) {
                    if (r.model.empty()) r.model = fs::path(p).stem().string();
                    if (r.category.empty()) {
                        const auto c = category_of(r.truth);
                        if (!c) fail(ErrorCode::data, "unknown truth label '" + r.truth + "'");
                        r.category = std::string(to_string(*c));
                    }
                    all.push_back(std::move(r));
                }
            }
            const auto entries = eval::summarize(all, pipeline::category_labels());
            eval::write_report(ev_out, entries, pipeline::report_meta(cfg));
            std::cout << eval::report_txt(entries, pipeline::report_meta(cfg));
        } else if (*pipeline_cmd) {
            const auto cfg = load_config(g);
            pipeline::PipelineOptions opt;
            opt.jobs = g.jobs;
            opt.categories = selected_categories(g);
            opt.run_llm = !pl_no_llm;
            log.info("pipeline.start", {{"out", pl_out}, {"config_hash", config::config_hash(cfg)}});
            const auto entries = pipeline::run_pipeline(cfg, pl_out, opt);
            std::cout << eval::report_txt(entries, pipeline::report_meta(cfg));
        }
    } catch (const Error& e) {
        log.error(e.what(), code_name(e.code()));
        return exit_for(e.code());
    } catch (const std::exception& e) {
        log.error(e.what(), "internal");
        return kInternal;
    }
    return kOk;
}
