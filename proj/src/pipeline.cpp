#include "cirgest/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "cirgest/channel_sim.hpp"
#include "cirgest/error.hpp"
#include "cirgest/llm.hpp"
#include "cirgest/receiver.hpp"
#include "cirgest/retrieval.hpp"
#include "cirgest/wav.hpp"
#include "util.hpp"

namespace cirgest::pipeline {

namespace fs = std::filesystem;

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr first;
    std::mutex mu;
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&] {
            while (!stop) {
                const std::size_t i = next++;
                if (i >= n) break;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!first) first = std::current_exception();
                    stop = true;
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    if (first) std::rethrow_exception(first);
}

std::string sample_id(const std::string& label, std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu", index);
    return label + "_" + buf;
}

namespace {

std::uint64_t label_hash(const std::string& label) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : label) h = (h ^ c) * 1099511628211ULL;
    return h;
}

std::uint64_t derive(std::uint64_t sim_seed, const std::string& label, std::size_t index, std::uint64_t stream) {
    return detail::mix_seed(detail::mix_seed(detail::mix_seed(sim_seed ^ stream) ^ label_hash(label)) ^ index);
}

image::GrayImage read_record_image(const fs::path& base_dir, const std::string& path) {
    return image::read_png(dataset::resolve(base_dir, path));
}

}  // namespace

std::uint64_t trajectory_seed(std::uint64_t sim_seed, const std::string& label, std::size_t index) {
    return derive(sim_seed, label, index, 0x7472616aULL);
}

std::uint64_t noise_seed(std::uint64_t sim_seed, const std::string& label, std::size_t index) {
    return derive(sim_seed, label, index, 0x6e6f6973ULL);
}

signal::PassbandSignal simulate_recording(const config::RunConfig& cfg, const std::string& label,
                                          std::size_t index, dataset::SampleRecord* record) {
    sim::TrajectoryParams tp = cfg.trajectory;
    tp.frame_rate_hz = cfg.signal.frame_rate_hz();
    const std::uint64_t tseed = trajectory_seed(cfg.sim_seed, label, index);
    const auto traj = sim::make_trajectory(label, tp, tseed);

    sim::SceneConfig scene = cfg.scene;
    scene.noise_seed = noise_seed(cfg.sim_seed, label, index);

    // Two spare frames: one is dropped as start-up transient, one absorbs the
    // sync offset.
    const auto frames = static_cast<std::size_t>(std::ceil(traj.duration_s * tp.frame_rate_hz)) + 2;
    auto rx = sim::simulate(signal::transmit_waveform(cfg.signal, frames), scene, traj);

    if (record) {
        record->sample_id = sample_id(label, index);
        record->gesture_label = label;
        record->category = *category_of(label);
        record->seed = tseed;
        record->snr_db = std::isfinite(scene.snr_db) ? std::optional<double>(scene.snr_db) : std::nullopt;
        record->duration_s = static_cast<double>(rx.samples.size()) / rx.sample_rate_hz;
    }
    return rx;
}

image::GrayImage extract_image(const config::RunConfig& cfg, const signal::PassbandSignal& recording) {
    const auto ex = receiver::extract(recording, cfg.signal, cfg.receiver);
    return receiver::render_image(ex.dcir);
}

dataset::Manifest simulate_dataset(const config::RunConfig& cfg, const fs::path& out_dir, std::size_t jobs) {
    cfg.validate();
    fs::create_directories(out_dir / "audio");
    dataset::Manifest manifest;
    for (const auto& label : cfg.labels) {
        for (std::size_t i = 0; i < cfg.samples_per_label; ++i) {
            dataset::SampleRecord r;
            r.sample_id = sample_id(label, i);
            r.gesture_label = label;
            manifest.push_back(r);
        }
    }
    parallel_for(manifest.size(), jobs, [&](std::size_t k) {
        auto& r = manifest[k];
        const std::size_t index = k % cfg.samples_per_label;
        const auto rx = simulate_recording(cfg, r.gesture_label, index, &r);
        r.audio_path = "audio/" + r.sample_id + ".wav";
        wav::write(out_dir / r.audio_path, rx.samples, rx.sample_rate_hz);
    });
    dataset::validate(manifest);
    dataset::write_manifest(out_dir / "manifest.jsonl", manifest);
    return manifest;
}

dataset::Manifest extract_dataset(const dataset::Manifest& manifest, const fs::path& in_dir,
                                  const config::RunConfig& cfg, const fs::path& out_dir, std::size_t jobs) {
    cfg.receiver.validate();
    fs::create_directories(out_dir / "images");
    const auto tmpl = signal::receiver_template(cfg.signal);
    dataset::Manifest out = manifest;
    parallel_for(out.size(), jobs, [&](std::size_t k) {
        auto& r = out[k];
        if (r.audio_path.empty()) fail(ErrorCode::input, "sample '" + r.sample_id + "' has no audio_path");
        const auto audio = wav::read(dataset::resolve(in_dir, r.audio_path));
        if (std::abs(audio.sample_rate_hz - cfg.signal.sample_rate_hz) > 1e-6) {
            fail(ErrorCode::input, r.audio_path + ": sample rate does not match the configured signal");
        }
        const signal::PassbandSignal rx{audio.samples, audio.sample_rate_hz};
        const auto ex = receiver::extract(rx, cfg.signal, tmpl, cfg.receiver);
        r.image_path = "images/" + r.sample_id + ".png";
        image::write_png(out_dir / r.image_path, receiver::render_image(ex.dcir));
        r.tap_count = cfg.receiver.tap_count;
        r.frame_rate_hz = ex.cir.frame_rate_hz;
        // Keep the audio reachable from the new manifest location.
        const fs::path audio_abs = fs::absolute(dataset::resolve(in_dir, r.audio_path));
        r.audio_path = fs::proximate(audio_abs, fs::absolute(out_dir)).generic_string();
    });
    dataset::write_manifest(out_dir / "manifest.jsonl", out);
    return out;
}

std::map<std::string, dataset::FeatureVector> load_features(const dataset::Manifest& manifest,
                                                            const fs::path& base_dir, std::size_t jobs) {
    std::vector<dataset::FeatureVector> vecs(manifest.size());
    parallel_for(manifest.size(), jobs, [&](std::size_t k) {
        const auto& r = manifest[k];
        if (r.image_path.empty()) fail(ErrorCode::input, "sample '" + r.sample_id + "' has no image_path");
        vecs[k] = dataset::extract_features(read_record_image(base_dir, r.image_path), r.sample_id);
    });
    std::map<std::string, dataset::FeatureVector> out;
    for (auto& v : vecs) {
        auto id = v.sample_id;
        out.emplace(std::move(id), std::move(v));
    }
    return out;
}

namespace {

const dataset::FeatureVector& feature_of(const std::map<std::string, dataset::FeatureVector>& features,
                                         const std::string& id) {
    auto it = features.find(id);
    if (it == features.end()) fail(ErrorCode::data, "no features for sample '" + id + "'");
    return it->second;
}

}  // namespace

TrainingSet training_set(const dataset::Manifest& manifest,
                         const std::map<std::string, dataset::FeatureVector>& features, Category category) {
    TrainingSet ts;
    for (const auto& r : manifest) {
        if (r.category != category || r.split != dataset::Split::train) continue;
        ts.vectors.push_back(feature_of(features, r.sample_id).values);
        ts.labels.push_back(r.gesture_label);
        ts.sample_ids.push_back(r.sample_id);
    }
    if (ts.vectors.empty()) {
        fail(ErrorCode::training, "no train samples for category '" + std::string(to_string(category)) + "'");
    }
    return ts;
}

std::vector<eval::ResultRecord> evaluate_model(const baselines::TrainedModel& model, const std::string& model_name,
                                               const dataset::Manifest& manifest,
                                               const std::map<std::string, dataset::FeatureVector>& features,
                                               Category category) {
    std::vector<eval::ResultRecord> out;
    for (const auto& r : manifest) {
        if (r.category != category || r.split != dataset::Split::test) continue;
        const auto pred = baselines::classify(model, feature_of(features, r.sample_id).values);
        eval::ResultRecord rec;
        rec.sample_id = r.sample_id;
        rec.truth = r.gesture_label;
        rec.predicted = pred.label;
        rec.model = model_name;
        rec.category = std::string(to_string(category));
        rec.score = pred.score;
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<eval::ResultRecord> classify_with_llm(const dataset::Manifest& manifest, const fs::path& base_dir,
                                                  const std::map<std::string, dataset::FeatureVector>& features,
                                                  const dataset::VectorLibrary& lib,
                                                  const llm::ProviderConfig& provider_cfg) {
    const Category category = lib.category();
    std::vector<const dataset::SampleRecord*> tests;
    for (const auto& r : manifest) {
        if (r.category != category || r.split != dataset::Split::test) continue;
        if (lib.contains(r.sample_id)) fail(ErrorCode::library, "test sample '" + r.sample_id + "' is in the library");
        tests.push_back(&r);
    }
    auto provider = llm::make_provider(provider_cfg);

    // Exemplar rasters are shared across prompts, so read each once.
    std::map<std::string, image::GrayImage> exemplar_cache;
    for (const auto& [label, entries] : lib.classes()) {
        for (const auto& e : entries) {
            if (!e.image_path.empty()) exemplar_cache.emplace(e.sample_id, read_record_image(base_dir, e.image_path));
        }
    }

    std::vector<llm::PromptBundle> prompts(tests.size());
    for (std::size_t k = 0; k < tests.size(); ++k) {
        const auto& r = *tests[k];
        const auto retrieved = retrieval::retrieve_per_class(feature_of(features, r.sample_id).values, lib);
        std::vector<image::GrayImage> exemplars;
        for (const auto& s : retrieved) {
            auto it = exemplar_cache.find(s.sample_id);
            if (it == exemplar_cache.end()) fail(ErrorCode::library, "library entry '" + s.sample_id + "' has no image");
            exemplars.push_back(it->second);
        }
        prompts[k] = llm::build_prompt(read_record_image(base_dir, r.image_path), retrieved, exemplars, category);
    }

    const auto outcomes = llm::classify_batch(prompts, *provider, provider_cfg);
    std::vector<eval::ResultRecord> out;
    for (std::size_t k = 0; k < tests.size(); ++k) {
        eval::ResultRecord rec;
        rec.sample_id = tests[k]->sample_id;
        rec.truth = tests[k]->gesture_label;
        rec.predicted = outcomes[k].predicted_label;
        rec.status = outcomes[k].status;
        rec.reasoning = outcomes[k].status == eval::Status::transport_error ? outcomes[k].error
                                                                            : outcomes[k].reasoning_text;
        rec.model = "llm:" + provider->name();
        rec.category = std::string(to_string(category));
        out.push_back(std::move(rec));
    }
    return out;
}

std::map<std::string, std::vector<std::string>> category_labels() {
    std::map<std::string, std::vector<std::string>> out;
    for (Category c : kCategories) out[std::string(to_string(c))] = labels_of(c);
    return out;
}

eval::ReportMeta report_meta(const config::RunConfig& cfg) {
    return {config::config_hash(cfg),
            {{"sim_seed", cfg.sim_seed}, {"split_seed", cfg.split_seed}, {"train_seed", cfg.train_seed}}};
}

void save_model(const fs::path& path, const baselines::TrainedModel& model, const std::string& config_hash) {
    auto j = baselines::to_json(model);
    j["config_hash"] = config_hash;
    detail::write_text(path, j.dump());
}

baselines::TrainedModel load_model(const fs::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_text(path));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::input, path.string() + ": " + e.what());
    }
    j.erase("config_hash");
    return baselines::model_from_json(j);
}

namespace {

// Prefixes failures with the stage name, keeping the error code.
template <typename F>
auto stage(const char* name, F&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.code(), std::string(name) + ": " + e.what());
    }
}

}  // namespace

std::vector<eval::ReportEntry> run_pipeline(const config::RunConfig& cfg, const fs::path& out_dir,
                                            const PipelineOptions& options) {
    cfg.validate();
    const std::string hash = config::config_hash(cfg);
    fs::create_directories(out_dir);
    detail::write_text(out_dir / "config.json",
                       nlohmann::json{{"config", config::to_json(cfg)}, {"config_hash", hash}}.dump(2) + "\n");

    const fs::path sim_dir = out_dir / "sim";
    const fs::path extract_dir = out_dir / "extract";
    const auto simulated = stage("simulate", [&] { return simulate_dataset(cfg, sim_dir, options.jobs); });
    auto manifest = stage("extract", [&] { return extract_dataset(simulated, sim_dir, cfg, extract_dir, options.jobs); });
    manifest = stage("split", [&] {
        auto m = dataset::split(manifest, cfg.split_ratio, cfg.split_seed);
        dataset::write_manifest(extract_dir / "split.jsonl", m);
        return m;
    });
    const auto features = stage("features", [&] { return load_features(manifest, extract_dir, options.jobs); });

    std::vector<eval::ResultRecord> all;
    for (Category c : options.categories) {
        bool present = false;
        for (const auto& r : manifest) present = present || r.category == c;
        if (!present) continue;
        const std::string cat(to_string(c));

        for (auto kind : options.baselines) {
            const std::string name(baselines::to_string(kind));
            auto res = stage("baseline", [&] {
                const auto ts = training_set(manifest, features, c);
                const auto model =
                    baselines::train(kind, ts.vectors, ts.labels, cfg.hyperparams, cfg.train_seed, ts.sample_ids);
                save_model(out_dir / "models" / (name + "_" + cat + ".json"), model, hash);
                return evaluate_model(model, name, manifest, features, c);
            });
            eval::write_results(out_dir / "results" / (name + "_" + cat + ".jsonl"), res);
            all.insert(all.end(), res.begin(), res.end());
        }

        if (options.run_llm) {
            const auto lib = stage("library", [&] {
                auto l = dataset::build_library(manifest, c, features, hash);
                dataset::save_library(out_dir / "libraries" / (cat + ".bin"), l);
                return l;
            });
            auto res = stage("classify", [&] { return classify_with_llm(manifest, extract_dir, features, lib, cfg.provider); });
            eval::write_results(out_dir / "results" / ("llm_" + cat + ".jsonl"), res);
            all.insert(all.end(), res.begin(), res.end());
        }
    }

    return stage("evaluate", [&] {
        auto entries = eval::summarize(all, category_labels());
        eval::write_report(out_dir, entries, report_meta(cfg));
        return entries;
    });
}

}  // namespace cirgest::pipeline
