#include "cirgest/config.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include <openssl/evp.h>

#include "cirgest/error.hpp"
#include "util.hpp"

namespace cirgest::config {

using nlohmann::json;

namespace {

json vec3(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec3_from(const json& j) {
    if (!j.is_array() || j.size() != 3) fail(ErrorCode::config, "expected a 3-element array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

// Reads the present keys of one section and rejects unknown ones.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) fail(ErrorCode::config, "config section '" + name_ + "' must be an object");
    }

    template <typename T>
    Section& field(const char* key, T& out) {
        known_.insert(key);
        if (auto it = j_.find(key); it != j_.end()) {
            try {
                out = it->template get<T>();
            } catch (const json::exception& e) {
                fail(ErrorCode::config, name_ + "." + key + ": " + e.what());
            }
        }
        return *this;
    }

    template <typename F>
    Section& custom(const char* key, F&& read) {
        known_.insert(key);
        if (auto it = j_.find(key); it != j_.end()) {
            try {
                read(*it);
            } catch (const json::exception& e) {
                fail(ErrorCode::config, name_ + "." + key + ": " + e.what());
            }
        }
        return *this;
    }

    void done() const {
        for (const auto& [k, v] : j_.items()) {
            if (!known_.count(k)) fail(ErrorCode::config, "unknown config key '" + name_ + "." + k + "'");
        }
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> known_;
};

const json& section(const json& j, const char* key) {
    static const json empty = json::object();
    auto it = j.find(key);
    return it == j.end() ? empty : *it;
}

}  // namespace

sim::SceneConfig RunConfig::default_scene() {
    sim::SceneConfig s;
    s.snr_db = 20.0;
    return s;
}

void RunConfig::validate() const {
    signal.validate();
    scene.validate();
    receiver.validate();
    hyperparams.validate();
    provider.validate();
    if (labels.empty()) fail(ErrorCode::config, "label list is empty");
    for (const auto& l : labels) {
        if (!category_of(l)) fail(ErrorCode::config, "unknown gesture label '" + l + "'");
    }
    if (samples_per_label == 0) fail(ErrorCode::config, "samples_per_label must be positive");
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) fail(ErrorCode::config, "split_ratio must lie in (0, 1)");
    if (!(trajectory.duration_s > 0.0) || !(trajectory.scale_m > 0.0)) {
        fail(ErrorCode::config, "trajectory duration and scale must be positive");
    }
}

json to_json(const RunConfig& c) {
    json j;
    j["signal"] = {{"sample_rate_hz", c.signal.sample_rate_hz},
                   {"upsample_factor", c.signal.upsample_factor},
                   {"lowpass_cutoff_hz", c.signal.lowpass_cutoff_hz},
                   {"carrier_hz", c.signal.carrier_hz},
                   {"bandpass_halfwidth_hz", c.signal.bandpass_halfwidth_hz},
                   {"filter_tap_count", c.signal.filter_tap_count},
                   {"tsc_index", c.signal.tsc_index},
                   {"frame_bits", c.signal.frame_bits}};
    json paths = json::array();
    for (const auto& p : c.scene.static_paths) paths.push_back({{"delay_s", p.delay_s}, {"gain", p.gain}});
    j["scene"] = {{"speaker_pos", vec3(c.scene.speaker_pos)},
                  {"mic_pos", vec3(c.scene.mic_pos)},
                  {"static_paths", paths},
                  {"reflector_gain_ref", c.scene.reflector_gain_ref},
                  {"speed_of_sound_mps", c.scene.speed_of_sound_mps},
                  // JSON has no infinity; null means noiseless.
                  {"snr_db", std::isfinite(c.scene.snr_db) ? json(c.scene.snr_db) : json(nullptr)}};
    j["trajectory"] = {{"duration_s", c.trajectory.duration_s},
                       {"scale_m", c.trajectory.scale_m},
                       {"center", vec3(c.trajectory.center)},
                       {"plane_u", vec3(c.trajectory.plane_u)},
                       {"plane_v", vec3(c.trajectory.plane_v)}};
    j["receiver"] = {{"tap_count", c.receiver.tap_count},
                     {"sync_threshold", c.receiver.sync_threshold},
                     {"ridge_factor", c.receiver.ridge_factor},
                     {"skip_frames", c.receiver.skip_frames},
                     {"precursor_taps", c.receiver.precursor_taps},
                     {"normalize_frames", c.receiver.normalize_frames},
                     {"refine_radius", c.receiver.sync.refine_radius},
                     {"refine_margin", c.receiver.sync.refine_margin}};
    j["dataset"] = {{"labels", c.labels},
                    {"samples_per_label", c.samples_per_label},
                    {"sim_seed", c.sim_seed},
                    {"split_ratio", c.split_ratio},
                    {"split_seed", c.split_seed}};
    j["baselines"] = baselines::to_json(c.hyperparams);
    j["baselines"]["train_seed"] = c.train_seed;
    j["provider"] = llm::to_json(c.provider);
    return j;
}

RunConfig from_json(const json& j) {
    if (!j.is_object()) fail(ErrorCode::config, "config must be a JSON object");
    RunConfig c;
    Section(j, "config")
        .custom("signal", [](const json&) {})
        .custom("scene", [](const json&) {})
        .custom("trajectory", [](const json&) {})
        .custom("receiver", [](const json&) {})
        .custom("dataset", [](const json&) {})
        .custom("baselines", [](const json&) {})
        .custom("provider", [](const json&) {})
        .done();

    Section(section(j, "signal"), "signal")
        .field("sample_rate_hz", c.signal.sample_rate_hz)
        .field("upsample_factor", c.signal.upsample_factor)
        .field("lowpass_cutoff_hz", c.signal.lowpass_cutoff_hz)
        .field("carrier_hz", c.signal.carrier_hz)
        .field("bandpass_halfwidth_hz", c.signal.bandpass_halfwidth_hz)
        .field("filter_tap_count", c.signal.filter_tap_count)
        .field("tsc_index", c.signal.tsc_index)
        .field("frame_bits", c.signal.frame_bits)
        .done();

    Section(section(j, "scene"), "scene")
        .custom("speaker_pos", [&](const json& v) { c.scene.speaker_pos = vec3_from(v); })
        .custom("mic_pos", [&](const json& v) { c.scene.mic_pos = vec3_from(v); })
        .custom("static_paths",
                [&](const json& v) {
                    c.scene.static_paths.clear();
                    for (const auto& p : v) c.scene.static_paths.push_back({p.at("delay_s").get<double>(), p.at("gain").get<double>()});
                })
        .field("reflector_gain_ref", c.scene.reflector_gain_ref)
        .field("speed_of_sound_mps", c.scene.speed_of_sound_mps)
        .custom("snr_db",
                [&](const json& v) {
                    c.scene.snr_db = v.is_null() ? std::numeric_limits<double>::infinity() : v.get<double>();
                })
        .done();

    Section(section(j, "trajectory"), "trajectory")
        .field("duration_s", c.trajectory.duration_s)
        .field("scale_m", c.trajectory.scale_m)
        .custom("center", [&](const json& v) { c.trajectory.center = vec3_from(v); })
        .custom("plane_u", [&](const json& v) { c.trajectory.plane_u = vec3_from(v); })
        .custom("plane_v", [&](const json& v) { c.trajectory.plane_v = vec3_from(v); })
        .done();

    Section(section(j, "receiver"), "receiver")
        .field("tap_count", c.receiver.tap_count)
        .field("sync_threshold", c.receiver.sync_threshold)
        .field("ridge_factor", c.receiver.ridge_factor)
        .field("skip_frames", c.receiver.skip_frames)
        .field("precursor_taps", c.receiver.precursor_taps)
        .field("normalize_frames", c.receiver.normalize_frames)
        .field("refine_radius", c.receiver.sync.refine_radius)
        .field("refine_margin", c.receiver.sync.refine_margin)
        .done();

    Section(section(j, "dataset"), "dataset")
        .field("labels", c.labels)
        .field("samples_per_label", c.samples_per_label)
        .field("sim_seed", c.sim_seed)
        .field("split_ratio", c.split_ratio)
        .field("split_seed", c.split_seed)
        .done();

    Section(section(j, "baselines"), "baselines")
        .field("knn_k", c.hyperparams.knn_k)
        .field("svm_lambda", c.hyperparams.svm_lambda)
        .field("svm_epochs", c.hyperparams.svm_epochs)
        .field("rf_trees", c.hyperparams.rf_trees)
        .field("rf_max_depth", c.hyperparams.rf_max_depth)
        .field("rf_min_leaf", c.hyperparams.rf_min_leaf)
        .field("rf_max_features", c.hyperparams.rf_max_features)
        .field("train_seed", c.train_seed)
        .done();

    Section(section(j, "provider"), "provider")
        .field("provider", c.provider.provider)
        .field("endpoint_url", c.provider.endpoint_url)
        .field("model_name", c.provider.model_name)
        .field("api_key_env", c.provider.api_key_env)
        .field("max_tokens", c.provider.max_tokens)
        .field("temperature", c.provider.temperature)
        .field("timeout_s", c.provider.timeout_s)
        .field("max_retries", c.provider.max_retries)
        .field("backoff_initial_s", c.provider.backoff_initial_s)
        .field("backoff_max_s", c.provider.backoff_max_s)
        .field("max_concurrency", c.provider.max_concurrency)
        .field("requests_per_second", c.provider.requests_per_second)
        .done();

    for (auto& l : c.labels) {
        const auto canon = canonical_label(l);
        if (!canon) fail(ErrorCode::config, "unknown gesture label '" + l + "'");
        l = *canon;
    }
    c.validate();
    return c;
}

RunConfig load(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(detail::read_text(path));
    } catch (const json::exception& e) {
        fail(ErrorCode::config, path.string() + ": " + e.what());
    }
    return from_json(j);
}

std::string canonical_text(const RunConfig& cfg) { return to_json(cfg).dump(); }

std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        fail(ErrorCode::io, "SHA-256 digest failed");
    }
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        hex += buf;
    }
    return hex;
}

std::string config_hash(const RunConfig& cfg) { return sha256_hex(canonical_text(cfg)); }

}  // namespace cirgest::config
