#pragma once

// Merged run configuration with a canonical JSON form and digest.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cirgest/baselines.hpp"
#include "cirgest/channel_sim.hpp"
#include "cirgest/llm.hpp"
#include "cirgest/receiver.hpp"
#include "cirgest/signal.hpp"

namespace cirgest::config {

struct RunConfig {
    signal::SignalConfig signal;
    sim::SceneConfig scene = default_scene();
    sim::TrajectoryParams trajectory;
    receiver::ReceiverConfig receiver;
    std::vector<std::string> labels = all_labels();
    std::size_t samples_per_label = 20;
    std::uint64_t sim_seed = 0;
    double split_ratio = 0.8;
    std::uint64_t split_seed = 0;
    baselines::Hyperparams hyperparams;
    std::uint64_t train_seed = 0;
    llm::ProviderConfig provider;

    static sim::SceneConfig default_scene();
    void validate() const;
};

/// Keys are sorted, so the dump does not depend on field order.
nlohmann::json to_json(const RunConfig& cfg);
/// Fields absent from `j` keep their defaults; unknown keys are rejected.
RunConfig from_json(const nlohmann::json& j);
RunConfig load(const std::filesystem::path& path);

std::string canonical_text(const RunConfig& cfg);
/// Hex SHA-256 of canonical_text.
std::string config_hash(const RunConfig& cfg);
std::string sha256_hex(std::string_view data);

}  // namespace cirgest::config
