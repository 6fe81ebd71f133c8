#pragma once

// Synthetic acoustic channel: static multipath plus one moving point
// scatterer (the hand) following a parametric gesture trajectory.

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cirgest/signal.hpp"
#include "cirgest/types.hpp"

namespace cirgest::sim {

struct StaticPath {
    double delay_s = 0.0;
    double gain = 0.0;
};

struct SceneConfig {
    Vec3 speaker_pos{-0.025, 0.0, 0.0};
    Vec3 mic_pos{0.025, 0.0, 0.0};
    // Direct path, desk bounce, back wall.
    std::vector<StaticPath> static_paths{
        {0.05 / 343.0, 0.45}, {0.25 / 343.0, 0.15}, {0.85 / 343.0, 0.04}};
    double reflector_gain_ref = 0.009;
    double speed_of_sound_mps = 343.0;
    double snr_db = std::numeric_limits<double>::infinity();
    std::uint64_t noise_seed = 0;

    void validate() const;
};

struct TrajectoryParams {
    double duration_s = 1.6;
    double scale_m = 0.2;
    Vec3 center{0.12, 0.25, 0.12};
    // Drawing plane; tilted so both stroke axes change the echo path length.
    Vec3 plane_u{1.0, 0.0, 0.0};
    Vec3 plane_v{0.0, 0.6, 0.8};
    double frame_rate_hz = 80.0;
};

struct GestureTrajectory {
    std::string gesture_label;
    std::vector<Vec3> positions;  // one per frame, t_i = i / frame_rate_hz
    double duration_s = 0.0;
    double frame_rate_hz = 0.0;

    /// Hand position at time `t_s`, linear between frame samples, held at the ends.
    Vec3 position_at(double t_s) const;
};

struct GroundTruthCIR {
    std::vector<Complex> taps;
};

inline constexpr double kMaxHandSpeedMps = 5.0;

/// Deterministic stroke path for `label`; the seed jitters start phase,
/// speed profile and scale (+/-10%).
GestureTrajectory make_trajectory(const std::string& label, const TrajectoryParams& params,
                                  std::uint64_t seed);

/// A hand that stays at `where` for the whole duration.
GestureTrajectory stationary_trajectory(const Vec3& where, const TrajectoryParams& params);

/// Round-trip echo delay (seconds) and amplitude of a point scatterer at `hand`.
struct Echo {
    double delay_s;
    double gain;
};
Echo reflector_echo(const SceneConfig& scene, const Vec3& hand);

/// Static-path channel (no moving reflector).
signal::PassbandSignal simulate(const signal::PassbandSignal& input, const SceneConfig& scene);

/// Static paths plus the moving reflector along `traj`, plus AWGN at snr_db.
signal::PassbandSignal simulate(const signal::PassbandSignal& input, const SceneConfig& scene,
                                const GestureTrajectory& traj);

/// Tap weights at sample resolution for frame `frame_index`, each delay split
/// across its two neighbouring taps by linear-interpolation weights.
GroundTruthCIR ground_truth_cir(const SceneConfig& scene, const GestureTrajectory* traj,
                                std::size_t frame_index, std::size_t tap_count,
                                double sample_rate_hz);

/// Carrier phase applied per tap: the channel as seen after down-conversion.
GroundTruthCIR to_baseband(const GroundTruthCIR& cir, double carrier_hz, double sample_rate_hz);

/// y[n] = sum_k taps[k] * x[n - k] with x taken as zero before index 0.
std::vector<Complex> apply_cir(std::span<const double> x, const GroundTruthCIR& cir);

}  // namespace cirgest::sim
