#include "cirgest/channel_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "cirgest/error.hpp"
#include "util.hpp"

namespace cirgest::sim {

namespace {

struct Point2 {
    double u;
    double v;
};
using Stroke = std::vector<Point2>;

std::vector<Point2> arc(double cu, double cv, double ru, double rv, double a0, double a1,
                        int points) {
    std::vector<Point2> p;
    for (int i = 0; i <= points; ++i) {
        const double a = a0 + (a1 - a0) * static_cast<double>(i) / points;
        p.push_back({cu + ru * std::cos(a), cv + rv * std::sin(a)});
    }
    return p;
}

// Unit-box stroke sequences, u to the right and v up. Pen lifts happen between
// consecutive strokes.
std::vector<Stroke> strokes_for(const std::string& label, double phase) {
    if (label == "1") return {{{-0.15, 0.3}, {0.0, 0.5}, {0.0, -0.5}}};
    if (label == "2") {
        Stroke s = arc(0.0, 0.2, 0.35, 0.28, std::numbers::pi * 0.9, -std::numbers::pi * 0.25, 10);
        s.push_back({-0.4, -0.5});
        s.push_back({0.4, -0.5});
        return {s};
    }
    if (label == "3") {
        Stroke s = arc(0.0, 0.25, 0.32, 0.24, std::numbers::pi * 0.85, -std::numbers::pi * 0.5, 10);
        const auto lower = arc(0.0, -0.25, 0.36, 0.25, std::numbers::pi * 0.5,
                               -std::numbers::pi * 0.85, 10);
        s.insert(s.end(), lower.begin() + 1, lower.end());
        return {s};
    }
    if (label == "4") return {{{0.2, 0.5}, {-0.4, -0.1}, {0.4, -0.1}}, {{0.2, 0.2}, {0.2, -0.5}}};
    if (label == "5") {
        Stroke s{{0.35, 0.5}, {-0.3, 0.5}, {-0.35, 0.05}};
        const auto belly = arc(0.0, -0.2, 0.38, 0.3, std::numbers::pi * 0.75,
                               -std::numbers::pi * 0.8, 12);
        s.insert(s.end(), belly.begin(), belly.end());
        return {s};
    }
    if (label == "A") return {{{-0.4, -0.5}, {0.0, 0.5}, {0.4, -0.5}}, {{-0.2, 0.0}, {0.2, 0.0}}};
    if (label == "B") {
        Stroke bowls{{-0.3, 0.5}};
        const auto top = arc(-0.05, 0.25, 0.3, 0.25, std::numbers::pi * 0.5, -std::numbers::pi * 0.5, 8);
        const auto bottom = arc(-0.05, -0.25, 0.38, 0.25, std::numbers::pi * 0.5,
                                -std::numbers::pi * 0.5, 8);
        bowls.insert(bowls.end(), top.begin(), top.end());
        bowls.insert(bowls.end(), bottom.begin() + 1, bottom.end());
        bowls.push_back({-0.3, -0.5});
        return {{{-0.3, -0.5}, {-0.3, 0.5}}, bowls};
    }
    if (label == "C") return {arc(0.05, 0.0, 0.42, 0.5, std::numbers::pi * 0.3, std::numbers::pi * 1.7, 20)};
    if (label == "D") {
        Stroke bowl{{-0.3, 0.5}};
        const auto a = arc(-0.3, 0.0, 0.65, 0.5, std::numbers::pi * 0.5, -std::numbers::pi * 0.5, 16);
        bowl.insert(bowl.end(), a.begin(), a.end());
        return {{{-0.3, -0.5}, {-0.3, 0.5}}, bowl};
    }
    if (label == "E") {
        return {{{0.35, 0.5}, {-0.3, 0.5}, {-0.3, -0.5}, {0.35, -0.5}}, {{-0.3, 0.0}, {0.25, 0.0}}};
    }
    if (label == "circle") {
        const double a0 = std::numbers::pi / 2.0 + phase;
        return {arc(0.0, 0.0, 0.45, 0.45, a0, a0 + kTwoPi, 48)};
    }
    if (label == "diamond") return {{{0.0, 0.5}, {0.4, 0.0}, {0.0, -0.5}, {-0.4, 0.0}, {0.0, 0.5}}};
    if (label == "triangle") return {{{0.0, 0.5}, {0.45, -0.4}, {-0.45, -0.4}, {0.0, 0.5}}};
    if (label == "check") return {{{-0.4, 0.0}, {-0.1, -0.4}, {0.45, 0.5}}};
    if (label == "cross") return {{{-0.4, 0.4}, {0.4, -0.4}}, {{0.4, 0.4}, {-0.4, -0.4}}};
    fail(ErrorCode::argument, "unknown gesture label '" + label + "'");
}

double polyline_length(const std::vector<Point2>& p) {
    double len = 0.0;
    for (std::size_t i = 1; i < p.size(); ++i) len += std::hypot(p[i].u - p[i - 1].u, p[i].v - p[i - 1].v);
    return len;
}

Point2 point_along(const std::vector<Point2>& p, double fraction) {
    const double target = std::clamp(fraction, 0.0, 1.0) * polyline_length(p);
    double walked = 0.0;
    for (std::size_t i = 1; i < p.size(); ++i) {
        const double seg = std::hypot(p[i].u - p[i - 1].u, p[i].v - p[i - 1].v);
        if (walked + seg >= target && seg > 0.0) {
            const double f = (target - walked) / seg;
            return {p[i - 1].u + f * (p[i].u - p[i - 1].u), p[i - 1].v + f * (p[i].v - p[i - 1].v)};
        }
        walked += seg;
    }
    return p.back();
}

// A piece of the timeline: either a pen-down stroke or a pen-up transit, both
// traversed at arc-length-uniform speed within their time budget.
struct Segment {
    std::vector<Point2> path;
    double t0;
    double t1;
    bool pen_down;
};

// Fractional delay uses a Kaiser-windowed sinc. The carrier sits at 5/12 of
// the sample rate, where two-point linear interpolation would attenuate a
// half-sample shift to about a quarter and bend its phase.
constexpr int kSincHalfWidth = 32;
constexpr int kSincPhases = 1024;
constexpr double kKaiserBeta = 9.0;

const std::vector<double>& sinc_table() {
    // Row r holds the 2*H weights for fractional offset r / kSincPhases,
    // applied to samples base - H + 1 .. base + H.
    static const std::vector<double> table = [] {
        constexpr int width = 2 * kSincHalfWidth;
        std::vector<double> t(static_cast<std::size_t>((kSincPhases + 1) * width));
        const double norm = std::cyl_bessel_i(0.0, kKaiserBeta);
        for (int r = 0; r <= kSincPhases; ++r) {
            const double f = static_cast<double>(r) / kSincPhases;
            for (int j = 0; j < width; ++j) {
                const double d = f - static_cast<double>(j - kSincHalfWidth + 1);
                const double u = d / kSincHalfWidth;
                double w = 0.0;
                if (std::abs(u) < 1.0) {
                    const double s = d == 0.0 ? 1.0 : std::sin(std::numbers::pi * d) / (std::numbers::pi * d);
                    w = s * std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - u * u)) / norm;
                }
                t[static_cast<std::size_t>(r * width + j)] = w;
            }
        }
        return t;
    }();
    return table;
}

double interp(const std::vector<double>& x, double pos) {
    // Samples outside the buffer are zero.
    const double base = std::floor(pos);
    const double f = pos - base;
    const auto n = static_cast<std::ptrdiff_t>(x.size());
    const auto b = static_cast<std::ptrdiff_t>(base);
    if (f == 0.0) return b >= 0 && b < n ? x[static_cast<std::size_t>(b)] : 0.0;

    const auto& table = sinc_table();
    constexpr int width = 2 * kSincHalfWidth;
    const double rf = f * kSincPhases;
    const int r = std::min(static_cast<int>(rf), kSincPhases - 1);
    const double a = rf - r;
    const double* w0 = &table[static_cast<std::size_t>(r * width)];
    const double* w1 = w0 + width;
    const std::ptrdiff_t first = b - kSincHalfWidth + 1;
    double acc = 0.0;
    for (auto j = std::max<std::ptrdiff_t>(0, -first); j < width && first + j < n; ++j) {
        acc += ((1.0 - a) * w0[j] + a * w1[j]) * x[static_cast<std::size_t>(first + j)];
    }
    return acc;
}

void add_split_tap(std::vector<Complex>& taps, double delay_samples, double gain) {
    const double base = std::floor(delay_samples);
    const double frac = delay_samples - base;
    const auto i = static_cast<std::size_t>(base);
    const bool needs_next = frac > 0.0;
    if (i >= taps.size() || (needs_next && i + 1 >= taps.size())) {
        fail(ErrorCode::truncation, "tap_count " + std::to_string(taps.size()) +
                                        " too small for delay of " + std::to_string(delay_samples) +
                                        " samples");
    }
    taps[i] += (1.0 - frac) * gain;
    if (needs_next) taps[i + 1] += frac * gain;
}

signal::PassbandSignal run_channel(const signal::PassbandSignal& input, const SceneConfig& scene,
                                   const GestureTrajectory* traj) {
    scene.validate();
    const double fs = input.sample_rate_hz;
    if (!(fs > 0.0)) fail(ErrorCode::argument, "input sample rate must be positive");
    const double signal_duration = static_cast<double>(input.samples.size()) / fs;
    if (traj && traj->duration_s > signal_duration + 1e-9) {
        fail(ErrorCode::argument, "trajectory (" + std::to_string(traj->duration_s) +
                                      " s) longer than signal (" + std::to_string(signal_duration) +
                                      " s)");
    }

    const auto& x = input.samples;
    std::vector<double> y(x.size(), 0.0);
    for (const auto& path : scene.static_paths) {
        const double d = path.delay_s * fs;
        for (std::size_t n = 0; n < x.size(); ++n) {
            y[n] += path.gain * interp(x, static_cast<double>(n) - d);
        }
    }
    if (traj && scene.reflector_gain_ref != 0.0) {
        for (std::size_t n = 0; n < x.size(); ++n) {
            const auto echo = reflector_echo(scene, traj->position_at(static_cast<double>(n) / fs));
            y[n] += echo.gain * interp(x, static_cast<double>(n) - echo.delay_s * fs);
        }
    }

    if (std::isfinite(scene.snr_db)) {
        double power = 0.0;
        for (double v : y) power += v * v;
        power /= std::max<std::size_t>(1, y.size());
        const double sigma = std::sqrt(power * std::pow(10.0, -scene.snr_db / 10.0));
        std::mt19937_64 rng(scene.noise_seed);
        for (double& v : y) v += sigma * detail::standard_normal(rng);
    }
    return {std::move(y), fs};
}

}  // namespace

void SceneConfig::validate() const {
    if (static_paths.empty()) fail(ErrorCode::config, "scene needs at least the direct path");
    for (const auto& p : static_paths) {
        if (!(p.delay_s >= 0.0) || !std::isfinite(p.gain)) {
            fail(ErrorCode::config, "static path delays must be >= 0 with finite gains");
        }
    }
    if (!(speed_of_sound_mps > 0.0)) fail(ErrorCode::config, "speed of sound must be positive");
    if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity()) {
        fail(ErrorCode::config, "snr_db must be finite (or +inf for a noiseless channel)");
    }
}

Vec3 GestureTrajectory::position_at(double t_s) const {
    if (positions.empty()) fail(ErrorCode::argument, "empty trajectory");
    const double p = std::max(0.0, t_s * frame_rate_hz);
    const auto i = static_cast<std::size_t>(p);
    if (i + 1 >= positions.size()) return positions.back();
    const double f = p - static_cast<double>(i);
    return positions[i] + f * (positions[i + 1] - positions[i]);
}

GestureTrajectory make_trajectory(const std::string& label, const TrajectoryParams& params,
                                  std::uint64_t seed) {
    if (!(params.duration_s > 0.0)) fail(ErrorCode::argument, "duration_s must be positive");
    if (!(params.scale_m > 0.0)) fail(ErrorCode::argument, "scale_m must be positive");
    if (!(params.frame_rate_hz > 0.0)) fail(ErrorCode::argument, "frame_rate_hz must be positive");

    std::mt19937_64 rng(seed);
    const auto unit = [](std::mt19937_64& r) { return detail::uniform01(r); };
    const double scale = params.scale_m * (0.9 + 0.2 * unit(rng));
    const double phase = (unit(rng) - 0.5) * 0.6;       // closed curves: start angle
    const double lead_in = 0.02 + 0.06 * unit(rng);     // fraction of duration held still
    const double warp = (unit(rng) - 0.5) * 0.2;        // speed profile within +/-10%
    const auto strokes = strokes_for(label, phase);

    constexpr double kTail = 0.05;
    constexpr double kPenUp = 0.06;
    const double T = params.duration_s;
    const double lifts = static_cast<double>(strokes.size() - 1);
    const double draw_time = T * (1.0 - lead_in - kTail - kPenUp * lifts);

    double total_len = 0.0;
    for (const auto& s : strokes) total_len += polyline_length(s);

    std::vector<Segment> timeline;
    double t = T * lead_in;
    for (std::size_t k = 0; k < strokes.size(); ++k) {
        if (k > 0) {
            timeline.push_back({{strokes[k - 1].back(), strokes[k].front()}, t, t + T * kPenUp, false});
            t += T * kPenUp;
        }
        const double dt = draw_time * polyline_length(strokes[k]) / total_len;
        timeline.push_back({strokes[k], t, t + dt, true});
        t += dt;
    }
    const double draw_start = timeline.front().t0;
    const double draw_end = timeline.back().t1;

    const auto to_world = [&](Point2 p) {
        return params.center + scale * (p.u * params.plane_u + p.v * params.plane_v);
    };

    GestureTrajectory traj;
    traj.gesture_label = label;
    traj.duration_s = T;
    traj.frame_rate_hz = params.frame_rate_hz;
    const auto count = static_cast<std::size_t>(std::floor(T * params.frame_rate_hz)) + 1;
    for (std::size_t i = 0; i < count; ++i) {
        double ti = static_cast<double>(i) / params.frame_rate_hz;
        // Monotone time warp over the active span: local speed factor 1 + warp*cos.
        if (ti > draw_start && ti < draw_end) {
            const double s = (ti - draw_start) / (draw_end - draw_start);
            const double warped = s + warp * std::sin(kTwoPi * s) / kTwoPi;
            ti = draw_start + warped * (draw_end - draw_start);
        }
        Point2 p = timeline.front().path.front();
        if (ti >= draw_end) {
            p = timeline.back().path.back();
        } else {
            for (const auto& seg : timeline) {
                if (ti >= seg.t0 && ti < seg.t1) {
                    p = point_along(seg.path, (ti - seg.t0) / (seg.t1 - seg.t0));
                    break;
                }
            }
        }
        traj.positions.push_back(to_world(p));
    }

    for (std::size_t i = 1; i < traj.positions.size(); ++i) {
        const double speed = (traj.positions[i] - traj.positions[i - 1]).norm() * params.frame_rate_hz;
        if (speed > kMaxHandSpeedMps) {
            fail(ErrorCode::argument, "trajectory for '" + label + "' exceeds hand speed limit (" +
                                          std::to_string(speed) + " m/s); lengthen duration_s");
        }
    }
    return traj;
}

GestureTrajectory stationary_trajectory(const Vec3& where, const TrajectoryParams& params) {
    if (!(params.duration_s > 0.0)) fail(ErrorCode::argument, "duration_s must be positive");
    GestureTrajectory traj;
    traj.gesture_label = "stationary";
    traj.duration_s = params.duration_s;
    traj.frame_rate_hz = params.frame_rate_hz;
    const auto count = static_cast<std::size_t>(std::floor(params.duration_s * params.frame_rate_hz)) + 1;
    traj.positions.assign(count, where);
    return traj;
}

Echo reflector_echo(const SceneConfig& scene, const Vec3& hand) {
    const double d1 = (hand - scene.speaker_pos).norm();
    const double d2 = (scene.mic_pos - hand).norm();
    const double guard = 1e-3;  // keeps the 1/r^2 law finite at the transducers
    return {(d1 + d2) / scene.speed_of_sound_mps,
            scene.reflector_gain_ref / (std::max(d1, guard) * std::max(d2, guard))};
}

signal::PassbandSignal simulate(const signal::PassbandSignal& input, const SceneConfig& scene) {
    return run_channel(input, scene, nullptr);
}

signal::PassbandSignal simulate(const signal::PassbandSignal& input, const SceneConfig& scene,
                                const GestureTrajectory& traj) {
    if (traj.positions.empty()) fail(ErrorCode::argument, "empty trajectory");
    return run_channel(input, scene, &traj);
}

GroundTruthCIR ground_truth_cir(const SceneConfig& scene, const GestureTrajectory* traj,
                                std::size_t frame_index, std::size_t tap_count,
                                double sample_rate_hz) {
    scene.validate();
    if (tap_count == 0) fail(ErrorCode::argument, "tap_count must be positive");
    GroundTruthCIR cir;
    cir.taps.assign(tap_count, Complex{});
    for (const auto& p : scene.static_paths) add_split_tap(cir.taps, p.delay_s * sample_rate_hz, p.gain);
    if (traj && scene.reflector_gain_ref != 0.0) {
        if (frame_index >= traj->positions.size()) {
            fail(ErrorCode::argument, "frame index " + std::to_string(frame_index) +
                                          " beyond trajectory end");
        }
        const auto echo = reflector_echo(scene, traj->positions[frame_index]);
        add_split_tap(cir.taps, echo.delay_s * sample_rate_hz, echo.gain);
    }
    return cir;
}

GroundTruthCIR to_baseband(const GroundTruthCIR& cir, double carrier_hz, double sample_rate_hz) {
    GroundTruthCIR out = cir;
    const double w = kTwoPi * carrier_hz / sample_rate_hz;
    for (std::size_t k = 0; k < out.taps.size(); ++k) {
        out.taps[k] *= std::polar(1.0, -w * static_cast<double>(k));
    }
    return out;
}

std::vector<Complex> apply_cir(std::span<const double> x, const GroundTruthCIR& cir) {
    std::vector<Complex> y(x.size());
    for (std::size_t n = 0; n < x.size(); ++n) {
        Complex acc{};
        for (std::size_t k = 0; k < cir.taps.size() && k <= n; ++k) acc += cir.taps[k] * x[n - k];
        y[n] = acc;
    }
    return y;
}

}  // namespace cirgest::sim
