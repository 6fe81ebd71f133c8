#include <algorithm>
#include <cmath>

#include "cirgest/channel_sim.hpp"
#include "cirgest/labels.hpp"
#include "support.hpp"

using namespace cirgest;
using namespace cirgest::sim;

namespace {

std::vector<double> ramp_signal(std::size_t n) {
    std::vector<double> x(n);
    std::mt19937_64 rng(3);
    for (auto& v : x) v = static_cast<double>(rng() % 2001) / 1000.0 - 1.0;
    return x;
}

SceneConfig bare_scene() {
    SceneConfig s;
    s.static_paths = {{0.0, 1.0}};
    return s;
}

TrajectoryParams params() {
    TrajectoryParams p;
    p.frame_rate_hz = 80.0;
    return p;
}

}  // namespace

TEST_CASE("closed curves return to their start") {
    const auto t = make_trajectory("circle", params(), 11);
    CHECK((t.positions.front() - t.positions.back()).norm() < 0.01);
    CHECK(t.positions.size() == static_cast<std::size_t>(std::floor(1.6 * 80.0)) + 1);
}

TEST_CASE("trajectories are deterministic per seed") {
    for (const auto& l : all_labels()) {
        const auto a = make_trajectory(l, params(), 5);
        const auto b = make_trajectory(l, params(), 5);
        CHECK(a.positions == b.positions);
        CHECK(make_trajectory(l, params(), 6).positions != a.positions);
    }
    CHECK_CODE(make_trajectory("Z", params(), 0), ErrorCode::argument);
}

TEST_CASE("cross has a single pen-up jump") {
    const auto t = make_trajectory("cross", params(), 2);
    std::vector<double> steps;
    for (std::size_t i = 1; i < t.positions.size(); ++i) steps.push_back((t.positions[i] - t.positions[i - 1]).norm());
    std::vector<double> moving;
    for (double s : steps) {
        if (s > 1e-9) moving.push_back(s);
    }
    std::nth_element(moving.begin(), moving.begin() + moving.size() / 2, moving.end());
    const double median = moving[moving.size() / 2];
    int runs = 0;
    bool in_run = false;
    for (double s : steps) {
        const bool spike = s > 2.5 * median;
        if (spike && !in_run) ++runs;
        in_run = spike;
    }
    CHECK(runs == 1);

    // Single-stroke gestures have none.
    const auto c = make_trajectory("check", params(), 2);
    double max_step = 0;
    for (std::size_t i = 1; i < c.positions.size(); ++i) max_step = std::max(max_step, (c.positions[i] - c.positions[i - 1]).norm());
    CHECK(max_step < 2.5 * median);
}

TEST_CASE("hand speed limit") {
    TrajectoryParams p = params();
    p.duration_s = 0.05;
    p.scale_m = 2.0;
    CHECK_CODE(make_trajectory("circle", p, 0), ErrorCode::argument);
}

TEST_CASE("position interpolation") {
    GestureTrajectory t;
    t.positions = {{0, 0, 0}, {1, 0, 0}};
    t.frame_rate_hz = 10.0;
    t.duration_s = 0.1;
    CHECK(t.position_at(0.05).x == doctest::Approx(0.5));
    CHECK(t.position_at(-1.0).x == 0.0);
    CHECK(t.position_at(5.0).x == 1.0);
}

TEST_CASE("identity channel passes the input through") {
    const auto x = ramp_signal(500);
    const auto y = simulate(signal::PassbandSignal{x, 48000.0}, bare_scene());
    CHECK(y.samples == x);
}

TEST_CASE("single echo superposes a scaled shift") {
    SceneConfig s;
    s.static_paths = {{0.0, 1.0}, {10.0 / 48000.0, 0.5}};
    const auto x = ramp_signal(400);
    const auto y = simulate(signal::PassbandSignal{x, 48000.0}, s);
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double expected = x[n] + (n >= 10 ? 0.5 * x[n - 10] : 0.0);
        CHECK(y.samples[n] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("fractional delays are band-limited") {
    // In-band tones come out delayed with their amplitude intact.
    const double fs = 48000.0;
    for (double f0 : {2000.0, 17500.0, 20000.0, 21500.0, 22500.0}) {
        for (double d : {0.5, 10.3, 33.77}) {
            SceneConfig s;
            s.static_paths = {{d / fs, 1.0}};
            std::vector<double> x(2000);
            for (std::size_t n = 0; n < x.size(); ++n) x[n] = std::cos(2.0 * M_PI * f0 * static_cast<double>(n) / fs);
            const auto y = simulate(signal::PassbandSignal{x, fs}, s);
            double worst = 0.0;
            for (std::size_t n = 200; n < 1800; ++n) {
                const double want = std::cos(2.0 * M_PI * f0 * (static_cast<double>(n) - d) / fs);
                worst = std::max(worst, std::abs(y.samples[n] - want));
            }
            // 22.5 kHz is the transmit band edge, close to Nyquist.
            CHECK_MESSAGE(worst < (f0 > 22000.0 ? 3e-2 : 1e-3), "f0=" << f0 << " d=" << d << " err=" << worst);
        }
    }
    // Outside the buffer the input counts as zero.
    SceneConfig s;
    s.static_paths = {{2.5 / fs, 1.0}};
    const auto y = simulate(signal::PassbandSignal{std::vector<double>(10, 0.0), fs}, s);
    for (double v : y.samples) CHECK(v == 0.0);
}

TEST_CASE("ground-truth taps") {
    const double fs = 48000.0;
    auto cir = ground_truth_cir(bare_scene(), nullptr, 0, 16, fs);
    CHECK(cir.taps[0] == Complex(1.0, 0.0));
    for (std::size_t k = 1; k < 16; ++k) CHECK(cir.taps[k] == Complex(0.0, 0.0));

    SceneConfig s;
    s.static_paths = {{10.0 / fs, 0.5}};
    cir = ground_truth_cir(s, nullptr, 0, 16, fs);
    CHECK(cir.taps[10].real() == doctest::Approx(0.5));

    s.static_paths = {{10.5 / fs, 0.5}};
    cir = ground_truth_cir(s, nullptr, 0, 16, fs);
    CHECK(cir.taps[10].real() == doctest::Approx(0.25));
    CHECK(cir.taps[11].real() == doctest::Approx(0.25));

    s.static_paths = {{20.0 / fs, 0.5}};
    CHECK_CODE(ground_truth_cir(s, nullptr, 0, 16, fs), ErrorCode::truncation);
}

TEST_CASE("ground truth matches the simulated channel") {
    // Whole-sample delays: simulate() and apply_cir() of the ground-truth taps agree.
    SceneConfig s;
    s.static_paths = {{7.0 / 48000.0, 0.45}, {35.0 / 48000.0, 0.15}, {119.0 / 48000.0, 0.04}};
    const auto x = ramp_signal(800);
    const auto y = simulate(signal::PassbandSignal{x, 48000.0}, s);
    const auto cir = ground_truth_cir(s, nullptr, 0, 128, 48000.0);
    const auto z = apply_cir(x, cir);
    for (std::size_t n = 0; n < x.size(); ++n) CHECK(z[n].real() == doctest::Approx(y.samples[n]).epsilon(1e-9));
}

TEST_CASE("reflector echo geometry") {
    SceneConfig s;
    const Vec3 hand{0.025, 0.3, 0.0};
    const auto e = reflector_echo(s, hand);
    const double d1 = std::hypot(0.05, 0.3), d2 = 0.3;
    CHECK(e.delay_s == doctest::Approx((d1 + d2) / 343.0));
    CHECK(e.gain == doctest::Approx(s.reflector_gain_ref / (d1 * d2)));
}

TEST_CASE("baseband rotation keeps magnitudes") {
    GroundTruthCIR c{{Complex(1, 0), Complex(0.5, 0)}};
    const auto b = to_baseband(c, 20000.0, 48000.0);
    CHECK(std::abs(b.taps[1]) == doctest::Approx(0.5));
    CHECK(std::arg(b.taps[1]) == doctest::Approx(std::remainder(-kTwoPi * 20000.0 / 48000.0, kTwoPi)));
}

TEST_CASE("noise level follows the SNR and the seed") {
    SceneConfig s = bare_scene();
    s.snr_db = 10.0;
    s.noise_seed = 4;
    const auto x = ramp_signal(20000);
    const auto y1 = simulate(signal::PassbandSignal{x, 48000.0}, s);
    const auto y2 = simulate(signal::PassbandSignal{x, 48000.0}, s);
    CHECK(y1.samples == y2.samples);
    double ps = 0, pn = 0;
    for (std::size_t n = 0; n < x.size(); ++n) {
        ps += x[n] * x[n];
        pn += (y1.samples[n] - x[n]) * (y1.samples[n] - x[n]);
    }
    CHECK(10.0 * std::log10(ps / pn) == doctest::Approx(10.0).epsilon(0.02));
}

TEST_CASE("scene validation") {
    SceneConfig s;
    s.static_paths.clear();
    CHECK_CODE(s.validate(), ErrorCode::config);
    s = {};
    s.snr_db = std::nan("");
    CHECK_CODE(s.validate(), ErrorCode::config);
    const auto traj = stationary_trajectory({0.1, 0.2, 0.1}, params());
    CHECK_CODE(simulate(signal::PassbandSignal{std::vector<double>(100, 0.0), 48000.0}, SceneConfig{}, traj),
               ErrorCode::argument);
}
