#include "cirgest/signal.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "cirgest/error.hpp"

namespace cirgest::signal {

namespace {

// GSM 05.02 normal-burst training sequences, TSC0..TSC7.
constexpr std::array<const char*, 8> kTrainingSequences = {
    "00100101110000100010010111", "00101101110111100010110111",
    "01000011101110100100001110", "01000111101101000100011110",
    "00011010111001000001101011", "01001110101100000100111010",
    "10100111110110001010011111", "11101111000100101110111100",
};

double sinc(double x) {
    if (std::abs(x) < 1e-12) return 1.0;
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

template <typename T>
std::vector<T> convolve_aligned(std::span<const T> x, const FilterKernel& kernel) {
    const auto& h = kernel.taps;
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(h.size());
    const std::ptrdiff_t delay = static_cast<std::ptrdiff_t>(kernel.group_delay_samples());
    std::vector<T> y(x.size(), T{});
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        // y[i] = sum_k h[k] x[i + delay - k]
        const std::ptrdiff_t k_lo = std::max<std::ptrdiff_t>(0, i + delay - (n - 1));
        const std::ptrdiff_t k_hi = std::min<std::ptrdiff_t>(m - 1, i + delay);
        T acc{};
        for (std::ptrdiff_t k = k_lo; k <= k_hi; ++k) acc += h[k] * x[i + delay - k];
        y[i] = acc;
    }
    return y;
}

void require_rate(double actual, const SignalConfig& cfg, const char* what) {
    if (actual != cfg.sample_rate_hz) {
        fail(ErrorCode::config, std::string(what) + ": sample rate " + std::to_string(actual) +
                                    " does not match config " + std::to_string(cfg.sample_rate_hz));
    }
}

}  // namespace

BitSequence::BitSequence(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    if (bits_.empty()) fail(ErrorCode::argument, "bit sequence must not be empty");
    for (auto b : bits_) {
        if (b > 1) fail(ErrorCode::argument, "bit sequence elements must be 0 or 1");
    }
}

void SignalConfig::validate() const {
    if (!(sample_rate_hz > 0.0)) fail(ErrorCode::config, "sample_rate_hz must be positive");
    if (upsample_factor < 1) fail(ErrorCode::config, "upsample_factor must be >= 1");
    if (!(lowpass_cutoff_hz > 0.0) || lowpass_cutoff_hz >= sample_rate_hz / 2.0) {
        fail(ErrorCode::config, "lowpass_cutoff_hz must lie in (0, fs/2)");
    }
    if (!(carrier_hz > 0.0)) fail(ErrorCode::config, "carrier_hz must be positive");
    if (!(bandpass_halfwidth_hz > 0.0)) fail(ErrorCode::config, "bandpass_halfwidth_hz must be positive");
    if (carrier_hz + bandpass_halfwidth_hz >= sample_rate_hz / 2.0) {
        fail(ErrorCode::config, "carrier_hz + bandpass_halfwidth_hz must stay below Nyquist");
    }
    if (filter_tap_count < 1 || filter_tap_count % 2 == 0) {
        fail(ErrorCode::config, "filter_tap_count must be odd and positive");
    }
    if (tsc_index < 0 || tsc_index > 7) fail(ErrorCode::config, "tsc_index must be in [0, 7]");
    if (frame_bits < 26) fail(ErrorCode::config, "frame_bits must hold the 26-bit training sequence");
}

BitSequence training_sequence(int tsc_index) {
    if (tsc_index < 0 || tsc_index >= static_cast<int>(kTrainingSequences.size())) {
        fail(ErrorCode::argument, "training sequence index " + std::to_string(tsc_index) +
                                      " out of range [0, 7]");
    }
    std::vector<std::uint8_t> bits;
    for (const char* p = kTrainingSequences[static_cast<std::size_t>(tsc_index)]; *p; ++p) {
        bits.push_back(static_cast<std::uint8_t>(*p - '0'));
    }
    return BitSequence(std::move(bits));
}

BitSequence build_frame(const BitSequence& tsc, int frame_bits) {
    if (frame_bits < 0 || static_cast<std::size_t>(frame_bits) < tsc.size()) {
        fail(ErrorCode::argument, "frame_bits " + std::to_string(frame_bits) +
                                      " shorter than training sequence (" +
                                      std::to_string(tsc.size()) + ")");
    }
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(frame_bits), 0);
    std::copy(tsc.bits().begin(), tsc.bits().end(), bits.begin());
    return BitSequence(std::move(bits));
}

BitSequence repeat_frame(const BitSequence& frame, std::size_t count) {
    if (count == 0) fail(ErrorCode::argument, "frame repeat count must be positive");
    std::vector<std::uint8_t> bits;
    bits.reserve(frame.size() * count);
    for (std::size_t i = 0; i < count; ++i) {
        bits.insert(bits.end(), frame.bits().begin(), frame.bits().end());
    }
    return BitSequence(std::move(bits));
}

std::vector<double> replicate_symbols(const BitSequence& bits, int factor) {
    if (factor < 1) fail(ErrorCode::argument, "upsample factor must be >= 1");
    std::vector<double> out;
    out.reserve(bits.size() * static_cast<std::size_t>(factor));
    for (auto b : bits.bits()) {
        const double symbol = b == 0 ? 1.0 : -1.0;
        out.insert(out.end(), static_cast<std::size_t>(factor), symbol);
    }
    return out;
}

BasebandSignal modulate_baseband(const BitSequence& frame, const SignalConfig& cfg) {
    cfg.validate();
    const auto held = replicate_symbols(frame, cfg.upsample_factor);
    const auto lp = design_lowpass(cfg.lowpass_cutoff_hz, cfg.sample_rate_hz, cfg.filter_tap_count);
    return {filter_aligned(std::span<const double>(held), lp), cfg.sample_rate_hz};
}

PassbandSignal upconvert(const BasebandSignal& baseband, const SignalConfig& cfg) {
    cfg.validate();
    require_rate(baseband.sample_rate_hz, cfg, "upconvert");
    const double w = kTwoPi * cfg.carrier_hz / cfg.sample_rate_hz;
    std::vector<double> mixed(baseband.samples.size());
    for (std::size_t n = 0; n < mixed.size(); ++n) {
        mixed[n] = baseband.samples[n] * std::cos(w * static_cast<double>(n));
    }
    const auto bp = design_bandpass(cfg.carrier_hz, cfg.bandpass_halfwidth_hz, cfg.sample_rate_hz,
                                    cfg.filter_tap_count);
    auto out = filter_aligned(std::span<const double>(mixed), bp);
    double peak = 0.0;
    for (double v : out) peak = std::max(peak, std::abs(v));
    if (peak > 0.0) {
        for (double& v : out) v /= peak;
    }
    return {std::move(out), cfg.sample_rate_hz};
}

ComplexBaseband downconvert(const PassbandSignal& passband, const SignalConfig& cfg) {
    cfg.validate();
    require_rate(passband.sample_rate_hz, cfg, "downconvert");
    const double w = kTwoPi * cfg.carrier_hz / cfg.sample_rate_hz;
    std::vector<Complex> mixed(passband.samples.size());
    for (std::size_t n = 0; n < mixed.size(); ++n) {
        mixed[n] = passband.samples[n] * std::polar(1.0, -w * static_cast<double>(n));
    }
    const auto lp = design_lowpass(cfg.lowpass_cutoff_hz, cfg.sample_rate_hz, cfg.filter_tap_count);
    return {filter_aligned(std::span<const Complex>(mixed), lp), cfg.sample_rate_hz};
}

FilterKernel design_lowpass(double cutoff_hz, double sample_rate_hz, int tap_count) {
    if (!(sample_rate_hz > 0.0)) fail(ErrorCode::config, "sample rate must be positive");
    if (!(cutoff_hz > 0.0) || cutoff_hz >= sample_rate_hz / 2.0) {
        fail(ErrorCode::config, "low-pass cutoff must lie in (0, fs/2)");
    }
    if (tap_count < 1 || tap_count % 2 == 0) fail(ErrorCode::config, "tap count must be odd");

    const double fc = cutoff_hz / sample_rate_hz;
    const double center = static_cast<double>(tap_count - 1) / 2.0;
    FilterKernel k;
    k.taps.resize(static_cast<std::size_t>(tap_count));
    double sum = 0.0;
    for (int i = 0; i < tap_count; ++i) {
        const double t = static_cast<double>(i) - center;
        const double window =
            tap_count == 1 ? 1.0 : 0.54 - 0.46 * std::cos(kTwoPi * i / static_cast<double>(tap_count - 1));
        k.taps[static_cast<std::size_t>(i)] = 2.0 * fc * sinc(2.0 * fc * t) * window;
        sum += k.taps[static_cast<std::size_t>(i)];
    }
    for (double& v : k.taps) v /= sum;
    // Re-impose exact symmetry after the division (rounding can differ by an ulp).
    for (int i = 0; i < tap_count / 2; ++i) {
        k.taps[static_cast<std::size_t>(tap_count - 1 - i)] = k.taps[static_cast<std::size_t>(i)];
    }
    return k;
}

FilterKernel design_bandpass(double center_hz, double halfwidth_hz, double sample_rate_hz,
                             int tap_count) {
    auto k = design_lowpass(halfwidth_hz, sample_rate_hz, tap_count);
    const double w = kTwoPi * center_hz / sample_rate_hz;
    const double mid = static_cast<double>(tap_count - 1) / 2.0;
    for (int i = 0; i < tap_count; ++i) {
        k.taps[static_cast<std::size_t>(i)] *= 2.0 * std::cos(w * (static_cast<double>(i) - mid));
    }
    return k;
}

std::vector<double> filter_aligned(std::span<const double> x, const FilterKernel& kernel) {
    return convolve_aligned(x, kernel);
}

std::vector<Complex> filter_aligned(std::span<const Complex> x, const FilterKernel& kernel) {
    return convolve_aligned(x, kernel);
}

double frequency_response(const FilterKernel& kernel, double freq_hz, double sample_rate_hz) {
    const double w = kTwoPi * freq_hz / sample_rate_hz;
    Complex acc{};
    for (std::size_t i = 0; i < kernel.taps.size(); ++i) {
        acc += kernel.taps[i] * std::polar(1.0, -w * static_cast<double>(i));
    }
    return std::abs(acc);
}

PassbandSignal transmit_waveform(const SignalConfig& cfg, std::size_t frames) {
    cfg.validate();
    const auto frame = build_frame(training_sequence(cfg.tsc_index), cfg.frame_bits);
    return upconvert(modulate_baseband(repeat_frame(frame, frames), cfg), cfg);
}

BasebandSignal receiver_template(const SignalConfig& cfg) {
    // Five frames keep the middle one clear of the start/stop transients of
    // the three cascaded filters.
    constexpr std::size_t kFrames = 5;
    const std::size_t len = cfg.frame_length();
    const std::size_t settle = 3 * static_cast<std::size_t>(cfg.filter_tap_count);
    const std::size_t frames = std::max(kFrames, 2 * (settle / len + 1) + 1);
    const auto rx = downconvert(transmit_waveform(cfg, frames), cfg);
    const std::size_t start = (frames / 2) * len;
    BasebandSignal t;
    t.sample_rate_hz = cfg.sample_rate_hz;
    t.samples.resize(len);
    for (std::size_t i = 0; i < len; ++i) t.samples[i] = rx.samples[start + i].real();
    return t;
}

}  // namespace cirgest::signal
