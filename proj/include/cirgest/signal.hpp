#pragma once

// Sounding waveform: training-sequence framing, replication upsampling,
// low-pass smoothing, carrier up-conversion and the matching receiver-side
// down-conversion.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cirgest/types.hpp"

namespace cirgest::signal {

class BitSequence {
public:
    BitSequence() = default;
    explicit BitSequence(std::vector<std::uint8_t> bits);

    const std::vector<std::uint8_t>& bits() const { return bits_; }
    std::size_t size() const { return bits_.size(); }
    std::uint8_t operator[](std::size_t i) const { return bits_[i]; }

    friend bool operator==(const BitSequence&, const BitSequence&) = default;

private:
    std::vector<std::uint8_t> bits_;
};

struct SignalConfig {
    double sample_rate_hz = 48000.0;
    int upsample_factor = 12;
    double lowpass_cutoff_hz = 2000.0;
    double carrier_hz = 20000.0;
    double bandpass_halfwidth_hz = 2500.0;
    int filter_tap_count = 255;
    int tsc_index = 0;
    int frame_bits = 50;

    // Throws ErrorCode::config on any violated invariant.
    void validate() const;

    std::size_t frame_length() const {
        return static_cast<std::size_t>(frame_bits) * static_cast<std::size_t>(upsample_factor);
    }
    double frame_rate_hz() const { return sample_rate_hz / static_cast<double>(frame_length()); }
};

struct BasebandSignal {
    std::vector<double> samples;
    double sample_rate_hz = 0.0;
};

struct PassbandSignal {
    std::vector<double> samples;
    double sample_rate_hz = 0.0;
};

struct ComplexBaseband {
    std::vector<Complex> samples;
    double sample_rate_hz = 0.0;
};

struct FilterKernel {
    std::vector<double> taps;

    std::size_t group_delay_samples() const { return (taps.size() - 1) / 2; }
};

/// One of the eight standard 26-bit GSM normal-burst training sequences.
BitSequence training_sequence(int tsc_index);

/// Training sequence at the head of the frame, zero guard bits after it.
BitSequence build_frame(const BitSequence& tsc, int frame_bits);

/// Concatenates `count` copies of `frame`.
BitSequence repeat_frame(const BitSequence& frame, std::size_t count);

/// BPSK mapping (0 -> +1, 1 -> -1) with each symbol held for `factor`
/// samples. No smoothing.
std::vector<double> replicate_symbols(const BitSequence& bits, int factor);

BasebandSignal modulate_baseband(const BitSequence& frame, const SignalConfig& cfg);

/// Mixes onto the carrier, band-pass filters to carrier +/- half-width, then
/// scales to unit peak.
PassbandSignal upconvert(const BasebandSignal& baseband, const SignalConfig& cfg);

ComplexBaseband downconvert(const PassbandSignal& passband, const SignalConfig& cfg);

/// Hamming-windowed sinc, unity DC gain.
FilterKernel design_lowpass(double cutoff_hz, double sample_rate_hz, int tap_count);

/// Real band-pass kernel centred on `center_hz`: a low-pass prototype of cutoff
/// `halfwidth_hz` shifted to +/- center_hz.
FilterKernel design_bandpass(double center_hz, double halfwidth_hz, double sample_rate_hz,
                             int tap_count);

/// Linear convolution with the group delay removed, so the output has the
/// same length as the input and is time-aligned with it.
std::vector<double> filter_aligned(std::span<const double> x, const FilterKernel& kernel);
std::vector<Complex> filter_aligned(std::span<const Complex> x, const FilterKernel& kernel);

/// Magnitude response of the kernel at `freq_hz`.
double frequency_response(const FilterKernel& kernel, double freq_hz, double sample_rate_hz);

/// The looping transmit waveform: `frames` back-to-back copies of the
/// configured frame, modulated and up-converted as one continuous stream.
PassbandSignal transmit_waveform(const SignalConfig& cfg, std::size_t frames);

/// One steady-state frame period of what the receiver sees from the
/// transmitter with an identity channel: Re(downconvert(upconvert(...))).
/// Used for Pearson synchronisation and as the least-squares reference.
BasebandSignal receiver_template(const SignalConfig& cfg);

}  // namespace cirgest::signal
