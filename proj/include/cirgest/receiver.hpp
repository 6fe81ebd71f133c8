#pragma once

// Receiver chain: Pearson-correlation frame sync, per-frame min-max
// normalisation, least-squares CIR estimation and temporal differencing.

#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "cirgest/image.hpp"
#include "cirgest/signal.hpp"
#include "cirgest/types.hpp"

namespace cirgest::receiver {

struct SyncOptions {
    // Per-frame re-peak search radius around the locked position.
    int refine_radius = 2;
    // A re-peaked frame start replaces the locked one only when its
    // correlation is higher by at least this much.
    double refine_margin = 0.05;
};

struct ReceiverConfig {
    std::size_t tap_count = 128;
    double sync_threshold = 0.5;
    // Tikhonov weight relative to trace(X^T X). The probe occupies about a
    // tenth of the band, so the unregularised 128-tap system is ill-posed.
    double ridge_factor = 1e-1;
    // Leading frames dropped before estimation (start-up transient).
    std::size_t skip_frames = 1;
    // The estimation window opens this many samples before the sync point so
    // the band-limited spread of the earliest path stays inside the taps.
    std::size_t precursor_taps = 8;
    // Min-max normalise frames and template before LS. The fit then carries
    // a per-frame constant to absorb the offset normalisation introduces.
    bool normalize_frames = false;
    SyncOptions sync;

    void validate() const;
};

struct SyncResult {
    std::vector<std::size_t> frame_start_indices;
    std::vector<double> correlation_peaks;
    // Template phase of each frame start relative to the first lock.
    std::vector<int> phase_offsets;
};

struct CIRMatrix {
    std::vector<std::vector<Complex>> frames;
    double frame_rate_hz = 0.0;

    std::size_t tap_count() const { return frames.empty() ? 0 : frames.front().size(); }
};

struct CirEstimate {
    std::vector<Complex> taps;
    double residual = 0.0;  // ||y - X h||_2
};

/// |chi(t+1) - chi(t)| per tap; rows are taps, columns are frame transitions.
struct DCIRImage {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;  // row-major

    double at(std::size_t row, std::size_t col) const { return values[row * cols + col]; }
};

/// Pearson correlation between Re(rx[offset, offset + N)) and the template.
double pearson_at(std::span<const Complex> rx, std::span<const double> tmpl, std::size_t offset);

SyncResult synchronize(const signal::ComplexBaseband& rx, const signal::BasebandSignal& tmpl,
                       double threshold, const SyncOptions& options = {});

/// Real and imaginary parts of each frame independently mapped onto [0, 1];
/// a constant part maps to 0.5.
std::vector<std::vector<Complex>> segment_normalize(const signal::ComplexBaseband& rx,
                                                    const SyncResult& sync,
                                                    std::size_t frame_length);

/// Min-max map onto [0, 1]; constant input maps to 0.5.
std::vector<double> minmax_normalize(std::span<const double> x);

/// Least-squares solver for a fixed reference. The reference holds
/// frame_length + tap_count - 1 samples so that X[n][l] = reference[n + L - 1 - l]
/// (the last L-1 history samples precede the frame). With fit_offset a
/// constant column is appended and its coefficient is not reported as a tap.
class LeastSquaresEstimator {
public:
    LeastSquaresEstimator(std::span<const double> reference, std::size_t frame_length,
                          std::size_t tap_count, double ridge_factor = 0.0,
                          bool fit_offset = false);
    ~LeastSquaresEstimator();
    LeastSquaresEstimator(LeastSquaresEstimator&&) noexcept;
    LeastSquaresEstimator& operator=(LeastSquaresEstimator&&) noexcept;

    CirEstimate estimate(std::span<const Complex> frame) const;

    std::size_t frame_length() const { return frame_length_; }
    std::size_t tap_count() const { return tap_count_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::size_t frame_length_;
    std::size_t tap_count_;
};

/// Solves argmin ||y - X h|| with X the convolution matrix of `reference`
/// (layout as for LeastSquaresEstimator). ridge_factor = 0 gives plain QR.
CirEstimate estimate_cir(std::span<const Complex> frame, std::span<const double> reference,
                         std::size_t tap_count, double ridge_factor = 0.0);

/// Reference window for a frame starting `phase` samples after a template
/// period boundary, built from the periodic template.
std::vector<double> periodic_reference(std::span<const double> period, int phase,
                                       std::size_t frame_length, std::size_t tap_count);

DCIRImage dcir(const CIRMatrix& cir);

/// Global min-max scaling onto [0, 255], rounded half up; rows are taps.
image::GrayImage render_image(const DCIRImage& dcir);

struct Extraction {
    SyncResult sync;
    CIRMatrix cir;
    DCIRImage dcir;
};

/// Whole receive chain for one recording.
Extraction extract(const signal::PassbandSignal& received, const signal::SignalConfig& signal_cfg,
                   const ReceiverConfig& cfg);

/// Same, with a precomputed receiver template.
Extraction extract(const signal::PassbandSignal& received, const signal::SignalConfig& signal_cfg,
                   const signal::BasebandSignal& tmpl, const ReceiverConfig& cfg);

}  // namespace cirgest::receiver
