#include "cirgest/receiver.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cirgest/error.hpp"

namespace cirgest::receiver {

namespace {

// Sliding Pearson correlation with O(1) window statistics and cached values.
class Correlator {
public:
    Correlator(std::span<const Complex> rx, std::span<const double> tmpl)
        : rx_(rx), n_(tmpl.size()), centered_(tmpl.size()), cache_(rx.size(), kUnset) {
        double mean = 0.0;
        for (double v : tmpl) mean += v;
        mean /= static_cast<double>(n_);
        double ss = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            centered_[i] = tmpl[i] - mean;
            ss += centered_[i] * centered_[i];
        }
        norm_ = std::sqrt(ss);
        sum_.assign(rx.size() + 1, 0.0);
        sum_sq_.assign(rx.size() + 1, 0.0);
        for (std::size_t i = 0; i < rx.size(); ++i) {
            const double r = rx[i].real();
            sum_[i + 1] = sum_[i] + r;
            sum_sq_[i + 1] = sum_sq_[i] + r * r;
        }
    }

    std::size_t last_offset() const { return rx_.size() - n_; }

    double operator()(std::size_t p) {
        double& c = cache_[p];
        if (c != kUnset) return c;
        const double s = sum_[p + n_] - sum_[p];
        const double var = (sum_sq_[p + n_] - sum_sq_[p]) - s * s / static_cast<double>(n_);
        if (!(var > 1e-300) || norm_ == 0.0) return c = 0.0;
        double dot = 0.0;
        for (std::size_t i = 0; i < n_; ++i) dot += rx_[p + i].real() * centered_[i];
        c = std::clamp(dot / (std::sqrt(var) * norm_), -1.0, 1.0);
        return c;
    }

private:
    static constexpr double kUnset = std::numeric_limits<double>::infinity();
    std::span<const Complex> rx_;
    std::size_t n_;
    std::vector<double> centered_;
    double norm_ = 0.0;
    std::vector<double> sum_;
    std::vector<double> sum_sq_;
    std::vector<double> cache_;
};

}  // namespace

void ReceiverConfig::validate() const {
    if (tap_count == 0) fail(ErrorCode::config, "tap_count must be positive");
    if (!(sync_threshold > 0.0 && sync_threshold <= 1.0)) {
        fail(ErrorCode::config, "sync_threshold must lie in (0, 1]");
    }
    if (!(ridge_factor >= 0.0)) fail(ErrorCode::config, "ridge_factor must be >= 0");
    if (sync.refine_radius < 0) fail(ErrorCode::config, "refine_radius must be >= 0");
}

double pearson_at(std::span<const Complex> rx, std::span<const double> tmpl, std::size_t offset) {
    if (tmpl.empty() || offset + tmpl.size() > rx.size()) {
        fail(ErrorCode::argument, "correlation window out of range");
    }
    Correlator corr(rx, tmpl);
    return corr(offset);
}

SyncResult synchronize(const signal::ComplexBaseband& rx, const signal::BasebandSignal& tmpl,
                       double threshold, const SyncOptions& options) {
    const std::size_t n = tmpl.samples.size();
    if (n == 0) fail(ErrorCode::argument, "empty sync template");
    if (rx.samples.size() <= n) fail(ErrorCode::argument, "received signal shorter than template");
    if (!(threshold > 0.0 && threshold <= 1.0)) fail(ErrorCode::argument, "threshold must lie in (0, 1]");

    Correlator rho(rx.samples, tmpl.samples);
    const std::size_t last = rho.last_offset();

    // First crossing, then the local maximum within half a frame of it
    // (the next frame's identical peak is a full frame later).
    std::size_t first = last + 1;
    for (std::size_t p = 0; p <= last; ++p) {
        if (rho(p) >= threshold) {
            first = p;
            break;
        }
    }
    if (first > last) fail(ErrorCode::sync_failure, "no correlation peak above threshold");
    std::size_t peak = first;
    for (std::size_t p = first; p <= std::min(last, first + n / 2); ++p) {
        if (rho(p) > rho(peak)) peak = p;
    }

    // Lock: the offset near the first peak that maximises the mean correlation
    // over every whole frame that follows it.
    const int radius = options.refine_radius;
    std::size_t lock = peak;
    double best_mean = -2.0;
    for (int d = -radius; d <= radius; ++d) {
        const auto c = static_cast<std::ptrdiff_t>(peak) + d;
        if (c < 0 || static_cast<std::size_t>(c) > last) continue;
        double acc = 0.0;
        std::size_t count = 0;
        for (auto q = static_cast<std::size_t>(c); q <= last; q += n, ++count) acc += rho(q);
        const double mean = acc / static_cast<double>(count);
        if (mean > best_mean + 1e-12) {
            best_mean = mean;
            lock = static_cast<std::size_t>(c);
        }
    }

    SyncResult out;
    for (std::size_t k = 0;; ++k) {
        const std::size_t nominal = lock + k * n;
        if (nominal > last) break;
        const auto spacing_ok = [&](std::size_t c) {
            if (out.frame_start_indices.empty()) return true;
            const auto expected = static_cast<std::ptrdiff_t>(out.frame_start_indices.back() + n);
            return std::abs(static_cast<std::ptrdiff_t>(c) - expected) <= 1;
        };
        std::size_t base = nominal;
        if (!spacing_ok(base)) base = out.frame_start_indices.back() + n;
        if (base > last) break;
        std::size_t chosen = base;
        for (int d = -radius; d <= radius; ++d) {
            const auto c = static_cast<std::ptrdiff_t>(nominal) + d;
            if (c < 0 || static_cast<std::size_t>(c) > last) continue;
            const auto cu = static_cast<std::size_t>(c);
            if (!spacing_ok(cu)) continue;
            if (rho(cu) > rho(chosen) && rho(cu) > rho(base) + options.refine_margin) chosen = cu;
        }
        const double r = rho(chosen);
        if (r < threshold) break;
        out.frame_start_indices.push_back(chosen);
        out.correlation_peaks.push_back(r);
        out.phase_offsets.push_back(static_cast<int>(static_cast<std::ptrdiff_t>(chosen) -
                                                     static_cast<std::ptrdiff_t>(lock)) %
                                    static_cast<int>(n));
    }
    return out;
}

std::vector<double> minmax_normalize(std::span<const double> x) {
    std::vector<double> out(x.size(), 0.5);
    if (x.empty()) return out;
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) return out;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - *lo) / range;
    return out;
}

std::vector<std::vector<Complex>> segment_normalize(const signal::ComplexBaseband& rx,
                                                    const SyncResult& sync,
                                                    std::size_t frame_length) {
    if (frame_length == 0) fail(ErrorCode::argument, "frame_length must be positive");
    std::vector<std::vector<Complex>> frames;
    std::vector<double> re(frame_length), im(frame_length);
    for (std::size_t start : sync.frame_start_indices) {
        if (start + frame_length > rx.samples.size()) continue;
        for (std::size_t i = 0; i < frame_length; ++i) {
            re[i] = rx.samples[start + i].real();
            im[i] = rx.samples[start + i].imag();
        }
        const auto nre = minmax_normalize(re);
        const auto nim = minmax_normalize(im);
        std::vector<Complex> f(frame_length);
        for (std::size_t i = 0; i < frame_length; ++i) f[i] = {nre[i], nim[i]};
        frames.push_back(std::move(f));
    }
    if (frames.empty()) fail(ErrorCode::empty_result, "no complete frame in received signal");
    return frames;
}

struct LeastSquaresEstimator::Impl {
    Eigen::MatrixXd x;  // N x L convolution matrix
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
    bool augmented = false;
    bool offset = false;
};

LeastSquaresEstimator::LeastSquaresEstimator(std::span<const double> reference,
                                             std::size_t frame_length, std::size_t tap_count,
                                             double ridge_factor, bool fit_offset)
    : impl_(std::make_unique<Impl>()), frame_length_(frame_length), tap_count_(tap_count) {
    if (tap_count == 0 || frame_length < tap_count) {
        fail(ErrorCode::argument, "least squares needs frame_length >= tap_count > 0");
    }
    if (reference.size() < frame_length + tap_count - 1) {
        fail(ErrorCode::argument, "reference must cover frame_length + tap_count - 1 samples");
    }
    if (!(ridge_factor >= 0.0)) fail(ErrorCode::argument, "ridge_factor must be >= 0");

    const auto n = static_cast<Eigen::Index>(frame_length);
    const auto l = static_cast<Eigen::Index>(tap_count);
    const Eigen::Index cols = fit_offset ? l + 1 : l;
    impl_->offset = fit_offset;
    impl_->x.resize(n, cols);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < l; ++c) impl_->x(r, c) = reference[static_cast<std::size_t>(r + l - 1 - c)];
        if (fit_offset) impl_->x(r, l) = 1.0;
    }
    if (ridge_factor > 0.0) {
        const double eps = ridge_factor * impl_->x.leftCols(l).squaredNorm();  // trace(X^T X)
        // The offset column is left unpenalised.
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n + l, cols);
        a.topRows(n) = impl_->x;
        a.bottomLeftCorner(l, l) = std::sqrt(eps) * Eigen::MatrixXd::Identity(l, l);
        impl_->qr.compute(a);
        impl_->augmented = true;
    } else {
        impl_->qr.compute(impl_->x);
    }
    if (impl_->qr.rank() < cols) {
        fail(ErrorCode::estimation, "convolution matrix is rank deficient (rank " +
                                        std::to_string(impl_->qr.rank()) + " < " +
                                        std::to_string(l) + ")");
    }
}

LeastSquaresEstimator::~LeastSquaresEstimator() = default;
LeastSquaresEstimator::LeastSquaresEstimator(LeastSquaresEstimator&&) noexcept = default;
LeastSquaresEstimator& LeastSquaresEstimator::operator=(LeastSquaresEstimator&&) noexcept = default;

CirEstimate LeastSquaresEstimator::estimate(std::span<const Complex> frame) const {
    if (frame.size() != frame_length_) fail(ErrorCode::argument, "frame length mismatch");
    const auto n = static_cast<Eigen::Index>(frame_length_);
    const auto l = static_cast<Eigen::Index>(tap_count_);
    Eigen::MatrixXd y(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        y(i, 0) = frame[static_cast<std::size_t>(i)].real();
        y(i, 1) = frame[static_cast<std::size_t>(i)].imag();
    }
    Eigen::MatrixXd h;
    if (impl_->augmented) {
        Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + l, 2);
        rhs.topRows(n) = y;
        h = impl_->qr.solve(rhs);
    } else {
        h = impl_->qr.solve(y);
    }
    CirEstimate est;
    est.taps.resize(tap_count_);
    for (Eigen::Index i = 0; i < l; ++i) est.taps[static_cast<std::size_t>(i)] = {h(i, 0), h(i, 1)};
    est.residual = (impl_->x * h - y).norm();
    if (!std::isfinite(est.residual)) fail(ErrorCode::estimation, "non-finite least-squares solution");
    return est;
}

CirEstimate estimate_cir(std::span<const Complex> frame, std::span<const double> reference,
                         std::size_t tap_count, double ridge_factor) {
    return LeastSquaresEstimator(reference, frame.size(), tap_count, ridge_factor).estimate(frame);
}

std::vector<double> periodic_reference(std::span<const double> period, int phase,
                                       std::size_t frame_length, std::size_t tap_count) {
    if (period.empty()) fail(ErrorCode::argument, "empty template period");
    const auto p = static_cast<std::ptrdiff_t>(period.size());
    std::vector<double> ref(frame_length + tap_count - 1);
    for (std::size_t j = 0; j < ref.size(); ++j) {
        auto idx = (static_cast<std::ptrdiff_t>(phase) + static_cast<std::ptrdiff_t>(j) -
                    static_cast<std::ptrdiff_t>(tap_count - 1)) % p;
        if (idx < 0) idx += p;
        ref[j] = period[static_cast<std::size_t>(idx)];
    }
    return ref;
}

DCIRImage dcir(const CIRMatrix& cir) {
    if (cir.frames.size() < 2) fail(ErrorCode::argument, "dCIR needs at least two CIR frames");
    const std::size_t l = cir.tap_count();
    DCIRImage img;
    img.rows = l;
    img.cols = cir.frames.size() - 1;
    img.values.resize(img.rows * img.cols);
    for (std::size_t j = 0; j < img.cols; ++j) {
        if (cir.frames[j].size() != l || cir.frames[j + 1].size() != l) {
            fail(ErrorCode::argument, "CIR frames differ in tap count");
        }
        for (std::size_t i = 0; i < l; ++i) {
            img.values[i * img.cols + j] = std::abs(cir.frames[j + 1][i] - cir.frames[j][i]);
        }
    }
    return img;
}

image::GrayImage render_image(const DCIRImage& d) {
    if (d.values.empty()) fail(ErrorCode::argument, "cannot render an empty dCIR matrix");
    image::GrayImage img{d.cols, d.rows, std::vector<std::uint8_t>(d.values.size(), 0)};
    const auto [lo, hi] = std::minmax_element(d.values.begin(), d.values.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) return img;
    for (std::size_t i = 0; i < d.values.size(); ++i) {
        const double scaled = (d.values[i] - *lo) / range * 255.0;
        img.pixels[i] = static_cast<std::uint8_t>(std::min(255.0, std::floor(scaled + 0.5)));
    }
    return img;
}

Extraction extract(const signal::PassbandSignal& received, const signal::SignalConfig& signal_cfg,
                   const ReceiverConfig& cfg) {
    return extract(received, signal_cfg, signal::receiver_template(signal_cfg), cfg);
}

Extraction extract(const signal::PassbandSignal& received, const signal::SignalConfig& signal_cfg,
                   const signal::BasebandSignal& tmpl, const ReceiverConfig& cfg) {
    cfg.validate();
    const std::size_t n = tmpl.samples.size();
    const auto rx = signal::downconvert(received, signal_cfg);

    Extraction out;
    out.sync = synchronize(rx, tmpl, cfg.sync_threshold, cfg.sync);
    SyncResult windows = out.sync;
    for (auto& s : windows.frame_start_indices) {
        s = s >= cfg.precursor_taps ? s - cfg.precursor_taps : 0;
    }
    std::vector<std::vector<Complex>> frames;
    std::vector<double> period;
    if (cfg.normalize_frames) {
        frames = segment_normalize(rx, windows, n);
        period = minmax_normalize(tmpl.samples);
    } else {
        for (std::size_t s : windows.frame_start_indices) {
            if (s + n > rx.samples.size()) break;
            frames.emplace_back(rx.samples.begin() + static_cast<std::ptrdiff_t>(s),
                                rx.samples.begin() + static_cast<std::ptrdiff_t>(s + n));
        }
        if (frames.empty()) fail(ErrorCode::empty_result, "no complete frame in received signal");
        period = tmpl.samples;
    }
    if (frames.size() < cfg.skip_frames + 2) {
        fail(ErrorCode::empty_result, "too few frames for a dCIR after skipping start-up frames");
    }

    std::map<int, LeastSquaresEstimator> solvers;
    out.cir.frame_rate_hz = signal_cfg.sample_rate_hz / static_cast<double>(n);
    for (std::size_t k = cfg.skip_frames; k < frames.size(); ++k) {
        // Tap l holds the path delayed by (l - precursor) samples relative to
        // the locked template phase.
        const auto start = static_cast<int>(out.sync.frame_start_indices[k]);
        const int phase = static_cast<int>(windows.frame_start_indices[k]) +
                          static_cast<int>(cfg.precursor_taps) - (start - out.sync.phase_offsets[k]);
        auto it = solvers.find(phase);
        if (it == solvers.end()) {
            const auto ref = periodic_reference(period, phase, n, cfg.tap_count);
            it = solvers.emplace(phase, LeastSquaresEstimator(ref, n, cfg.tap_count, cfg.ridge_factor, cfg.normalize_frames)).first;
        }
        out.cir.frames.push_back(it->second.estimate(frames[k]).taps);
    }
    out.dcir = dcir(out.cir);
    return out;
}

}  // namespace cirgest::receiver
