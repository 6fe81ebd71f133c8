#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <doctest.h>

#include "cirgest/error.hpp"

// Asserts that `expr` raises cirgest::Error with the given code.
#define CHECK_CODE(expr, expected_code)                                  \
    do {                                                                 \
        bool thrown_ = false;                                            \
        try {                                                            \
            (void)(expr);                                                \
        } catch (const cirgest::Error& e_) {                             \
            thrown_ = true;                                              \
            CHECK_MESSAGE(e_.code() == (expected_code), e_.what());      \
        }                                                                \
        CHECK_MESSAGE(thrown_, "expected cirgest::Error from " #expr);   \
    } while (0)

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("cirgest_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

// Naive DFT magnitude at one frequency.
inline double dft_magnitude(const std::vector<double>& x, double freq_hz, double fs) {
    std::complex<double> acc = 0.0;
    const double w = -2.0 * 3.14159265358979323846 * freq_hz / fs;
    for (std::size_t n = 0; n < x.size(); ++n) acc += x[n] * std::polar(1.0, w * static_cast<double>(n));
    return std::abs(acc);
}

inline std::string read_file(const std::filesystem::path& p) {
    std::FILE* f = std::fopen(p.string().c_str(), "rb");
    if (!f) return {};
    std::string s;
    char buf[65536];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) s.append(buf, n);
    std::fclose(f);
    return s;
}

}  // namespace testing
