#pragma once

// Sample manifests, train/test splitting, image features and per-class
// vector libraries.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cirgest/image.hpp"
#include "cirgest/labels.hpp"

namespace cirgest::dataset {

inline constexpr std::size_t kFeatureSide = 64;
inline constexpr std::size_t kFeatureDim = kFeatureSide * kFeatureSide;

enum class Split { unassigned, train, test };

std::string_view to_string(Split s);
Split parse_split(std::string_view name);

struct SampleRecord {
    std::string sample_id;
    std::string gesture_label;
    Category category = Category::digits;
    // Relative paths are resolved against the manifest's directory.
    std::string image_path;
    std::string audio_path;
    Split split = Split::unassigned;
    std::optional<std::uint64_t> seed;
    std::optional<double> snr_db;  // nullopt in JSON null means noiseless
    std::optional<double> duration_s;
    std::optional<std::size_t> tap_count;
    std::optional<double> frame_rate_hz;

    friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

using Manifest = std::vector<SampleRecord>;

/// Checks label/category consistency and sample_id uniqueness.
void validate(const Manifest& manifest);

std::string to_jsonl_line(const SampleRecord& r);
SampleRecord from_jsonl_line(std::string_view line);

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

struct FeatureVector {
    std::string sample_id;
    std::vector<float> values;
};

/// Area-average resample of `img` onto a width x height grid, values kept in
/// 0..255 (not rounded).
std::vector<double> box_resample(const image::GrayImage& img, std::size_t width, std::size_t height);

/// 64x64 box resample, divided by 255, flattened row-major.
FeatureVector extract_features(const image::GrayImage& img, std::string sample_id = {});

/// Per class: ceil(ratio * n) train (clamped to [1, n-1]), the rest test.
/// Members are ordered by sample_id and then shuffled by `seed`, so the
/// result does not depend on input order.
Manifest split(const Manifest& manifest, double ratio, std::uint64_t seed);

struct LibraryEntry {
    std::string sample_id;
    std::string image_path;
    std::vector<float> values;

    friend bool operator==(const LibraryEntry&, const LibraryEntry&) = default;
};

class VectorLibrary {
public:
    VectorLibrary() = default;
    /// Entries per label; every label of `category` must be present and nonempty.
    VectorLibrary(Category category, std::map<std::string, std::vector<LibraryEntry>> classes,
                  std::string config_hash = {});

    Category category() const { return category_; }
    const std::map<std::string, std::vector<LibraryEntry>>& classes() const { return classes_; }
    const std::vector<LibraryEntry>& entries(const std::string& label) const;
    std::size_t size() const;
    std::size_t dimension() const { return dim_; }
    const std::string& config_hash() const { return config_hash_; }
    bool contains(std::string_view sample_id) const;

    friend bool operator==(const VectorLibrary&, const VectorLibrary&) = default;

private:
    Category category_ = Category::digits;
    std::map<std::string, std::vector<LibraryEntry>> classes_;
    std::size_t dim_ = 0;
    std::string config_hash_;
};

/// Features of the train samples of `category`. Images are read relative to
/// `base_dir`. Raises a library error naming any label without train
/// samples, and refuses any non-train record.
VectorLibrary build_library(const Manifest& manifest, Category category,
                            const std::filesystem::path& base_dir, std::string config_hash = {});

/// Same, from features already in memory (keyed by sample_id).
VectorLibrary build_library(const Manifest& manifest, Category category,
                            const std::map<std::string, FeatureVector>& features,
                            std::string config_hash = {});

inline constexpr int kLibraryFormatVersion = 1;

/// One JSON header line, then the vectors as little-endian float32 in
/// header order.
std::vector<std::uint8_t> serialize_library(const VectorLibrary& lib);
VectorLibrary deserialize_library(const std::vector<std::uint8_t>& bytes);
void save_library(const std::filesystem::path& path, const VectorLibrary& lib);
VectorLibrary load_library(const std::filesystem::path& path);

/// Resolves a manifest-relative path.
std::filesystem::path resolve(const std::filesystem::path& base_dir, const std::string& path);

}  // namespace cirgest::dataset
