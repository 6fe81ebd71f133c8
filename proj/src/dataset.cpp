#include "cirgest/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <sstream>

#include <json.hpp>

#include "byteio.hpp"
#include "cirgest/error.hpp"
#include "util.hpp"

namespace cirgest::dataset {

using nlohmann::json;

namespace {

constexpr const char* kLibraryMagic = "cirgest-vector-library";

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
    if (v) j[key] = *v;
}

template <typename T>
std::optional<T> get_optional(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<T>();
}

std::string require_string(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
        fail(ErrorCode::data, std::string("manifest row lacks string field '") + key + "'");
    }
    return it->get<std::string>();
}

}  // namespace

std::string_view to_string(Split s) {
    switch (s) {
        case Split::unassigned: return "unassigned";
        case Split::train: return "train";
        case Split::test: return "test";
    }
    return "unassigned";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "test") return Split::test;
    if (name == "unassigned" || name.empty()) return Split::unassigned;
    fail(ErrorCode::data, "unknown split '" + std::string(name) + "'");
}

void validate(const Manifest& manifest) {
    std::set<std::string> ids;
    for (const auto& r : manifest) {
        if (r.sample_id.empty()) fail(ErrorCode::data, "empty sample_id in manifest");
        if (!ids.insert(r.sample_id).second) {
            fail(ErrorCode::data, "duplicate sample_id '" + r.sample_id + "'");
        }
        const auto c = category_of(r.gesture_label);
        if (!c) fail(ErrorCode::data, "unknown gesture label '" + r.gesture_label + "'");
        if (*c != r.category) {
            fail(ErrorCode::data, "label '" + r.gesture_label + "' does not belong to category " +
                                      std::string(to_string(r.category)));
        }
    }
}

std::string to_jsonl_line(const SampleRecord& r) {
    json j;
    j["sample_id"] = r.sample_id;
    j["gesture_label"] = r.gesture_label;
    j["category"] = std::string(to_string(r.category));
    j["split"] = std::string(to_string(r.split));
    if (!r.image_path.empty()) j["image_path"] = r.image_path;
    if (!r.audio_path.empty()) j["audio_path"] = r.audio_path;
    put_optional(j, "seed", r.seed);
    if (r.snr_db) {
        if (std::isfinite(*r.snr_db)) {
            j["snr_db"] = *r.snr_db;
        } else {
            j["snr_db"] = nullptr;
        }
    }
    put_optional(j, "duration_s", r.duration_s);
    put_optional(j, "tap_count", r.tap_count);
    put_optional(j, "frame_rate_hz", r.frame_rate_hz);
    return j.dump();
}

SampleRecord from_jsonl_line(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        fail(ErrorCode::data, std::string("malformed manifest line: ") + e.what());
    }
    if (!j.is_object()) fail(ErrorCode::data, "manifest line is not a JSON object");
    SampleRecord r;
    try {
        r.sample_id = require_string(j, "sample_id");
        r.gesture_label = require_string(j, "gesture_label");
        const auto cat = j.find("category");
        if (cat != j.end() && cat->is_string()) {
            r.category = parse_category(cat->get<std::string>());
        } else {
            const auto c = category_of(r.gesture_label);
            if (!c) fail(ErrorCode::data, "unknown gesture label '" + r.gesture_label + "'");
            r.category = *c;
        }
        r.split = parse_split(j.value("split", std::string("unassigned")));
        r.image_path = j.value("image_path", std::string());
        r.audio_path = j.value("audio_path", std::string());
        r.seed = get_optional<std::uint64_t>(j, "seed");
        if (j.contains("snr_db")) {
            r.snr_db = j["snr_db"].is_null() ? std::numeric_limits<double>::infinity()
                                             : j["snr_db"].get<double>();
        }
        r.duration_s = get_optional<double>(j, "duration_s");
        r.tap_count = get_optional<std::size_t>(j, "tap_count");
        r.frame_rate_hz = get_optional<double>(j, "frame_rate_hz");
    } catch (const json::exception& e) {
        fail(ErrorCode::data, std::string("bad manifest field: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::argument) fail(ErrorCode::data, e.what());
        throw;
    }
    return r;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    std::string text;
    for (const auto& r : manifest) {
        text += to_jsonl_line(r);
        text += '\n';
    }
    detail::write_text(path, text);
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::istringstream is(detail::read_text(path));
    Manifest m;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            m.push_back(from_jsonl_line(line));
        } catch (const Error& e) {
            fail(e.code(), path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    validate(m);
    return m;
}

std::vector<double> box_resample(const image::GrayImage& img, std::size_t width, std::size_t height) {
    if (img.empty() || img.width == 0 || img.height == 0) {
        fail(ErrorCode::input, "cannot resample an empty image");
    }
    if (img.pixels.size() != img.width * img.height) fail(ErrorCode::input, "image buffer size mismatch");
    if (width == 0 || height == 0) fail(ErrorCode::argument, "target size must be positive");

    // Coordinates are scaled by the output size: input pixel x spans
    // [x*out, (x+1)*out) and output pixel i spans [i*in, (i+1)*in). Overlaps
    // are then integers and the area sum is exact before the one division.
    const std::uint64_t in_w = img.width, in_h = img.height;
    const auto overlaps = [](std::uint64_t out_n, std::uint64_t in_n) {
        std::vector<std::vector<std::pair<std::size_t, std::uint64_t>>> spans(out_n);
        for (std::uint64_t i = 0; i < out_n; ++i) {
            const std::uint64_t lo = i * in_n, hi = (i + 1) * in_n;
            for (std::uint64_t x = lo / out_n; x < in_n && x * out_n < hi; ++x) {
                const std::uint64_t a = std::max(lo, x * out_n);
                const std::uint64_t b = std::min(hi, (x + 1) * out_n);
                if (b > a) spans[i].emplace_back(static_cast<std::size_t>(x), b - a);
            }
        }
        return spans;
    };
    const auto xs = overlaps(width, in_w);
    const auto ys = overlaps(height, in_h);
    const double area = static_cast<double>(in_w) * static_cast<double>(in_h);

    std::vector<double> out(width * height);
    for (std::size_t oy = 0; oy < height; ++oy) {
        for (std::size_t ox = 0; ox < width; ++ox) {
            std::uint64_t acc = 0;
            for (const auto& [y, wy] : ys[oy]) {
                std::uint64_t row = 0;
                for (const auto& [x, wx] : xs[ox]) row += wx * img.pixels[y * img.width + x];
                acc += row * wy;
            }
            out[oy * width + ox] = static_cast<double>(acc) / area;
        }
    }
    return out;
}

FeatureVector extract_features(const image::GrayImage& img, std::string sample_id) {
    const auto box = box_resample(img, kFeatureSide, kFeatureSide);
    FeatureVector f;
    f.sample_id = std::move(sample_id);
    f.values.resize(box.size());
    for (std::size_t i = 0; i < box.size(); ++i) f.values[i] = static_cast<float>(box[i] / 255.0);
    return f;
}

Manifest split(const Manifest& manifest, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) fail(ErrorCode::argument, "split ratio must lie in (0, 1)");
    validate(manifest);

    std::map<std::string, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < manifest.size(); ++i) by_label[manifest[i].gesture_label].push_back(i);

    Manifest out = manifest;
    for (auto& [label, idx] : by_label) {
        const std::size_t n = idx.size();
        if (n < 2) {
            fail(ErrorCode::split, "class '" + label + "' has " + std::to_string(n) +
                                       " sample(s); splitting needs at least 2");
        }
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return manifest[a].sample_id < manifest[b].sample_id;
        });
        // One stream per class keeps a class's assignment independent of
        // which other classes are present.
        std::uint64_t h = seed;
        for (char ch : label) h = detail::mix_seed(h ^ static_cast<unsigned char>(ch));
        std::mt19937_64 rng(h);
        detail::shuffle(idx, rng);

        // The small epsilon keeps 0.8 * 10 at 8 despite binary rounding.
        auto n_train = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
        n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
        for (std::size_t k = 0; k < n; ++k) out[idx[k]].split = k < n_train ? Split::train : Split::test;
    }
    return out;
}

VectorLibrary::VectorLibrary(Category category,
                             std::map<std::string, std::vector<LibraryEntry>> classes,
                             std::string config_hash)
    : category_(category), classes_(std::move(classes)), config_hash_(std::move(config_hash)) {
    for (const auto& label : labels_of(category_)) {
        auto it = classes_.find(label);
        if (it == classes_.end() || it->second.empty()) {
            fail(ErrorCode::library, "library for " + std::string(to_string(category_)) +
                                         " has no vectors for label '" + label + "'");
        }
    }
    std::set<std::string> ids;
    for (const auto& [label, entries] : classes_) {
        const auto c = category_of(label);
        if (!c || *c != category_) {
            fail(ErrorCode::library, "label '" + label + "' is not part of category " +
                                         std::string(to_string(category_)));
        }
        for (const auto& e : entries) {
            if (dim_ == 0) dim_ = e.values.size();
            if (e.values.size() != dim_ || dim_ == 0) {
                fail(ErrorCode::library, "inconsistent vector dimension in library");
            }
            if (!ids.insert(e.sample_id).second) {
                fail(ErrorCode::library, "duplicate sample_id '" + e.sample_id + "' in library");
            }
        }
    }
}

const std::vector<LibraryEntry>& VectorLibrary::entries(const std::string& label) const {
    auto it = classes_.find(label);
    if (it == classes_.end()) fail(ErrorCode::library, "library has no class '" + label + "'");
    return it->second;
}

std::size_t VectorLibrary::size() const {
    std::size_t n = 0;
    for (const auto& [label, e] : classes_) n += e.size();
    return n;
}

bool VectorLibrary::contains(std::string_view sample_id) const {
    for (const auto& [label, entries] : classes_) {
        for (const auto& e : entries) {
            if (e.sample_id == sample_id) return true;
        }
    }
    return false;
}

std::filesystem::path resolve(const std::filesystem::path& base_dir, const std::string& path) {
    const std::filesystem::path p(path);
    return p.is_absolute() ? p : base_dir / p;
}

namespace {

template <typename FeatureOf>
VectorLibrary assemble(const Manifest& manifest, Category category, FeatureOf feature_of,
                       std::string config_hash) {
    validate(manifest);
    std::map<std::string, std::vector<LibraryEntry>> classes;
    for (const auto& r : manifest) {
        if (r.category != category || r.split != Split::train) continue;
        classes[r.gesture_label].push_back({r.sample_id, r.image_path, feature_of(r)});
    }
    for (auto& [label, entries] : classes) {
        std::sort(entries.begin(), entries.end(),
                  [](const LibraryEntry& a, const LibraryEntry& b) { return a.sample_id < b.sample_id; });
    }
    VectorLibrary lib(category, std::move(classes), std::move(config_hash));
    // Leakage guard: every stored vector must come from a train record.
    std::map<std::string, Split> split_of;
    for (const auto& r : manifest) split_of[r.sample_id] = r.split;
    for (const auto& [label, entries] : lib.classes()) {
        for (const auto& e : entries) {
            if (split_of.at(e.sample_id) != Split::train) {
                fail(ErrorCode::library, "sample '" + e.sample_id + "' is not in the train split");
            }
        }
    }
    return lib;
}

}  // namespace

VectorLibrary build_library(const Manifest& manifest, Category category,
                            const std::filesystem::path& base_dir, std::string config_hash) {
    return assemble(
        manifest, category,
        [&](const SampleRecord& r) {
            if (r.image_path.empty()) fail(ErrorCode::data, "sample '" + r.sample_id + "' has no image_path");
            return extract_features(image::read_png(resolve(base_dir, r.image_path)), r.sample_id).values;
        },
        std::move(config_hash));
}

VectorLibrary build_library(const Manifest& manifest, Category category,
                            const std::map<std::string, FeatureVector>& features,
                            std::string config_hash) {
    return assemble(
        manifest, category,
        [&](const SampleRecord& r) {
            auto it = features.find(r.sample_id);
            if (it == features.end()) fail(ErrorCode::library, "no features for sample '" + r.sample_id + "'");
            return it->second.values;
        },
        std::move(config_hash));
}

std::vector<std::uint8_t> serialize_library(const VectorLibrary& lib) {
    json header;
    header["format"] = kLibraryMagic;
    header["version"] = kLibraryFormatVersion;
    header["category"] = std::string(to_string(lib.category()));
    header["dimension"] = lib.dimension();
    header["dtype"] = "float32-le";
    header["config_hash"] = lib.config_hash();
    json entries = json::array();
    for (const auto& [label, list] : lib.classes()) {
        for (const auto& e : list) {
            entries.push_back({{"label", label}, {"sample_id", e.sample_id}, {"image_path", e.image_path}});
        }
    }
    header["entries"] = std::move(entries);

    std::ostringstream os;
    os << header.dump() << '\n';
    for (const auto& [label, list] : lib.classes()) {
        for (const auto& e : list) {
            for (float v : e.values) detail::put_le(os, std::bit_cast<std::uint32_t>(v));
        }
    }
    const std::string s = os.str();
    return {s.begin(), s.end()};
}

VectorLibrary deserialize_library(const std::vector<std::uint8_t>& bytes) {
    const auto nl = std::find(bytes.begin(), bytes.end(), std::uint8_t{'\n'});
    if (nl == bytes.end()) fail(ErrorCode::library, "library file has no header line");
    json header;
    try {
        header = json::parse(bytes.begin(), nl);
    } catch (const json::exception& e) {
        fail(ErrorCode::library, std::string("malformed library header: ") + e.what());
    }
    if (header.value("format", std::string()) != kLibraryMagic) {
        fail(ErrorCode::library, "not a vector library file");
    }
    if (header.value("version", 0) != kLibraryFormatVersion) {
        fail(ErrorCode::library, "unsupported library version " + header.value("version", json()).dump());
    }
    Category category;
    std::size_t dim;
    try {
        category = parse_category(header.at("category").get<std::string>());
        dim = header.at("dimension").get<std::size_t>();
    } catch (const std::exception& e) {
        fail(ErrorCode::library, std::string("bad library header: ") + e.what());
    }
    const auto& entries = header.at("entries");
    const std::size_t payload = static_cast<std::size_t>(bytes.end() - nl - 1);
    if (payload != entries.size() * dim * 4) {
        fail(ErrorCode::library, "library payload size " + std::to_string(payload) +
                                     " does not match header (" + std::to_string(entries.size()) +
                                     " x " + std::to_string(dim) + " floats)");
    }
    std::istringstream is(std::string(nl + 1, bytes.end()));
    std::map<std::string, std::vector<LibraryEntry>> classes;
    for (const auto& e : entries) {
        LibraryEntry le;
        le.sample_id = e.at("sample_id").get<std::string>();
        le.image_path = e.value("image_path", std::string());
        le.values.resize(dim);
        for (auto& v : le.values) {
            std::uint32_t u = 0;
            detail::get_le(is, u);
            v = std::bit_cast<float>(u);
        }
        classes[e.at("label").get<std::string>()].push_back(std::move(le));
    }
    return VectorLibrary(category, std::move(classes), header.value("config_hash", std::string()));
}

void save_library(const std::filesystem::path& path, const VectorLibrary& lib) {
    detail::write_bytes(path, serialize_library(lib));
}

VectorLibrary load_library(const std::filesystem::path& path) {
    return deserialize_library(detail::read_bytes(path));
}

}  // namespace cirgest::dataset
