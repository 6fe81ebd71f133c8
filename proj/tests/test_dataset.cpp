#include <algorithm>
#include <set>

#include "cirgest/dataset.hpp"
#include "support.hpp"

using namespace cirgest;
using namespace cirgest::dataset;

namespace {

Manifest make_manifest(const std::vector<std::string>& labels, std::size_t per_label) {
    Manifest m;
    for (const auto& l : labels) {
        for (std::size_t i = 0; i < per_label; ++i) {
            SampleRecord r;
            r.sample_id = l + "_" + std::to_string(i);
            r.gesture_label = l;
            r.category = *category_of(l);
            r.image_path = "images/" + r.sample_id + ".png";
            m.push_back(r);
        }
    }
    return m;
}

// Area average by explicit supersampling: each input pixel becomes an
// out_w x out_h block, then each output pixel averages an in_w x in_h block.
std::vector<double> supersample_oracle(const image::GrayImage& img, std::size_t out_w, std::size_t out_h) {
    const std::size_t big_w = img.width * out_w, big_h = img.height * out_h;
    std::vector<double> out(out_w * out_h, 0.0);
    for (std::size_t y = 0; y < big_h; ++y) {
        for (std::size_t x = 0; x < big_w; ++x) {
            const double v = img.at(y / out_h, x / out_w);
            out[(y / img.height) * out_w + x / img.width] += v;
        }
    }
    for (auto& v : out) v /= static_cast<double>(img.width * img.height);
    return out;
}

std::map<std::string, FeatureVector> random_features(const Manifest& m, std::uint64_t seed, std::size_t dim = 16) {
    std::mt19937_64 rng(seed);
    std::map<std::string, FeatureVector> out;
    for (const auto& r : m) {
        FeatureVector f{r.sample_id, std::vector<float>(dim)};
        for (auto& v : f.values) v = static_cast<float>(rng() % 1000) / 1000.0f;
        out[r.sample_id] = f;
    }
    return out;
}

}  // namespace

TEST_CASE("features are 4096 values in [0, 1]") {
    image::GrayImage img{127, 128, std::vector<std::uint8_t>(127 * 128)};
    std::mt19937_64 rng(2);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() % 256);
    const auto f = extract_features(img, "x");
    CHECK(f.sample_id == "x");
    REQUIRE(f.values.size() == kFeatureDim);
    for (float v : f.values) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    image::GrayImage white{10, 7, std::vector<std::uint8_t>(70, 255)};
    for (float v : extract_features(white).values) CHECK(v == 1.0f);
}

TEST_CASE("box resample of a centred square") {
    image::GrayImage img{128, 128, std::vector<std::uint8_t>(128 * 128, 0)};
    for (std::size_t y = 32; y < 96; ++y) {
        for (std::size_t x = 32; x < 96; ++x) img.pixels[y * 128 + x] = 255;
    }
    const auto f = extract_features(img);
    for (std::size_t y = 0; y < 64; ++y) {
        for (std::size_t x = 0; x < 64; ++x) {
            const bool inside = y >= 16 && y < 48 && x >= 16 && x < 48;
            CHECK(f.values[y * 64 + x] == (inside ? 1.0f : 0.0f));
        }
    }
}

TEST_CASE("box resample matches the supersampling oracle") {
    std::mt19937_64 rng(8);
    for (auto [w, h] : {std::pair<std::size_t, std::size_t>{127, 128}, {100, 37}, {64, 64}, {3, 200}}) {
        image::GrayImage img{w, h, std::vector<std::uint8_t>(w * h)};
        for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() % 256);
        const auto got = box_resample(img, 64, 64);
        const auto want = supersample_oracle(img, 64, 64);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
    CHECK_CODE(box_resample(image::GrayImage{}, 64, 64), ErrorCode::input);
}

TEST_CASE("manifest JSONL round trip") {
    testing::TempDir dir("manifest");
    auto m = make_manifest({"A", "circle"}, 2);
    m[0].seed = 123456789012345ULL;
    m[0].snr_db = 20.0;
    m[1].snr_db = std::nullopt;
    m[1].duration_s = 1.625;
    m[1].tap_count = 128;
    m[1].frame_rate_hz = 80.0;
    m[1].audio_path = "audio/x.wav";
    m[1].split = Split::test;
    write_manifest(dir.path() / "m.jsonl", m);
    CHECK(read_manifest(dir.path() / "m.jsonl") == m);
    CHECK(from_jsonl_line(to_jsonl_line(m[0])) == m[0]);

    CHECK_CODE(from_jsonl_line("{\"sample_id\":\"a\",\"gesture_label\":\"Q\"}"), ErrorCode::data);
    CHECK_CODE(from_jsonl_line("not json"), ErrorCode::data);
    auto dup = m;
    dup[1].sample_id = dup[0].sample_id;
    CHECK_CODE(validate(dup), ErrorCode::data);
}

TEST_CASE("80/20 split per class") {
    const auto m = make_manifest({"A", "B", "C", "D", "E"}, 10);
    const auto s = split(m, 0.8, 1);
    std::map<std::string, int> train, test;
    for (const auto& r : s) (r.split == Split::train ? train : test)[r.gesture_label]++;
    for (const auto& l : {"A", "B", "C", "D", "E"}) {
        CHECK(train[l] == 8);
        CHECK(test[l] == 2);
    }
    CHECK(split(m, 0.8, 1) == s);
    CHECK(split(m, 0.8, 2) != s);

    // Input order does not matter.
    auto rev = m;
    std::reverse(rev.begin(), rev.end());
    std::map<std::string, Split> a, b;
    for (const auto& r : s) a[r.sample_id] = r.split;
    for (const auto& r : split(rev, 0.8, 1)) b[r.sample_id] = r.split;
    CHECK(a == b);
}

TEST_CASE("150 samples in 15 classes split 120/30") {
    const auto m = make_manifest(all_labels(), 10);
    const auto s = split(m, 0.8, 0);
    CHECK(std::count_if(s.begin(), s.end(), [](const SampleRecord& r) { return r.split == Split::train; }) == 120);
    CHECK(std::count_if(s.begin(), s.end(), [](const SampleRecord& r) { return r.split == Split::test; }) == 30);
}

TEST_CASE("split edge cases") {
    auto m = make_manifest({"A"}, 1);
    CHECK_CODE(split(m, 0.8, 0), ErrorCode::split);
    m = make_manifest({"A"}, 2);
    auto s = split(m, 0.99, 0);
    CHECK((s[0].split == Split::train) != (s[1].split == Split::train));
    CHECK_CODE(split(m, 1.0, 0), ErrorCode::argument);
}

TEST_CASE("library from the train split") {
    const auto m = split(make_manifest({"A", "B", "C", "D", "E"}, 10), 0.8, 3);
    const auto feats = random_features(m, 1);
    const auto lib = build_library(m, Category::letters, feats, "hash");
    CHECK(lib.size() == 40);
    CHECK(lib.classes().size() == 5);
    for (const auto& [label, entries] : lib.classes()) CHECK(entries.size() == 8);
    CHECK(lib.dimension() == 16);
    for (const auto& r : m) CHECK(lib.contains(r.sample_id) == (r.split == Split::train));

    CHECK_CODE(build_library(m, Category::digits, feats), ErrorCode::library);
    CHECK_CODE(lib.entries("circle"), ErrorCode::library);
}

TEST_CASE("library refuses a class without train samples") {
    auto m = split(make_manifest({"A", "B", "C", "D", "E"}, 4), 0.5, 0);
    for (auto& r : m) {
        if (r.gesture_label == "C") r.split = Split::test;
    }
    try {
        build_library(m, Category::letters, random_features(m, 0));
        FAIL("expected a library error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::library);
        CHECK(std::string(e.what()).find('C') != std::string::npos);
    }
}

TEST_CASE("library persistence is bit exact") {
    testing::TempDir dir("lib");
    const auto m = split(make_manifest({"1", "2", "3", "4", "5"}, 6), 0.8, 9);
    const auto lib = build_library(m, Category::digits, random_features(m, 4, kFeatureDim), "abc");
    save_library(dir.path() / "l.bin", lib);
    const auto back = load_library(dir.path() / "l.bin");
    CHECK(back == lib);
    CHECK(serialize_library(back) == serialize_library(lib));

    auto bytes = serialize_library(lib);
    bytes.pop_back();
    CHECK_CODE(deserialize_library(bytes), ErrorCode::library);
    CHECK_CODE(deserialize_library({'x', 'y'}), ErrorCode::library);
}

TEST_CASE("library from images on disk") {
    testing::TempDir dir("libimg");
    auto m = split(make_manifest({"circle", "cross", "check", "diamond", "triangle"}, 3), 0.6, 0);
    std::mt19937_64 rng(5);
    std::filesystem::create_directories(dir.path() / "images");
    for (const auto& r : m) {
        image::GrayImage img{20, 30, std::vector<std::uint8_t>(600)};
        for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() % 256);
        image::write_png(dir.path() / r.image_path, img);
    }
    const auto lib = build_library(m, Category::shapes, dir.path());
    CHECK(lib.dimension() == kFeatureDim);
    const auto& e = lib.entries("circle").front();
    const auto direct = extract_features(image::read_png(dir.path() / e.image_path));
    CHECK(e.values == direct.values);
}
