#include <cmath>

#include "cirgest/image.hpp"
#include "cirgest/wav.hpp"
#include "support.hpp"

using namespace cirgest;

TEST_CASE("float WAV round trip is exact") {
    testing::TempDir dir("wav");
    std::vector<double> x;
    for (int i = 0; i < 1000; ++i) x.push_back(std::sin(0.01 * i) * 0.75);
    wav::write(dir.path() / "a.wav", x, 48000.0);
    const auto a = wav::read(dir.path() / "a.wav");
    CHECK(a.sample_rate_hz == 48000.0);
    REQUIRE(a.samples.size() == x.size());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(a.samples[i] == static_cast<double>(static_cast<float>(x[i])));
    CHECK(std::filesystem::file_size(dir.path() / "a.wav") == 44 + 4 * x.size());
}

TEST_CASE("PCM16 WAV clips and quantises") {
    testing::TempDir dir("wav16");
    const std::vector<double> x{0.0, 0.5, -0.5, 1.7, -3.0};
    wav::write(dir.path() / "b.wav", x, 44100.0, wav::SampleFormat::pcm16);
    const auto b = wav::read(dir.path() / "b.wav");
    CHECK(b.sample_rate_hz == 44100.0);
    REQUIRE(b.samples.size() == 5);
    CHECK(b.samples[0] == 0.0);
    CHECK(b.samples[1] == doctest::Approx(0.5).epsilon(1e-4));
    CHECK(b.samples[3] == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(b.samples[4] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(std::filesystem::file_size(dir.path() / "b.wav") == 44 + 2 * 5);
}

TEST_CASE("WAV errors") {
    testing::TempDir dir("wavbad");
    CHECK_CODE(wav::read(dir.path() / "missing.wav"), ErrorCode::io);
    {
        std::FILE* f = std::fopen((dir.path() / "junk.wav").string().c_str(), "wb");
        std::fputs("not a wave file at all", f);
        std::fclose(f);
    }
    CHECK_CODE(wav::read(dir.path() / "junk.wav"), ErrorCode::input);
}

TEST_CASE("PNG round trip") {
    testing::TempDir dir("png");
    image::GrayImage img{5, 3, {0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120, 130, 255}};
    image::write_png(dir.path() / "g.png", img);
    const auto back = image::read_png(dir.path() / "g.png");
    CHECK(back == img);
    CHECK(image::decode_png(image::encode_png(img)) == img);
    CHECK_CODE(image::decode_png(std::vector<std::uint8_t>{1, 2, 3}), ErrorCode::input);
    CHECK_CODE(image::read_png(dir.path() / "none.png"), ErrorCode::input);
    CHECK_CODE(image::encode_png(image::GrayImage{}), ErrorCode::input);
}

TEST_CASE("colour input is averaged to gray") {
    const std::vector<std::uint8_t> rgb{10, 20, 30, 255, 0, 0};
    const auto g = image::from_interleaved(rgb, 2, 1, 3);
    CHECK(g.pixels == std::vector<std::uint8_t>{20, 85});
    const std::vector<std::uint8_t> ga{1, 2};
    CHECK(image::from_interleaved(ga, 1, 1, 2).pixels == std::vector<std::uint8_t>{2});
    CHECK_CODE(image::from_interleaved(rgb, 3, 1, 3), ErrorCode::input);
}
