#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <thread>

#include "cirgest/llm.hpp"
#include "support.hpp"

using namespace cirgest;
using namespace cirgest::llm;
using nlohmann::json;

namespace {

image::GrayImage raster(std::uint8_t seed, std::size_t w = 8, std::size_t h = 6) {
    image::GrayImage img{w, h, std::vector<std::uint8_t>(w * h)};
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(seed * 31 + i * 7);
    return img;
}

// Letters prompt whose nearest exemplar is `nearest`.
PromptBundle letters_prompt(std::uint8_t test_seed = 1, const std::string& nearest = "C") {
    std::vector<retrieval::RetrievedSample> r;
    std::vector<image::GrayImage> imgs;
    double d = 2.0;
    for (const auto& l : labels_of(Category::letters)) {
        const double dist = l == nearest ? 0.123456 : (d += 1.0);
        r.push_back({l + "_001", l, dist, "images/" + l + "_001.png"});
        imgs.push_back(raster(static_cast<std::uint8_t>(l[0])));
    }
    return build_prompt(raster(test_seed), r, imgs, Category::letters);
}

ProviderConfig fast_config(std::string provider) {
    ProviderConfig c;
    c.provider = std::move(provider);
    c.backoff_initial_s = 0.0;
    c.max_retries = 2;
    return c;
}

// Scripted chat-completions stand-in on 127.0.0.1.
class FakeEndpoint {
public:
    FakeEndpoint() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mu_);
            bodies_.push_back(req.body);
            auth_.push_back(req.get_header_value("Authorization"));
            const int status = script_.empty() ? 200 : script_.front();
            if (!script_.empty()) script_.erase(script_.begin());
            res.status = status;
            if (status == 200) {
                json reply = {{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", reply_}}}}})}};
                res.set_content(reply.dump(), "application/json");
            } else {
                res.set_content("{\"error\":\"no\"}", "application/json");
            }
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeEndpoint() {
        server_.stop();
        thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
    void script(std::vector<int> statuses) {
        std::lock_guard lock(mu_);
        script_ = std::move(statuses);
    }
    void reply(json content) {
        std::lock_guard lock(mu_);
        reply_ = std::move(content);
    }
    std::vector<std::string> bodies() {
        std::lock_guard lock(mu_);
        return bodies_;
    }
    std::vector<std::string> auth() {
        std::lock_guard lock(mu_);
        return auth_;
    }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
    std::mutex mu_;
    std::vector<int> script_;
    json reply_ = "<answer>D</answer> Two crossing ridges.";
    std::vector<std::string> bodies_, auth_;
};

ProviderConfig http_config(const FakeEndpoint& ep) {
    auto c = fast_config("http");
    c.endpoint_url = ep.url();
    c.model_name = "test-model";
    c.api_key_env = "CIRGEST_TEST_API_KEY";
    c.timeout_s = 5.0;
    ::setenv("CIRGEST_TEST_API_KEY", "sk-test-123", 1);
    return c;
}

}  // namespace

TEST_CASE("prompt content") {
    const auto p = letters_prompt();
    CHECK(p.user_text.find("**Your Task**") != std::string::npos);
    CHECK(p.user_text.find("<answer>") != std::string::npos);
    CHECK(p.user_text.find("</answer>") != std::string::npos);
    CHECK(p.user_text.find("channel changes caused by drawing the label patterns with the VR controller") !=
          std::string::npos);
    CHECK(p.system_text.find("expert") != std::string::npos);
    CHECK(p.user_text.find("{{") == std::string::npos);
    REQUIRE(p.images.size() == 6);
    CHECK(p.images[0].role == ImageRole::test);
    for (std::size_t i = 1; i < 6; ++i) {
        const auto& img = p.images[i];
        CHECK(img.role == ImageRole::exemplar);
        CHECK(img.caption.find("label " + img.label) != std::string::npos);
        CHECK(img.caption.find(format_distance(img.distance)) != std::string::npos);
        CHECK(p.user_text.find(img.caption) != std::string::npos);
    }
    CHECK(p.user_text.find("0.1235") != std::string::npos);
    CHECK(p.valid_labels == labels_of(Category::letters));
}

TEST_CASE("prompts are byte stable") {
    const auto a = letters_prompt(4), b = letters_prompt(4);
    CHECK(a.system_text == b.system_text);
    CHECK(a.user_text == b.user_text);
    CHECK(build_request_body(a, fast_config("http")).dump() == build_request_body(b, fast_config("http")).dump());
    CHECK(prompt_template().find("=== system ===") != std::string_view::npos);
}

TEST_CASE("prompt errors") {
    std::vector<retrieval::RetrievedSample> r;
    std::vector<image::GrayImage> imgs;
    for (const auto& l : {"A", "B", "C", "D", "D"}) {
        r.push_back({std::string(l) + "_0", l, 1.0, ""});
        imgs.push_back(raster(1));
    }
    CHECK_CODE(build_prompt(raster(1), r, imgs, Category::letters), ErrorCode::prompt);
    r[4].gesture_label = "E";
    CHECK_NOTHROW(build_prompt(raster(1), r, imgs, Category::letters));
    CHECK_CODE(build_prompt(raster(1), r, imgs, Category::digits), ErrorCode::prompt);
    imgs.pop_back();
    CHECK_CODE(build_prompt(raster(1), r, imgs, Category::letters), ErrorCode::prompt);
    CHECK_CODE(build_prompt(image::GrayImage{}, r, imgs, Category::letters), ErrorCode::prompt);
}

TEST_CASE("answer parsing examples") {
    const std::vector<std::string> labels{"A", "B", "C", "D", "E"};
    auto a = parse_answer("<answer>C</answer> The ridge curves bend twice.", labels);
    REQUIRE(a.label);
    CHECK(*a.label == "C");
    CHECK(a.reasoning == "The ridge curves bend twice.");

    a = parse_answer("I think <answer> b </answer>.", labels);
    REQUIRE(a.label);
    CHECK(*a.label == "B");

    CHECK_FALSE(parse_answer("<answer>Z</answer>", labels).label);
    const auto first = parse_answer("<answer>A</answer> or maybe <answer>B</answer>", labels);
    CHECK(*first.label == "A");
    CHECK(*parse_answer("<answer>circle</answer>", labels_of(Category::shapes)).label == "circle");
    CHECK(*parse_answer("<ANSWER>Circle</ANSWER>", labels_of(Category::shapes)).label == "circle");
}

TEST_CASE("malformed answers never crash and never parse") {
    const std::vector<std::string> labels{"A", "B", "C", "D", "E"};
    const std::vector<std::string> fuzz{
        "",
        "A",
        "<answer>",
        "</answer>",
        "<answer></answer>",
        "<answer>   </answer>",
        "</answer>A<answer>",
        "<answer>A",
        "A</answer>",
        "<answer>AB</answer>",
        "<answer><answer>A</answer>",
        "<answer>A B</answer>",
        "<answr>A</answr>",
        "< answer>A</ answer>",
        "<answer>\xff\xfe</answer>",
        std::string("<answer>A\0</answer>", 19),
        std::string(100000, '<'),
        "<answer>" + std::string(5000, 'A') + "</answer>",
        "<answer>1</answer>",
        "{\"answer\": \"A\"}",
    };
    REQUIRE(fuzz.size() == 20);
    for (const auto& s : fuzz) {
        ParsedAnswer p;
        CHECK_NOTHROW(p = parse_answer(s, labels));
        CHECK_FALSE(p.label);
    }
}

TEST_CASE("mock providers") {
    const auto p = letters_prompt(2, "E");
    auto nearest = make_provider(fast_config("mock:nearest"));
    auto o = classify(p, *nearest, fast_config("mock:nearest"));
    CHECK(o.status == eval::Status::ok);
    CHECK(*o.predicted_label == "E");
    CHECK(o.attempts == 1);
    CHECK(nearest->name() == "mock:nearest");

    auto malformed = make_provider(fast_config("mock:malformed"));
    o = classify(p, *malformed, fast_config("mock:malformed"));
    CHECK(o.status == eval::Status::parse_failed);
    CHECK_FALSE(o.predicted_label);
    CHECK_FALSE(o.raw_response.empty());

    auto fixed = make_provider(fast_config("mock:fixed:B"));
    CHECK(*classify(p, *fixed, fast_config("mock:fixed:B")).predicted_label == "B");

    CHECK_CODE(make_provider(fast_config("mock:unknown")), ErrorCode::provider);
    CHECK_CODE(make_provider(fast_config("mock:flaky:1")), ErrorCode::provider);
    CHECK_CODE(make_provider(fast_config("mock:fixed:")), ErrorCode::provider);
}

TEST_CASE("fault-injected batch loses nothing") {
    std::vector<PromptBundle> prompts;
    const auto& labels = labels_of(Category::letters);
    for (int i = 0; i < 40; ++i) prompts.push_back(letters_prompt(static_cast<std::uint8_t>(i), labels[i % 5]));
    auto cfg = fast_config("mock:flaky:3");
    cfg.max_concurrency = 4;
    auto provider = make_provider(cfg);
    const auto out = classify_batch(prompts, *provider, cfg);
    REQUIRE(out.size() == prompts.size());
    int ok = 0, failed = 0, retried = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i].status == eval::Status::ok) {
            ++ok;
            CHECK(*out[i].predicted_label == labels[i % 5]);
            retried += out[i].attempts == 2;
            CHECK(out[i].attempts <= 2);
        } else {
            ++failed;
            CHECK(out[i].status == eval::Status::transport_error);
            CHECK(out[i].attempts == cfg.max_retries + 1);
            CHECK_FALSE(out[i].error.empty());
            CHECK_FALSE(out[i].predicted_label);
        }
    }
    CHECK(ok + failed == 40);
    CHECK(failed > 0);
    CHECK(retried > 0);

    // Sequential and concurrent runs agree.
    cfg.max_concurrency = 1;
    auto again = make_provider(cfg);
    const auto seq = classify_batch(prompts, *again, cfg);
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(seq[i].status == out[i].status);
        CHECK(seq[i].predicted_label == out[i].predicted_label);
    }
}

TEST_CASE("HTTP provider request format") {
    FakeEndpoint ep;
    const auto cfg = http_config(ep);
    auto provider = make_provider(cfg);
    CHECK(provider->name() == "http");
    const auto p = letters_prompt(3);
    const auto o = classify(p, *provider, cfg);
    CHECK(o.status == eval::Status::ok);
    CHECK(*o.predicted_label == "D");
    CHECK(o.reasoning_text == "Two crossing ridges.");

    REQUIRE(ep.bodies().size() == 1);
    CHECK(ep.auth()[0] == "Bearer sk-test-123");
    const auto body = json::parse(ep.bodies()[0]);
    CHECK(body["model"] == "test-model");
    CHECK(body["max_tokens"] == 4096);
    CHECK(body["temperature"].get<double>() == 0.2);
    REQUIRE(body["messages"].size() == 2);
    CHECK(body["messages"][0]["role"] == "system");
    CHECK(body["messages"][0]["content"] == p.system_text);
    const auto& content = body["messages"][1]["content"];
    CHECK(content[0]["text"] == p.user_text);
    int images = 0;
    for (const auto& part : content) {
        if (part["type"] != "image_url") continue;
        const std::string url = part["image_url"]["url"];
        CHECK(url.starts_with("data:image/png;base64,"));
        ++images;
    }
    CHECK(images == 6);
    const std::string first = content[2]["image_url"]["url"];
    CHECK(first.substr(22) == base64_encode(image::encode_png(p.images[0].raster)));
    CHECK(ep.bodies()[0].find("sk-test-123") == std::string::npos);
}

TEST_CASE("HTTP retries") {
    FakeEndpoint ep;
    const auto cfg = http_config(ep);
    auto provider = make_provider(cfg);
    const auto p = letters_prompt(5);

    ep.script({429, 503});
    auto o = classify(p, *provider, cfg);
    CHECK(o.status == eval::Status::ok);
    CHECK(o.attempts == 3);

    ep.script({401, 200});
    o = classify(p, *provider, cfg);
    CHECK(o.status == eval::Status::transport_error);
    CHECK(o.attempts == 1);
    CHECK(o.error == "HTTP 401");

    ep.script({500, 500, 500, 500});
    o = classify(p, *provider, cfg);
    CHECK(o.status == eval::Status::transport_error);
    CHECK(o.attempts == 3);

    ep.script({});
    ep.reply(json::array({{{"type", "text"}, {"text", "<answer>a</answer>"}}, {{"type", "text"}, {"text", " ok"}}}));
    o = classify(p, *provider, cfg);
    CHECK(*o.predicted_label == "A");
    CHECK(o.reasoning_text == "ok");
}

TEST_CASE("unreachable endpoint is a transport error") {
    auto cfg = fast_config("http");
    cfg.model_name = "m";
    cfg.api_key_env = "CIRGEST_TEST_API_KEY";
    cfg.timeout_s = 1.0;
    ::setenv("CIRGEST_TEST_API_KEY", "k", 1);
    // Bind and release a port so nothing listens on it.
    int port;
    {
        httplib::Server s;
        port = s.bind_to_any_port("127.0.0.1");
    }
    cfg.endpoint_url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    cfg.max_retries = 1;
    auto provider = make_provider(cfg);
    const auto o = classify(letters_prompt(), *provider, cfg);
    CHECK(o.status == eval::Status::transport_error);
    CHECK(o.attempts == 2);
}

TEST_CASE("HTTP provider configuration errors") {
    auto cfg = fast_config("http");
    CHECK_CODE(make_provider(cfg), ErrorCode::provider);
    cfg.endpoint_url = "https://example.invalid/v1/chat/completions";
    CHECK_CODE(make_provider(cfg), ErrorCode::provider);
    cfg.model_name = "m";
    cfg.api_key_env = "CIRGEST_TEST_MISSING_KEY";
    ::unsetenv("CIRGEST_TEST_MISSING_KEY");
    try {
        make_provider(cfg);
        FAIL("expected a provider error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::provider);
        CHECK(std::string(e.what()).find("CIRGEST_TEST_MISSING_KEY") != std::string::npos);
    }
    ::setenv("CIRGEST_TEST_MISSING_KEY", "x", 1);
    cfg.endpoint_url = "ftp://nowhere";
    CHECK_CODE(make_provider(cfg), ErrorCode::provider);
}

TEST_CASE("provider config") {
    auto cfg = fast_config("mock:nearest");
    cfg.requests_per_second = 2.5;
    CHECK(to_json(provider_config_from_json(to_json(cfg))) == to_json(cfg));
    CHECK(ProviderConfig{}.max_tokens == 4096);
    CHECK(ProviderConfig{}.temperature == 0.2);
    cfg.max_tokens = 0;
    CHECK_CODE(cfg.validate(), ErrorCode::config);
    cfg.max_tokens = 10;
    cfg.temperature = -1;
    CHECK_CODE(cfg.validate(), ErrorCode::config);
    CHECK_CODE(provider_config_from_json(json{{"max_tokens", "many"}}), ErrorCode::config);
}

TEST_CASE("base64 test vectors") {
    const auto enc = [](std::string s) { return base64_encode(std::vector<std::uint8_t>(s.begin(), s.end())); };
    CHECK(enc("") == "");
    CHECK(enc("f") == "Zg==");
    CHECK(enc("fo") == "Zm8=");
    CHECK(enc("foo") == "Zm9v");
    CHECK(enc("foob") == "Zm9vYg==");
    CHECK(enc("fooba") == "Zm9vYmE=");
    CHECK(enc("foobar") == "Zm9vYmFy");
}

TEST_CASE("rate limiter spaces requests") {
    RateLimiter off(0.0);
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < 100; ++i) off.acquire();
    CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::milliseconds(50));

    RateLimiter lim(50.0);
    const auto t1 = std::chrono::steady_clock::now();
    std::vector<std::thread> ts;
    for (int i = 0; i < 3; ++i) ts.emplace_back([&] {
        lim.acquire();
        lim.acquire();
    });
    for (auto& t : ts) t.join();
    // Six starts, five intervals of 20 ms.
    CHECK(std::chrono::steady_clock::now() - t1 >= std::chrono::milliseconds(99));
}
