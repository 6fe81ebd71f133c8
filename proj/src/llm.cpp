#include "cirgest/llm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <thread>

#include <openssl/evp.h>

#include "cirgest/error.hpp"
#include "llm_http.hpp"
#include "prompt_asset.hpp"

namespace cirgest::llm {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
    for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) {
        s.replace(pos, from.size(), to);
    }
}

struct TemplateParts {
    std::string system;
    std::string user;
};

TemplateParts split_template(std::string_view text) {
    TemplateParts parts;
    std::string* current = nullptr;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const auto line = text.substr(pos, end - pos);
        pos = end + 1;
        if (line == "=== system ===") {
            current = &parts.system;
        } else if (line == "=== user ===") {
            current = &parts.user;
        } else if (!line.empty() && line.front() == '#' && current == nullptr) {
            continue;  // header comments before the first section
        } else if (current) {
            *current += line;
            *current += '\n';
        }
        if (end == text.size()) break;
    }
    parts.system = trim(parts.system);
    parts.user = trim(parts.user);
    if (parts.system.empty() || parts.user.empty()) fail(ErrorCode::prompt, "prompt template lacks a section");
    return parts;
}

std::string join(const std::vector<std::string>& v, const char* sep) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += sep;
        s += v[i];
    }
    return s;
}

const PromptImage* nearest_exemplar(const PromptBundle& p) {
    const PromptImage* best = nullptr;
    for (const auto& img : p.images) {
        if (img.role != ImageRole::exemplar) continue;
        if (!best || img.distance < best->distance) best = &img;
    }
    return best;
}

std::uint64_t prompt_hash(const PromptBundle& p) {
    // FNV-1a over the user text and the test raster.
    std::uint64_t h = 1469598103934665603ULL;
    const auto feed = [&](unsigned char c) {
        h ^= c;
        h *= 1099511628211ULL;
    };
    for (char c : p.user_text) feed(static_cast<unsigned char>(c));
    for (const auto& img : p.images) {
        if (img.role == ImageRole::test) {
            for (auto px : img.raster.pixels) feed(px);
        }
    }
    return h;
}

class NearestProvider : public Provider {
public:
    std::string complete(const PromptBundle& p) override {
        const auto* e = nearest_exemplar(p);
        if (!e) throw TransportError("nearest-label mock needs exemplars", false);
        return "<answer>" + e->label + "</answer> The closest reference image is the " + e->label +
               " exemplar (distance " + format_distance(e->distance) + ").";
    }
    std::string name() const override { return "mock:nearest"; }
};

class FixedProvider : public Provider {
public:
    explicit FixedProvider(std::string label) : label_(std::move(label)) {}
    std::string complete(const PromptBundle&) override {
        return "<answer>" + label_ + "</answer> Fixed mock answer.";
    }
    std::string name() const override { return "mock:fixed:" + label_; }

private:
    std::string label_;
};

class MalformedProvider : public Provider {
public:
    std::string complete(const PromptBundle&) override {
        return "The ridges look like a gesture of some kind, but I will not commit to a label.";
    }
    std::string name() const override { return "mock:malformed"; }
};

// Answers like the nearest-label mock, except that prompts whose hash is
// 0 mod period always fail and those at 1 mod period fail on their first
// attempt only.
class FlakyProvider : public Provider {
public:
    explicit FlakyProvider(std::uint64_t period) : period_(period) {}
    std::string complete(const PromptBundle& p) override {
        const std::uint64_t h = prompt_hash(p);
        if (h % period_ == 0) throw TransportError("injected permanent failure");
        if (h % period_ == 1) {
            std::lock_guard lock(mu_);
            if (seen_[h]++ == 0) throw TransportError("injected transient failure");
        }
        return nearest_.complete(p);
    }
    std::string name() const override { return "mock:flaky:" + std::to_string(period_); }

private:
    std::uint64_t period_;
    NearestProvider nearest_;
    std::mutex mu_;
    std::map<std::uint64_t, int> seen_;
};

}  // namespace

std::string_view prompt_template() { return detail::kPromptTemplate; }

std::string format_distance(double d) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", d);
    return buf;
}

PromptBundle build_prompt(const image::GrayImage& test_image,
                          const std::vector<retrieval::RetrievedSample>& retrieved,
                          const std::vector<image::GrayImage>& exemplar_images, Category category) {
    const auto& labels = labels_of(category);
    if (test_image.empty()) fail(ErrorCode::prompt, "empty test image");
    if (retrieved.size() != exemplar_images.size()) {
        fail(ErrorCode::prompt, "exemplar images do not match retrieved samples");
    }
    for (const auto& l : labels) {
        const auto n = std::count_if(retrieved.begin(), retrieved.end(),
                                     [&](const retrieval::RetrievedSample& r) { return r.gesture_label == l; });
        if (n != 1) {
            fail(ErrorCode::prompt, "retrieved exemplars must cover label '" + l + "' exactly once (found " +
                                        std::to_string(n) + ")");
        }
    }
    if (retrieved.size() != labels.size()) fail(ErrorCode::prompt, "retrieved exemplars outside the category");

    const auto parts = split_template(prompt_template());
    PromptBundle b;
    b.valid_labels = labels;
    b.images.push_back({ImageRole::test, test_image, "Test sample (label unknown)", "", 0.0});
    std::string lines;
    for (std::size_t i = 0; i < retrieved.size(); ++i) {
        const auto& r = retrieved[i];
        const std::string caption = "Reference " + std::to_string(i + 1) + ": label " + r.gesture_label +
                                    ", Euclidean distance " + format_distance(r.distance);
        lines += "- " + caption + "\n";
        b.images.push_back({ImageRole::exemplar, exemplar_images[i], caption, r.gesture_label, r.distance});
    }
    if (!lines.empty()) lines.pop_back();

    b.system_text = parts.system;
    b.user_text = parts.user;
    replace_all(b.user_text, "{{category}}", std::string(to_string(category)));
    replace_all(b.user_text, "{{labels}}", join(labels, ", "));
    replace_all(b.user_text, "{{exemplar_count}}", std::to_string(retrieved.size()));
    replace_all(b.user_text, "{{exemplars}}", lines);
    return b;
}

ParsedAnswer parse_answer(std::string_view text, const std::vector<std::string>& valid_labels) {
    ParsedAnswer out;
    // Tags are matched case-insensitively; the reasoning is the text around
    // the first complete span.
    const std::string low = lower(text);
    const auto open = low.find("<answer>");
    const auto close = open == std::string::npos ? std::string::npos : low.find("</answer>", open + 8);
    if (open == std::string::npos || close == std::string::npos) {
        out.reasoning = std::string(text);
        return out;
    }
    const std::string span = trim(text.substr(open + 8, close - open - 8));
    const std::string rest = std::string(text.substr(0, open)) + std::string(text.substr(close + 9));
    out.reasoning = trim(rest);
    if (span.empty()) return out;
    const std::string key = lower(span);
    for (const auto& l : valid_labels) {
        if (lower(l) == key) {
            out.label = l;
            break;
        }
    }
    return out;
}

void ProviderConfig::validate() const {
    if (max_tokens <= 0) fail(ErrorCode::config, "max_tokens must be positive");
    if (!(temperature >= 0.0)) fail(ErrorCode::config, "temperature must be >= 0");
    if (!(timeout_s > 0.0)) fail(ErrorCode::config, "timeout_s must be positive");
    if (max_retries < 0) fail(ErrorCode::config, "max_retries must be >= 0");
    if (!(backoff_initial_s >= 0.0) || !(backoff_max_s >= 0.0)) fail(ErrorCode::config, "backoff must be >= 0");
    if (max_concurrency == 0) fail(ErrorCode::config, "max_concurrency must be positive");
    if (!(requests_per_second >= 0.0)) fail(ErrorCode::config, "requests_per_second must be >= 0");
}

json to_json(const ProviderConfig& c) {
    // The key itself never appears; only the variable name that holds it.
    return {{"provider", c.provider},
            {"endpoint_url", c.endpoint_url},
            {"model_name", c.model_name},
            {"api_key_env", c.api_key_env},
            {"max_tokens", c.max_tokens},
            {"temperature", c.temperature},
            {"timeout_s", c.timeout_s},
            {"max_retries", c.max_retries},
            {"backoff_initial_s", c.backoff_initial_s},
            {"backoff_max_s", c.backoff_max_s},
            {"max_concurrency", c.max_concurrency},
            {"requests_per_second", c.requests_per_second}};
}

ProviderConfig provider_config_from_json(const json& j) {
    ProviderConfig c;
    try {
        c.provider = j.value("provider", c.provider);
        c.endpoint_url = j.value("endpoint_url", c.endpoint_url);
        c.model_name = j.value("model_name", c.model_name);
        c.api_key_env = j.value("api_key_env", c.api_key_env);
        c.max_tokens = j.value("max_tokens", c.max_tokens);
        c.temperature = j.value("temperature", c.temperature);
        c.timeout_s = j.value("timeout_s", c.timeout_s);
        c.max_retries = j.value("max_retries", c.max_retries);
        c.backoff_initial_s = j.value("backoff_initial_s", c.backoff_initial_s);
        c.backoff_max_s = j.value("backoff_max_s", c.backoff_max_s);
        c.max_concurrency = j.value("max_concurrency", c.max_concurrency);
        c.requests_per_second = j.value("requests_per_second", c.requests_per_second);
    } catch (const json::exception& e) {
        fail(ErrorCode::config, std::string("bad provider config: ") + e.what());
    }
    return c;
}

std::unique_ptr<Provider> make_provider(const ProviderConfig& cfg) {
    cfg.validate();
    const std::string& p = cfg.provider;
    if (p == "mock:nearest") return std::make_unique<NearestProvider>();
    if (p == "mock:malformed") return std::make_unique<MalformedProvider>();
    if (p.rfind("mock:fixed:", 0) == 0) {
        const std::string label = p.substr(11);
        if (label.empty()) fail(ErrorCode::provider, "mock:fixed needs a label, e.g. mock:fixed:A");
        return std::make_unique<FixedProvider>(label);
    }
    if (p == "mock:flaky" || p.rfind("mock:flaky:", 0) == 0) {
        std::uint64_t period = 3;
        if (p.size() > 11) {
            try {
                period = std::stoull(p.substr(11));
            } catch (const std::exception&) {
                fail(ErrorCode::provider, "bad mock:flaky period in '" + p + "'");
            }
        }
        if (period < 2) fail(ErrorCode::provider, "mock:flaky period must be >= 2");
        return std::make_unique<FlakyProvider>(period);
    }
    if (p == "http") return detail::make_http_provider(cfg);
    fail(ErrorCode::provider, "unknown provider '" + p + "'");
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

json build_request_body(const PromptBundle& prompt, const ProviderConfig& cfg) {
    json user = json::array();
    user.push_back({{"type", "text"}, {"text", prompt.user_text}});
    for (const auto& img : prompt.images) {
        user.push_back({{"type", "text"}, {"text", img.caption}});
        user.push_back({{"type", "image_url"},
                        {"image_url", {{"url", "data:image/png;base64," + base64_encode(image::encode_png(img.raster))}}}});
    }
    json body;
    body["model"] = cfg.model_name;
    body["max_tokens"] = cfg.max_tokens;
    body["temperature"] = cfg.temperature;
    body["messages"] = json::array({json{{"role", "system"}, {"content", prompt.system_text}},
                                    json{{"role", "user"}, {"content", std::move(user)}}});
    return body;
}

std::string extract_response_text(const json& response) {
    try {
        const auto& content = response.at("choices").at(0).at("message").at("content");
        if (content.is_string()) return content.get<std::string>();
        std::string text;
        for (const auto& part : content) {
            if (part.value("type", std::string()) == "text") text += part.value("text", std::string());
        }
        return text;
    } catch (const json::exception& e) {
        throw TransportError(std::string("unexpected response shape: ") + e.what(), false);
    }
}

RateLimiter::RateLimiter(double rps) {
    if (rps > 0.0) {
        interval_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(1.0 / rps));
    }
}

void RateLimiter::acquire() {
    if (interval_.count() == 0) return;
    std::chrono::steady_clock::time_point slot;
    {
        std::lock_guard lock(mu_);
        const auto now = std::chrono::steady_clock::now();
        slot = std::max(now, next_);
        next_ = slot + interval_;
    }
    std::this_thread::sleep_until(slot);
}

ClassificationOutcome classify(const PromptBundle& prompt, Provider& provider, const ProviderConfig& cfg,
                               RateLimiter* limiter) {
    ClassificationOutcome out;
    double backoff = cfg.backoff_initial_s;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        if (attempt > 0 && backoff > 0.0) {
            std::this_thread::sleep_for(std::chrono::duration<double>(std::min(backoff, cfg.backoff_max_s)));
            backoff *= 2.0;
        }
        out.attempts = attempt + 1;
        try {
            if (limiter) limiter->acquire();
            out.raw_response = provider.complete(prompt);
        } catch (const TransportError& e) {
            out.error = e.what();
            if (!e.retryable()) break;
            continue;
        }
        const auto parsed = parse_answer(out.raw_response, prompt.valid_labels);
        out.error.clear();
        out.reasoning_text = parsed.reasoning;
        out.predicted_label = parsed.label;
        out.status = parsed.label ? eval::Status::ok : eval::Status::parse_failed;
        return out;
    }
    out.status = eval::Status::transport_error;
    out.predicted_label.reset();
    return out;
}

std::vector<ClassificationOutcome> classify_batch(const std::vector<PromptBundle>& prompts,
                                                  Provider& provider, const ProviderConfig& cfg) {
    cfg.validate();
    std::vector<ClassificationOutcome> out(prompts.size());
    RateLimiter limiter(cfg.requests_per_second);
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < prompts.size();) {
            try {
                out[i] = classify(prompts[i], provider, cfg, &limiter);
            } catch (const std::exception& e) {
                out[i].status = eval::Status::transport_error;
                out[i].error = e.what();
            }
        }
    };
    const std::size_t n = std::min(cfg.max_concurrency, prompts.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return out;
}

}  // namespace cirgest::llm
