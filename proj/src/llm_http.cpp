#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "llm_http.hpp"

#include <cstdlib>
#include <regex>

#include "cirgest/error.hpp"

namespace cirgest::llm::detail {

namespace {

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

Endpoint parse_endpoint(const std::string& url) {
    static const std::regex re(R"(^(https?://[^/?#]+)(/[^?#]*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, re)) {
        fail(ErrorCode::provider, "endpoint_url must look like https://host[:port]/path, got '" + url + "'");
    }
    Endpoint e{m[1].str(), m[2].matched ? m[2].str() : std::string("/v1/chat/completions")};
    if (e.path == "/") e.path = "/v1/chat/completions";
    return e;
}

class HttpProvider : public Provider {
public:
    HttpProvider(const ProviderConfig& cfg, std::string key)
        : cfg_(cfg), endpoint_(parse_endpoint(cfg.endpoint_url)), key_(std::move(key)) {}

    std::string complete(const PromptBundle& prompt) override {
        // One client per request keeps concurrent calls independent.
        httplib::Client cli(endpoint_.origin);
        const auto secs = static_cast<time_t>(cfg_.timeout_s);
        const auto usecs = static_cast<time_t>((cfg_.timeout_s - static_cast<double>(secs)) * 1e6);
        cli.set_connection_timeout(secs, usecs);
        cli.set_read_timeout(secs, usecs);
        cli.set_write_timeout(secs, usecs);
        const httplib::Headers headers = {{"Authorization", "Bearer " + key_}};
        const std::string body = build_request_body(prompt, cfg_).dump();
        auto res = cli.Post(endpoint_.path, headers, body, "application/json");
        if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()));
        if (res->status < 200 || res->status >= 300) {
            const bool retryable = res->status == 408 || res->status == 429 || res->status >= 500;
            throw TransportError("HTTP " + std::to_string(res->status), retryable);
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception&) {
            throw TransportError("response is not JSON", false);
        }
        return extract_response_text(j);
    }

    std::string name() const override { return "http"; }

private:
    ProviderConfig cfg_;
    Endpoint endpoint_;
    std::string key_;
};

}  // namespace

std::unique_ptr<Provider> make_http_provider(const ProviderConfig& cfg) {
    if (cfg.endpoint_url.empty()) fail(ErrorCode::provider, "http provider needs endpoint_url");
    if (cfg.model_name.empty()) fail(ErrorCode::provider, "http provider needs model_name");
    const char* key = cfg.api_key_env.empty() ? nullptr : std::getenv(cfg.api_key_env.c_str());
    if (!key || !*key) {
        fail(ErrorCode::provider, "http provider: environment variable " +
                                      (cfg.api_key_env.empty() ? std::string("(unset name)") : cfg.api_key_env) +
                                      " holds no API key");
    }
    return std::make_unique<HttpProvider>(cfg, key);
}

}  // namespace cirgest::llm::detail
