#pragma once

// Few-shot multimodal prompting: prompt assembly from retrieved exemplars,
// chat-completions providers (HTTP and deterministic mocks), retries,
// bounded-concurrency batches and answer parsing.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cirgest/eval.hpp"
#include "cirgest/image.hpp"
#include "cirgest/labels.hpp"
#include "cirgest/retrieval.hpp"

namespace cirgest::llm {

enum class ImageRole { test, exemplar };

struct PromptImage {
    ImageRole role = ImageRole::test;
    image::GrayImage raster;
    std::string caption;
    std::string label;  // exemplars only
    double distance = 0.0;
};

struct PromptBundle {
    std::string system_text;
    std::string user_text;
    std::vector<PromptImage> images;  // test image first, then exemplars
    std::vector<std::string> valid_labels;
};

/// The prompt template shipped with the library, and its version tag.
std::string_view prompt_template();
inline constexpr int kPromptTemplateVersion = 1;

/// Four significant digits, as shown to the model.
std::string format_distance(double d);

/// `retrieved` must hold exactly one exemplar for each label of `category`,
/// with `exemplar_images` in the same order.
PromptBundle build_prompt(const image::GrayImage& test_image,
                          const std::vector<retrieval::RetrievedSample>& retrieved,
                          const std::vector<image::GrayImage>& exemplar_images, Category category);

struct ParsedAnswer {
    std::optional<std::string> label;  // canonical spelling from valid_labels
    std::string reasoning;
};

/// First <answer>...</answer> span, trimmed and matched case-insensitively
/// against `valid_labels`; the text outside the span is kept as reasoning.
ParsedAnswer parse_answer(std::string_view text, const std::vector<std::string>& valid_labels);

struct ProviderConfig {
    // "http", "mock:nearest", "mock:fixed:<label>", "mock:malformed",
    // "mock:flaky[:<period>]".
    std::string provider = "mock:nearest";
    std::string endpoint_url;
    std::string model_name;
    std::string api_key_env = "CIR_LLM_API_KEY";
    int max_tokens = 4096;
    double temperature = 0.2;
    double timeout_s = 120.0;
    int max_retries = 3;
    double backoff_initial_s = 1.0;
    double backoff_max_s = 30.0;
    std::size_t max_concurrency = 4;
    double requests_per_second = 0.0;  // 0 disables rate limiting

    void validate() const;
};

nlohmann::json to_json(const ProviderConfig& cfg);
ProviderConfig provider_config_from_json(const nlohmann::json& j);

struct ClassificationOutcome {
    std::optional<std::string> predicted_label;
    std::string reasoning_text;
    std::string raw_response;
    eval::Status status = eval::Status::transport_error;
    std::string error;
    int attempts = 0;
};

/// A failed request. Non-retryable failures (e.g. HTTP 401) end the retry loop.
class TransportError : public std::runtime_error {
public:
    explicit TransportError(const std::string& what, bool retryable = true)
        : std::runtime_error(what), retryable_(retryable) {}
    bool retryable() const noexcept { return retryable_; }

private:
    bool retryable_;
};

/// Implementations must be safe to call from several threads at once.
class Provider {
public:
    virtual ~Provider() = default;
    /// Returns the model's reply text or throws TransportError.
    virtual std::string complete(const PromptBundle& prompt) = 0;
    virtual std::string name() const = 0;
};

/// Raises a provider error when the configuration is unusable, e.g. the http
/// provider without an API key in the environment. No request is sent here.
std::unique_ptr<Provider> make_provider(const ProviderConfig& cfg);

/// {model, max_tokens, temperature, messages}; images go in as base64 PNG
/// data URLs.
nlohmann::json build_request_body(const PromptBundle& prompt, const ProviderConfig& cfg);

/// choices[0].message.content, either a string or a list of text parts.
std::string extract_response_text(const nlohmann::json& response);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);

/// Spaces request starts at least 1/rate seconds apart across threads.
class RateLimiter {
public:
    explicit RateLimiter(double requests_per_second);
    void acquire();

private:
    std::chrono::steady_clock::duration interval_{};
    std::mutex mu_;
    std::chrono::steady_clock::time_point next_{};
};

/// Sends one prompt with retries and exponential backoff. Never throws for
/// transport failures; they come back as transport_error outcomes.
ClassificationOutcome classify(const PromptBundle& prompt, Provider& provider, const ProviderConfig& cfg,
                               RateLimiter* limiter = nullptr);

/// At most cfg.max_concurrency requests in flight; outcomes keep input order.
std::vector<ClassificationOutcome> classify_batch(const std::vector<PromptBundle>& prompts,
                                                  Provider& provider, const ProviderConfig& cfg);

}  // namespace cirgest::llm
