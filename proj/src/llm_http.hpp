#pragma once

#include <memory>

#include "cirgest/llm.hpp"

namespace cirgest::llm::detail {

std::unique_ptr<Provider> make_http_provider(const ProviderConfig& cfg);

}  // namespace cirgest::llm::detail
