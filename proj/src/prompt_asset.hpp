#pragma once

#include <string_view>

namespace cirgest::llm::detail {

// Contents of assets/prompts/dcir_fewshot.txt, embedded at build time.
extern const std::string_view kPromptTemplate;

}  // namespace cirgest::llm::detail
