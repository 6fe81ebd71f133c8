#pragma once

#include <stdexcept>
#include <string>

namespace cirgest {

enum class ErrorCode {
    argument,
    config,
    io,
    input,
    sync_failure,
    empty_result,
    estimation,
    truncation,
    split,
    library,
    training,
    prompt,
    provider,
    metric,
    data,
};

const char* to_string(ErrorCode code);

// Every failure raised by the library carries a code so the CLI can map it
// onto an exit status and tests can assert on the failure kind.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

}  // namespace cirgest
