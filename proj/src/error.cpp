#include "cirgest/error.hpp"

namespace cirgest {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::argument: return "argument";
        case ErrorCode::config: return "config";
        case ErrorCode::io: return "io";
        case ErrorCode::input: return "input";
        case ErrorCode::sync_failure: return "sync_failure";
        case ErrorCode::empty_result: return "empty_result";
        case ErrorCode::estimation: return "estimation";
        case ErrorCode::truncation: return "truncation";
        case ErrorCode::split: return "split";
        case ErrorCode::library: return "library";
        case ErrorCode::training: return "training";
        case ErrorCode::prompt: return "prompt";
        case ErrorCode::provider: return "provider";
        case ErrorCode::metric: return "metric";
        case ErrorCode::data: return "data";
    }
    return "unknown";
}

}  // namespace cirgest
