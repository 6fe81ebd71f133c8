#include "cirgest/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "cirgest/error.hpp"

namespace cirgest::retrieval {

namespace {

bool closer(const RetrievedSample& a, const RetrievedSample& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.sample_id < b.sample_id;
}

void check_dimension(std::span<const float> query, const dataset::VectorLibrary& lib) {
    if (query.size() != lib.dimension()) {
        fail(ErrorCode::argument, "query has dimension " + std::to_string(query.size()) +
                                      ", library has " + std::to_string(lib.dimension()));
    }
}

}  // namespace

double euclidean(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) fail(ErrorCode::argument, "vector dimensions differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return std::sqrt(acc);
}

std::vector<RetrievedSample> retrieve_per_class(std::span<const float> query,
                                                const dataset::VectorLibrary& lib) {
    check_dimension(query, lib);
    std::vector<RetrievedSample> out;
    for (const auto& [label, entries] : lib.classes()) {
        if (entries.empty()) fail(ErrorCode::library, "library class '" + label + "' is empty");
        RetrievedSample best;
        bool have = false;
        for (const auto& e : entries) {
            RetrievedSample c{e.sample_id, label, euclidean(query, e.values), e.image_path};
            if (!have || closer(c, best)) {
                best = std::move(c);
                have = true;
            }
        }
        out.push_back(std::move(best));
    }
    std::sort(out.begin(), out.end(), closer);
    return out;
}

std::vector<RetrievedSample> knn_query(std::span<const float> query, const dataset::VectorLibrary& lib,
                                       std::size_t k) {
    if (k == 0) fail(ErrorCode::argument, "k must be positive");
    if (k > lib.size()) {
        fail(ErrorCode::argument, "k = " + std::to_string(k) + " exceeds library size " +
                                      std::to_string(lib.size()));
    }
    check_dimension(query, lib);
    std::vector<RetrievedSample> all;
    all.reserve(lib.size());
    for (const auto& [label, entries] : lib.classes()) {
        for (const auto& e : entries) all.push_back({e.sample_id, label, euclidean(query, e.values), e.image_path});
    }
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), closer);
    all.resize(k);
    return all;
}

}  // namespace cirgest::retrieval
