#pragma once

// Exhaustive Euclidean nearest-neighbour search over a vector library.

#include <span>
#include <string>
#include <vector>

#include "cirgest/dataset.hpp"

namespace cirgest::retrieval {

struct RetrievedSample {
    std::string sample_id;
    std::string gesture_label;
    double distance = 0.0;
    std::string image_path;
};

/// sqrt(sum (a_i - b_i)^2), accumulated in double.
double euclidean(std::span<const float> a, std::span<const float> b);

/// Best match of each class, ascending by distance, ties by sample_id.
std::vector<RetrievedSample> retrieve_per_class(std::span<const float> query,
                                                const dataset::VectorLibrary& lib);

/// The k globally nearest vectors, ascending by distance, ties by sample_id.
std::vector<RetrievedSample> knn_query(std::span<const float> query, const dataset::VectorLibrary& lib,
                                       std::size_t k);

}  // namespace cirgest::retrieval
