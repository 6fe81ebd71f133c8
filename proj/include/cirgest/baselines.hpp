#pragma once

// Classical classifiers over feature vectors: kNN vote, one-vs-rest linear
// SVM (Pegasos) and a CART random forest.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace cirgest::baselines {

enum class Kind { knn, svm, rf };

std::string_view to_string(Kind k);
Kind parse_kind(std::string_view name);

struct Hyperparams {
    std::size_t knn_k = 5;
    double svm_lambda = 1e-4;
    std::size_t svm_epochs = 50;
    std::size_t rf_trees = 100;
    std::size_t rf_max_depth = 20;
    std::size_t rf_min_leaf = 1;
    // Candidate features per split; 0 means sqrt(dimension).
    std::size_t rf_max_features = 0;

    void validate() const;
    friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

nlohmann::json to_json(const Hyperparams& hp);
Hyperparams hyperparams_from_json(const nlohmann::json& j);

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    float threshold = 0.0f;  // go left when x[feature] <= threshold
    int left = -1;
    int right = -1;
    std::vector<double> distribution;  // leaves only: class frequencies

    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
    friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

struct TrainedModel {
    Kind kind = Kind::knn;
    std::vector<std::string> label_set;  // sorted; class index order
    std::size_t dimension = 0;
    Hyperparams hyperparams;
    std::uint64_t seed = 0;

    // knn
    std::vector<std::vector<float>> vectors;
    std::vector<int> targets;
    std::vector<std::string> sample_ids;
    // svm: one weight row per class; the bias is kept separately
    std::vector<std::vector<double>> weights;
    std::vector<double> bias;
    // rf
    std::vector<DecisionTree> trees;
    // Out-of-bag vote of each training sample; -1 when it was in every bag.
    std::vector<int> oob_predictions;

    friend bool operator==(const TrainedModel&, const TrainedModel&) = default;
};

/// `sample_ids`, when given, breaks kNN distance ties the same way retrieval does.
TrainedModel train(Kind kind, const std::vector<std::vector<float>>& vectors,
                   const std::vector<std::string>& labels, const Hyperparams& hp, std::uint64_t seed,
                   const std::vector<std::string>& sample_ids = {});

struct Prediction {
    std::string label;
    double score = 0.0;  // confidence proxy in [0, 1]
};

Prediction classify(const TrainedModel& model, std::span<const float> query);

/// Per-class decision values: kNN vote share, SVM margin, RF mean leaf probability.
std::vector<double> class_scores(const TrainedModel& model, std::span<const float> query);

/// Out-of-bag labels of the training samples (random forest only); samples
/// without an out-of-bag tree are omitted.
std::vector<std::string> oob_labels(const TrainedModel& model);

inline constexpr int kModelFormatVersion = 1;

nlohmann::json to_json(const TrainedModel& model);
TrainedModel model_from_json(const nlohmann::json& j);
std::string serialize_model(const TrainedModel& model);
TrainedModel deserialize_model(std::string_view text);

}  // namespace cirgest::baselines
