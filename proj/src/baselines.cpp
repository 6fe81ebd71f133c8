#include "cirgest/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "cirgest/error.hpp"
#include "util.hpp"

namespace cirgest::baselines {

using nlohmann::json;

namespace {

constexpr const char* kModelMagic = "cirgest-model";

double sq_distance(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

std::size_t argmax(const std::vector<double>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// ---- kNN ------------------------------------------------------------------

std::vector<double> knn_scores(const TrainedModel& m, std::span<const float> q, std::size_t* winner) {
    const std::size_t n = m.vectors.size();
    std::vector<std::pair<double, std::size_t>> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = {std::sqrt(sq_distance(q, m.vectors[i])), i};
    const auto tie = [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        if (!m.sample_ids.empty()) return m.sample_ids[a.second] < m.sample_ids[b.second];
        return a.second < b.second;
    };
    const std::size_t k = std::min(m.hyperparams.knn_k, n);
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end(), tie);

    const std::size_t c = m.label_set.size();
    std::vector<double> votes(c, 0.0), dist_sum(c, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        const auto t = static_cast<std::size_t>(m.targets[d[i].second]);
        votes[t] += 1.0;
        dist_sum[t] += d[i].first;
    }
    // Majority; equal votes go to the smaller mean distance, then the
    // earlier label.
    std::size_t best = c;
    for (std::size_t j = 0; j < c; ++j) {
        if (votes[j] == 0.0) continue;
        if (best == c || votes[j] > votes[best] ||
            (votes[j] == votes[best] && dist_sum[j] / votes[j] < dist_sum[best] / votes[best])) {
            best = j;
        }
    }
    if (winner) *winner = best;
    for (auto& v : votes) v /= static_cast<double>(k);
    return votes;
}

// ---- SVM ------------------------------------------------------------------

void train_svm(TrainedModel& m, const std::vector<std::vector<float>>& x) {
    const std::size_t n = x.size(), dim = m.dimension, c = m.label_set.size();
    const double lambda = m.hyperparams.svm_lambda;
    // w = scale * v, so the per-step shrink (1 - eta*lambda) is O(1). The bias
    // is the weight of a constant feature 1 and is shrunk with the rest.
    std::vector<std::vector<double>> v(c, std::vector<double>(dim + 1, 0.0));
    std::vector<double> scale(c, 1.0);
    std::mt19937_64 rng(m.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::uint64_t t = 0;
    for (std::size_t epoch = 0; epoch < m.hyperparams.svm_epochs; ++epoch) {
        detail::shuffle(order, rng);
        for (std::size_t i : order) {
            ++t;
            const double eta = 1.0 / (lambda * static_cast<double>(t));
            const double shrink = 1.0 - eta * lambda;
            const auto& xi = x[i];
            for (std::size_t j = 0; j < c; ++j) {
                const double y = m.targets[i] == static_cast<int>(j) ? 1.0 : -1.0;
                double dot = v[j][dim];
                for (std::size_t f = 0; f < dim; ++f) dot += v[j][f] * xi[f];
                const double margin = y * scale[j] * dot;
                if (shrink <= 0.0) {
                    std::fill(v[j].begin(), v[j].end(), 0.0);
                    scale[j] = 1.0;
                } else {
                    scale[j] *= shrink;
                }
                if (margin < 1.0) {
                    const double step = eta * y / scale[j];
                    for (std::size_t f = 0; f < dim; ++f) v[j][f] += step * xi[f];
                    v[j][dim] += step;
                }
                if (scale[j] < 1e-100) {
                    for (auto& w : v[j]) w *= scale[j];
                    scale[j] = 1.0;
                }
            }
        }
    }
    m.weights.assign(c, std::vector<double>(dim));
    m.bias.assign(c, 0.0);
    for (std::size_t j = 0; j < c; ++j) {
        for (std::size_t f = 0; f < dim; ++f) m.weights[j][f] = scale[j] * v[j][f];
        m.bias[j] = scale[j] * v[j][dim];
    }
}

std::vector<double> svm_scores(const TrainedModel& m, std::span<const float> q) {
    std::vector<double> s(m.label_set.size());
    for (std::size_t j = 0; j < s.size(); ++j) {
        double dot = m.bias[j];
        for (std::size_t f = 0; f < m.dimension; ++f) dot += m.weights[j][f] * q[f];
        s[j] = dot;
    }
    return s;
}

// ---- random forest --------------------------------------------------------

class TreeBuilder {
public:
    TreeBuilder(const std::vector<std::vector<float>>& x, const std::vector<int>& y, std::size_t classes,
                const Hyperparams& hp, std::size_t max_features, std::mt19937_64& rng)
        : x_(x), y_(y), classes_(classes), hp_(hp), max_features_(max_features), rng_(rng) {
        features_.resize(x.front().size());
        std::iota(features_.begin(), features_.end(), 0);
    }

    DecisionTree build(std::vector<std::size_t> idx) {
        tree_.nodes.clear();
        grow(idx, 0);
        return std::move(tree_);
    }

private:
    std::vector<double> counts(const std::vector<std::size_t>& idx) const {
        std::vector<double> c(classes_, 0.0);
        for (auto i : idx) c[static_cast<std::size_t>(y_[i])] += 1.0;
        return c;
    }

    static double gini(const std::vector<double>& c, double n) {
        if (n <= 0.0) return 0.0;
        double s = 0.0;
        for (double v : c) s += v * v;
        return 1.0 - s / (n * n);
    }

    int make_leaf(const std::vector<std::size_t>& idx) {
        TreeNode leaf;
        leaf.distribution = counts(idx);
        for (auto& v : leaf.distribution) v /= static_cast<double>(idx.size());
        tree_.nodes.push_back(std::move(leaf));
        return static_cast<int>(tree_.nodes.size() - 1);
    }

    int grow(std::vector<std::size_t>& idx, std::size_t depth) {
        const auto total = counts(idx);
        const double n = static_cast<double>(idx.size());
        const double parent = gini(total, n);
        if (depth >= hp_.rf_max_depth || parent == 0.0 || idx.size() < 2 * hp_.rf_min_leaf) {
            return make_leaf(idx);
        }

        // Draw features without replacement until max_features of them vary
        // inside the node, or none are left (constant features do not count).
        double best_gain = 0.0;
        int best_feature = -1;
        float best_threshold = 0.0f;
        std::size_t examined = 0;
        std::vector<std::pair<float, int>> column(idx.size());
        for (std::size_t drawn = 0; drawn < features_.size() && examined < max_features_; ++drawn) {
            const auto pick = drawn + static_cast<std::size_t>(detail::uniform_below(rng_, features_.size() - drawn));
            std::swap(features_[drawn], features_[pick]);
            const std::size_t f = features_[drawn];
            for (std::size_t k = 0; k < idx.size(); ++k) column[k] = {x_[idx[k]][f], y_[idx[k]]};
            std::sort(column.begin(), column.end());
            if (column.front().first == column.back().first) continue;
            ++examined;

            std::vector<double> left(classes_, 0.0);
            for (std::size_t k = 0; k + 1 < column.size(); ++k) {
                left[static_cast<std::size_t>(column[k].second)] += 1.0;
                if (column[k].first == column[k + 1].first) continue;
                const double nl = static_cast<double>(k + 1), nr = n - nl;
                if (nl < static_cast<double>(hp_.rf_min_leaf) || nr < static_cast<double>(hp_.rf_min_leaf)) continue;
                std::vector<double> right(classes_);
                for (std::size_t c = 0; c < classes_; ++c) right[c] = total[c] - left[c];
                const double gain = parent - (nl * gini(left, nl) + nr * gini(right, nr)) / n;
                if (gain > best_gain + 1e-12) {
                    best_gain = gain;
                    best_feature = static_cast<int>(f);
                    // Midpoint in double, then rounded; fall back to the lower
                    // value if rounding lands on the upper one.
                    const double mid = 0.5 * (static_cast<double>(column[k].first) +
                                              static_cast<double>(column[k + 1].first));
                    float th = static_cast<float>(mid);
                    if (!(th < column[k + 1].first)) th = column[k].first;
                    best_threshold = th;
                }
            }
        }
        if (best_feature < 0) return make_leaf(idx);

        std::vector<std::size_t> li, ri;
        for (auto i : idx) (x_[i][static_cast<std::size_t>(best_feature)] <= best_threshold ? li : ri).push_back(i);
        const int self = static_cast<int>(tree_.nodes.size());
        tree_.nodes.push_back({best_feature, best_threshold, -1, -1, {}});
        const int l = grow(li, depth + 1);
        const int r = grow(ri, depth + 1);
        tree_.nodes[static_cast<std::size_t>(self)].left = l;
        tree_.nodes[static_cast<std::size_t>(self)].right = r;
        return self;
    }

    const std::vector<std::vector<float>>& x_;
    const std::vector<int>& y_;
    std::size_t classes_;
    const Hyperparams& hp_;
    std::size_t max_features_;
    std::mt19937_64& rng_;
    std::vector<std::size_t> features_;
    DecisionTree tree_;
};

const std::vector<double>& leaf_of(const DecisionTree& t, std::span<const float> q) {
    std::size_t i = 0;
    while (t.nodes[i].feature >= 0) {
        const auto& nd = t.nodes[i];
        i = static_cast<std::size_t>(q[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right);
    }
    return t.nodes[i].distribution;
}

void train_rf(TrainedModel& m, const std::vector<std::vector<float>>& x) {
    const std::size_t n = x.size(), c = m.label_set.size();
    const std::size_t mf = m.hyperparams.rf_max_features > 0
                               ? std::min(m.hyperparams.rf_max_features, m.dimension)
                               : std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(m.dimension))));
    std::mt19937_64 rng(m.seed);
    TreeBuilder builder(x, m.targets, c, m.hyperparams, mf, rng);
    std::vector<std::vector<double>> oob(n, std::vector<double>(c, 0.0));
    std::vector<std::size_t> oob_trees(n, 0);
    for (std::size_t t = 0; t < m.hyperparams.rf_trees; ++t) {
        std::vector<std::size_t> bag(n);
        std::vector<bool> in_bag(n, false);
        for (auto& b : bag) {
            b = static_cast<std::size_t>(detail::uniform_below(rng, n));
            in_bag[b] = true;
        }
        m.trees.push_back(builder.build(std::move(bag)));
        for (std::size_t i = 0; i < n; ++i) {
            if (in_bag[i]) continue;
            const auto& d = leaf_of(m.trees.back(), x[i]);
            for (std::size_t j = 0; j < c; ++j) oob[i][j] += d[j];
            ++oob_trees[i];
        }
    }
    m.oob_predictions.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        if (oob_trees[i] > 0) m.oob_predictions[i] = static_cast<int>(argmax(oob[i]));
    }
}

std::vector<double> rf_scores(const TrainedModel& m, std::span<const float> q) {
    std::vector<double> s(m.label_set.size(), 0.0);
    for (const auto& t : m.trees) {
        const auto& d = leaf_of(t, q);
        for (std::size_t j = 0; j < s.size(); ++j) s[j] += d[j];
    }
    for (auto& v : s) v /= static_cast<double>(m.trees.size());
    return s;
}

}  // namespace

std::string_view to_string(Kind k) {
    switch (k) {
        case Kind::knn: return "knn";
        case Kind::svm: return "svm";
        case Kind::rf: return "rf";
    }
    return "knn";
}

Kind parse_kind(std::string_view name) {
    if (name == "knn") return Kind::knn;
    if (name == "svm") return Kind::svm;
    if (name == "rf") return Kind::rf;
    fail(ErrorCode::argument, "unknown baseline kind '" + std::string(name) + "' (knn, svm, rf)");
}

void Hyperparams::validate() const {
    if (knn_k == 0) fail(ErrorCode::config, "knn_k must be positive");
    if (!(svm_lambda > 0.0)) fail(ErrorCode::config, "svm_lambda must be positive");
    if (svm_epochs == 0) fail(ErrorCode::config, "svm_epochs must be positive");
    if (rf_trees == 0) fail(ErrorCode::config, "rf_trees must be positive");
    if (rf_max_depth == 0) fail(ErrorCode::config, "rf_max_depth must be positive");
    if (rf_min_leaf == 0) fail(ErrorCode::config, "rf_min_leaf must be positive");
}

json to_json(const Hyperparams& hp) {
    return {{"knn_k", hp.knn_k},         {"svm_lambda", hp.svm_lambda},
            {"svm_epochs", hp.svm_epochs}, {"rf_trees", hp.rf_trees},
            {"rf_max_depth", hp.rf_max_depth}, {"rf_min_leaf", hp.rf_min_leaf},
            {"rf_max_features", hp.rf_max_features}};
}

Hyperparams hyperparams_from_json(const json& j) {
    Hyperparams hp;
    hp.knn_k = j.value("knn_k", hp.knn_k);
    hp.svm_lambda = j.value("svm_lambda", hp.svm_lambda);
    hp.svm_epochs = j.value("svm_epochs", hp.svm_epochs);
    hp.rf_trees = j.value("rf_trees", hp.rf_trees);
    hp.rf_max_depth = j.value("rf_max_depth", hp.rf_max_depth);
    hp.rf_min_leaf = j.value("rf_min_leaf", hp.rf_min_leaf);
    hp.rf_max_features = j.value("rf_max_features", hp.rf_max_features);
    return hp;
}

TrainedModel train(Kind kind, const std::vector<std::vector<float>>& vectors,
                   const std::vector<std::string>& labels, const Hyperparams& hp, std::uint64_t seed,
                   const std::vector<std::string>& sample_ids) {
    hp.validate();
    if (vectors.empty()) fail(ErrorCode::training, "no training vectors");
    if (vectors.size() != labels.size()) fail(ErrorCode::training, "vector and label counts differ");
    if (!sample_ids.empty() && sample_ids.size() != vectors.size()) {
        fail(ErrorCode::training, "sample_id and vector counts differ");
    }
    const std::size_t dim = vectors.front().size();
    if (dim == 0) fail(ErrorCode::training, "zero-dimensional vectors");
    for (const auto& v : vectors) {
        if (v.size() != dim) fail(ErrorCode::training, "inconsistent vector dimensions");
    }

    TrainedModel m;
    m.kind = kind;
    m.dimension = dim;
    m.hyperparams = hp;
    m.seed = seed;
    m.label_set = labels;
    std::sort(m.label_set.begin(), m.label_set.end());
    m.label_set.erase(std::unique(m.label_set.begin(), m.label_set.end()), m.label_set.end());
    if (m.label_set.size() < 2) fail(ErrorCode::training, "training needs at least two classes");
    m.targets.reserve(labels.size());
    for (const auto& l : labels) {
        m.targets.push_back(static_cast<int>(std::lower_bound(m.label_set.begin(), m.label_set.end(), l) -
                                             m.label_set.begin()));
    }

    switch (kind) {
        case Kind::knn:
            m.vectors = vectors;
            m.sample_ids = sample_ids;
            break;
        case Kind::svm:
            train_svm(m, vectors);
            m.targets.clear();
            break;
        case Kind::rf:
            train_rf(m, vectors);
            m.targets.clear();
            break;
    }
    return m;
}

std::vector<double> class_scores(const TrainedModel& model, std::span<const float> query) {
    if (query.size() != model.dimension) {
        fail(ErrorCode::argument, "query dimension " + std::to_string(query.size()) +
                                      " does not match model dimension " + std::to_string(model.dimension));
    }
    switch (model.kind) {
        case Kind::knn: return knn_scores(model, query, nullptr);
        case Kind::svm: return svm_scores(model, query);
        case Kind::rf: return rf_scores(model, query);
    }
    return {};
}

Prediction classify(const TrainedModel& model, std::span<const float> query) {
    if (model.kind == Kind::knn) {
        if (query.size() != model.dimension) fail(ErrorCode::argument, "query dimension mismatch");
        std::size_t best = 0;
        const auto s = knn_scores(model, query, &best);
        return {model.label_set[best], s[best]};
    }
    const auto s = class_scores(model, query);
    const std::size_t best = argmax(s);
    if (model.kind == Kind::svm) return {model.label_set[best], 1.0 / (1.0 + std::exp(-s[best]))};
    return {model.label_set[best], s[best]};
}

std::vector<std::string> oob_labels(const TrainedModel& model) {
    std::vector<std::string> out;
    for (int p : model.oob_predictions) {
        if (p >= 0) out.push_back(model.label_set[static_cast<std::size_t>(p)]);
    }
    return out;
}

json to_json(const TrainedModel& m) {
    json j;
    j["format"] = kModelMagic;
    j["version"] = kModelFormatVersion;
    j["kind"] = std::string(to_string(m.kind));
    j["label_set"] = m.label_set;
    j["dimension"] = m.dimension;
    j["hyperparameters"] = to_json(m.hyperparams);
    j["seed"] = m.seed;
    switch (m.kind) {
        case Kind::knn:
            j["vectors"] = m.vectors;
            j["targets"] = m.targets;
            j["sample_ids"] = m.sample_ids;
            break;
        case Kind::svm:
            j["weights"] = m.weights;
            j["bias"] = m.bias;
            break;
        case Kind::rf: {
            json trees = json::array();
            for (const auto& t : m.trees) {
                json nodes = json::array();
                for (const auto& nd : t.nodes) {
                    if (nd.feature < 0) {
                        nodes.push_back({{"leaf", nd.distribution}});
                    } else {
                        nodes.push_back({{"f", nd.feature}, {"t", nd.threshold}, {"l", nd.left}, {"r", nd.right}});
                    }
                }
                trees.push_back(std::move(nodes));
            }
            j["trees"] = std::move(trees);
            j["oob_predictions"] = m.oob_predictions;
            break;
        }
    }
    return j;
}

TrainedModel model_from_json(const json& j) {
    try {
        if (j.value("format", std::string()) != kModelMagic) fail(ErrorCode::data, "not a model artifact");
        if (j.value("version", 0) != kModelFormatVersion) {
            fail(ErrorCode::data, "unsupported model version " + j.value("version", json()).dump());
        }
        TrainedModel m;
        m.kind = parse_kind(j.at("kind").get<std::string>());
        m.label_set = j.at("label_set").get<std::vector<std::string>>();
        m.dimension = j.at("dimension").get<std::size_t>();
        m.hyperparams = hyperparams_from_json(j.at("hyperparameters"));
        m.seed = j.at("seed").get<std::uint64_t>();
        switch (m.kind) {
            case Kind::knn:
                m.vectors = j.at("vectors").get<std::vector<std::vector<float>>>();
                m.targets = j.at("targets").get<std::vector<int>>();
                m.sample_ids = j.value("sample_ids", std::vector<std::string>{});
                break;
            case Kind::svm:
                m.weights = j.at("weights").get<std::vector<std::vector<double>>>();
                m.bias = j.at("bias").get<std::vector<double>>();
                break;
            case Kind::rf:
                for (const auto& jt : j.at("trees")) {
                    DecisionTree t;
                    for (const auto& jn : jt) {
                        TreeNode nd;
                        if (jn.contains("leaf")) {
                            nd.distribution = jn.at("leaf").get<std::vector<double>>();
                        } else {
                            nd.feature = jn.at("f").get<int>();
                            nd.threshold = jn.at("t").get<float>();
                            nd.left = jn.at("l").get<int>();
                            nd.right = jn.at("r").get<int>();
                        }
                        t.nodes.push_back(std::move(nd));
                    }
                    m.trees.push_back(std::move(t));
                }
                m.oob_predictions = j.value("oob_predictions", std::vector<int>{});
                break;
        }
        return m;
    } catch (const json::exception& e) {
        fail(ErrorCode::data, std::string("malformed model artifact: ") + e.what());
    }
}

std::string serialize_model(const TrainedModel& model) { return to_json(model).dump() + "\n"; }

TrainedModel deserialize_model(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorCode::data, std::string("malformed model artifact: ") + e.what());
    }
    return model_from_json(j);
}

}  // namespace cirgest::baselines
