#pragma once

// Dataset-level stages shared by the command-line tool and the tests:
// simulate, extract, split, libraries, baselines, LLM classification and
// reporting. Every stage persists its artifacts so later stages can resume.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cirgest/baselines.hpp"
#include "cirgest/config.hpp"
#include "cirgest/dataset.hpp"
#include "cirgest/eval.hpp"
#include "cirgest/image.hpp"

namespace cirgest::pipeline {

/// Runs fn(0..n-1) on `jobs` threads; the first exception is rethrown after
/// all workers stop.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

std::string sample_id(const std::string& label, std::size_t index);
std::uint64_t trajectory_seed(std::uint64_t sim_seed, const std::string& label, std::size_t index);
std::uint64_t noise_seed(std::uint64_t sim_seed, const std::string& label, std::size_t index);

/// Looping transmit, channel and noise for one sample; `record` receives
/// the manifest fields.
signal::PassbandSignal simulate_recording(const config::RunConfig& cfg, const std::string& label,
                                          std::size_t index, dataset::SampleRecord* record = nullptr);

/// Receive chain and rendering for one recording.
image::GrayImage extract_image(const config::RunConfig& cfg, const signal::PassbandSignal& recording);

/// Writes audio/<id>.wav and manifest.jsonl under out_dir.
dataset::Manifest simulate_dataset(const config::RunConfig& cfg, const std::filesystem::path& out_dir,
                                   std::size_t jobs);

/// Reads each record's audio (relative to in_dir) and writes images/<id>.png
/// and manifest.jsonl under out_dir.
dataset::Manifest extract_dataset(const dataset::Manifest& manifest, const std::filesystem::path& in_dir,
                                  const config::RunConfig& cfg, const std::filesystem::path& out_dir,
                                  std::size_t jobs);

std::map<std::string, dataset::FeatureVector> load_features(const dataset::Manifest& manifest,
                                                            const std::filesystem::path& base_dir,
                                                            std::size_t jobs);

/// Train split vectors of one category, in manifest order.
struct TrainingSet {
    std::vector<std::vector<float>> vectors;
    std::vector<std::string> labels;
    std::vector<std::string> sample_ids;
};
TrainingSet training_set(const dataset::Manifest& manifest,
                         const std::map<std::string, dataset::FeatureVector>& features, Category category);

/// Classifies the test split of `category` with a trained model.
std::vector<eval::ResultRecord> evaluate_model(const baselines::TrainedModel& model, const std::string& model_name,
                                               const dataset::Manifest& manifest,
                                               const std::map<std::string, dataset::FeatureVector>& features,
                                               Category category);

/// Retrieval-augmented prompts for the test split of the library's category.
std::vector<eval::ResultRecord> classify_with_llm(const dataset::Manifest& manifest,
                                                  const std::filesystem::path& base_dir,
                                                  const std::map<std::string, dataset::FeatureVector>& features,
                                                  const dataset::VectorLibrary& lib,
                                                  const llm::ProviderConfig& provider_cfg);

std::map<std::string, std::vector<std::string>> category_labels();

eval::ReportMeta report_meta(const config::RunConfig& cfg);

/// Writes the model JSON with the run's config hash added.
void save_model(const std::filesystem::path& path, const baselines::TrainedModel& model,
                const std::string& config_hash);
baselines::TrainedModel load_model(const std::filesystem::path& path);

struct PipelineOptions {
    std::size_t jobs = 1;
    std::vector<Category> categories{kCategories.begin(), kCategories.end()};
    std::vector<baselines::Kind> baselines{baselines::Kind::knn, baselines::Kind::svm, baselines::Kind::rf};
    bool run_llm = true;
};

/// simulate -> extract -> split -> libraries -> baselines -> LLM -> report.
std::vector<eval::ReportEntry> run_pipeline(const config::RunConfig& cfg, const std::filesystem::path& out_dir,
                                            const PipelineOptions& options);

}  // namespace cirgest::pipeline
