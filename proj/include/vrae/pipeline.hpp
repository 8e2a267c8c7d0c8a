#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vrae/dataset.hpp"
#include "vrae/model.hpp"

// Stage orchestration. Every stage reads its inputs from, and writes its
// artifacts and a `<stage>.manifest.json` into, the output directory.
namespace vrae::pipeline {

struct GenerateSettings {
  int normal_simulations = 14;
  std::array<int, 3> zone_simulations = {4, 4, 3};
  /// Ice masses in kg, cycled over the simulations of each zone.
  std::vector<double> masses = {0.6, 0.8, 1.0, 1.2};
  Eigen::Index steps = 10000;
  data::SynthConfig synth;
};

struct PreprocessSettings {
  std::vector<std::string> features = data::blade_acceleration_features();
  Eigen::Index window_length = 200;
  Eigen::Index stride = 200;
  double train_fraction = 0.7;
  /// Classes to keep; empty keeps all.
  std::vector<data::ClassLabel> classes;
  /// Windows per class after subsampling: 0 keeps every window, -1 uses the
  /// smallest class size.
  long balance_per_class = 0;
};

struct ProjectionSettings {
  std::string method = "pca";  // pca | kernel_pca | tsne | spectral
  double gamma = 0.0;          // kernel_pca; 0 picks the median heuristic
  double perplexity = 30.0;    // tsne
  int iterations = 1000;       // tsne
  double learning_rate = 200.0;
  Eigen::Index neighbors = 10;  // spectral
};

struct ClusteringSettings {
  std::vector<std::string> methods = {"kmeans", "hierarchical"};
  int k = 0;  // 0 uses the number of classes present
  int restarts = 10;
  std::string linkage = "ward";
  double eps = 0.0;  // dbscan; 0 picks the median min_pts-nearest distance
  int min_pts = 5;
};

struct PipelineConfig {
  std::string preset = "two-class";
  std::string source = "synthetic";  // synthetic | csv
  std::filesystem::path data_dir;    // csv input; empty means <out>/data
  GenerateSettings generate;
  PreprocessSettings preprocess;
  model::VraeConfig model;
  ProjectionSettings projection;
  ClusteringSettings clustering;
  std::filesystem::path out = "run";
  std::uint64_t seed = 0;

  /// Assigns one `key = value` setting. Throws InvalidArgument on an unknown
  /// key or malformed value.
  void set(std::string_view key, std::string_view value);
  /// Every setting as (key, value) text in a fixed order; set() accepts each.
  std::vector<std::pair<std::string, std::string>> entries() const;
  std::string to_text() const;
  void validate() const;

  std::filesystem::path input_dir() const { return data_dir.empty() ? out / "data" : data_dir; }
};

std::vector<std::string> preset_names();
/// Throws InvalidArgument for an unknown name.
PipelineConfig preset(std::string_view name);

/// Applies `key = value` lines to `base`. Blank lines and lines starting
/// with '#' are skipped. A `preset` line must come first and resets `base`.
PipelineConfig parse_config(std::string_view text, PipelineConfig base);
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base);

/// Independent seed for one stage, derived from the global seed.
std::uint64_t stage_seed(std::uint64_t seed, std::string_view stage);

struct Layout {
  std::filesystem::path out;

  std::filesystem::path train() const { return out / "train.json"; }
  std::filesystem::path test() const { return out / "test.json"; }
  std::filesystem::path checkpoint() const { return out / "checkpoint.json"; }
  std::filesystem::path latents() const { return out / "latents.json"; }
  std::filesystem::path embedding() const { return out / "embedding.json"; }
  std::filesystem::path assignment(std::string_view method) const {
    return out / ("clusters_" + std::string(method) + ".json");
  }
  std::filesystem::path score_report() const { return out / "score_report.json"; }
  std::filesystem::path plot() const { return out / "embedding.svg"; }
  std::filesystem::path manifest(std::string_view stage) const {
    return out / (std::string(stage) + ".manifest.json");
  }
};

struct StageResult {
  std::vector<std::filesystem::path> outputs;
  std::string summary;
};

StageResult run_generate(const PipelineConfig& config);
StageResult run_preprocess(const PipelineConfig& config);
StageResult run_train(const PipelineConfig& config);
StageResult run_encode(const PipelineConfig& config);
StageResult run_project(const PipelineConfig& config);
StageResult run_cluster(const PipelineConfig& config);
StageResult run_score(const PipelineConfig& config);
StageResult run_plot(const PipelineConfig& config);

std::vector<std::string> stage_names();
/// Dispatches by name. Throws InvalidArgument for an unknown stage.
StageResult run_stage(std::string_view stage, const PipelineConfig& config);

}  // namespace vrae::pipeline
