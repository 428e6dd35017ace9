#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "causalkan/causal.hpp"
#include "causalkan/data.hpp"
#include "causalkan/metrics.hpp"
#include "causalkan/simplify.hpp"
#include "causalkan/train.hpp"

namespace causalkan {

inline constexpr const char* kVersion = "0.1.0";

/// Synthetic data source. `kind` is "homogeneous" or "heterogeneous"; the
/// heterogeneous default plants tau(x) = x1^2 - 0.5 x3.
struct GeneratorSpec {
  std::string kind = "homogeneous";
  std::size_t n = 2000;
  std::size_t d = 10;
  double tau = 4.0;
  double noise_sd = 1.0;
  std::uint64_t seed = 0;
  EffectSpec effects;

  static EffectSpec default_effects();
  Dataset generate() const;
  nlohmann::json to_json() const;
  static GeneratorSpec from_json(const nlohmann::json& doc);
};

struct DataSource {
  std::optional<std::filesystem::path> csv;
  CsvSchema schema;
  std::optional<GeneratorSpec> generator;

  Dataset load() const;
  nlohmann::json to_json() const;
  static DataSource from_json(const nlohmann::json& doc);
};

struct PipelineConfig {
  Architecture architecture = Architecture::T;
  TreatmentSpace treatment;
  std::vector<HpPoint> hp_grid{HpPoint{}};
  TrainConfig train;
  SimplifyBudgets simplify;
  double search_tolerance = 0.02;
  double arch_budget = 0.1;  // Lambda_arch
  std::optional<double> baseline_loss;
  DataSource data;
  bool skip_prune = false;
  bool skip_symbolify = false;
  bool plots = true;
  bool strict = false;  // abort when the architecture gate warns
  std::string output_dir;  // empty: $CAUSALKAN_OUT, else ./causalkan_out
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  /// Config error naming the offending field path on any problem,
  /// including unknown keys.
  static PipelineConfig from_json(const nlohmann::json& doc);
};

/// Applies "a.b.c=value" to a config document. The value is read as JSON
/// when it parses, otherwise as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

std::filesystem::path resolve_output_dir(const PipelineConfig& cfg);

/// mse is the factual test MSE; pehe/ate_error need ground truth and a
/// discrete treatment.
EvalReport evaluate_model(const CausalModel& m, const Dataset& data);
EvalReport evaluate_expressions(const ModelExpressions& e, const TreatmentSpace& ts, const Dataset& data);

struct StageMetrics {
  std::string stage;
  double val_loss = 0.0;
  EvalReport test;
  std::optional<EvalReport> full;
  std::string note;
  nlohmann::json to_json() const;
};

struct PipelineResult {
  PipelineConfig config;
  SplitDataset split;
  SearchResult search;
  GateDecision arch;
  CausalModel original;
  std::optional<CausalModel> pruned;
  std::optional<CausalModel> symbolic;  // after the symbolification gate
  const CausalModel& final_model() const;
  std::vector<EdgeFitInfo> edge_fits;
  std::optional<ModelExpressions> composed;
  std::optional<ModelExpressions> simplified;
  std::optional<ModelExpressions> truncated;
  PipelineLog log;
  std::vector<StageMetrics> stages;
  std::string started_at;
  std::string finished_at;

  /// The run report; timestamps live under "timestamps" only.
  nlohmann::json report() const;
};

/// Report without the timestamps field, for reproducibility comparisons.
nlohmann::json canonical_report(const nlohmann::json& report);

PipelineResult run_pipeline(const PipelineConfig& cfg);

/// Writes run_report.json, pipeline_log.jsonl, model.json, formula.txt,
/// formula.json and plots/ into `dir`. Returns the written paths.
std::vector<std::filesystem::path> write_outputs(const PipelineResult& r, const std::filesystem::path& dir);

/// Plot files for an additive model (S or T without hidden layers), written
/// directly into `dir`. Returns the written paths, or nothing for
/// non-additive models.
std::vector<std::filesystem::path> write_plots(const CausalModel& m, const Dataset& data,
                                               const std::filesystem::path& dir);

bool model_is_additive(const CausalModel& m);

std::string read_text(const std::filesystem::path& p);
void write_text(const std::filesystem::path& p, const std::string& text);

}  // namespace causalkan
