#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "causalkan/causal.hpp"
#include "causalkan/data.hpp"
#include "causalkan/hp.hpp"

namespace causalkan {

struct TrainConfig {
  double learning_rate = 0.01;
  int max_epochs = 2000;
  int patience = 100;
  std::size_t batch_size = 0;  // 0 means full batch
  RegularizerWeights reg;
  double lambda_ps = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& doc);
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long long step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

/// One bias-corrected Adam update in place. Moments are sized on first use.
/// Throws numeric error if any gradient is NaN.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr);

struct FitReport {
  std::vector<double> train_loss_curve;  // training objective, standardized units
  std::vector<double> val_loss_curve;    // predictive val loss per epoch
  int best_epoch = 0;                    // 0 means the initial parameters
  double predictive_val_loss = 0.0;      // factual val MSE at best_epoch

  nlohmann::json to_json() const;
};

/// Factual outcome MSE in outcome units (the predictive loss used for
/// early stopping, ranking and every gate).
double predictive_loss(const CausalModel& m, const Dataset& data);

/// Minimizes the architecture loss plus regularizer on `split.train` with
/// Adam, early-stopping on `split.val`, and restores the best epoch.
FitReport fit(CausalModel& m, const SplitDataset& split, const TrainConfig& cfg);

struct ComplexityScore {
  int score = 0;
  bool flagged = false;  // G or k outside {1,3,5}, scored by nearest value
};

ComplexityScore complexity_score(const HpPoint& hp);

struct LeaderboardEntry {
  std::size_t index = 0;
  HpPoint hp;
  ComplexityScore complexity;
  double predictive_val_loss = 0.0;
  int best_epoch = 0;
  bool diverged = false;
  std::string error;

  nlohmann::json to_json() const;
};

struct SearchResult {
  CausalModel model;
  std::size_t chosen = 0;  // index into the search space
  FitReport report;
  std::vector<LeaderboardEntry> leaderboard;  // sorted by predictive_val_loss

  nlohmann::json leaderboard_json() const;
};

struct SearchOptions {
  Architecture architecture = Architecture::S;
  TreatmentSpace treatment;
  double tolerance = 0.02;  // relative band around the best val loss
  std::uint64_t seed = 0;   // model initialization
};

/// Each point is built, has lambda_edge taken from the point, and is fit.
/// Among points within `tolerance` of the best predictive val loss the one
/// with the lowest complexity score wins. Points are trained concurrently;
/// the result does not depend on the thread count.
SearchResult hp_search(std::span<const HpPoint> space, const SplitDataset& split,
                       const TrainConfig& cfg, const SearchOptions& opt);

struct GateDecision {
  enum class Verdict { accept, warn };
  Verdict verdict = Verdict::accept;
  std::string note;
};

GateDecision arch_gate(double kan_val_loss, std::optional<double> baseline_loss, double budget);

}  // namespace causalkan
