#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "causalkan/atoms.hpp"
#include "causalkan/causal.hpp"
#include "causalkan/expr.hpp"
#include "causalkan/train.hpp"

namespace causalkan {

enum class BudgetMode { absolute, relative };

struct SimplifyBudgets {
  double gamma_prune = 0.05;  // edge score threshold
  double gamma_r2 = 0.9;      // early-accept R^2 for atom fitting
  double budget_prune = 0.1;  // allowed val loss increase from pruning
  double budget_symb = 0.5;   // allowed val loss increase from symbolification
  int truncate_decimals = 2;
  BudgetMode mode = BudgetMode::absolute;
  int retrain_epochs = 50;  // brief retraining after pruning; 0 disables

  void validate() const;
  nlohmann::json to_json() const;
  static SimplifyBudgets from_json(const nlohmann::json& doc);
};

/// Floating-point slack in the gates, relative to max(1, |L_ref|), so that
/// an exactly lossless step is not rejected over rounding noise.
inline constexpr double kGateSlack = 1e-12;

bool gate_accepts(double l_ref, double l_new, double budget, BudgetMode mode);

struct LogRecord {
  std::string stage;
  std::string action;
  double val_before = 0.0;
  double val_after = 0.0;
  bool accepted = false;
  std::string detail;

  nlohmann::json to_json() const;
};

struct PipelineLog {
  std::vector<LogRecord> records;

  void add(LogRecord r) { records.push_back(std::move(r)); }
  /// One JSON object per line.
  std::string to_jsonl() const;
};

/// Least-squares fit of c * f(a z + b) + d (or an exact polynomial for the
/// polynomial atoms). Returns nullopt when no (a, b) keeps f inside its
/// domain over `guard` joined with the sample range.
std::optional<AtomFit> fit_atom(std::span<const double> z, std::span<const double> y, AtomId atom,
                                std::optional<std::pair<double, double>> guard = std::nullopt);

struct AtomSearch {
  AtomFit fit;
  std::vector<AtomId> tried;  // in evaluation order
  bool early_exit = false;
};

/// Walks the dictionary in complexity order, stopping at the first atom with
/// r2 >= gamma_r2, else keeping the best fit (ties within 1e-9 go to the
/// simpler atom). Flat targets become a constant.
AtomSearch search_atoms(std::span<const double> z, std::span<const double> y, double gamma_r2,
                        std::optional<std::pair<double, double>> guard = std::nullopt);

struct EdgeFitInfo {
  std::size_t subnet = 0;
  std::size_t layer = 0;
  std::size_t out = 0;
  std::size_t in = 0;
  AtomSearch search;
};

struct GateResult {
  CausalModel model;  // the retained model
  LogRecord record;
  double val_loss = 0.0;  // predictive val loss of the retained model
  std::vector<EdgeFitInfo> edges;  // symbolify only
};

/// Prunes every subnet with scores from the training split, retrains briefly
/// if anything was removed, and keeps the result iff the val loss stays
/// within budget_prune of `l_ref`.
GateResult prune_gate(const CausalModel& m, const SplitDataset& split, const SimplifyBudgets& b,
                      double l_ref, const TrainConfig& retrain);

/// Replaces every active spline edge by its best atom (samples from the
/// training split), then keeps the symbolic model iff the val loss stays
/// within budget_symb of `l_ref`; otherwise rolls back.
GateResult symbolify(const CausalModel& m, const Dataset& train, const Dataset& val,
                     const SimplifyBudgets& b, double l_ref);

/// Closed form of one fully symbolic network; `inputs` are expressions for
/// the raw (unstandardized) inputs.
std::vector<Expr> network_expression(const KanNetwork& net, const std::vector<Expr>& inputs);

/// Potential outcomes per arm and the CATE (arm 1 minus arm 0) in outcome
/// units, over variables x1..xD. For continuous treatment `mu` holds one
/// expression in (x, t) and `cate` is mu(x, t) - mu(x, t0).
struct ModelExpressions {
  std::vector<Expr> mu;
  Expr cate;
  std::size_t input_dim = 0;
  bool treatment_var = false;  // variable index input_dim is t

  std::vector<std::string> names() const { return default_var_names(input_dim, treatment_var); }
  nlohmann::json to_json() const;
  static ModelExpressions from_json(const nlohmann::json& doc);
};

/// Structure error if any active edge is not symbolic.
ModelExpressions compose_expression(const CausalModel& m);
ModelExpressions simplify_expressions(const ModelExpressions& e);
ModelExpressions truncate_expressions(const ModelExpressions& e, int decimals);

/// Evaluates expressions on a batch (t is used only for continuous S).
std::vector<double> eval_batch(const Expr& e, const Matrix& x, std::span<const double> t = {});

}  // namespace causalkan
