#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "causalkan/causal.hpp"
#include "causalkan/matrix.hpp"

namespace causalkan {

/// delta(i, j) is covariate j's isolated contribution for row i.
struct ContributionsMatrix {
  Matrix delta;
  std::vector<double> column_means;
  double bias = 0.0;
  std::vector<std::string> labels;
};

/// Contributions of a single-output additive network in its own units.
ContributionsMatrix contributions(const KanNetwork& net, const Matrix& x);

/// Outcome-unit contributions to mu_arm. For S models the treatment column is
/// appended as the last column, evaluated at t = arm.
ContributionsMatrix head_contributions(const CausalModel& m, const Matrix& x, int arm);

/// Contributions to the CATE: f_j^1 - f_j^0 for T models; for S models every
/// covariate column is zero and the bias carries the treatment effect.
ContributionsMatrix cate_contributions(const CausalModel& m, const Matrix& x);

std::vector<double> prp_deviations(const ContributionsMatrix& cm, std::size_t i);

enum class CurveKind { pdp, ice, effect_curve };

struct CurveData {
  CurveKind kind = CurveKind::pdp;
  std::size_t feature = 0;
  std::optional<std::size_t> individual;  // ice only
  std::vector<double> grid;
  std::vector<double> values;
  std::string label;
  bool extrapolated = false;  // grid leaves the training range

  nlohmann::json to_json() const;
  static CurveData from_json(const nlohmann::json& doc);
  friend bool operator==(const CurveData&, const CurveData&) = default;
};

using Predictor = std::function<std::vector<double>(const Matrix&)>;

Predictor cate_predictor(const CausalModel& m);
Predictor mu_predictor(const CausalModel& m, double t);

/// Mean prediction over the background rows with feature j set to each grid
/// value, centered to zero mean over the grid.
CurveData pdp(const Predictor& f, std::size_t feature, std::span<const double> grid,
              const Matrix& background,
              std::optional<std::pair<double, double>> train_range = std::nullopt);

CurveData ice(const Predictor& f, std::size_t feature, std::span<const double> grid,
              const Matrix& x, std::size_t individual,
              std::optional<std::pair<double, double>> train_range = std::nullopt);

/// Treatment edge of an additive S model over `grid`, not centered.
CurveData effect_curve_data(const CausalModel& m, std::span<const double> grid);

std::vector<double> linear_grid(double lo, double hi, std::size_t n);

struct RadarSpec {
  std::string title;
  std::vector<std::string> axes;
  std::vector<double> values;

  nlohmann::json to_json() const;
  static RadarSpec from_json(const nlohmann::json& doc);
  friend bool operator==(const RadarSpec&, const RadarSpec&) = default;
};

using Plot = std::variant<CurveData, RadarSpec>;

/// Tick positions covering [lo, hi] with a 1/2/5 step.
std::vector<double> nice_ticks(double lo, double hi, int target = 5);

/// Fixed-layout SVG of every plot. Render error on an empty set or on a
/// non-finite value.
std::string render_svg(std::span<const Plot> plots, const std::string& title = "");

nlohmann::json emit_json(std::span<const Plot> plots);
std::vector<Plot> plots_from_json(const nlohmann::json& doc);

}  // namespace causalkan
