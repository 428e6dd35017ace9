#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include <json.hpp>

namespace causalkan {

/// Root PEHE: sqrt(mean((tau_hat - tau)^2)).
double pehe(std::span<const double> tau_hat, std::span<const double> tau_true);
/// |mean(tau_hat) - mean(tau_true)|.
double ate_error(std::span<const double> tau_hat, std::span<const double> tau_true);
double mse(std::span<const double> pred, std::span<const double> target);
/// 1 - SSE/SST. Throws degenerate_target when the target is constant.
double r_squared(std::span<const double> pred, std::span<const double> target);

struct EvalReport {
  double mse = 0.0;
  std::optional<double> pehe;  // root form
  std::optional<double> ate_error;
  std::size_t n = 0;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& doc);
};

}  // namespace causalkan
