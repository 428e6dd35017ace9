#include "causalkan/metrics.hpp"

#include <cmath>
#include <string>

#include "causalkan/error.hpp"

namespace causalkan {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.empty()) fail(ErrorKind::input, std::string(what) + ": empty input");
  if (a.size() != b.size()) {
    fail(ErrorKind::input, std::string(what) + ": length mismatch (" + std::to_string(a.size()) +
                               " vs " + std::to_string(b.size()) + ")");
  }
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double pehe(std::span<const double> tau_hat, std::span<const double> tau_true) {
  check_pair(tau_hat, tau_true, "pehe");
  return std::sqrt(mse(tau_hat, tau_true));
}

double ate_error(std::span<const double> tau_hat, std::span<const double> tau_true) {
  check_pair(tau_hat, tau_true, "ate_error");
  return std::abs(mean_of(tau_hat) - mean_of(tau_true));
}

double mse(std::span<const double> pred, std::span<const double> target) {
  check_pair(pred, target, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    s += e * e;
  }
  return s / static_cast<double>(pred.size());
}

double r_squared(std::span<const double> pred, std::span<const double> target) {
  check_pair(pred, target, "r_squared");
  const double m = mean_of(target);
  double sst = 0.0;
  double sse = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    sst += (target[i] - m) * (target[i] - m);
    sse += (pred[i] - target[i]) * (pred[i] - target[i]);
  }
  if (sst / static_cast<double>(target.size()) <= 1e-12) {
    fail(ErrorKind::degenerate_target, "r_squared: target variance is zero");
  }
  return 1.0 - sse / sst;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j{{"mse", mse}, {"n", n}};
  if (pehe) j["pehe_root"] = *pehe;
  if (ate_error) j["ate_error"] = *ate_error;
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& doc) {
  EvalReport r;
  r.mse = doc.at("mse").get<double>();
  r.n = doc.at("n").get<std::size_t>();
  if (doc.contains("pehe_root")) r.pehe = doc.at("pehe_root").get<double>();
  if (doc.contains("ate_error")) r.ate_error = doc.at("ate_error").get<double>();
  return r;
}

}  // namespace causalkan
