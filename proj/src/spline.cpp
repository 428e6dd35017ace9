#include "causalkan/spline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "causalkan/error.hpp"

namespace causalkan {

SplineGrid::SplineGrid(double domain_min, double domain_max, int intervals, int order)
    : min_(domain_min), max_(domain_max), intervals_(intervals), order_(order) {
  if (!std::isfinite(domain_min) || !std::isfinite(domain_max) || !(domain_min < domain_max)) {
    fail(ErrorKind::config, "spline domain must satisfy min < max, got [" +
                                std::to_string(domain_min) + ", " + std::to_string(domain_max) +
                                "]");
  }
  if (intervals < 1) fail(ErrorKind::config, "spline grid needs at least one interval");
  if (order < 0 || order > kMaxOrder) {
    fail(ErrorKind::unsupported_order, "spline order must be in [0, " +
                                           std::to_string(kMaxOrder) + "], got " +
                                           std::to_string(order));
  }
  step_ = (max_ - min_) / intervals_;
  knots_.reserve(static_cast<std::size_t>(intervals_ + 2 * order_ + 1));
  for (int i = 0; i < order_; ++i) knots_.push_back(min_);
  for (int i = 0; i <= intervals_; ++i) {
    knots_.push_back(i == intervals_ ? max_ : min_ + step_ * i);
  }
  for (int i = 0; i < order_; ++i) knots_.push_back(max_);
}

double SplineGrid::clamp(double z) const {
  if (!std::isfinite(z)) fail(ErrorKind::input, "spline input is not finite");
  return std::clamp(z, min_, max_);
}

std::vector<double> SplineGrid::greville() const {
  std::vector<double> g(basis_count());
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (order_ == 0) {
      g[i] = 0.5 * (knots_[i] + knots_[i + 1]);
      continue;
    }
    double acc = 0.0;
    for (int j = 1; j <= order_; ++j) acc += knots_[i + static_cast<std::size_t>(j)];
    g[i] = acc / order_;
  }
  return g;
}

namespace {

// Cox-de Boor triangle for the order+1 basis functions of degree `degree`
// that are nonzero on knot span `span`.
void local_basis(std::span<const double> knots, std::size_t span, int degree, double z,
                 double* out) {
  std::array<double, SplineGrid::kMaxOrder + 1> left{};
  std::array<double, SplineGrid::kMaxOrder + 1> right{};
  out[0] = 1.0;
  for (int j = 1; j <= degree; ++j) {
    left[j] = z - knots[span + 1 - j];
    right[j] = knots[span + j] - z;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom != 0.0 ? out[r] / denom : 0.0;
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
}

}  // namespace

void eval_window(const SplineGrid& grid, double z, bool with_slopes, BasisWindow& out) {
  const double zc = grid.clamp(z);
  const int k = grid.order();
  const int g = grid.intervals();
  int interval = static_cast<int>(std::floor((zc - grid.domain_min()) / grid.step()));
  interval = std::clamp(interval, 0, g - 1);
  const std::size_t span = static_cast<std::size_t>(interval + k);
  const auto knots = grid.knots();

  out.first = span - static_cast<std::size_t>(k);
  out.count = k + 1;
  out.clamped = zc != z;
  local_basis(knots, span, k, zc, out.values.data());

  if (!with_slopes) return;
  std::fill(out.slopes.begin(), out.slopes.begin() + k + 1, 0.0);
  if (k == 0 || out.clamped) return;

  std::array<double, SplineGrid::kMaxOrder + 1> lower{};
  local_basis(knots, span, k - 1, zc, lower.data());
  for (int r = 0; r <= k; ++r) {
    const std::size_t i = out.first + static_cast<std::size_t>(r);
    double d = 0.0;
    if (r >= 1) {
      const double denom = knots[i + k] - knots[i];
      if (denom != 0.0) d += k * lower[r - 1] / denom;
    }
    if (r <= k - 1) {
      const double denom = knots[i + k + 1] - knots[i + 1];
      if (denom != 0.0) d -= k * lower[r] / denom;
    }
    out.slopes[r] = d;
  }
}

std::vector<double> basis_eval(const SplineGrid& grid, double z) {
  BasisWindow w;
  eval_window(grid, z, false, w);
  std::vector<double> full(grid.basis_count(), 0.0);
  for (int r = 0; r < w.count; ++r) full[w.first + r] = w.values[r];
  return full;
}

std::vector<double> basis_deriv(const SplineGrid& grid, double z) {
  if (grid.order() == 0) {
    fail(ErrorKind::unsupported_order, "basis derivative requires spline order >= 1");
  }
  BasisWindow w;
  eval_window(grid, z, true, w);
  std::vector<double> full(grid.basis_count(), 0.0);
  for (int r = 0; r < w.count; ++r) full[w.first + r] = w.slopes[r];
  return full;
}

SplinePoint spline_value_and_slope(const SplineGrid& grid, std::span<const double> coeffs,
                                   double z) {
  if (coeffs.size() != grid.basis_count()) {
    fail(ErrorKind::shape, "spline expects " + std::to_string(grid.basis_count()) +
                               " coefficients, got " + std::to_string(coeffs.size()));
  }
  BasisWindow w;
  eval_window(grid, z, grid.order() > 0, w);
  SplinePoint p{0.0, 0.0};
  for (int r = 0; r < w.count; ++r) {
    p.value += coeffs[w.first + r] * w.values[r];
    if (grid.order() > 0) p.slope += coeffs[w.first + r] * w.slopes[r];
  }
  return p;
}

}  // namespace causalkan
