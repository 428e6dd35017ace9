#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace causalkan {

/// Clamped uniform B-spline basis on [domain_min, domain_max].
///
/// The knot vector repeats each end point k+1 times around G-1 equally spaced
/// interior knots, giving G + 2k + 1 knots and G + k basis functions. Inputs
/// outside the domain are clamped to the nearest end point, so the spline is
/// held constant (with zero slope) beyond the grid.
class SplineGrid {
 public:
  static constexpr int kMaxOrder = 7;

  SplineGrid(double domain_min, double domain_max, int intervals, int order);

  double domain_min() const noexcept { return min_; }
  double domain_max() const noexcept { return max_; }
  int intervals() const noexcept { return intervals_; }
  int order() const noexcept { return order_; }
  std::size_t basis_count() const noexcept {
    return static_cast<std::size_t>(intervals_ + order_);
  }
  std::span<const double> knots() const noexcept { return knots_; }

  /// Clamp z to the domain. Throws input error for non-finite z.
  double clamp(double z) const;
  bool contains(double z) const noexcept { return z >= min_ && z <= max_; }

  /// Greville abscissae: coefficients equal to these reproduce the identity.
  std::vector<double> greville() const;

  double step() const noexcept { return step_; }

  friend bool operator==(const SplineGrid& a, const SplineGrid& b) noexcept {
    return a.min_ == b.min_ && a.max_ == b.max_ && a.intervals_ == b.intervals_ &&
           a.order_ == b.order_;
  }

 private:
  double min_;
  double max_;
  int intervals_;
  int order_;
  double step_;
  std::vector<double> knots_;
};

/// The (at most k+1) nonzero basis values at one point, starting at `first`.
struct BasisWindow {
  std::size_t first = 0;
  int count = 0;
  std::array<double, SplineGrid::kMaxOrder + 1> values{};
  std::array<double, SplineGrid::kMaxOrder + 1> slopes{};
  bool clamped = false;
};

/// Fills the local basis window at z (clamped). Slopes are computed only when
/// `with_slopes` is set; they are zero when z lies outside the domain.
void eval_window(const SplineGrid& grid, double z, bool with_slopes, BasisWindow& out);

std::vector<double> basis_eval(const SplineGrid& grid, double z);
std::vector<double> basis_deriv(const SplineGrid& grid, double z);

struct SplinePoint {
  double value;
  double slope;
};

SplinePoint spline_value_and_slope(const SplineGrid& grid, std::span<const double> coeffs,
                                   double z);

}  // namespace causalkan
