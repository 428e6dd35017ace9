#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace causalkan {

/// Univariate atoms used to replace trained edge functions. Declaration order
/// is the complexity order: polynomials first. `constant` is not part of the
/// search dictionary; it stands in for edges that are flat on the data.
enum class AtomId {
  identity,
  poly2,
  poly3,
  poly4,
  sqrt,
  exp,
  neg_exp,
  log,
  sin,
  cos,
  tanh,
  sigmoid,
  tan,
  constant,
};

/// Search dictionary in complexity order (excludes `constant`).
std::span<const AtomId> atom_dictionary() noexcept;

int complexity_rank(AtomId id) noexcept;
std::string_view atom_name(AtomId id) noexcept;
std::optional<AtomId> atom_from_name(std::string_view name) noexcept;

/// identity / poly2..poly4 are pure powers u^n; constant has degree 0.
bool is_polynomial(AtomId id) noexcept;
int polynomial_degree(AtomId id) noexcept;

/// Bare atom f(u). No domain check; see atom_valid_at.
double atom_value(AtomId id, double u) noexcept;
double atom_slope(AtomId id, double u) noexcept;

/// Validity of f at u (log needs u > 0, sqrt u >= 0, tan away from poles,
/// exp within overflow range).
bool atom_valid_at(AtomId id, double u) noexcept;
/// Validity over the closed interval [lo, hi].
bool atom_valid_on(AtomId id, double lo, double hi) noexcept;

/// A fitted replacement for one edge function.
///
/// Polynomial atoms hold monomial coefficients `poly` (poly[j] multiplies z^j,
/// size degree+1). Other atoms evaluate c * f(a*z + b) + d.
struct AtomFit {
  AtomId atom = AtomId::constant;
  double a = 1.0;
  double b = 0.0;
  double c = 1.0;
  double d = 0.0;
  std::vector<double> poly;
  double r2 = 0.0;

  double value(double z) const noexcept;
  double slope(double z) const noexcept;
  bool valid_at(double z) const noexcept;

  friend bool operator==(const AtomFit&, const AtomFit&) = default;
};

}  // namespace causalkan
