#include "causalkan/atoms.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace causalkan {

namespace {

constexpr std::array kDictionary{
    AtomId::identity, AtomId::poly2, AtomId::poly3, AtomId::poly4, AtomId::sqrt,
    AtomId::exp,      AtomId::neg_exp, AtomId::log, AtomId::sin,   AtomId::cos,
    AtomId::tanh,     AtomId::sigmoid, AtomId::tan,
};

constexpr double kExpLimit = 50.0;
constexpr double kPoleMargin = 0.05;

// Index of the tan branch containing u: branch n spans (n*pi - pi/2, n*pi + pi/2).
double tan_branch(double u) { return std::floor((u + std::numbers::pi / 2) / std::numbers::pi); }

}  // namespace

std::span<const AtomId> atom_dictionary() noexcept { return kDictionary; }

int complexity_rank(AtomId id) noexcept {
  return id == AtomId::constant ? -1 : static_cast<int>(id);
}

std::string_view atom_name(AtomId id) noexcept {
  switch (id) {
    case AtomId::identity: return "identity";
    case AtomId::poly2: return "poly2";
    case AtomId::poly3: return "poly3";
    case AtomId::poly4: return "poly4";
    case AtomId::sqrt: return "sqrt";
    case AtomId::exp: return "exp";
    case AtomId::neg_exp: return "neg_exp";
    case AtomId::log: return "log";
    case AtomId::sin: return "sin";
    case AtomId::cos: return "cos";
    case AtomId::tanh: return "tanh";
    case AtomId::sigmoid: return "sigmoid";
    case AtomId::tan: return "tan";
    case AtomId::constant: return "constant";
  }
  return "?";
}

std::optional<AtomId> atom_from_name(std::string_view name) noexcept {
  for (AtomId id : kDictionary) {
    if (atom_name(id) == name) return id;
  }
  if (name == "constant") return AtomId::constant;
  return std::nullopt;
}

bool is_polynomial(AtomId id) noexcept { return polynomial_degree(id) >= 0; }

int polynomial_degree(AtomId id) noexcept {
  switch (id) {
    case AtomId::constant: return 0;
    case AtomId::identity: return 1;
    case AtomId::poly2: return 2;
    case AtomId::poly3: return 3;
    case AtomId::poly4: return 4;
    default: return -1;
  }
}

double atom_value(AtomId id, double u) noexcept {
  switch (id) {
    case AtomId::constant: return 1.0;
    case AtomId::identity: return u;
    case AtomId::poly2: return u * u;
    case AtomId::poly3: return u * u * u;
    case AtomId::poly4: return (u * u) * (u * u);
    case AtomId::sqrt: return std::sqrt(u);
    case AtomId::exp: return std::exp(u);
    case AtomId::neg_exp: return std::exp(-u);
    case AtomId::log: return std::log(u);
    case AtomId::sin: return std::sin(u);
    case AtomId::cos: return std::cos(u);
    case AtomId::tanh: return std::tanh(u);
    case AtomId::sigmoid: return 1.0 / (1.0 + std::exp(-u));
    case AtomId::tan: return std::tan(u);
  }
  return 0.0;
}

double atom_slope(AtomId id, double u) noexcept {
  switch (id) {
    case AtomId::constant: return 0.0;
    case AtomId::identity: return 1.0;
    case AtomId::poly2: return 2.0 * u;
    case AtomId::poly3: return 3.0 * u * u;
    case AtomId::poly4: return 4.0 * u * u * u;
    case AtomId::sqrt: return u > 0.0 ? 0.5 / std::sqrt(u) : 0.0;
    case AtomId::exp: return std::exp(u);
    case AtomId::neg_exp: return -std::exp(-u);
    case AtomId::log: return 1.0 / u;
    case AtomId::sin: return std::cos(u);
    case AtomId::cos: return -std::sin(u);
    case AtomId::tanh: {
      const double t = std::tanh(u);
      return 1.0 - t * t;
    }
    case AtomId::sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-u));
      return s * (1.0 - s);
    }
    case AtomId::tan: {
      const double c = std::cos(u);
      return 1.0 / (c * c);
    }
  }
  return 0.0;
}

bool atom_valid_at(AtomId id, double u) noexcept {
  if (!std::isfinite(u)) return false;
  switch (id) {
    case AtomId::sqrt: return u >= 0.0;
    case AtomId::log: return u > 0.0;
    case AtomId::exp: return u <= kExpLimit;
    case AtomId::neg_exp: return u >= -kExpLimit;
    case AtomId::tan: return std::abs(std::cos(u)) > std::sin(kPoleMargin);
    default: return true;
  }
}

bool atom_valid_on(AtomId id, double lo, double hi) noexcept {
  if (lo > hi) std::swap(lo, hi);
  if (!atom_valid_at(id, lo) || !atom_valid_at(id, hi)) return false;
  if (id == AtomId::tan) return tan_branch(lo) == tan_branch(hi);
  return true;
}

double AtomFit::value(double z) const noexcept {
  if (is_polynomial(atom)) {
    double acc = 0.0;
    for (std::size_t j = poly.size(); j-- > 0;) acc = acc * z + poly[j];
    return acc;
  }
  return c * atom_value(atom, a * z + b) + d;
}

double AtomFit::slope(double z) const noexcept {
  if (is_polynomial(atom)) {
    double acc = 0.0;
    for (std::size_t j = poly.size(); j-- > 1;) acc = acc * z + static_cast<double>(j) * poly[j];
    return acc;
  }
  return c * a * atom_slope(atom, a * z + b);
}

bool AtomFit::valid_at(double z) const noexcept {
  if (is_polynomial(atom)) return std::isfinite(z);
  return atom_valid_at(atom, a * z + b);
}

}  // namespace causalkan
