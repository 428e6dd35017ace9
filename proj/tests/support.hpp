#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <doctest.h>

#include "causalkan/error.hpp"
#include "causalkan/kan.hpp"
#include "causalkan/matrix.hpp"

#define CHECK_KIND(expr, expected_kind)                                  \
  do {                                                                   \
    bool thrown_ = false;                                                \
    try {                                                                \
      (void)(expr);                                                      \
    } catch (const causalkan::Error& e_) {                               \
      thrown_ = true;                                                    \
      CHECK_MESSAGE(e_.kind() == (expected_kind), std::string(e_.what()));          \
    }                                                                    \
    CHECK_MESSAGE(thrown_, "expected an error from " #expr);             \
  } while (0)

namespace test {

inline causalkan::NetworkSpec spec_for(std::vector<std::size_t> widths, int g = 5, int k = 3,
                                       bool product = false) {
  causalkan::NetworkSpec s;
  s.widths = std::move(widths);
  s.grid_size = g;
  s.order = k;
  s.input_domains.assign(s.widths.front(), {-2.0, 2.0});
  s.input_standardization.assign(s.widths.front(), {});
  s.product_nodes = product;
  return s;
}

/// A network with all parameters drawn at a visible scale, so that the
/// spline terms matter in gradient checks.
inline causalkan::KanNetwork random_network(std::vector<std::size_t> widths, std::uint64_t seed, int g = 5,
                                            int k = 3, bool product = false) {
  auto net = causalkan::make_network(spec_for(std::move(widths), g, k, product), seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> z(0.0, 0.5);
  auto p = net.parameters();
  for (auto& v : p) v = z(rng);
  net.set_parameters(p);
  return net;
}

inline causalkan::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                                       double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, sd);
  causalkan::Matrix m(rows, cols);
  for (auto& v : m.data()) v = z(rng);
  return m;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = z(rng);
  return v;
}

inline bool close_rel(double a, double b, double rel, double abs_floor) {
  return std::abs(a - b) <= std::max(abs_floor, rel * std::max(std::abs(a), std::abs(b)));
}

}  // namespace test
