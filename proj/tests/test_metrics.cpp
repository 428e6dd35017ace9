#include <algorithm>
#include <numeric>
#include <random>

#include "causalkan/metrics.hpp"
#include "support.hpp"

using namespace causalkan;

namespace brute {

// Long-double accumulation in a different order from the library.
double pehe(const std::vector<double>& a, const std::vector<double>& b) {
  long double s = 0;
  for (std::size_t i = a.size(); i-- > 0;) s += static_cast<long double>(a[i] - b[i]) * (a[i] - b[i]);
  return static_cast<double>(std::sqrt(s / a.size()));
}
double ate(const std::vector<double>& a, const std::vector<double>& b) {
  long double sa = 0, sb = 0;
  for (std::size_t i = a.size(); i-- > 0;) {
    sa += a[i];
    sb += b[i];
  }
  return static_cast<double>(std::fabs(sa / a.size() - sb / b.size()));
}
double mse(const std::vector<double>& a, const std::vector<double>& b) {
  const double p = pehe(a, b);
  return p * p;
}

}  // namespace brute

TEST_CASE("metric examples") {
  const std::vector<double> t{0.5, -1.0, 2.0};
  CHECK(pehe(t, t) == 0.0);
  CHECK(ate_error(t, t) == 0.0);
  CHECK(mse(t, t) == 0.0);
  CHECK(r_squared(t, t) == 1.0);
  std::vector<double> shifted = t;
  for (auto& v : shifted) v += 0.75;
  CHECK(pehe(shifted, t) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(pehe(std::vector<double>{1, 2}, std::vector<double>{0, 0}) == doctest::Approx(std::sqrt(2.5)));
  CHECK(ate_error(std::vector<double>{2, 0}, std::vector<double>{1, 1}) == 0.0);
  CHECK(ate_error(std::vector<double>{1, 2}, std::vector<double>{0, 0}) == 1.5);
  CHECK(mse(std::vector<double>{0, 0}, std::vector<double>{1, 3}) == 5.0);
  const double m = (0.5 - 1.0 + 2.0) / 3.0;
  CHECK(std::abs(r_squared(std::vector<double>{m, m, m}, t)) < 1e-15);
}

TEST_CASE("metric error contracts") {
  const std::vector<double> a{1, 2}, b{1}, e;
  CHECK_KIND(pehe(a, b), ErrorKind::input);
  CHECK_KIND(ate_error(e, e), ErrorKind::input);
  CHECK_KIND(mse(a, b), ErrorKind::input);
  CHECK_KIND(r_squared(a, std::vector<double>{3, 3}), ErrorKind::degenerate_target);
}

TEST_CASE("metrics match brute force on random vectors") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> z(0.0, 2.0);
  std::uniform_int_distribution<std::size_t> len(1, 500);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = len(rng);
    std::vector<double> a(n), b(n);
    for (auto& v : a) v = z(rng);
    for (auto& v : b) v = z(rng) + 0.5;
    CHECK(std::abs(pehe(a, b) - brute::pehe(a, b)) <= 1e-12);
    CHECK(std::abs(ate_error(a, b) - brute::ate(a, b)) <= 1e-12);
    CHECK(std::abs(mse(a, b) - brute::mse(a, b)) <= 1e-12 * std::max(1.0, brute::mse(a, b)));
    CHECK(pehe(a, b) >= ate_error(a, b) - 1e-12);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> pa(n), pb(n);
    for (std::size_t i = 0; i < n; ++i) {
      pa[i] = a[perm[i]];
      pb[i] = b[perm[i]];
    }
    CHECK(std::abs(pehe(pa, pb) - pehe(a, b)) <= 1e-12);
    CHECK(std::abs(ate_error(pa, pb) - ate_error(a, b)) <= 1e-12);
  }
}

TEST_CASE("eval report json") {
  EvalReport r;
  r.mse = 0.1;
  r.pehe = 0.2;
  r.n = 7;
  const auto back = EvalReport::from_json(r.to_json());
  CHECK(back.mse == 0.1);
  CHECK(back.pehe == 0.2);
  CHECK_FALSE(back.ate_error.has_value());
  CHECK(back.n == 7);
}
