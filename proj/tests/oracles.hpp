#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "causalkan/kan.hpp"

namespace oracle {

struct GradCheck {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double worst_rel = 0.0;
  double worst_abs = 0.0;
};

/// Scalar loss sum_o g_o * out_o(x) for a fixed g; its parameter gradient is
/// what network_backward returns for output_grad = g.
inline double probe_loss(const causalkan::KanNetwork& net, const std::vector<double>& x,
                         const std::vector<double>& g) {
  const auto out = causalkan::network_forward(net, x).output;
  double s = 0.0;
  for (std::size_t o = 0; o < out.size(); ++o) s += g[o] * out[o];
  return s;
}

/// Central differences with step h on every parameter.
inline GradCheck check_network_gradient(const causalkan::KanNetwork& net, const std::vector<double>& x,
                                        const std::vector<double>& g, double h = 1e-5, double rel = 1e-4,
                                        double abs_floor = 1e-7) {
  GradCheck r;
  const auto fwd = causalkan::network_forward(net, x);
  const auto analytic = causalkan::network_backward(net, fwd.activations, g).param_grads;
  auto params = net.parameters();
  causalkan::KanNetwork probe = net;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    probe.set_parameters(params);
    const double lp = probe_loss(probe, x, g);
    params[i] = keep - h;
    probe.set_parameters(params);
    const double lm = probe_loss(probe, x, g);
    params[i] = keep;
    const double fd = (lp - lm) / (2 * h);
    const double err = std::abs(fd - analytic[i]);
    const double scale = std::max(std::abs(fd), std::abs(analytic[i]));
    ++r.checked;
    if (err > std::max(abs_floor, rel * scale)) ++r.failed;
    r.worst_abs = std::max(r.worst_abs, err);
    if (err > abs_floor) r.worst_rel = std::max(r.worst_rel, err / std::max(scale, 1e-300));
  }
  return r;
}

/// Random network for gradient checks: depth 1..3, widths <= 6, parameters
/// at a visible scale; inputs kept away from spline knots and domain ends.
struct GradCase {
  causalkan::KanNetwork net;
  std::vector<double> x;
  std::vector<double> g;
  std::string label;
};

inline GradCase random_grad_case(std::uint64_t seed, bool product) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> depth_d(1, 3), width_d(1, 6), gi(0, 2);
  const int depth = depth_d(rng);
  std::vector<std::size_t> widths{static_cast<std::size_t>(width_d(rng))};
  for (int l = 0; l < depth; ++l) widths.push_back(static_cast<std::size_t>(width_d(rng)));
  if (product && depth > 1 && widths[1] < 2) widths[1] = 2;
  static constexpr int grids[] = {1, 3, 5};
  causalkan::NetworkSpec spec;
  spec.widths = widths;
  spec.grid_size = grids[gi(rng)];
  spec.order = 3;
  spec.input_domains.assign(widths.front(), {-2.0, 2.0});
  spec.input_standardization.assign(widths.front(), {0.1, 1.3});
  spec.hidden_domain = {-50.0, 50.0};  // keep hidden activations off the clamp
  spec.product_nodes = product;
  auto net = causalkan::make_network(spec, seed);
  std::normal_distribution<double> z(0.0, 0.4);
  auto p = net.parameters();
  for (auto& v : p) v = z(rng);
  net.set_parameters(p);

  std::uniform_real_distribution<double> u(-1.8, 1.8);
  GradCase c{std::move(net), {}, {}, {}};
  for (std::size_t i = 0; i < widths.front(); ++i) c.x.push_back(u(rng));
  std::normal_distribution<double> gz(0.0, 1.0);
  for (std::size_t o = 0; o < widths.back(); ++o) c.g.push_back(gz(rng));
  c.label = "widths";
  for (auto w : widths) c.label += " " + std::to_string(w);
  c.label += product ? " (product nodes)" : "";
  return c;
}

}  // namespace oracle
