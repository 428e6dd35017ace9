#include "causalkan/kan.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "causalkan/error.hpp"

namespace causalkan {

double silu(double z) noexcept { return z / (1.0 + std::exp(-z)); }

double silu_slope(double z) noexcept {
  const double s = 1.0 / (1.0 + std::exp(-z));
  return s * (1.0 + z * (1.0 - s));
}

double base_value(BaseKind kind, double z) noexcept {
  return kind == BaseKind::silu ? silu(z) : z;
}

double base_slope(BaseKind kind, double z) noexcept {
  return kind == BaseKind::silu ? silu_slope(z) : 1.0;
}

namespace {

using detail::EdgeEval;

void check_finite_input(double z) {
  if (!std::isfinite(z)) fail(ErrorKind::numeric, "edge input is not finite");
}

double symbolic_value(const AtomFit& fit, double z) {
  if (!fit.valid_at(z)) {
    fail(ErrorKind::numeric, "symbolic edge '" + std::string(atom_name(fit.atom)) +
                                 "' evaluated outside its domain at z=" + std::to_string(z));
  }
  return fit.value(z);
}

double edge_value(const EdgeFunction& e, double z) {
  check_finite_input(z);
  if (e.symbolic) return symbolic_value(*e.symbolic, z);
  BasisWindow w;
  eval_window(e.grid, z, false, w);
  double sp = 0.0;
  for (int r = 0; r < w.count; ++r) sp += e.coeffs[w.first + r] * w.values[r];
  return e.w_b * base_value(e.base, z) + e.w_s * sp;
}

void edge_eval_full(const EdgeFunction& e, double z, EdgeEval& out) {
  check_finite_input(z);
  if (e.symbolic) {
    out.value = symbolic_value(*e.symbolic, z);
    out.slope = e.symbolic->slope(z);
    return;
  }
  eval_window(e.grid, z, e.grid.order() > 0, out.window);
  double sp = 0.0;
  double sl = 0.0;
  for (int r = 0; r < out.window.count; ++r) {
    const double c = e.coeffs[out.window.first + r];
    sp += c * out.window.values[r];
    sl += c * out.window.slopes[r];
  }
  out.base = base_value(e.base, z);
  out.spline = sp;
  out.value = e.w_b * out.base + e.w_s * sp;
  out.slope = e.w_b * base_slope(e.base, z) + e.w_s * sl;
}

double sign_of(double v) noexcept { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

EdgePoint edge_forward(const EdgeFunction& edge, double z) {
  EdgeEval ev;
  edge_eval_full(edge, z, ev);
  return {ev.value, ev.slope};
}

std::vector<double> layer_forward(const KanLayer& layer, std::span<const double> input) {
  if (input.size() != layer.n_in) {
    fail(ErrorKind::shape, "layer expects " + std::to_string(layer.n_in) + " inputs, got " +
                               std::to_string(input.size()));
  }
  std::vector<double> out(layer.n_out);
  for (std::size_t s = 0; s < layer.n_out; ++s) {
    const bool product = layer.node_kinds[s] == NodeKind::product;
    double acc = product ? 1.0 : 0.0;
    for (std::size_t r = 0; r < layer.n_in; ++r) {
      const EdgeFunction& e = layer.edge(s, r);
      if (!e.active) continue;
      const double v = edge_value(e, input[r]);
      acc = product ? acc * v : acc + v;
    }
    out[s] = acc;
  }
  return out;
}

void RegularizerWeights::validate() const {
  if (!(lambda_edge >= 0.0) || !(lambda_coeff >= 0.0) || !(lambda_smooth >= 0.0) ||
      !(lambda_entropy >= 0.0)) {
    fail(ErrorKind::config, "regularizer weights must be non-negative");
  }
}

std::vector<std::size_t> KanNetwork::widths() const {
  std::vector<std::size_t> w;
  if (layers.empty()) return w;
  w.push_back(layers.front().n_in);
  for (const auto& l : layers) w.push_back(l.n_out);
  return w;
}

void KanNetwork::validate() const {
  if (layers.empty()) fail(ErrorKind::shape, "network has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.n_in == 0 || layer.n_out == 0) fail(ErrorKind::shape, "layer with zero width");
    if (layer.edges.size() != layer.n_in * layer.n_out) {
      fail(ErrorKind::shape, "layer " + std::to_string(l) + " edge count mismatch");
    }
    if (layer.node_kinds.size() != layer.n_out) {
      fail(ErrorKind::shape, "layer " + std::to_string(l) + " node kind count mismatch");
    }
    if (l > 0 && layers[l - 1].n_out != layer.n_in) {
      fail(ErrorKind::shape, "layer " + std::to_string(l) + " input width " +
                                 std::to_string(layer.n_in) + " does not match previous output " +
                                 std::to_string(layers[l - 1].n_out));
    }
    for (const auto& e : layer.edges) {
      if (e.coeffs.size() != e.grid.basis_count()) {
        fail(ErrorKind::shape, "edge coefficient count does not match its grid");
      }
    }
  }
  if (input_standardization.size() != layers.front().n_in) {
    fail(ErrorKind::shape, "standardization size does not match input width");
  }
  if (output_bias.size() != layers.back().n_out) {
    fail(ErrorKind::shape, "output bias size does not match output width");
  }
}

NetworkLayout layout_of(const KanNetwork& net) {
  NetworkLayout lay;
  std::size_t act = 0;
  std::size_t edges = 0;
  std::size_t params = 0;
  for (const auto& layer : net.layers) {
    lay.activation_offset.push_back(act);
    act += layer.n_in;
    lay.edge_offset.push_back(edges);
    edges += layer.edges.size();
    for (const auto& e : layer.edges) {
      lay.edge_param_offset.push_back(params);
      params += 2 + e.coeffs.size();
    }
  }
  lay.activation_offset.push_back(act);
  act += net.layers.back().n_out;
  lay.activation_size = act;
  lay.edge_count = edges;
  lay.bias_offset = params;
  lay.parameter_count = params + net.output_bias.size();
  return lay;
}

std::size_t KanNetwork::parameter_count() const { return layout_of(*this).parameter_count; }

std::vector<double> KanNetwork::parameters() const {
  std::vector<double> p;
  p.reserve(parameter_count());
  for (const auto& layer : layers) {
    for (const auto& e : layer.edges) {
      p.push_back(e.w_b);
      p.push_back(e.w_s);
      p.insert(p.end(), e.coeffs.begin(), e.coeffs.end());
    }
  }
  p.insert(p.end(), output_bias.begin(), output_bias.end());
  return p;
}

void KanNetwork::set_parameters(std::span<const double> params) {
  if (params.size() != parameter_count()) {
    fail(ErrorKind::shape, "parameter vector has " + std::to_string(params.size()) +
                               " entries, network expects " + std::to_string(parameter_count()));
  }
  std::size_t i = 0;
  for (auto& layer : layers) {
    for (auto& e : layer.edges) {
      e.w_b = params[i++];
      e.w_s = params[i++];
      for (auto& c : e.coeffs) c = params[i++];
    }
  }
  for (auto& b : output_bias) b = params[i++];
}

std::size_t KanNetwork::active_edge_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) {
    for (const auto& e : layer.edges) n += e.active ? 1 : 0;
  }
  return n;
}

bool KanNetwork::is_additive() const {
  if (layers.size() != 1) return false;
  return std::all_of(layers[0].node_kinds.begin(), layers[0].node_kinds.end(),
                     [](NodeKind k) { return k == NodeKind::sum; });
}

bool KanNetwork::has_symbolic_edges() const {
  for (const auto& layer : layers) {
    for (const auto& e : layer.edges) {
      if (e.active && e.symbolic) return true;
    }
  }
  return false;
}

bool KanNetwork::fully_symbolic() const {
  for (const auto& layer : layers) {
    for (const auto& e : layer.edges) {
      if (e.active && !e.symbolic) return false;
    }
  }
  return true;
}

KanNetwork make_network(const NetworkSpec& spec, std::uint64_t seed) {
  if (spec.widths.size() < 2) fail(ErrorKind::config, "network needs at least two widths");
  for (auto w : spec.widths) {
    if (w == 0) fail(ErrorKind::config, "network widths must be positive");
  }
  const std::size_t n_in = spec.widths.front();
  if (!spec.input_domains.empty() && spec.input_domains.size() != n_in) {
    fail(ErrorKind::config, "input domain count does not match input width");
  }
  std::mt19937_64 rng(seed);
  const double sd = 0.1 / std::sqrt(static_cast<double>(spec.grid_size + spec.order)) *
                    (spec.sparse_init ? 0.1 : 1.0);
  std::normal_distribution<double> noise(0.0, sd);

  KanNetwork net;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    KanLayer layer;
    layer.n_in = spec.widths[l];
    layer.n_out = spec.widths[l + 1];
    const bool hidden_out = l + 2 < spec.widths.size();
    for (std::size_t s = 0; s < layer.n_out; ++s) {
      const bool product = spec.product_nodes && hidden_out && layer.n_out >= 2 &&
                           s >= layer.n_out - layer.n_out / 2;
      layer.node_kinds.push_back(product ? NodeKind::product : NodeKind::sum);
    }
    layer.edges.reserve(layer.n_in * layer.n_out);
    for (std::size_t s = 0; s < layer.n_out; ++s) {
      for (std::size_t r = 0; r < layer.n_in; ++r) {
        const auto dom = (l == 0 && !spec.input_domains.empty()) ? spec.input_domains[r]
                                                                 : spec.hidden_domain;
        EdgeFunction e(SplineGrid(dom.first, dom.second, spec.grid_size, spec.order));
        e.base = spec.base;
        e.w_b = spec.sparse_init ? 0.0 : 1.0;
        e.w_s = 1.0;
        for (auto& c : e.coeffs) c = noise(rng);
        layer.edges.push_back(std::move(e));
      }
    }
    net.layers.push_back(std::move(layer));
  }
  net.input_standardization = spec.input_standardization.empty()
                                  ? std::vector<Standardization>(n_in)
                                  : spec.input_standardization;
  net.output_bias.assign(spec.widths.back(), 0.0);
  net.validate();
  return net;
}

namespace detail {

void forward_row(const KanNetwork& net, const NetworkLayout& lay, std::span<const double> x,
                 std::span<double> buffer, std::span<double> edge_abs) {
  const std::size_t n0 = net.layers.front().n_in;
  for (std::size_t r = 0; r < n0; ++r) {
    buffer[r] = net.input_standardization[r].apply(x[r]);
  }
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const KanLayer& layer = net.layers[l];
    const double* in = buffer.data() + lay.activation_offset[l];
    double* out = buffer.data() + lay.activation_offset[l + 1];
    const std::size_t e0 = lay.edge_offset[l];
    for (std::size_t s = 0; s < layer.n_out; ++s) {
      const bool product = layer.node_kinds[s] == NodeKind::product;
      double acc = product ? 1.0 : 0.0;
      for (std::size_t r = 0; r < layer.n_in; ++r) {
        const std::size_t ei = s * layer.n_in + r;
        const EdgeFunction& e = layer.edges[ei];
        if (!e.active) continue;
        const double v = edge_value(e, in[r]);
        if (!edge_abs.empty()) edge_abs[e0 + ei] += std::abs(v);
        acc = product ? acc * v : acc + v;
      }
      out[s] = acc;
    }
  }
}

void backward_row(const KanNetwork& net, const NetworkLayout& lay,
                  std::span<const double> buffer, std::span<const double> output_grad,
                  std::span<const double> activity, std::span<double> param_grads,
                  std::span<double> input_grad, RowScratch& scratch) {
  const std::size_t n_last = net.layers.back().n_out;
  auto& g = scratch.grad_a;
  auto& gin = scratch.grad_b;
  g.assign(output_grad.begin(), output_grad.end());
  for (std::size_t s = 0; s < n_last; ++s) param_grads[lay.bias_offset + s] += g[s];

  auto& evals = scratch.evals;
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const KanLayer& layer = net.layers[l];
    const double* in = buffer.data() + lay.activation_offset[l];
    const std::size_t e0 = lay.edge_offset[l];
    gin.assign(layer.n_in, 0.0);
    evals.resize(layer.n_in);
    auto& prefix = scratch.prefix;
    for (std::size_t s = 0; s < layer.n_out; ++s) {
      const bool product = layer.node_kinds[s] == NodeKind::product;
      for (std::size_t r = 0; r < layer.n_in; ++r) {
        const EdgeFunction& e = layer.edges[s * layer.n_in + r];
        if (e.active) edge_eval_full(e, in[r], evals[r]);
      }
      if (product) {
        // prefix[r] = product of active values before r; the suffix is folded
        // in on the way back.
        prefix.assign(layer.n_in + 1, 1.0);
        for (std::size_t r = 0; r < layer.n_in; ++r) {
          const bool act = layer.edges[s * layer.n_in + r].active;
          prefix[r + 1] = prefix[r] * (act ? evals[r].value : 1.0);
        }
      }
      double suffix = 1.0;
      for (std::size_t r = layer.n_in; r-- > 0;) {
        const std::size_t ei = s * layer.n_in + r;
        const EdgeFunction& e = layer.edges[ei];
        if (!e.active) continue;
        const EdgeEval& ev = evals[r];
        double dphi = product ? g[s] * prefix[r] * suffix : g[s];
        if (product) suffix *= ev.value;
        if (!activity.empty()) dphi += activity[e0 + ei] * sign_of(ev.value);
        if (dphi == 0.0) continue;
        if (!e.symbolic) {
          const std::size_t p = lay.edge_param_offset[e0 + ei];
          param_grads[p] += dphi * ev.base;
          param_grads[p + 1] += dphi * ev.spline;
          const double scale = dphi * e.w_s;
          for (int j = 0; j < ev.window.count; ++j) {
            param_grads[p + 2 + ev.window.first + j] += scale * ev.window.values[j];
          }
        }
        gin[r] += dphi * ev.slope;
      }
    }
    std::swap(g, gin);
  }
  if (!input_grad.empty()) {
    for (std::size_t r = 0; r < g.size(); ++r) {
      input_grad[r] = g[r] / net.input_standardization[r].scale;
    }
  }
}

}  // namespace detail

ForwardResult network_forward(const KanNetwork& net, std::span<const double> x) {
  if (net.layers.empty()) fail(ErrorKind::shape, "network has no layers");
  if (x.size() != net.input_width()) {
    fail(ErrorKind::shape, "network expects " + std::to_string(net.input_width()) +
                               " inputs, got " + std::to_string(x.size()));
  }
  const NetworkLayout lay = layout_of(net);
  ForwardResult res;
  res.activations.buffer.assign(lay.activation_size, 0.0);
  detail::forward_row(net, lay, x, res.activations.buffer, {});
  const double* raw = res.activations.buffer.data() + lay.activation_offset.back();
  res.output.resize(net.output_width());
  for (std::size_t s = 0; s < res.output.size(); ++s) res.output[s] = raw[s] + net.output_bias[s];
  return res;
}

BackwardResult network_backward(const KanNetwork& net, const Activations& activations,
                                std::span<const double> output_grad) {
  const NetworkLayout lay = layout_of(net);
  if (activations.buffer.size() != lay.activation_size) {
    fail(ErrorKind::state, "activations do not match the network (stale forward pass?)");
  }
  if (output_grad.size() != net.output_width()) {
    fail(ErrorKind::shape, "output gradient size does not match network output");
  }
  BackwardResult res;
  res.param_grads.assign(lay.parameter_count, 0.0);
  res.input_grad.assign(net.input_width(), 0.0);
  detail::RowScratch scratch;
  detail::backward_row(net, lay, activations.buffer, output_grad, {}, res.param_grads,
                       res.input_grad, scratch);
  return res;
}

double regularizer_from_scores(const KanNetwork& net, std::span<const double> edge_means,
                               const RegularizerWeights& w) {
  const NetworkLayout lay = layout_of(net);
  if (edge_means.size() != lay.edge_count) fail(ErrorKind::shape, "edge score size mismatch");
  double activity = 0.0;
  double magnitude = 0.0;
  double smooth = 0.0;
  double entropy = 0.0;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const KanLayer& layer = net.layers[l];
    double total = 0.0;
    for (std::size_t ei = 0; ei < layer.edges.size(); ++ei) {
      const EdgeFunction& e = layer.edges[ei];
      if (!e.active) continue;
      const double s = edge_means[lay.edge_offset[l] + ei];
      activity += s;
      total += s;
      if (e.symbolic) continue;
      for (std::size_t j = 0; j < e.coeffs.size(); ++j) {
        magnitude += std::abs(e.coeffs[j]);
        if (j + 1 < e.coeffs.size()) smooth += std::abs(e.coeffs[j + 1] - e.coeffs[j]);
      }
    }
    if (total > 0.0) {
      for (std::size_t ei = 0; ei < layer.edges.size(); ++ei) {
        if (!layer.edges[ei].active) continue;
        const double p = edge_means[lay.edge_offset[l] + ei] / total;
        if (p > 0.0) entropy -= p * std::log(p);
      }
    }
  }
  return w.lambda_edge * activity + w.lambda_coeff * magnitude + w.lambda_smooth * smooth +
         w.lambda_entropy * entropy;
}

std::vector<double> regularizer_gradient(const KanNetwork& net,
                                         std::span<const double> edge_means,
                                         const RegularizerWeights& w,
                                         std::span<double> param_grads) {
  const NetworkLayout lay = layout_of(net);
  if (edge_means.size() != lay.edge_count) fail(ErrorKind::shape, "edge score size mismatch");
  std::vector<double> activity(lay.edge_count, 0.0);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const KanLayer& layer = net.layers[l];
    const std::size_t e0 = lay.edge_offset[l];
    double total = 0.0;
    for (std::size_t ei = 0; ei < layer.edges.size(); ++ei) {
      if (layer.edges[ei].active) total += edge_means[e0 + ei];
    }
    double h = 0.0;
    if (total > 0.0) {
      for (std::size_t ei = 0; ei < layer.edges.size(); ++ei) {
        if (!layer.edges[ei].active) continue;
        const double p = edge_means[e0 + ei] / total;
        if (p > 0.0) h -= p * std::log(p);
      }
    }
    for (std::size_t ei = 0; ei < layer.edges.size(); ++ei) {
      const EdgeFunction& e = layer.edges[ei];
      if (!e.active) continue;
      double a = w.lambda_edge;
      const double s = edge_means[e0 + ei];
      if (w.lambda_entropy > 0.0 && s > 0.0 && total > 0.0) {
        // dH/ds_e = (-ln p_e - H) / S
        a += w.lambda_entropy * (-std::log(s / total) - h) / total;
      }
      activity[e0 + ei] = a;
      if (e.symbolic || (w.lambda_coeff == 0.0 && w.lambda_smooth == 0.0)) continue;
      const std::size_t p = lay.edge_param_offset[e0 + ei] + 2;
      const std::size_t n = e.coeffs.size();
      for (std::size_t j = 0; j < n; ++j) {
        param_grads[p + j] += w.lambda_coeff * sign_of(e.coeffs[j]);
        if (j + 1 < n) {
          const double d = sign_of(e.coeffs[j + 1] - e.coeffs[j]);
          param_grads[p + j + 1] += w.lambda_smooth * d;
          param_grads[p + j] -= w.lambda_smooth * d;
        }
      }
    }
  }
  return activity;
}

KanNetwork prune(const KanNetwork& net, double threshold, std::span<const double> scores) {
  if (!(threshold >= 0.0)) fail(ErrorKind::config, "pruning threshold must be >= 0");
  const NetworkLayout lay = layout_of(net);
  if (scores.size() != lay.edge_count) {
    fail(ErrorKind::shape, "edge scores do not match network topology");
  }
  KanNetwork out = net;
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    auto& layer = out.layers[l];
    for (std::size_t ei = 0; ei < layer.edges.size(); ++ei) {
      if (layer.edges[ei].active && scores[lay.edge_offset[l] + ei] < threshold) {
        layer.edges[ei].active = false;
      }
    }
  }
  // Hidden node h sits between layer l-1 (incoming, output s = h) and
  // layer l (outgoing, input r = h).
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t l = 1; l < out.layers.size(); ++l) {
      auto& prev = out.layers[l - 1];
      auto& next = out.layers[l];
      for (std::size_t h = 0; h < next.n_in; ++h) {
        bool any_in = false;
        bool any_out = false;
        for (std::size_t r = 0; r < prev.n_in; ++r) any_in |= prev.edge(h, r).active;
        for (std::size_t s = 0; s < next.n_out; ++s) any_out |= next.edge(s, h).active;
        if (any_in == any_out) continue;
        for (std::size_t r = 0; r < prev.n_in; ++r) prev.edge(h, r).active = false;
        for (std::size_t s = 0; s < next.n_out; ++s) next.edge(s, h).active = false;
        changed = true;
      }
    }
  }
  return out;
}

}  // namespace causalkan
