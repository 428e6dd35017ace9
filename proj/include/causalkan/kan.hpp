#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "causalkan/atoms.hpp"
#include "causalkan/spline.hpp"

namespace causalkan {

enum class NodeKind { sum, product };

struct Standardization {
  double mean = 0.0;
  double scale = 1.0;

  double apply(double x) const noexcept { return (x - mean) / scale; }
  friend bool operator==(const Standardization&, const Standardization&) = default;
};

/// Fixed baseline b(z) of an edge.
enum class BaseKind { silu, identity };

/// phi(z) = w_b * b(z) + w_s * spline(z), or a fitted atom once the edge has
/// been symbolified.
struct EdgeFunction {
  SplineGrid grid;
  BaseKind base = BaseKind::silu;
  double w_b = 1.0;
  double w_s = 1.0;
  std::vector<double> coeffs;
  bool active = true;
  std::optional<AtomFit> symbolic;

  explicit EdgeFunction(SplineGrid g)
      : grid(std::move(g)), coeffs(grid.basis_count(), 0.0) {}

  friend bool operator==(const EdgeFunction&, const EdgeFunction&) = default;
};

struct EdgePoint {
  double value = 0.0;
  double slope = 0.0;
};

double silu(double z) noexcept;
double silu_slope(double z) noexcept;
double base_value(BaseKind kind, double z) noexcept;
double base_slope(BaseKind kind, double z) noexcept;

/// Value and input-derivative of one edge. Throws numeric error on
/// non-finite z (or a symbolic edge evaluated outside its atom's domain).
EdgePoint edge_forward(const EdgeFunction& edge, double z);

struct KanLayer {
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  std::vector<EdgeFunction> edges;  // row-major: edges[s * n_in + r]
  std::vector<NodeKind> node_kinds;

  EdgeFunction& edge(std::size_t s, std::size_t r) { return edges[s * n_in + r]; }
  const EdgeFunction& edge(std::size_t s, std::size_t r) const { return edges[s * n_in + r]; }

  friend bool operator==(const KanLayer&, const KanLayer&) = default;
};

/// Sum nodes with no active edges give 0, product nodes give 1.
std::vector<double> layer_forward(const KanLayer& layer, std::span<const double> input);

struct RegularizerWeights {
  double lambda_edge = 0.0;
  double lambda_coeff = 0.0;
  double lambda_smooth = 0.0;
  double lambda_entropy = 0.0;

  void validate() const;
};

struct KanNetwork {
  std::vector<KanLayer> layers;
  std::vector<Standardization> input_standardization;
  std::vector<double> output_bias;

  std::vector<std::size_t> widths() const;
  std::size_t input_width() const { return layers.front().n_in; }
  std::size_t output_width() const { return layers.back().n_out; }
  std::size_t depth() const noexcept { return layers.size(); }

  /// Throws shape error if the layer dimensions do not chain.
  void validate() const;

  std::size_t parameter_count() const;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> params);

  std::size_t active_edge_count() const;
  bool is_additive() const;  // single layer of sum nodes
  bool has_symbolic_edges() const;
  bool fully_symbolic() const;

  friend bool operator==(const KanNetwork&, const KanNetwork&) = default;
};

/// Flat offsets for the per-row buffers used by the forward/backward passes.
/// Activation buffer: the input of every layer followed by the raw outputs
/// (before output bias). Parameter vector: per edge [w_b, w_s, coeffs...] in
/// layer/edge order, then output biases.
struct NetworkLayout {
  std::vector<std::size_t> activation_offset;  // size depth + 1
  std::size_t activation_size = 0;
  std::vector<std::size_t> edge_offset;  // first flat edge index of each layer
  std::size_t edge_count = 0;
  std::vector<std::size_t> edge_param_offset;  // per flat edge
  std::size_t bias_offset = 0;
  std::size_t parameter_count = 0;
};

NetworkLayout layout_of(const KanNetwork& net);

struct NetworkSpec {
  std::vector<std::size_t> widths;
  int grid_size = 5;
  int order = 3;
  /// Domains of the layer-0 edges, one per input (standardized units).
  std::vector<std::pair<double, double>> input_domains;
  std::pair<double, double> hidden_domain{-3.0, 3.0};
  std::vector<Standardization> input_standardization;
  bool sparse_init = false;
  bool product_nodes = false;
  BaseKind base = BaseKind::silu;
};

/// Random initialization: coeffs ~ N(0, 0.1/sqrt(G+k)), w_b = w_s = 1.
/// Sparse initialization zeroes w_b and shrinks the coefficient noise by 10.
KanNetwork make_network(const NetworkSpec& spec, std::uint64_t seed);

struct Activations {
  std::vector<double> buffer;  // NetworkLayout activation buffer
};

struct ForwardResult {
  std::vector<double> output;
  Activations activations;
};

struct BackwardResult {
  std::vector<double> param_grads;
  std::vector<double> input_grad;  // with respect to the raw (unstandardized) input
};

ForwardResult network_forward(const KanNetwork& net, std::span<const double> x);
BackwardResult network_backward(const KanNetwork& net, const Activations& activations,
                                std::span<const double> output_grad);

/// Per-edge mean |phi| over a batch, indexed like the flat edge list.
using EdgeScores = std::vector<double>;

/// Regularizer given per-edge mean activities of a batch. Subgradients of
/// |.| at zero are taken as zero.
double regularizer_from_scores(const KanNetwork& net, std::span<const double> edge_means,
                               const RegularizerWeights& w);

/// Adds the gradient of the coefficient terms to `param_grads` and returns the
/// per-edge multiplier on sign(phi) that the activity and entropy terms
/// contribute per unit of batch mean.
std::vector<double> regularizer_gradient(const KanNetwork& net,
                                         std::span<const double> edge_means,
                                         const RegularizerWeights& w,
                                         std::span<double> param_grads);

/// Active edges scoring below `threshold` are masked, then hidden nodes left
/// without active inputs or outputs are isolated until nothing changes.
KanNetwork prune(const KanNetwork& net, double threshold, std::span<const double> scores);

namespace detail {

struct EdgeEval {
  double value = 0.0;
  double slope = 0.0;
  double base = 0.0;
  double spline = 0.0;
  BasisWindow window;
};

struct RowScratch {
  std::vector<double> grad_a;
  std::vector<double> grad_b;
  std::vector<double> prefix;
  std::vector<EdgeEval> evals;
};

/// Forward pass for one row into `buffer` (NetworkLayout activation layout).
/// If `edge_abs` is non-empty, |phi| of each active edge is added to it.
void forward_row(const KanNetwork& net, const NetworkLayout& lay, std::span<const double> x,
                 std::span<double> buffer, std::span<double> edge_abs);

/// Backward pass for one row. Accumulates into `param_grads`; writes the
/// raw-input gradient into `input_grad` when non-empty. `activity` (per flat
/// edge, may be empty) adds activity[e] * sign(phi_e) to each edge's upstream
/// gradient.
void backward_row(const KanNetwork& net, const NetworkLayout& lay,
                  std::span<const double> buffer, std::span<const double> output_grad,
                  std::span<const double> activity, std::span<double> param_grads,
                  std::span<double> input_grad, RowScratch& scratch);

}  // namespace detail

}  // namespace causalkan
