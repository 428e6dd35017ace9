#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "causalkan/kan.hpp"
#include "causalkan/matrix.hpp"

namespace causalkan {

/// Rows per work block in the batch kernels. Partial sums are formed per
/// block and reduced in block order, so results do not depend on the number
/// of threads.
inline constexpr std::size_t kBlockRows = 64;

struct BatchForward {
  NetworkLayout layout;
  Matrix outputs;               // rows x n_out, including output bias
  Matrix buffers;               // rows x activation_size
  std::vector<double> edge_means;  // mean |phi| per flat edge
};

struct BatchGradient {
  std::vector<double> params;  // summed over rows
  Matrix input_grads;          // rows x n_in (empty unless requested)
};

BatchForward forward_batch(const KanNetwork& net, const Matrix& x);

/// `output_grads` is rows x n_out. `activity` is empty or holds one
/// multiplier per flat edge applied to sign(phi) on every row.
BatchGradient backward_batch(const KanNetwork& net, const BatchForward& fwd,
                             const Matrix& output_grads, std::span<const double> activity,
                             bool want_input_grads);

/// Full regularizer of the network on the batch behind `fwd`.
double regularizer(const KanNetwork& net, const BatchForward& fwd, const RegularizerWeights& w);

/// Mean |phi| of every edge over `x`; inactive edges score 0.
EdgeScores edge_importance(const KanNetwork& net, const Matrix& x);

}  // namespace causalkan
