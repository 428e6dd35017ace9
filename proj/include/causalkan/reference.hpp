#pragma once

#include "causalkan/kernels.hpp"

/// Single-threaded batch passes with plain row-order accumulation. These are
/// the baseline that the blocked OpenMP kernels are tested and benchmarked
/// against.
namespace causalkan::reference {

BatchForward forward_batch(const KanNetwork& net, const Matrix& x);

BatchGradient backward_batch(const KanNetwork& net, const BatchForward& fwd,
                             const Matrix& output_grads, std::span<const double> activity,
                             bool want_input_grads);

}  // namespace causalkan::reference
