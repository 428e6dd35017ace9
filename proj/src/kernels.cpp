#include "causalkan/kernels.hpp"

#include <string>

#include "causalkan/error.hpp"

namespace causalkan {

namespace {

std::size_t block_count(std::size_t rows) { return (rows + kBlockRows - 1) / kBlockRows; }

void check_input(const KanNetwork& net, const Matrix& x) {
  if (net.layers.empty()) fail(ErrorKind::shape, "network has no layers");
  if (x.cols() != net.input_width()) {
    fail(ErrorKind::shape, "batch has " + std::to_string(x.cols()) +
                               " columns, network expects " + std::to_string(net.input_width()));
  }
}

}  // namespace

BatchForward forward_batch(const KanNetwork& net, const Matrix& x) {
  check_input(net, x);
  BatchForward fwd;
  fwd.layout = layout_of(net);
  const auto& lay = fwd.layout;
  const std::size_t rows = x.rows();
  const std::size_t n_out = net.output_width();
  fwd.outputs = Matrix(rows, n_out);
  fwd.buffers = Matrix(rows, lay.activation_size);
  const std::size_t blocks = block_count(rows);
  Matrix partial(blocks, lay.edge_count);

  // Exceptions must not escape the parallel region.
  std::string error;
  ErrorKind error_kind = ErrorKind::numeric;
#pragma omp parallel for schedule(static) if (blocks > 1)
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    try {
      const std::size_t end = std::min(rows, (blk + 1) * kBlockRows);
      for (std::size_t i = blk * kBlockRows; i < end; ++i) {
        auto buf = fwd.buffers.row(i);
        detail::forward_row(net, lay, x.row(i), buf, partial.row(blk));
        const double* raw = buf.data() + lay.activation_offset.back();
        for (std::size_t s = 0; s < n_out; ++s) fwd.outputs(i, s) = raw[s] + net.output_bias[s];
      }
    } catch (const Error& e) {
#pragma omp critical(causalkan_forward_error)
      if (error.empty()) {
        error = e.what();
        error_kind = e.kind();
      }
    }
  }
  if (!error.empty()) throw Error(error_kind, "in batch forward: " + error);

  fwd.edge_means.assign(lay.edge_count, 0.0);
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    for (std::size_t e = 0; e < lay.edge_count; ++e) fwd.edge_means[e] += partial(blk, e);
  }
  if (rows > 0) {
    for (auto& m : fwd.edge_means) m /= static_cast<double>(rows);
  }
  return fwd;
}

BatchGradient backward_batch(const KanNetwork& net, const BatchForward& fwd,
                             const Matrix& output_grads, std::span<const double> activity,
                             bool want_input_grads) {
  const auto& lay = fwd.layout;
  const std::size_t rows = fwd.buffers.rows();
  if (fwd.buffers.cols() != layout_of(net).activation_size) {
    fail(ErrorKind::state, "batch activations do not match the network");
  }
  if (output_grads.rows() != rows || output_grads.cols() != net.output_width()) {
    fail(ErrorKind::shape, "output gradient matrix has the wrong shape");
  }
  if (!activity.empty() && activity.size() != lay.edge_count) {
    fail(ErrorKind::shape, "activity weights do not match edge count");
  }
  BatchGradient out;
  out.params.assign(lay.parameter_count, 0.0);
  if (want_input_grads) out.input_grads = Matrix(rows, net.input_width());
  const std::size_t blocks = block_count(rows);
  Matrix partial(blocks, lay.parameter_count);

  std::string error;
  ErrorKind error_kind = ErrorKind::numeric;
#pragma omp parallel if (blocks > 1)
  {
    detail::RowScratch scratch;
#pragma omp for schedule(static)
    for (std::size_t blk = 0; blk < blocks; ++blk) {
      try {
        const std::size_t end = std::min(rows, (blk + 1) * kBlockRows);
        for (std::size_t i = blk * kBlockRows; i < end; ++i) {
          std::span<double> in_grad;
          if (want_input_grads) in_grad = out.input_grads.row(i);
          detail::backward_row(net, lay, fwd.buffers.row(i), output_grads.row(i), activity,
                               partial.row(blk), in_grad, scratch);
        }
      } catch (const Error& e) {
#pragma omp critical(causalkan_backward_error)
        if (error.empty()) {
          error = e.what();
          error_kind = e.kind();
        }
      }
    }
  }
  if (!error.empty()) throw Error(error_kind, "in batch backward: " + error);

  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const auto p = partial.row(blk);
    for (std::size_t j = 0; j < lay.parameter_count; ++j) out.params[j] += p[j];
  }
  return out;
}

double regularizer(const KanNetwork& net, const BatchForward& fwd, const RegularizerWeights& w) {
  if (fwd.buffers.rows() == 0) fail(ErrorKind::input, "regularizer needs a non-empty batch");
  return regularizer_from_scores(net, fwd.edge_means, w);
}

EdgeScores edge_importance(const KanNetwork& net, const Matrix& x) {
  if (x.rows() == 0) fail(ErrorKind::input, "edge importance needs at least one row");
  return forward_batch(net, x).edge_means;
}

}  // namespace causalkan
