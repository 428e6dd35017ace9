#include "causalkan/reference.hpp"

#include "causalkan/error.hpp"

namespace causalkan::reference {

BatchForward forward_batch(const KanNetwork& net, const Matrix& x) {
  if (x.cols() != net.input_width()) fail(ErrorKind::shape, "batch width mismatch");
  BatchForward fwd;
  fwd.layout = layout_of(net);
  const auto& lay = fwd.layout;
  fwd.outputs = Matrix(x.rows(), net.output_width());
  fwd.buffers = Matrix(x.rows(), lay.activation_size);
  fwd.edge_means.assign(lay.edge_count, 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto buf = fwd.buffers.row(i);
    detail::forward_row(net, lay, x.row(i), buf, fwd.edge_means);
    const double* raw = buf.data() + lay.activation_offset.back();
    for (std::size_t s = 0; s < net.output_width(); ++s) {
      fwd.outputs(i, s) = raw[s] + net.output_bias[s];
    }
  }
  if (x.rows() > 0) {
    for (auto& m : fwd.edge_means) m /= static_cast<double>(x.rows());
  }
  return fwd;
}

BatchGradient backward_batch(const KanNetwork& net, const BatchForward& fwd,
                             const Matrix& output_grads, std::span<const double> activity,
                             bool want_input_grads) {
  const auto& lay = fwd.layout;
  BatchGradient out;
  out.params.assign(lay.parameter_count, 0.0);
  if (want_input_grads) out.input_grads = Matrix(fwd.buffers.rows(), net.input_width());
  detail::RowScratch scratch;
  for (std::size_t i = 0; i < fwd.buffers.rows(); ++i) {
    std::span<double> in_grad;
    if (want_input_grads) in_grad = out.input_grads.row(i);
    detail::backward_row(net, lay, fwd.buffers.row(i), output_grads.row(i), activity,
                         out.params, in_grad, scratch);
  }
  return out;
}

}  // namespace causalkan::reference
