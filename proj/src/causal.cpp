#include "causalkan/causal.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "causalkan/error.hpp"
#include "causalkan/kan_io.hpp"
#include "causalkan/kernels.hpp"

namespace causalkan {

namespace {

using nlohmann::json;

constexpr double kDomainPad = 0.1;

std::pair<double, double> padded_domain(double lo, double hi) {
  const double w = hi - lo;
  if (!(w > 1e-12)) return {lo - 1.0, hi + 1.0};
  return {lo - kDomainPad * w, hi + kDomainPad * w};
}

bool uses_representation(Architecture a) {
  return a == Architecture::TAR || a == Architecture::Dragon;
}

Matrix with_treatment(const Matrix& x, std::span<const double> t) {
  Matrix out(x.rows(), x.cols() + 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto src = x.row(i);
    auto dst = out.row(i);
    std::copy(src.begin(), src.end(), dst.begin());
    dst[x.cols()] = t[i];
  }
  return out;
}

Matrix with_treatment(const Matrix& x, double t) {
  std::vector<double> tv(x.rows(), t);
  return with_treatment(x, tv);
}

Matrix single_row(std::span<const double> x) {
  Matrix m(1, x.size());
  std::copy(x.begin(), x.end(), m.row(0).begin());
  return m;
}

void check_x(const CausalModel& m, const Matrix& x) {
  if (x.cols() != m.input_dim) {
    fail(ErrorKind::shape, "model expects " + std::to_string(m.input_dim) + " covariates, got " +
                               std::to_string(x.cols()));
  }
}

std::vector<std::vector<std::size_t>> arm_rows(const TreatmentSpace& ts, std::span<const double> t) {
  std::vector<std::vector<std::size_t>> rows(static_cast<std::size_t>(ts.arms));
  for (std::size_t i = 0; i < t.size(); ++i) rows[static_cast<std::size_t>(ts.arm_of(t[i]))].push_back(i);
  return rows;
}

// Raw (standardized-unit) outputs of a head for each row of its input.
std::vector<double> head_outputs(const KanNetwork& net, const Matrix& in) {
  const auto fwd = forward_batch(net, in);
  return fwd.outputs.column(0);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Row-wise probabilities from propensity logits.
Matrix propensity_probs(const Matrix& logits, int arms) {
  Matrix p(logits.rows(), static_cast<std::size_t>(arms));
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (arms == 2 && logits.cols() == 1) {
      const double e = sigmoid(logits(i, 0));
      p(i, 0) = 1.0 - e;
      p(i, 1) = e;
      continue;
    }
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) z += std::exp(row[k] - mx);
    for (std::size_t k = 0; k < row.size(); ++k) p(i, k) = std::exp(row[k] - mx) / z;
  }
  return p;
}

// Per-net piece of the objective: regularizer value and (optionally) the
// backward pass with regularizer terms folded in.
struct NetPass {
  const KanNetwork& net;
  std::span<double> grad;  // empty when gradients are not wanted
  const RegularizerWeights& reg;
  double* reg_total;

  BatchForward forward(const Matrix& in) const { return forward_batch(net, in); }

  Matrix backward(const BatchForward& fwd, const Matrix& out_grad, bool want_input) const {
    const std::size_t rows = fwd.buffers.rows();
    if (rows > 0) {
      *reg_total += regularizer_from_scores(net, fwd.edge_means, reg);
    } else {
      *reg_total += regularizer_from_scores(net, std::vector<double>(fwd.layout.edge_count, 0.0), reg);
    }
    if (grad.empty()) return {};
    auto act = regularizer_gradient(net, fwd.edge_means, reg, grad);
    if (rows == 0) return Matrix(0, net.input_width());
    for (auto& a : act) a /= static_cast<double>(rows);
    auto bg = backward_batch(net, fwd, out_grad, act, want_input);
    for (std::size_t j = 0; j < bg.params.size(); ++j) grad[j] += bg.params[j];
    return std::move(bg.input_grads);
  }
};

json standardization_json(const Standardization& s) { return {{"mean", s.mean}, {"scale", s.scale}}; }
Standardization standardization_from(const json& j) {
  return {j.at("mean").get<double>(), j.at("scale").get<double>()};
}

}  // namespace

std::string architecture_name(Architecture a) {
  switch (a) {
    case Architecture::S: return "S";
    case Architecture::T: return "T";
    case Architecture::TAR: return "TAR";
    case Architecture::Dragon: return "Dragon";
  }
  return "?";
}

Architecture architecture_from_name(const std::string& name) {
  std::string n = name;
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return std::toupper(c); });
  if (n == "S" || n == "S-KAN") return Architecture::S;
  if (n == "T" || n == "T-KAN") return Architecture::T;
  if (n == "TAR" || n == "TARKAN") return Architecture::TAR;
  if (n == "DRAGON" || n == "DRAGONKAN") return Architecture::Dragon;
  fail(ErrorKind::config, "unknown architecture '" + name + "'");
}

TreatmentSpace TreatmentSpace::discrete(int k) {
  if (k < 2) fail(ErrorKind::config, "discrete treatment needs K >= 2");
  TreatmentSpace ts;
  ts.kind = k == 2 ? Kind::binary : Kind::discrete;
  ts.arms = k;
  return ts;
}

TreatmentSpace TreatmentSpace::continuous(double t0) {
  TreatmentSpace ts;
  ts.kind = Kind::continuous;
  ts.arms = 0;
  ts.reference = t0;
  return ts;
}

bool TreatmentSpace::contains(double t) const noexcept {
  if (!std::isfinite(t)) return false;
  if (kind == Kind::continuous) return true;
  return t >= 0.0 && t <= arms - 1 && t == std::floor(t);
}

int TreatmentSpace::arm_of(double t) const {
  if (kind == Kind::continuous) fail(ErrorKind::input, "continuous treatment has no arms");
  if (!contains(t)) {
    fail(ErrorKind::input, "treatment value " + std::to_string(t) + " is not an arm label in 0.." +
                               std::to_string(arms - 1));
  }
  return static_cast<int>(t);
}

json TreatmentSpace::to_json() const {
  switch (kind) {
    case Kind::binary: return {{"kind", "binary"}};
    case Kind::discrete: return {{"kind", "discrete"}, {"arms", arms}};
    case Kind::continuous: return {{"kind", "continuous"}, {"reference", reference}};
  }
  return {};
}

TreatmentSpace TreatmentSpace::from_json(const json& doc) {
  const auto kind = doc.at("kind").get<std::string>();
  if (kind == "binary") return binary();
  if (kind == "discrete") return discrete(doc.at("arms").get<int>());
  if (kind == "continuous") return continuous(doc.value("reference", 0.0));
  fail(ErrorKind::config, "unknown treatment kind '" + kind + "'");
}

InputConditioning condition_inputs(const Dataset& train, const TreatmentSpace& ts) {
  InputConditioning c;
  const Scaling s = fit_scaling(train, true);
  c.features = s.features;
  c.outcome = s.outcome;
  for (std::size_t j = 0; j < train.d(); ++j) {
    double lo = INFINITY;
    double hi = -INFINITY;
    for (std::size_t i = 0; i < train.n(); ++i) {
      const double z = c.features[j].apply(train.X(i, j));
      lo = std::min(lo, z);
      hi = std::max(hi, z);
    }
    c.feature_domains.push_back(padded_domain(lo, hi));
  }
  if (ts.is_discrete()) {
    c.treatment_domain = {0.0, static_cast<double>(ts.arms - 1)};
  } else {
    double mean = 0.0;
    for (double t : train.t) mean += t;
    mean /= static_cast<double>(train.n());
    double var = 0.0;
    for (double t : train.t) var += (t - mean) * (t - mean);
    var /= static_cast<double>(train.n());
    c.treatment = {mean, var > 1e-24 ? std::sqrt(var) : 1.0};
    const auto [lo, hi] = std::minmax_element(train.t.begin(), train.t.end());
    c.treatment_domain = padded_domain(c.treatment.apply(*lo), c.treatment.apply(*hi));
  }
  return c;
}

CausalModel build(Architecture arch, const TreatmentSpace& ts, std::size_t input_dim,
                  const HpPoint& hp, std::uint64_t seed, const InputConditioning* conditioning) {
  if (input_dim < 1) fail(ErrorKind::config, "input dimension must be >= 1");
  if (!ts.is_discrete() && arch != Architecture::S) {
    fail(ErrorKind::config, "continuous treatment is only supported by the S architecture");
  }
  if (ts.is_discrete() && ts.arms < 2) fail(ErrorKind::config, "discrete treatment needs K >= 2");
  InputConditioning cond;
  if (conditioning) {
    cond = *conditioning;
    if (cond.features.size() != input_dim || cond.feature_domains.size() != input_dim) {
      fail(ErrorKind::config, "input conditioning does not match the input dimension");
    }
  } else {
    cond.features.assign(input_dim, Standardization{});
    cond.feature_domains.assign(input_dim, {-3.0, 3.0});
    cond.treatment_domain = ts.is_discrete() ? std::pair{0.0, double(ts.arms - 1)}
                                             : std::pair{-3.0, 3.0};
  }

  std::mt19937_64 seeder(seed);
  auto spec_for = [&](std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
    NetworkSpec s;
    s.widths.push_back(in);
    s.widths.insert(s.widths.end(), hidden.begin(), hidden.end());
    s.widths.push_back(out);
    s.grid_size = hp.grid_size;
    s.order = hp.order;
    s.sparse_init = hp.sparse_init;
    s.product_nodes = hp.use_product_nodes;
    s.base = hp.identity_base ? BaseKind::identity : BaseKind::silu;
    return s;
  };

  CausalModel m;
  m.architecture = arch;
  m.treatment = ts;
  m.input_dim = input_dim;
  m.outcome = cond.outcome;
  const std::size_t arms = ts.is_discrete() ? static_cast<std::size_t>(ts.arms) : 0;

  if (arch == Architecture::S) {
    auto s = spec_for(input_dim + 1, hp.hidden_widths, 1);
    s.input_domains = cond.feature_domains;
    s.input_domains.push_back(cond.treatment_domain);
    s.input_standardization = cond.features;
    s.input_standardization.push_back(cond.treatment);
    m.heads.push_back(make_network(s, seeder()));
  } else if (arch == Architecture::T) {
    for (std::size_t k = 0; k < arms; ++k) {
      auto s = spec_for(input_dim, hp.hidden_widths, 1);
      s.input_domains = cond.feature_domains;
      s.input_standardization = cond.features;
      m.heads.push_back(make_network(s, seeder()));
    }
  } else {
    if (hp.rep_width < 1) fail(ErrorKind::config, "representation width must be >= 1");
    auto rs = spec_for(input_dim, hp.hidden_widths, hp.rep_width);
    rs.input_domains = cond.feature_domains;
    rs.input_standardization = cond.features;
    m.representation = make_network(rs, seeder());
    for (std::size_t k = 0; k < arms; ++k) {
      m.heads.push_back(make_network(spec_for(hp.rep_width, hp.head_widths, 1), seeder()));
    }
    if (arch == Architecture::Dragon) {
      const std::size_t outs = arms == 2 ? 1 : arms;
      m.propensity = make_network(spec_for(hp.rep_width, {}, outs), seeder());
    }
  }
  return m;
}

std::vector<KanNetwork*> subnets(CausalModel& m) {
  std::vector<KanNetwork*> out;
  for (auto& h : m.heads) out.push_back(&h);
  if (m.representation) out.push_back(&*m.representation);
  if (m.propensity) out.push_back(&*m.propensity);
  return out;
}

std::vector<const KanNetwork*> subnets(const CausalModel& m) {
  std::vector<const KanNetwork*> out;
  for (const auto& h : m.heads) out.push_back(&h);
  if (m.representation) out.push_back(&*m.representation);
  if (m.propensity) out.push_back(&*m.propensity);
  return out;
}

std::vector<std::string> subnet_names(const CausalModel& m) {
  std::vector<std::string> out;
  if (m.architecture == Architecture::S) {
    out.push_back("outcome");
  } else {
    for (std::size_t k = 0; k < m.heads.size(); ++k) out.push_back("head" + std::to_string(k));
  }
  if (m.representation) out.push_back("representation");
  if (m.propensity) out.push_back("propensity");
  return out;
}

std::vector<double> model_parameters(const CausalModel& m) {
  std::vector<double> p;
  for (const auto* net : subnets(m)) {
    const auto q = net->parameters();
    p.insert(p.end(), q.begin(), q.end());
  }
  return p;
}

void set_model_parameters(CausalModel& m, std::span<const double> params) {
  std::size_t off = 0;
  for (auto* net : subnets(m)) {
    const std::size_t n = net->parameter_count();
    if (off + n > params.size()) fail(ErrorKind::shape, "model parameter vector is too short");
    net->set_parameters(params.subspan(off, n));
    off += n;
  }
  if (off != params.size()) fail(ErrorKind::shape, "model parameter vector is too long");
}

std::vector<Matrix> subnet_inputs(const CausalModel& m, const Dataset& data) {
  check_x(m, data.X);
  std::vector<Matrix> out;
  if (m.architecture == Architecture::S) {
    out.push_back(with_treatment(data.X, data.t));
    return out;
  }
  const Matrix z = representation_of(m, data.X);
  for (std::size_t k = 0; k < m.heads.size(); ++k) out.push_back(m.representation ? z : data.X);
  if (m.representation) out.push_back(data.X);
  if (m.propensity) out.push_back(z);
  return out;
}

Matrix representation_of(const CausalModel& m, const Matrix& x) {
  check_x(m, x);
  if (!m.representation) return x;
  return forward_batch(*m.representation, x).outputs;
}

std::vector<double> predict_mu_batch(const CausalModel& m, const Matrix& x, double t) {
  check_x(m, x);
  if (!m.treatment.contains(t)) {
    fail(ErrorKind::input, "treatment value " + std::to_string(t) + " is outside the treatment space");
  }
  std::vector<double> raw;
  if (m.architecture == Architecture::S) {
    raw = head_outputs(m.heads[0], with_treatment(x, t));
  } else {
    const int arm = m.treatment.arm_of(t);
    raw = head_outputs(m.heads[static_cast<std::size_t>(arm)], representation_of(m, x));
  }
  for (auto& v : raw) v = m.outcome.mean + m.outcome.scale * v;
  return raw;
}

double predict_mu(const CausalModel& m, std::span<const double> x, double t) {
  return predict_mu_batch(m, single_row(x), t)[0];
}

std::vector<double> predict_factual(const CausalModel& m, const Matrix& x,
                                    std::span<const double> t) {
  check_x(m, x);
  if (t.size() != x.rows()) fail(ErrorKind::shape, "treatment vector length mismatch");
  std::vector<double> out(x.rows());
  if (m.architecture == Architecture::S) {
    for (double v : t) {
      if (!m.treatment.contains(v)) fail(ErrorKind::input, "treatment value outside the treatment space");
    }
    out = head_outputs(m.heads[0], with_treatment(x, t));
  } else {
    const Matrix z = representation_of(m, x);
    const auto rows = arm_rows(m.treatment, t);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (rows[k].empty()) continue;
      const auto o = head_outputs(m.heads[k], z.select_rows(rows[k]));
      for (std::size_t i = 0; i < rows[k].size(); ++i) out[rows[k][i]] = o[i];
    }
  }
  for (auto& v : out) v = m.outcome.mean + m.outcome.scale * v;
  return out;
}

namespace {

// scale * (raw_b - raw_a), avoiding the outcome mean so covariate terms
// cancel as exactly as the floating-point sums allow.
std::vector<double> contrast_batch(const CausalModel& m, const Matrix& x, double ta, double tb) {
  check_x(m, x);
  std::vector<double> ra, rb;
  if (m.architecture == Architecture::S) {
    ra = head_outputs(m.heads[0], with_treatment(x, ta));
    rb = head_outputs(m.heads[0], with_treatment(x, tb));
  } else {
    const Matrix z = representation_of(m, x);
    ra = head_outputs(m.heads[static_cast<std::size_t>(m.treatment.arm_of(ta))], z);
    rb = head_outputs(m.heads[static_cast<std::size_t>(m.treatment.arm_of(tb))], z);
  }
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = m.outcome.scale * (rb[i] - ra[i]);
  return out;
}

}  // namespace

std::vector<double> predict_cate_batch(const CausalModel& m, const Matrix& x) {
  if (!m.treatment.is_discrete()) {
    fail(ErrorKind::config, "predict_cate needs a discrete treatment; use cate_continuous");
  }
  return contrast_batch(m, x, 0.0, 1.0);
}

double predict_cate(const CausalModel& m, std::span<const double> x) {
  return predict_cate_batch(m, single_row(x))[0];
}

double pairwise_cate(const CausalModel& m, std::span<const double> x, int a, int b) {
  if (!m.treatment.is_discrete()) fail(ErrorKind::config, "pairwise_cate needs a discrete treatment");
  m.treatment.arm_of(a);
  m.treatment.arm_of(b);
  if (a == b) return 0.0;
  return contrast_batch(m, single_row(x), a, b)[0];
}

Matrix predict_propensity(const CausalModel& m, const Matrix& x) {
  if (!m.propensity) fail(ErrorKind::config, "model has no propensity head");
  const Matrix z = representation_of(m, x);
  Matrix p = propensity_probs(forward_batch(*m.propensity, z).outputs, m.treatment.arms);
  for (auto& v : p.data()) v = std::clamp(v, kPropensityClip, 1.0 - kPropensityClip);
  return p;
}

ObjectiveValue objective(const CausalModel& m, const Dataset& data, double lambda_ps,
                         const RegularizerWeights& reg, std::vector<double>* grad) {
  check_x(m, data.X);
  const std::size_t n = data.n();
  if (n == 0) fail(ErrorKind::input, "objective needs a non-empty batch");
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = m.outcome.apply(data.y[i]);

  const auto nets = subnets(m);
  std::vector<std::size_t> offset;
  std::size_t total_params = 0;
  for (const auto* net : nets) {
    offset.push_back(total_params);
    total_params += net->parameter_count();
  }
  if (grad) grad->assign(total_params, 0.0);
  auto pass_for = [&](std::size_t idx, double* reg_total) {
    std::span<double> g;
    if (grad) g = std::span<double>(grad->data() + offset[idx], nets[idx]->parameter_count());
    return NetPass{*nets[idx], g, reg, reg_total};
  };

  ObjectiveValue v;
  // (standardized prediction - target) -> 2 r / N
  auto squared_loss = [&](const BatchForward& fwd, std::span<const std::size_t> rows) {
    Matrix og(fwd.outputs.rows(), 1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double r = fwd.outputs(i, 0) - y[rows[i]];
      v.outcome += r * r * inv_n;
      og(i, 0) = 2.0 * r * inv_n;
    }
    return og;
  };

  if (m.architecture == Architecture::S) {
    for (double t : data.t) {
      if (!m.treatment.contains(t)) fail(ErrorKind::input, "treatment value outside the treatment space");
    }
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    const auto pass = pass_for(0, &v.regularizer);
    const auto fwd = pass.forward(with_treatment(data.X, data.t));
    pass.backward(fwd, squared_loss(fwd, all), false);
  } else {
    const auto rows = arm_rows(m.treatment, data.t);
    Matrix z;
    BatchForward rep_fwd;
    const std::size_t rep_idx = m.heads.size();
    if (m.representation) {
      rep_fwd = pass_for(rep_idx, &v.regularizer).forward(data.X);
      z = rep_fwd.outputs;
    }
    const Matrix& head_in = m.representation ? z : data.X;
    Matrix dz;
    if (m.representation) dz = Matrix(n, z.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto pass = pass_for(k, &v.regularizer);
      const auto fwd = pass.forward(head_in.select_rows(rows[k]));
      const auto gin = pass.backward(fwd, squared_loss(fwd, rows[k]), grad && m.representation);
      if (!gin.empty()) {
        for (std::size_t i = 0; i < rows[k].size(); ++i) {
          auto dst = dz.row(rows[k][i]);
          const auto src = gin.row(i);
          for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
        }
      }
    }
    if (m.propensity) {
      const auto pass = pass_for(rep_idx + 1, &v.regularizer);
      const auto fwd = pass.forward(z);
      const Matrix p = propensity_probs(fwd.outputs, m.treatment.arms);
      Matrix og(n, fwd.outputs.cols());
      const bool sigmoid_head = fwd.outputs.cols() == 1;
      for (std::size_t i = 0; i < n; ++i) {
        const auto arm = static_cast<std::size_t>(m.treatment.arm_of(data.t[i]));
        const double pf = p(i, arm);
        const double pc = std::clamp(pf, kPropensityClip, 1.0 - kPropensityClip);
        v.propensity -= std::log(pc) * inv_n;
        if (pc != pf) continue;  // flat beyond the clip
        const double w = lambda_ps * inv_n;
        if (sigmoid_head) {
          og(i, 0) = w * (p(i, 1) - (arm == 1 ? 1.0 : 0.0));
        } else {
          for (std::size_t k = 0; k < og.cols(); ++k) og(i, k) = w * (p(i, k) - (k == arm ? 1.0 : 0.0));
        }
      }
      const auto gin = pass.backward(fwd, og, grad != nullptr);
      if (!gin.empty()) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t c = 0; c < dz.cols(); ++c) dz(i, c) += gin(i, c);
        }
      }
    }
    if (m.representation) pass_for(rep_idx, &v.regularizer).backward(rep_fwd, dz, false);
  }
  v.total = v.outcome + lambda_ps * v.propensity + v.regularizer;
  return v;
}

double architecture_loss(const CausalModel& m, const Dataset& data, double lambda_ps) {
  const auto v = objective(m, data, lambda_ps, RegularizerWeights{}, nullptr);
  return v.outcome * m.outcome.scale * m.outcome.scale + lambda_ps * v.propensity;
}

double propensity_log_loss(const CausalModel& m, const Dataset& data) {
  if (!m.propensity) fail(ErrorKind::config, "model has no propensity head");
  return objective(m, data, 1.0, RegularizerWeights{}, nullptr).propensity;
}

std::vector<double> dose_response(const CausalModel& m, std::span<const double> x,
                                  std::span<const double> t_values) {
  if (m.architecture != Architecture::S || m.treatment.is_discrete()) {
    fail(ErrorKind::config, "dose_response needs an S model with continuous treatment");
  }
  const Matrix row = single_row(x);
  check_x(m, row);
  Matrix in(t_values.size(), x.size());
  for (std::size_t i = 0; i < t_values.size(); ++i) std::copy(x.begin(), x.end(), in.row(i).begin());
  auto out = head_outputs(m.heads[0], with_treatment(in, t_values));
  for (auto& v : out) v = m.outcome.mean + m.outcome.scale * v;
  return out;
}

double cate_continuous(const CausalModel& m, std::span<const double> x, double t) {
  if (m.architecture != Architecture::S || m.treatment.is_discrete()) {
    fail(ErrorKind::config, "cate_continuous needs an S model with continuous treatment");
  }
  if (t == m.treatment.reference) return 0.0;
  return contrast_batch(m, single_row(x), m.treatment.reference, t)[0];
}

double EffectCurve::operator()(double t) const {
  if (!edge.active) return 0.0;
  return scale * edge_forward(edge, input.apply(t)).value;
}

EffectCurve effect_curve(const CausalModel& m) {
  if (m.architecture != Architecture::S || !m.heads[0].is_additive()) {
    fail(ErrorKind::structure, "effect curve needs an additive S model");
  }
  const auto& net = m.heads[0];
  return EffectCurve{net.layers[0].edge(0, m.input_dim), net.input_standardization[m.input_dim],
                     m.outcome.scale};
}

std::vector<double> additive_terms(const KanNetwork& net, std::span<const double> x) {
  if (!net.is_additive()) fail(ErrorKind::structure, "network is not additive");
  if (x.size() != net.input_width()) fail(ErrorKind::shape, "input width mismatch");
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t j = 0; j < x.size(); ++j) {
    const auto& e = net.layers[0].edge(0, j);
    if (e.active) out[j] = edge_forward(e, net.input_standardization[j].apply(x[j])).value;
  }
  return out;
}

TkaamDecomposition tkaam_decomposition(const CausalModel& m, std::span<const double> x, int a, int b) {
  if (m.architecture != Architecture::T) fail(ErrorKind::structure, "decomposition needs a T model");
  m.treatment.arm_of(a);
  m.treatment.arm_of(b);
  const auto& ha = m.heads[static_cast<std::size_t>(a)];
  const auto& hb = m.heads[static_cast<std::size_t>(b)];
  if (!ha.is_additive() || !hb.is_additive()) {
    fail(ErrorKind::structure, "decomposition needs additive heads");
  }
  const auto ta = additive_terms(ha, x);
  const auto tb = additive_terms(hb, x);
  TkaamDecomposition d;
  d.contributions.resize(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) d.contributions[j] = m.outcome.scale * (tb[j] - ta[j]);
  d.bias_difference = m.outcome.scale * (hb.output_bias[0] - ha.output_bias[0]);
  return d;
}

KanNetwork merge_shallow_heads(const CausalModel& m) {
  if (!uses_representation(m.architecture)) {
    fail(ErrorKind::structure, "only TAR/Dragon models have heads on a shared representation");
  }
  KanNetwork out;
  KanLayer merged;
  merged.n_in = m.heads.front().input_width();
  for (const auto& h : m.heads) {
    if (h.depth() != 1 || h.output_width() != 1) {
      fail(ErrorKind::structure, "heads with hidden layers cannot be merged");
    }
    merged.edges.insert(merged.edges.end(), h.layers[0].edges.begin(), h.layers[0].edges.end());
    merged.node_kinds.push_back(h.layers[0].node_kinds[0]);
    out.output_bias.push_back(h.output_bias[0]);
  }
  merged.n_out = m.heads.size();
  out.layers.push_back(std::move(merged));
  out.input_standardization = m.heads.front().input_standardization;
  out.validate();
  return out;
}

json model_to_json(const CausalModel& m) {
  json heads = json::array();
  for (const auto& h : m.heads) heads.push_back(network_to_json(h));
  json j{{"format", "causalkan.model"},
         {"version", 1},
         {"architecture", architecture_name(m.architecture)},
         {"treatment", m.treatment.to_json()},
         {"input_dim", m.input_dim},
         {"outcome", standardization_json(m.outcome)},
         {"heads", std::move(heads)}};
  if (m.representation) j["representation"] = network_to_json(*m.representation);
  if (m.propensity) j["propensity"] = network_to_json(*m.propensity);
  return j;
}

CausalModel model_from_json(const json& doc) {
  try {
    if (doc.value("format", "") != "causalkan.model") fail(ErrorKind::parse, "not a model document");
    if (doc.at("version").get<int>() != 1) fail(ErrorKind::parse, "unsupported model version");
    CausalModel m;
    m.architecture = architecture_from_name(doc.at("architecture").get<std::string>());
    m.treatment = TreatmentSpace::from_json(doc.at("treatment"));
    m.input_dim = doc.at("input_dim").get<std::size_t>();
    m.outcome = standardization_from(doc.at("outcome"));
    for (const auto& h : doc.at("heads")) m.heads.push_back(network_from_json(h));
    if (doc.contains("representation")) m.representation = network_from_json(doc.at("representation"));
    if (doc.contains("propensity")) m.propensity = network_from_json(doc.at("propensity"));
    if (m.heads.empty()) fail(ErrorKind::parse, "model has no heads");
    return m;
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("model document: ") + e.what());
  }
}

}  // namespace causalkan
