#include "causalkan/simplify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "causalkan/error.hpp"
#include "causalkan/kernels.hpp"
#include "causalkan/metrics.hpp"

namespace causalkan {

using nlohmann::json;

void SimplifyBudgets::validate() const {
  if (!(gamma_prune >= 0.0)) fail(ErrorKind::config, "simplify.gamma_prune must be >= 0");
  if (!(gamma_r2 >= 0.0)) fail(ErrorKind::config, "simplify.gamma_r2 must be >= 0");
  if (!(budget_prune >= 0.0)) fail(ErrorKind::config, "simplify.budget_prune must be >= 0");
  if (!(budget_symb >= 0.0)) fail(ErrorKind::config, "simplify.budget_symb must be >= 0");
  if (truncate_decimals < 0) fail(ErrorKind::config, "simplify.truncate_decimals must be >= 0");
  if (retrain_epochs < 0) fail(ErrorKind::config, "simplify.retrain_epochs must be >= 0");
}

json SimplifyBudgets::to_json() const {
  return {{"gamma_prune", gamma_prune},       {"gamma_r2", gamma_r2},
          {"budget_prune", budget_prune},     {"budget_symb", budget_symb},
          {"truncate_decimals", truncate_decimals},
          {"budget_mode", mode == BudgetMode::absolute ? "absolute" : "relative"},
          {"retrain_epochs", retrain_epochs}};
}

SimplifyBudgets SimplifyBudgets::from_json(const json& doc) {
  SimplifyBudgets b;
  try {
    b.gamma_prune = doc.value("gamma_prune", b.gamma_prune);
    b.gamma_r2 = doc.value("gamma_r2", b.gamma_r2);
    b.budget_prune = doc.value("budget_prune", b.budget_prune);
    b.budget_symb = doc.value("budget_symb", b.budget_symb);
    b.truncate_decimals = doc.value("truncate_decimals", b.truncate_decimals);
    b.retrain_epochs = doc.value("retrain_epochs", b.retrain_epochs);
    const auto mode = doc.value("budget_mode", std::string("absolute"));
    if (mode == "absolute") {
      b.mode = BudgetMode::absolute;
    } else if (mode == "relative") {
      b.mode = BudgetMode::relative;
    } else {
      fail(ErrorKind::config, "simplify.budget_mode must be \"absolute\" or \"relative\"");
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("simplify: ") + e.what());
  }
  b.validate();
  return b;
}

bool gate_accepts(double l_ref, double l_new, double budget, BudgetMode mode) {
  if (!std::isfinite(l_new)) return false;
  const double allowed = mode == BudgetMode::absolute ? budget : budget * std::abs(l_ref);
  return l_new - l_ref <= allowed + kGateSlack * std::max(1.0, std::abs(l_ref));
}

json LogRecord::to_json() const {
  return {{"stage", stage},         {"action", action},     {"val_metric_before", val_before},
          {"val_metric_after", val_after}, {"accepted", accepted}, {"detail", detail}};
}

std::string PipelineLog::to_jsonl() const {
  std::string out;
  for (const auto& r : records) out += r.to_json().dump() + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Atom fitting

namespace {

constexpr std::size_t kMinSamples = 8;
constexpr std::size_t kGridSamples = 256;
constexpr int kScaleSteps = 16;
constexpr int kShiftSteps = 49;
constexpr int kRefineSteps = 10;

struct Moments {
  double mean = 0.0;
  double sst = 0.0;
};

Moments moments(std::span<const double> y) {
  Moments m;
  for (double v : y) m.mean += v;
  m.mean /= static_cast<double>(y.size());
  for (double v : y) m.sst += (v - m.mean) * (v - m.mean);
  return m;
}

double sse_of(const AtomFit& f, std::span<const double> z, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double r = f.value(z[i]) - y[i];
    s += r * r;
  }
  return s;
}

AtomFit fit_polynomial(std::span<const double> z, std::span<const double> y, AtomId atom) {
  const int deg = polynomial_degree(atom);
  const auto n = static_cast<Eigen::Index>(z.size());
  Eigen::MatrixXd A(n, deg + 1);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double p = 1.0;
    for (int j = 0; j <= deg; ++j) {
      A(i, j) = p;
      p *= z[static_cast<std::size_t>(i)];
    }
    rhs(i) = y[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd coef = A.colPivHouseholderQr().solve(rhs);
  AtomFit f;
  f.atom = atom;
  f.poly.assign(coef.data(), coef.data() + coef.size());
  return f;
}

bool guard_ok(AtomId atom, double a, double b, double lo, double hi) {
  return std::isfinite(a) && std::isfinite(b) && atom_valid_on(atom, a * lo + b, a * hi + b);
}

// Levenberg-Marquardt on (a, b, c, d).
void refine(AtomFit& f, std::span<const double> z, std::span<const double> y, double lo, double hi) {
  double sse = sse_of(f, z, y);
  double mu = 1e-3;
  for (int step = 0; step < kRefineSteps; ++step) {
    Eigen::Matrix4d jtj = Eigen::Matrix4d::Zero();
    Eigen::Vector4d jtr = Eigen::Vector4d::Zero();
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double u = f.a * z[i] + f.b;
      const double fv = atom_value(f.atom, u);
      const double fs = atom_slope(f.atom, u);
      const Eigen::Vector4d j(f.c * fs * z[i], f.c * fs, fv, 1.0);
      const double r = f.c * fv + f.d - y[i];
      jtj.noalias() += j * j.transpose();
      jtr.noalias() += j * r;
    }
    bool improved = false;
    for (int attempt = 0; attempt < 6 && !improved; ++attempt) {
      Eigen::Matrix4d lhs = jtj;
      for (int k = 0; k < 4; ++k) lhs(k, k) += mu * jtj(k, k) + 1e-12;
      const Eigen::Vector4d delta = lhs.ldlt().solve(-jtr);
      AtomFit cand = f;
      cand.a += delta(0);
      cand.b += delta(1);
      cand.c += delta(2);
      cand.d += delta(3);
      if (delta.allFinite() && guard_ok(cand.atom, cand.a, cand.b, lo, hi)) {
        const double s = sse_of(cand, z, y);
        if (s < sse) {
          f = cand;
          sse = s;
          mu = std::max(mu / 3.0, 1e-12);
          improved = true;
          continue;
        }
      }
      mu *= 4.0;
    }
    if (!improved) break;
  }
}

std::optional<AtomFit> fit_wrapped(std::span<const double> z, std::span<const double> y, AtomId atom,
                                   double lo, double hi) {
  const auto [zmin_it, zmax_it] = std::minmax_element(z.begin(), z.end());
  double range = *zmax_it - *zmin_it;
  if (!(range > 0.0)) range = 1.0;

  // Coarse search on an evenly strided subsample.
  const std::size_t stride = std::max<std::size_t>(1, z.size() / kGridSamples);
  std::vector<double> zs, ys;
  for (std::size_t i = 0; i < z.size(); i += stride) {
    zs.push_back(z[i]);
    ys.push_back(y[i]);
  }
  const double ns = static_cast<double>(zs.size());
  double ymean = 0.0;
  for (double v : ys) ymean += v;
  ymean /= ns;
  double syy = 0.0;
  for (double v : ys) syy += (v - ymean) * (v - ymean);

  std::optional<AtomFit> best;
  double best_sse = INFINITY;
  std::vector<double> fv(zs.size());
  for (int sign : {1, -1}) {
    for (int i = 0; i < kScaleSteps; ++i) {
      const double a = sign * std::pow(10.0, -1.0 + 2.0 * i / (kScaleSteps - 1));
      for (int j = 0; j < kShiftSteps; ++j) {
        const double b = -3.0 * range + 6.0 * range * j / (kShiftSteps - 1);
        if (!guard_ok(atom, a, b, lo, hi)) continue;
        double fm = 0.0;
        for (std::size_t k = 0; k < zs.size(); ++k) {
          fv[k] = atom_value(atom, a * zs[k] + b);
          fm += fv[k];
        }
        fm /= ns;
        double sff = 0.0, sfy = 0.0;
        for (std::size_t k = 0; k < zs.size(); ++k) {
          sff += (fv[k] - fm) * (fv[k] - fm);
          sfy += (fv[k] - fm) * (ys[k] - ymean);
        }
        if (!(sff > 1e-14 * ns) || !std::isfinite(sff)) continue;
        const double sse = syy - sfy * sfy / sff;
        if (sse < best_sse) {
          best_sse = sse;
          AtomFit f;
          f.atom = atom;
          f.a = a;
          f.b = b;
          f.c = sfy / sff;
          f.d = ymean - f.c * fm;
          best = f;
        }
      }
    }
  }
  if (!best) return std::nullopt;
  refine(*best, z, y, lo, hi);
  return best;
}

}  // namespace

std::optional<AtomFit> fit_atom(std::span<const double> z, std::span<const double> y, AtomId atom,
                                std::optional<std::pair<double, double>> guard) {
  if (z.size() != y.size()) fail(ErrorKind::shape, "fit_atom: sample length mismatch");
  if (z.size() < kMinSamples) {
    fail(ErrorKind::input, "fit_atom needs at least 8 samples, got " + std::to_string(z.size()));
  }
  if (atom == AtomId::constant) fail(ErrorKind::input, "fit_atom: constant is not a dictionary atom");
  const Moments m = moments(y);
  if (m.sst / static_cast<double>(y.size()) <= 1e-12) {
    fail(ErrorKind::degenerate_target, "fit_atom: target is constant");
  }
  const auto [zlo, zhi] = std::minmax_element(z.begin(), z.end());
  double lo = *zlo, hi = *zhi;
  if (guard) {
    lo = std::min(lo, guard->first);
    hi = std::max(hi, guard->second);
  }
  std::optional<AtomFit> f;
  if (is_polynomial(atom)) {
    f = fit_polynomial(z, y, atom);
  } else {
    f = fit_wrapped(z, y, atom, lo, hi);
  }
  if (!f) return std::nullopt;
  f->r2 = 1.0 - sse_of(*f, z, y) / m.sst;
  if (!std::isfinite(f->r2)) return std::nullopt;
  return f;
}

AtomSearch search_atoms(std::span<const double> z, std::span<const double> y, double gamma_r2,
                        std::optional<std::pair<double, double>> guard) {
  AtomSearch s;
  const Moments m = moments(y);
  if (m.sst / static_cast<double>(y.size()) <= 1e-12) {
    s.fit.atom = AtomId::constant;
    s.fit.poly = {m.mean};
    s.fit.r2 = 1.0;
    return s;
  }
  bool have = false;
  for (AtomId atom : atom_dictionary()) {
    s.tried.push_back(atom);
    const auto f = fit_atom(z, y, atom, guard);
    if (!f) continue;
    if (f->r2 >= gamma_r2) {
      s.fit = *f;
      s.early_exit = true;
      return s;
    }
    if (!have || f->r2 > s.fit.r2 + 1e-9) {
      s.fit = *f;
      have = true;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Gates

namespace {

std::size_t active_edges(const CausalModel& m) {
  std::size_t n = 0;
  for (const auto* net : subnets(m)) n += net->active_edge_count();
  return n;
}

double safe_predictive_loss(const CausalModel& m, const Dataset& val, std::string& error) {
  try {
    return predictive_loss(m, val);
  } catch (const Error& e) {
    error = e.what();
    return INFINITY;
  }
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(6);
  ss << v;
  return ss.str();
}

}  // namespace

GateResult prune_gate(const CausalModel& m, const SplitDataset& split, const SimplifyBudgets& b,
                      double l_ref, const TrainConfig& retrain) {
  b.validate();
  GateResult res;
  res.record.stage = "pruned";
  res.record.action = "prune";
  res.record.val_before = l_ref;

  CausalModel pruned = m;
  const auto inputs = subnet_inputs(m, split.train);
  auto nets = subnets(pruned);
  for (std::size_t i = 0; i < nets.size(); ++i) {
    const auto scores = edge_importance(*nets[i], inputs[i]);
    *nets[i] = prune(*nets[i], b.gamma_prune, scores);
  }
  const std::size_t before = active_edges(m);
  const std::size_t after = active_edges(pruned);
  if (after == before) {
    res.model = m;
    res.val_loss = l_ref;
    res.record.val_after = l_ref;
    res.record.accepted = true;
    res.record.detail = "no edge scored below gamma_prune=" + fmt(b.gamma_prune) + "; model unchanged";
    return res;
  }
  std::string detail = "removed " + std::to_string(before - after) + " of " + std::to_string(before) +
                       " active edges";
  if (b.retrain_epochs > 0) {
    TrainConfig cfg = retrain;
    cfg.max_epochs = b.retrain_epochs;
    cfg.patience = b.retrain_epochs;
    try {
      fit(pruned, split, cfg);
      detail += "; retrained " + std::to_string(b.retrain_epochs) + " epochs";
    } catch (const Error& e) {
      detail += "; retraining failed (" + std::string(e.what()) + ")";
    }
  }
  std::string error;
  const double l_new = safe_predictive_loss(pruned, split.val, error);
  res.record.val_after = l_new;
  res.record.accepted = gate_accepts(l_ref, l_new, b.budget_prune, b.mode);
  if (!error.empty()) detail += "; evaluation failed: " + error;
  if (res.record.accepted) {
    res.model = std::move(pruned);
    res.val_loss = l_new;
  } else {
    res.model = m;
    res.val_loss = l_ref;
    detail += "; reverted (increase " + fmt(l_new - l_ref) + " exceeds budget " + fmt(b.budget_prune) + ")";
  }
  res.record.detail = detail;
  return res;
}

namespace {

constexpr std::size_t kMaxFitSamples = 2000;

struct EdgeTask {
  std::size_t subnet, layer, edge;
  std::vector<double> z, phi;
  std::pair<double, double> guard;
};

}  // namespace

GateResult symbolify(const CausalModel& m, const Dataset& train, const Dataset& val,
                     const SimplifyBudgets& b, double l_ref) {
  b.validate();
  GateResult res;
  res.record.stage = "formula";
  res.record.action = "symbolify";
  res.record.val_before = l_ref;

  // Samples come from the pre-symbolification snapshot, so every edge fit is
  // independent of the others.
  const auto inputs = subnet_inputs(m, train);
  const auto nets = subnets(m);
  std::vector<EdgeTask> tasks;
  for (std::size_t i = 0; i < nets.size(); ++i) {
    const KanNetwork& net = *nets[i];
    const auto fwd = forward_batch(net, inputs[i]);
    const std::size_t rows = fwd.buffers.rows();
    const std::size_t stride = std::max<std::size_t>(1, (rows + kMaxFitSamples - 1) / kMaxFitSamples);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      const KanLayer& layer = net.layers[l];
      for (std::size_t ei = 0; ei < layer.edges.size(); ++ei) {
        const EdgeFunction& e = layer.edges[ei];
        if (!e.active || e.symbolic) continue;
        EdgeTask t{i, l, ei, {}, {}, {e.grid.domain_min(), e.grid.domain_max()}};
        const std::size_t col = fwd.layout.activation_offset[l] + ei % layer.n_in;
        for (std::size_t r = 0; r < rows; r += stride) {
          const double z = fwd.buffers(r, col);
          t.z.push_back(z);
          t.phi.push_back(edge_forward(e, z).value);
        }
        tasks.push_back(std::move(t));
      }
    }
  }

  std::vector<AtomSearch> found(tasks.size());
  std::string error;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    try {
      found[k] = search_atoms(tasks[k].z, tasks[k].phi, b.gamma_r2, tasks[k].guard);
    } catch (const Error& e) {
#pragma omp critical(causalkan_symbolify_error)
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) {
    res.model = m;
    res.val_loss = l_ref;
    res.record.val_after = l_ref;
    res.record.detail = "atom fitting failed: " + error + "; rolled back";
    return res;
  }

  CausalModel sym = m;
  auto sym_nets = subnets(sym);
  std::size_t early = 0;
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    const auto& t = tasks[k];
    sym_nets[t.subnet]->layers[t.layer].edges[t.edge].symbolic = found[k].fit;
    early += found[k].early_exit ? 1 : 0;
    const auto& layer = nets[t.subnet]->layers[t.layer];
    res.edges.push_back({t.subnet, t.layer, t.edge / layer.n_in, t.edge % layer.n_in, found[k]});
  }

  std::string eval_error;
  const double l_new = safe_predictive_loss(sym, val, eval_error);
  res.record.val_after = l_new;
  res.record.accepted = gate_accepts(l_ref, l_new, b.budget_symb, b.mode);
  std::string detail = "symbolified " + std::to_string(tasks.size()) + " edges (" + std::to_string(early) +
                       " by early exit at gamma_r2=" + fmt(b.gamma_r2) + ")";
  if (!eval_error.empty()) detail += "; evaluation failed: " + eval_error;
  if (res.record.accepted) {
    res.model = std::move(sym);
    res.val_loss = l_new;
  } else {
    res.model = m;
    res.val_loss = l_ref;
    detail += "; rolled back (increase " + fmt(l_new - l_ref) + " exceeds budget " + fmt(b.budget_symb) + ")";
  }
  res.record.detail = detail;
  return res;
}

// ---------------------------------------------------------------------------
// Composition

namespace {

Expr edge_expression(const EdgeFunction& e, const Expr& u) {
  if (!e.symbolic) fail(ErrorKind::structure, "active edge has no symbolic form");
  const AtomFit& f = *e.symbolic;
  if (!is_polynomial(f.atom)) return make_apply(f.atom, f.a, f.b, f.c, f.d, u);
  static constexpr AtomId powers[] = {AtomId::identity, AtomId::identity, AtomId::poly2, AtomId::poly3,
                                      AtomId::poly4};
  std::vector<Expr> terms;
  for (std::size_t j = 1; j < f.poly.size(); ++j) {
    if (f.poly[j] != 0.0) terms.push_back(make_apply(powers[j], 1.0, 0.0, f.poly[j], 0.0, u));
  }
  terms.push_back(make_const(f.poly.empty() ? 0.0 : f.poly[0]));
  if (terms.size() == 1) return terms[0];
  return make_sum(std::move(terms));
}

Expr standardized(const Expr& x, const Standardization& s) {
  if (s.mean == 0.0 && s.scale == 1.0) return x;
  return make_apply(AtomId::identity, 1.0 / s.scale, -s.mean / s.scale, 1.0, 0.0, x);
}

Expr outcome_units(const Expr& raw, const Standardization& s) {
  return make_apply(AtomId::identity, 1.0, 0.0, s.scale, s.mean, raw);
}

}  // namespace

std::vector<Expr> network_expression(const KanNetwork& net, const std::vector<Expr>& inputs) {
  if (inputs.size() != net.input_width()) fail(ErrorKind::shape, "input expression count mismatch");
  std::vector<Expr> cur;
  for (std::size_t r = 0; r < inputs.size(); ++r) {
    cur.push_back(standardized(inputs[r], net.input_standardization[r]));
  }
  for (const auto& layer : net.layers) {
    std::vector<Expr> next;
    for (std::size_t s = 0; s < layer.n_out; ++s) {
      std::vector<Expr> parts;
      for (std::size_t r = 0; r < layer.n_in; ++r) {
        const auto& e = layer.edge(s, r);
        if (e.active) parts.push_back(edge_expression(e, cur[r]));
      }
      const bool product = layer.node_kinds[s] == NodeKind::product;
      if (parts.empty()) {
        next.push_back(make_const(product ? 1.0 : 0.0));
      } else if (parts.size() == 1) {
        next.push_back(parts[0]);
      } else {
        next.push_back(product ? make_prod(std::move(parts)) : make_sum(std::move(parts)));
      }
    }
    cur = std::move(next);
  }
  for (std::size_t s = 0; s < cur.size(); ++s) {
    if (net.output_bias[s] != 0.0) cur[s] = make_sum({cur[s], make_const(net.output_bias[s])});
  }
  return cur;
}

ModelExpressions compose_expression(const CausalModel& m) {
  ModelExpressions out;
  out.input_dim = m.input_dim;
  std::vector<Expr> x;
  for (std::size_t j = 0; j < m.input_dim; ++j) x.push_back(make_var(j));

  if (m.architecture == Architecture::S) {
    auto head_at = [&](Expr t) {
      auto in = x;
      in.push_back(std::move(t));
      return outcome_units(network_expression(m.heads[0], in)[0], m.outcome);
    };
    if (m.treatment.is_discrete()) {
      for (int k = 0; k < m.treatment.arms; ++k) out.mu.push_back(head_at(make_const(k)));
    } else {
      out.treatment_var = true;
      out.mu.push_back(head_at(make_var(m.input_dim)));
      out.cate = make_sum({out.mu[0], negate(head_at(make_const(m.treatment.reference)))});
      return out;
    }
  } else {
    std::vector<Expr> z = x;
    if (m.representation) z = network_expression(*m.representation, x);
    for (const auto& h : m.heads) out.mu.push_back(outcome_units(network_expression(h, z)[0], m.outcome));
  }
  out.cate = make_sum({out.mu[1], negate(out.mu[0])});
  return out;
}

ModelExpressions simplify_expressions(const ModelExpressions& e) {
  ModelExpressions out = e;
  for (auto& mu : out.mu) mu = simplify_algebra(mu);
  if (out.cate) out.cate = simplify_algebra(out.cate);
  return out;
}

ModelExpressions truncate_expressions(const ModelExpressions& e, int decimals) {
  ModelExpressions out = e;
  for (auto& mu : out.mu) mu = truncate(mu, decimals);
  if (out.cate) out.cate = truncate(out.cate, decimals);
  return out;
}

json ModelExpressions::to_json() const {
  const auto n = names();
  json mus = json::array();
  json texts = json::array();
  for (const auto& e : mu) {
    mus.push_back(expr_to_json(e));
    texts.push_back(expr_render(e, n));
  }
  json j{{"format", "causalkan.formula"},
         {"version", 1},
         {"input_dim", input_dim},
         {"treatment_var", treatment_var},
         {"variables", n},
         {"mu", std::move(mus)},
         {"mu_text", std::move(texts)}};
  if (cate) {
    j["cate"] = expr_to_json(cate);
    j["cate_text"] = expr_render(cate, n);
  }
  return j;
}

ModelExpressions ModelExpressions::from_json(const json& doc) {
  try {
    if (doc.value("format", "") != "causalkan.formula") fail(ErrorKind::parse, "not a formula document");
    ModelExpressions e;
    e.input_dim = doc.at("input_dim").get<std::size_t>();
    e.treatment_var = doc.at("treatment_var").get<bool>();
    for (const auto& m : doc.at("mu")) e.mu.push_back(expr_from_json(m));
    if (doc.contains("cate")) e.cate = expr_from_json(doc.at("cate"));
    return e;
  } catch (const json::exception& ex) {
    fail(ErrorKind::parse, std::string("formula document: ") + ex.what());
  }
}

std::vector<double> eval_batch(const Expr& e, const Matrix& x, std::span<const double> t) {
  std::vector<double> out(x.rows());
  std::vector<double> vars(x.cols() + 1, 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto row = x.row(i);
    std::copy(row.begin(), row.end(), vars.begin());
    vars[x.cols()] = t.empty() ? 0.0 : t[i];
    out[i] = expr_eval(e, t.empty() ? std::span<const double>(vars).first(x.cols()) : vars);
  }
  return out;
}

}  // namespace causalkan
