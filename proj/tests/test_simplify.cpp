#include <random>

#include "causalkan/kan_io.hpp"
#include "causalkan/simplify.hpp"
#include "support.hpp"

using namespace causalkan;

namespace {

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

void randomize(CausalModel& m, std::uint64_t seed, double sd = 0.4) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, sd);
  auto p = model_parameters(m);
  for (auto& v : p) v = z(rng);
  set_model_parameters(m, p);
}

std::string dump(const CausalModel& m) { return model_to_json(m).dump(); }

// Covariates inside the default [-3, 3] build domains; y from the model plus noise.
Dataset planted_data(const CausalModel& m, std::size_t n, std::uint64_t seed, double noise) {
  Dataset d;
  d.X = test::random_matrix(n, m.input_dim, seed, 0.9);
  for (auto& v : d.X.data()) v = std::clamp(v, -2.9, 2.9);
  d.t.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.t[i] = static_cast<double>(i % 2);
  d.y = predict_factual(m, d.X, d.t);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> z(0.0, noise);
  for (auto& v : d.y) v += z(rng);
  d.validate();
  return d;
}

HpPoint cubic_identity() {
  HpPoint hp;
  hp.grid_size = 1;
  hp.order = 3;
  hp.identity_base = true;
  hp.rep_width = 2;
  return hp;
}

SimplifyBudgets exact_budgets() {
  SimplifyBudgets b;
  b.gamma_prune = 0.0;
  b.gamma_r2 = 1.0 - 1e-12;
  b.budget_prune = 0.0;
  b.budget_symb = 0.0;
  b.truncate_decimals = 12;
  return b;
}

}  // namespace

TEST_CASE("budgets") {
  SimplifyBudgets b;
  CHECK_NOTHROW(b.validate());
  b.gamma_r2 = 1.5;
  CHECK_NOTHROW(b.validate());  // unreachable threshold is allowed; early exit never fires
  b = {};
  b.budget_symb = -1;
  CHECK_KIND(b.validate(), ErrorKind::config);
  b = {};
  b.truncate_decimals = -1;
  CHECK_KIND(b.validate(), ErrorKind::config);
  b = {};
  b.mode = BudgetMode::relative;
  b.gamma_prune = 0.2;
  const auto back = SimplifyBudgets::from_json(b.to_json());
  CHECK(back.to_json() == b.to_json());
  CHECK(back.mode == BudgetMode::relative);
}

TEST_CASE("gate arithmetic") {
  CHECK(gate_accepts(1.0, 1.0, 0.0, BudgetMode::absolute));
  CHECK(gate_accepts(1.0, 1.5, 0.5, BudgetMode::absolute));
  CHECK_FALSE(gate_accepts(1.0, 1.6, 0.5, BudgetMode::absolute));
  CHECK(gate_accepts(2.0, 2.2, 0.1, BudgetMode::relative));
  CHECK_FALSE(gate_accepts(2.0, 2.3, 0.1, BudgetMode::relative));
  CHECK(gate_accepts(1.0, 0.5, 0.0, BudgetMode::absolute));
  CHECK(gate_accepts(1.0, 1.0 + 1e-14, 0.0, BudgetMode::absolute));
  CHECK_FALSE(gate_accepts(1.0, 1.0 + 1e-6, 0.0, BudgetMode::absolute));
  CHECK_FALSE(gate_accepts(1.0, NAN, 10.0, BudgetMode::absolute));
  CHECK_FALSE(gate_accepts(1.0, INFINITY, 10.0, BudgetMode::absolute));
}

TEST_CASE("fit_atom examples") {
  const auto z = linspace(-3.0, 3.0, 200);
  std::vector<double> y(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) y[i] = 3.0 * std::sin(2.0 * z[i] + 1.0) + 4.0;
  const auto f = fit_atom(z, y, AtomId::sin);
  REQUIRE(f.has_value());
  CHECK(f->r2 >= 0.999);
  CHECK(std::abs(f->c) == doctest::Approx(3.0).epsilon(1e-3));
  CHECK(f->d == doctest::Approx(4.0).epsilon(1e-3));
  CHECK(std::abs(f->a) == doctest::Approx(2.0).epsilon(1e-3));

  for (std::size_t i = 0; i < z.size(); ++i) y[i] = -0.7 * z[i] + 2.0;
  const auto line = fit_atom(z, y, AtomId::identity);
  REQUIRE(line.has_value());
  CHECK(line->r2 >= 1.0 - 1e-15);
  CHECK(line->poly[0] == doctest::Approx(2.0).epsilon(1e-13));
  CHECK(line->poly[1] == doctest::Approx(-0.7).epsilon(1e-13));

  std::vector<double> flat(z.size(), 1.25);
  CHECK_KIND(fit_atom(z, flat, AtomId::sin), ErrorKind::degenerate_target);
  CHECK_KIND(fit_atom(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 4}, AtomId::identity),
             ErrorKind::input);

  // log only accepts (a, b) that keep a z + b > 0 over the guard.
  for (std::size_t i = 0; i < z.size(); ++i) y[i] = 2.0 * std::log(z[i] + 4.0) - 1.0;
  const auto lg = fit_atom(z, y, AtomId::log, std::pair{-3.5, 3.5});
  REQUIRE(lg.has_value());
  CHECK(lg->r2 > 0.999);
  for (double g : linspace(-3.5, 3.5, 50)) CHECK(lg->valid_at(g));
}

TEST_CASE("polynomial atoms fit exactly") {
  const auto z = linspace(-2.0, 2.0, 64);
  std::vector<double> y(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) y[i] = 0.5 * std::pow(z[i], 3) - z[i] * z[i] + 0.25;
  const auto p2 = fit_atom(z, y, AtomId::poly2);
  const auto p3 = fit_atom(z, y, AtomId::poly3);
  CHECK(p2->r2 < 0.99);
  CHECK(p3->r2 > 1.0 - 1e-13);
  REQUIRE(p3->poly.size() == 4);
  CHECK(p3->poly[3] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p3->value(1.3) == doctest::Approx(0.5 * 1.3 * 1.3 * 1.3 - 1.3 * 1.3 + 0.25).epsilon(1e-12));
}

TEST_CASE("atom search ordering") {
  std::mt19937_64 rng(4);
  const auto z = linspace(-3.0, 3.0, 120);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const AtomId targets[] = {AtomId::identity, AtomId::poly3, AtomId::sin, AtomId::tanh, AtomId::exp, AtomId::cos};
  for (int rep = 0; rep < 12; ++rep) {
    const AtomId id = targets[rep % 6];
    const double a = 0.3 + std::abs(u(rng)), b = 0.3 * u(rng), c = 1 + u(rng), d = u(rng);
    std::vector<double> y(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) y[i] = c * atom_value(id, a * z[i] + b) + d;
    for (double gamma : {0.9, 0.999, 1.01}) {
      const auto s = search_atoms(z, y, gamma);
      for (std::size_t i = 1; i < s.tried.size(); ++i) CHECK(complexity_rank(s.tried[i - 1]) < complexity_rank(s.tried[i]));
      if (s.early_exit) {
        CHECK(s.fit.r2 >= gamma);
        CHECK(s.tried.back() == s.fit.atom);
        for (auto t : s.tried) CHECK(complexity_rank(t) <= complexity_rank(s.fit.atom));
      } else {
        CHECK(s.tried.size() == atom_dictionary().size());
      }
      if (gamma > 1.0) CHECK_FALSE(s.early_exit);
    }
  }
  const std::vector<double> flat(z.size(), -2.0);
  const auto c = search_atoms(z, flat, 0.9);
  CHECK(c.fit.atom == AtomId::constant);
  CHECK(c.fit.value(0.7) == -2.0);
}

TEST_CASE("prune gate") {
  auto m = build(Architecture::T, TreatmentSpace::binary(), 3, cubic_identity(), 1);
  randomize(m, 2);
  auto& dead = m.heads[0].layers[0].edge(0, 2);
  dead.w_b = 0.0;
  std::fill(dead.coeffs.begin(), dead.coeffs.end(), 0.0);
  const auto data = planted_data(m, 200, 3, 0.1);
  const auto sp = split(data, 4);
  const double l_ref = predictive_loss(m, sp.val);
  TrainConfig retrain;

  SimplifyBudgets b;
  b.gamma_prune = 0.0;
  const auto g0 = prune_gate(m, sp, b, l_ref, retrain);
  CHECK(g0.record.accepted);
  CHECK(dump(g0.model) == dump(m));
  CHECK(g0.val_loss == l_ref);
  CHECK(g0.record.stage == "pruned");

  // Only the dead edge scores below a tiny threshold; no retrain needed.
  b.gamma_prune = 1e-12;
  b.budget_prune = 0.0;
  b.retrain_epochs = 0;
  const auto g1 = prune_gate(m, sp, b, l_ref, retrain);
  CHECK(g1.record.accepted);
  CHECK_FALSE(g1.model.heads[0].layers[0].edge(0, 2).active);
  CHECK(g1.val_loss == doctest::Approx(l_ref).epsilon(1e-12));

  // Pruning everything with no retraining and no budget is rejected and reverted.
  b.gamma_prune = 1e9;
  b.retrain_epochs = 0;
  const auto g2 = prune_gate(m, sp, b, l_ref, retrain);
  CHECK_FALSE(g2.record.accepted);
  CHECK(dump(g2.model) == dump(m));
  CHECK(g2.val_loss == l_ref);
  CHECK(g2.record.val_after > g2.record.val_before);
}

TEST_CASE("symbolify planted polynomials is lossless") {
  for (auto arch : {Architecture::S, Architecture::T, Architecture::TAR}) {
    auto m = build(arch, TreatmentSpace::binary(), 3, cubic_identity(), 5);
    randomize(m, 6, 0.3);
    const auto data = planted_data(m, 300, 7, 0.0);
    const auto sp = split(data, 8);
    const double l_ref = predictive_loss(m, sp.val);
    const auto g = symbolify(m, sp.train, sp.val, exact_budgets(), l_ref);
    CHECK_MESSAGE(g.record.accepted, architecture_name(arch), " ", g.record.detail);
    for (const auto* net : subnets(g.model)) CHECK(net->fully_symbolic());
    CHECK(std::abs(g.val_loss - l_ref) <= 1e-9);
    for (const auto& e : g.edges) {
      if (e.search.fit.atom != AtomId::constant) CHECK(is_polynomial(e.search.fit.atom));
    }
    Matrix xs = test::random_matrix(200, 3, 9, 0.9);
    for (auto& v : xs.data()) v = std::clamp(v, -2.9, 2.9);
    const auto a = predict_cate_batch(m, xs);
    const auto s = predict_cate_batch(g.model, xs);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK_MESSAGE(std::abs(a[i] - s[i]) < 1e-9, architecture_name(arch));
  }
}

TEST_CASE("symbolify rollback is bit-identical") {
  auto m = build(Architecture::T, TreatmentSpace::binary(), 2, HpPoint{}, 11);
  randomize(m, 12, 0.8);
  const auto data = planted_data(m, 200, 13, 0.0);
  const auto sp = split(data, 14);
  SimplifyBudgets b;
  b.gamma_r2 = 1.01;
  b.budget_symb = 0.0;
  const double l_ref = predictive_loss(m, sp.val);
  const auto g = symbolify(m, sp.train, sp.val, b, l_ref);
  CHECK_FALSE(g.record.accepted);
  CHECK(dump(g.model) == dump(m));
  CHECK(g.val_loss == l_ref);
  CHECK(g.record.stage == "formula");
  // best-fit atoms were still evaluated for every active edge
  std::size_t active = 0;
  for (const auto* net : subnets(m)) active += net->active_edge_count();
  CHECK(g.edges.size() == active);
  for (const auto& e : g.edges) CHECK_FALSE(e.search.early_exit);

  b.budget_symb = 1e6;
  const auto ok = symbolify(m, sp.train, sp.val, b, l_ref);
  CHECK(ok.record.accepted);
  for (const auto* net : subnets(ok.model)) CHECK(net->fully_symbolic());
}

TEST_CASE("composed formulas are faithful") {
  std::mt19937_64 rng(21);
  for (auto arch : {Architecture::S, Architecture::T, Architecture::TAR, Architecture::Dragon}) {
    HpPoint hp;
    hp.grid_size = 3;
    hp.rep_width = 2;
    auto m = build(arch, TreatmentSpace::binary(), 3, hp, 22);
    randomize(m, 23, 0.5);
    m.outcome = {1.5, 2.0};
    const auto data = planted_data(m, 200, 24, 0.0);
    SimplifyBudgets b;
    b.budget_symb = 1e9;
    const auto g = symbolify(m, data, data, b, predictive_loss(m, data));
    REQUIRE(g.record.accepted);
    const auto ex = compose_expression(g.model);
    const auto simp = simplify_expressions(ex);
    const auto tr = truncate_expressions(simp, 12);
    const Matrix xs = test::random_matrix(500, 3, 25, 0.9);
    const auto want = predict_cate_batch(g.model, xs);
    bool domain_error = false;
    try {
      const auto c0 = eval_batch(ex.cate, xs);
      const auto c1 = eval_batch(simp.cate, xs);
      const auto c2 = eval_batch(tr.cate, xs);
      for (std::size_t i = 0; i < xs.rows(); ++i) {
        const double tol = 1e-9 * std::max(1.0, std::abs(want[i]));
        CHECK(std::abs(c0[i] - want[i]) <= tol);
        CHECK(std::abs(c1[i] - want[i]) <= tol);
        CHECK(std::abs(c2[i] - want[i]) <= tol);
      }
      const auto mu1 = eval_batch(simp.mu[1], xs);
      const auto mu1_want = predict_mu_batch(g.model, xs, 1.0);
      for (std::size_t i = 0; i < xs.rows(); ++i) CHECK(std::abs(mu1[i] - mu1_want[i]) <= 1e-9 * std::max(1.0, std::abs(mu1_want[i])));
    } catch (const Error& e) {
      domain_error = e.kind() == ErrorKind::evaluation || e.kind() == ErrorKind::numeric;
      if (!domain_error) throw;
    }
    CHECK_FALSE(domain_error);

    const auto back = ModelExpressions::from_json(nlohmann::json::parse(simp.to_json().dump()));
    CHECK(structurally_equal(back.cate, simp.cate));
    for (std::size_t k = 0; k < simp.mu.size(); ++k) CHECK(structurally_equal(back.mu[k], simp.mu[k]));
    if (arch == Architecture::S) CHECK_FALSE(has_vars(simp.cate));
  }
}

TEST_CASE("T-KAAM formula matches the decomposition") {
  auto m = build(Architecture::T, TreatmentSpace::binary(), 3, cubic_identity(), 31);
  randomize(m, 32, 0.4);
  const auto data = planted_data(m, 200, 33, 0.0);
  const auto g = symbolify(m, data, data, exact_budgets(), predictive_loss(m, data));
  REQUIRE(g.record.accepted);
  const auto simp = simplify_expressions(compose_expression(g.model));
  REQUIRE(simp.cate->kind == ExprKind::sum);
  for (const auto& term : simp.cate->children) CHECK(term->kind != ExprKind::sum);
  const Matrix xs = test::random_matrix(100, 3, 34, 0.9);
  for (std::size_t i = 0; i < xs.rows(); ++i) {
    const auto dec = tkaam_decomposition(g.model, xs.row(i));
    double s = dec.bias_difference;
    for (double v : dec.contributions) s += v;
    CHECK(std::abs(expr_eval(simp.cate, xs.row(i)) - s) < 1e-9);
  }
}

TEST_CASE("compose needs a fully symbolic model") {
  auto m = build(Architecture::T, TreatmentSpace::binary(), 2, HpPoint{}, 1);
  CHECK_KIND(compose_expression(m), ErrorKind::structure);
}

TEST_CASE("pipeline log") {
  PipelineLog log;
  log.add({"pruned", "prune", 1.0, 1.1, true, "x"});
  log.add({"formula", "symbolify", 1.1, 2.0, false, "y"});
  const auto text = log.to_jsonl();
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  const auto first = nlohmann::json::parse(text.substr(0, text.find('\n')));
  CHECK(first.at("stage") == "pruned");
  CHECK(first.at("accepted") == true);
  CHECK(first.at("val_metric_after") == 1.1);
}
