#include "causalkan/expr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>

#include "causalkan/error.hpp"
#include "causalkan/format.hpp"

namespace causalkan {

using nlohmann::json;

Expr make_const(double v) {
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprKind::constant;
  n->value = v;
  return n;
}

Expr make_var(std::size_t index) {
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprKind::variable;
  n->var = index;
  return n;
}

Expr make_apply(AtomId atom, double a, double b, double c, double d, Expr child) {
  if (!child) fail(ErrorKind::structure, "apply node needs a child");
  if (atom == AtomId::constant) fail(ErrorKind::structure, "constant is not an applicable atom");
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprKind::apply;
  n->atom = atom;
  n->a = a;
  n->b = b;
  n->c = c;
  n->d = d;
  n->children.push_back(std::move(child));
  return n;
}

Expr make_sum(std::vector<Expr> terms) {
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprKind::sum;
  n->children = std::move(terms);
  return n;
}

Expr make_prod(std::vector<Expr> factors) {
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprKind::product;
  n->children = std::move(factors);
  return n;
}

Expr negate(Expr e) { return make_prod({make_const(-1.0), std::move(e)}); }

namespace {

int cmp(double x, double y) { return x < y ? -1 : (y < x ? 1 : 0); }

}  // namespace

int expr_compare(const ExprNode& x, const ExprNode& y) {
  if (x.kind != y.kind) return x.kind < y.kind ? -1 : 1;
  switch (x.kind) {
    case ExprKind::constant: return cmp(x.value, y.value);
    case ExprKind::variable: return x.var < y.var ? -1 : (x.var > y.var ? 1 : 0);
    case ExprKind::apply: {
      if (x.atom != y.atom) return x.atom < y.atom ? -1 : 1;
      for (auto [p, q] : {std::pair{x.a, y.a}, {x.b, y.b}, {x.c, y.c}, {x.d, y.d}}) {
        if (int r = cmp(p, q)) return r;
      }
      break;
    }
    default:
      if (x.children.size() != y.children.size()) return x.children.size() < y.children.size() ? -1 : 1;
  }
  for (std::size_t i = 0; i < x.children.size(); ++i) {
    if (int r = expr_compare(*x.children[i], *y.children[i])) return r;
  }
  return 0;
}

bool structurally_equal(const Expr& x, const Expr& y) {
  if (!x || !y) return x == y;
  return expr_compare(*x, *y) == 0;
}

namespace {

constexpr std::size_t kNoVar = std::numeric_limits<std::size_t>::max();

std::size_t min_var(const ExprNode& e) {
  if (e.kind == ExprKind::variable) return e.var;
  std::size_t m = kNoVar;
  for (const auto& c : e.children) m = std::min(m, min_var(*c));
  return m;
}

double power(double w, int n) {
  switch (n) {
    case 0: return 1.0;
    case 1: return w;
    case 2: return w * w;
    case 3: return w * w * w;
    case 4: return (w * w) * (w * w);
    default: return std::pow(w, n);
  }
}

}  // namespace

std::size_t max_var_index(const Expr& e) {
  if (e->kind == ExprKind::variable) return e->var;
  std::size_t m = 0;
  for (const auto& c : e->children) m = std::max(m, max_var_index(c));
  return m;
}

bool has_vars(const Expr& e) { return min_var(*e) != kNoVar; }

std::size_t node_count(const Expr& e) {
  std::size_t n = 1;
  for (const auto& c : e->children) n += node_count(c);
  return n;
}

double expr_eval(const Expr& e, std::span<const double> vars) {
  switch (e->kind) {
    case ExprKind::constant: return e->value;
    case ExprKind::variable:
      if (e->var >= vars.size()) {
        fail(ErrorKind::shape, "expression uses variable " + std::to_string(e->var + 1) + " but only " +
                                   std::to_string(vars.size()) + " values were given");
      }
      return vars[e->var];
    case ExprKind::apply: {
      const double w = e->a * expr_eval(e->children[0], vars) + e->b;
      if (!atom_valid_at(e->atom, w)) {
        fail(ErrorKind::evaluation,
             std::string(atom_name(e->atom)) + " argument " + format_real(w) + " is outside its domain in '" +
                 expr_render(e, default_var_names(max_var_index(e) + 1, false)) + "'");
      }
      const int n = polynomial_degree(e->atom);
      const double f = n >= 0 ? power(w, n) : atom_value(e->atom, w);
      return e->c * f + e->d;
    }
    case ExprKind::sum: {
      double s = 0.0;
      for (const auto& c : e->children) s += expr_eval(c, vars);
      return s;
    }
    case ExprKind::product: {
      double p = 1.0;
      for (const auto& c : e->children) p *= expr_eval(c, vars);
      return p;
    }
  }
  return 0.0;
}

std::vector<std::string> default_var_names(std::size_t features, bool treatment) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < features; ++j) names.push_back("x" + std::to_string(j + 1));
  if (treatment) names.push_back("t");
  return names;
}

namespace {

std::string render(const ExprNode& e, const std::vector<std::string>& names);

std::string wrap(const std::string& s) {
  return s.find(' ') == std::string::npos ? s : "(" + s + ")";
}

std::string render_apply(const ExprNode& e, const std::vector<std::string>& names) {
  std::string u = render(*e.children[0], names);
  std::string w;
  if (e.a == 1.0 && e.b == 0.0) {
    w = u;
  } else {
    w = (e.a == 1.0 ? wrap(u) : format_real(e.a) + "*" + wrap(u));
    if (e.b != 0.0) w += " + " + format_real(e.b);
  }
  std::string f;
  const int n = polynomial_degree(e.atom);
  if (n == 1) {
    f = w;
  } else if (n > 1) {
    f = wrap(w) + "^" + std::to_string(n);
  } else {
    f = std::string(atom_name(e.atom)) + "(" + w + ")";
  }
  std::string out;
  if (e.c == 1.0) {
    out = f;
  } else if (e.c == -1.0) {
    out = "-" + wrap(f);
  } else {
    out = format_real(e.c) + "*" + wrap(f);
  }
  if (e.d != 0.0) out += " + " + format_real(e.d);
  return out;
}

void tidy_signs(std::string& s) {
  std::size_t pos = 0;
  while ((pos = s.find(" + -", pos)) != std::string::npos) s.replace(pos, 4, " - ");
}

std::string render(const ExprNode& e, const std::vector<std::string>& names) {
  switch (e.kind) {
    case ExprKind::constant: return format_real(e.value);
    case ExprKind::variable:
      return e.var < names.size() ? names[e.var] : "v" + std::to_string(e.var + 1);
    case ExprKind::apply: return render_apply(e, names);
    case ExprKind::sum: {
      if (e.children.empty()) return "0";
      std::string s;
      for (std::size_t i = 0; i < e.children.size(); ++i) {
        if (i) s += " + ";
        const auto& c = *e.children[i];
        s += c.kind == ExprKind::sum ? "(" + render(c, names) + ")" : render(c, names);
      }
      return s;
    }
    case ExprKind::product: {
      if (e.children.empty()) return "1";
      std::string s;
      for (std::size_t i = 0; i < e.children.size(); ++i) {
        if (i) s += "*";
        s += wrap(render(*e.children[i], names));
      }
      return s;
    }
  }
  return "";
}

}  // namespace

std::string expr_render(const Expr& e, const std::vector<std::string>& names) {
  std::string s = render(*e, names);
  tidy_signs(s);
  return s;
}

json expr_to_json(const Expr& e) {
  switch (e->kind) {
    case ExprKind::constant: return {{"const", e->value}};
    case ExprKind::variable: return {{"var", e->var}};
    case ExprKind::apply:
      return {{"apply", std::string(atom_name(e->atom))},
              {"a", e->a},
              {"b", e->b},
              {"c", e->c},
              {"d", e->d},
              {"arg", expr_to_json(e->children[0])}};
    case ExprKind::sum:
    case ExprKind::product: {
      json arr = json::array();
      for (const auto& c : e->children) arr.push_back(expr_to_json(c));
      return {{e->kind == ExprKind::sum ? "sum" : "prod", std::move(arr)}};
    }
  }
  return {};
}

Expr expr_from_json(const json& doc) {
  try {
    if (!doc.is_object() || doc.size() == 0) fail(ErrorKind::parse, "expression node must be an object");
    if (doc.contains("const")) return make_const(doc.at("const").get<double>());
    if (doc.contains("var")) return make_var(doc.at("var").get<std::size_t>());
    if (doc.contains("apply")) {
      const auto name = doc.at("apply").get<std::string>();
      const auto id = atom_from_name(name);
      if (!id || *id == AtomId::constant) fail(ErrorKind::parse, "unknown atom '" + name + "'");
      return make_apply(*id, doc.at("a").get<double>(), doc.at("b").get<double>(), doc.at("c").get<double>(),
                        doc.at("d").get<double>(), expr_from_json(doc.at("arg")));
    }
    for (const char* key : {"sum", "prod"}) {
      if (!doc.contains(key)) continue;
      std::vector<Expr> kids;
      for (const auto& c : doc.at(key)) kids.push_back(expr_from_json(c));
      return key[0] == 's' ? make_sum(std::move(kids)) : make_prod(std::move(kids));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("expression: ") + e.what());
  }
  fail(ErrorKind::parse, "unrecognized expression node");
}

// ---------------------------------------------------------------------------
// Polynomial normal form over opaque factors.

namespace {

constexpr std::size_t kTermCap = 256;

struct FactorLess {
  bool operator()(const Expr& x, const Expr& y) const { return expr_compare(*x, *y) < 0; }
};

using Monomial = std::vector<std::pair<Expr, int>>;  // sorted by factor

struct MonoLess {
  bool operator()(const Monomial& x, const Monomial& y) const {
    const std::size_t n = std::min(x.size(), y.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (int r = expr_compare(*x[i].first, *y[i].first)) return r < 0;
      if (x[i].second != y[i].second) return x[i].second < y[i].second;
    }
    return x.size() < y.size();
  }
};

using Poly = std::map<Monomial, double, MonoLess>;

Poly constant_poly(double v) {
  Poly p;
  if (v != 0.0) p[{}] = v;
  return p;
}

Poly factor_poly(Expr f) {
  Poly p;
  p[{{std::move(f), 1}}] = 1.0;
  return p;
}

void add_into(Poly& acc, const Poly& q, double s = 1.0) {
  for (const auto& [m, c] : q) {
    auto it = acc.find(m);
    if (it == acc.end()) {
      acc.emplace(m, s * c);
    } else {
      it->second += s * c;
    }
  }
}

Monomial mono_mul(const Monomial& x, const Monomial& y) {
  Monomial out;
  std::size_t i = 0, j = 0;
  while (i < x.size() || j < y.size()) {
    if (j == y.size() || (i < x.size() && expr_compare(*x[i].first, *y[j].first) < 0)) {
      out.push_back(x[i++]);
    } else if (i == x.size() || expr_compare(*y[j].first, *x[i].first) < 0) {
      out.push_back(y[j++]);
    } else {
      out.emplace_back(x[i].first, x[i].second + y[j].second);
      ++i;
      ++j;
    }
  }
  return out;
}

std::optional<Poly> poly_mul(const Poly& x, const Poly& y) {
  if (x.size() * y.size() > kTermCap * 4) return std::nullopt;
  Poly out;
  for (const auto& [mx, cx] : x) {
    for (const auto& [my, cy] : y) {
      auto m = mono_mul(mx, my);
      auto it = out.find(m);
      if (it == out.end()) {
        out.emplace(std::move(m), cx * cy);
      } else {
        it->second += cx * cy;
      }
    }
    if (out.size() > kTermCap) return std::nullopt;
  }
  return out;
}

std::optional<Poly> poly_pow(const Poly& u, int n) {
  if (n == 1) return u;
  Poly acc = constant_poly(1.0);
  for (int i = 0; i < n; ++i) {
    auto next = poly_mul(acc, u);
    if (!next) return std::nullopt;
    acc = std::move(*next);
  }
  return acc;
}

void drop_zeros(Poly& p) {
  for (auto it = p.begin(); it != p.end();) {
    it = it->second == 0.0 ? p.erase(it) : std::next(it);
  }
}

double constant_part(const Poly& p) {
  const auto it = p.find(Monomial{});
  return it == p.end() ? 0.0 : it->second;
}

bool is_constant(const Poly& p) { return p.empty() || (p.size() == 1 && p.begin()->first.empty()); }

// alpha * F + beta with a single degree-one factor F.
struct Affine {
  Expr factor;
  double alpha;
  double beta;
};

std::optional<Affine> as_affine(const Poly& p) {
  std::optional<Affine> out;
  for (const auto& [m, c] : p) {
    if (m.empty()) continue;
    if (m.size() != 1 || m[0].second != 1 || out) return std::nullopt;
    out = Affine{m[0].first, c, 0.0};
  }
  if (out) out->beta = constant_part(p);
  return out;
}

int mono_degree(const Monomial& m) {
  int d = 0;
  for (const auto& f : m) d += f.second;
  return d;
}

Expr rebuild(const Poly& p);

Expr power_term(const Expr& f, int p) {
  if (p == 1) return f;
  if (p <= 4) {
    static constexpr AtomId powers[] = {AtomId::identity, AtomId::identity, AtomId::poly2, AtomId::poly3,
                                        AtomId::poly4};
    return make_apply(powers[p], 1.0, 0.0, 1.0, 0.0, f);
  }
  // Higher powers as x^4 * ... * x^r.
  std::vector<Expr> parts(static_cast<std::size_t>(p / 4), power_term(f, 4));
  if (p % 4) parts.push_back(power_term(f, p % 4));
  return make_prod(std::move(parts));
}

Expr term_expr(const Monomial& m, double coef) {
  if (m.size() == 1) {
    const auto& [f, p] = m[0];
    if (p <= 4 && f->kind != ExprKind::product) {
      if (p == 1 && f->kind == ExprKind::apply) {
        return make_apply(f->atom, f->a, f->b, coef * f->c, coef * f->d, f->children[0]);
      }
      static constexpr AtomId powers[] = {AtomId::identity, AtomId::identity, AtomId::poly2, AtomId::poly3,
                                          AtomId::poly4};
      return make_apply(powers[p], 1.0, 0.0, coef, 0.0, f);
    }
  }
  std::vector<Expr> factors;
  if (coef != 1.0) factors.push_back(make_const(coef));
  for (const auto& [f, p] : m) {
    if (p == 1 && f->kind == ExprKind::product) {
      factors.insert(factors.end(), f->children.begin(), f->children.end());
    } else {
      factors.push_back(power_term(f, p));
    }
  }
  if (factors.size() == 1) return factors[0];
  return make_prod(std::move(factors));
}

Poly to_poly(const ExprNode& e);

Expr opaque_apply(const ExprNode& e, const Poly& child) {
  if (auto aff = as_affine(child)) {
    return make_apply(e.atom, e.a * aff->alpha, e.a * aff->beta + e.b, 1.0, 0.0, aff->factor);
  }
  return make_apply(e.atom, e.a, e.b, 1.0, 0.0, rebuild(child));
}

Poly apply_poly(const ExprNode& e) {
  const Poly child = to_poly(*e.children[0]);
  const int n = polynomial_degree(e.atom);
  if (n >= 0) {
    Poly u;
    add_into(u, child, e.a);
    add_into(u, constant_poly(e.b));
    drop_zeros(u);
    if (auto expanded = poly_pow(u, n)) {
      Poly out;
      add_into(out, *expanded, e.c);
      add_into(out, constant_poly(e.d));
      return out;
    }
    // Too large to expand: keep the power opaque with (a, b) folded in.
    Poly out;
    add_into(out, factor_poly(make_apply(e.atom, 1.0, 0.0, 1.0, 0.0, rebuild(u))), e.c);
    add_into(out, constant_poly(e.d));
    return out;
  }
  if (is_constant(child)) {
    const double w = e.a * constant_part(child) + e.b;
    if (atom_valid_at(e.atom, w)) return constant_poly(e.c * atom_value(e.atom, w) + e.d);
  }
  Poly out;
  add_into(out, factor_poly(opaque_apply(e, child)), e.c);
  add_into(out, constant_poly(e.d));
  return out;
}

Poly to_poly(const ExprNode& e) {
  switch (e.kind) {
    case ExprKind::constant: return constant_poly(e.value);
    case ExprKind::variable: return factor_poly(make_var(e.var));
    case ExprKind::apply: return apply_poly(e);
    case ExprKind::sum: {
      Poly acc;
      for (const auto& c : e.children) add_into(acc, to_poly(*c));
      drop_zeros(acc);
      return acc;
    }
    case ExprKind::product: {
      std::vector<Poly> parts;
      for (const auto& c : e.children) parts.push_back(to_poly(*c));
      Poly acc = constant_poly(1.0);
      for (const auto& p : parts) {
        auto next = poly_mul(acc, p);
        if (!next) {
          // Distribution would blow up: keep the product as one factor.
          std::vector<Expr> kids;
          double coef = 1.0;
          for (const auto& q : parts) {
            if (is_constant(q)) {
              coef *= constant_part(q);
            } else {
              kids.push_back(rebuild(q));
            }
          }
          Poly out;
          add_into(out, factor_poly(make_prod(std::move(kids))), coef);
          return out;
        }
        acc = std::move(*next);
        drop_zeros(acc);
      }
      return acc;
    }
  }
  return {};
}

struct TermOrder {
  bool operator()(const std::pair<Monomial, double>& x, const std::pair<Monomial, double>& y) const {
    if (x.first.empty() != y.first.empty()) return y.first.empty();
    std::size_t vx = kNoVar, vy = kNoVar;
    for (const auto& f : x.first) vx = std::min(vx, min_var(*f.first));
    for (const auto& f : y.first) vy = std::min(vy, min_var(*f.first));
    if (vx != vy) return vx < vy;
    const int dx = mono_degree(x.first), dy = mono_degree(y.first);
    if (dx != dy) return dx > dy;
    return MonoLess{}(x.first, y.first);
  }
};

Expr rebuild(const Poly& p) {
  std::vector<std::pair<Monomial, double>> terms;
  for (const auto& [m, c] : p) {
    if (c != 0.0) terms.emplace_back(m, c);
  }
  if (terms.empty()) return make_const(0.0);
  std::sort(terms.begin(), terms.end(), TermOrder{});
  std::vector<Expr> out;
  for (const auto& [m, c] : terms) out.push_back(m.empty() ? make_const(c) : term_expr(m, c));
  if (out.size() == 1) return out[0];
  return make_sum(std::move(out));
}

double round_to(double v, int decimals) {
  const double scale = std::pow(10.0, decimals);
  const double scaled = v * scale;
  if (!std::isfinite(scaled) || std::abs(scaled) >= 4503599627370496.0) return v;  // 2^52
  const double r = std::nearbyint(scaled) / scale;
  return r == 0.0 ? 0.0 : r;
}

bool is_zero_const(const Expr& e) { return e->kind == ExprKind::constant && e->value == 0.0; }

Expr truncate_node(const Expr& e, int dec) {
  switch (e->kind) {
    case ExprKind::constant: return make_const(round_to(e->value, dec));
    case ExprKind::variable: return e;
    case ExprKind::apply: {
      const double c = round_to(e->c, dec);
      const double d = round_to(e->d, dec);
      if (c == 0.0) return make_const(d);
      return make_apply(e->atom, round_to(e->a, dec), round_to(e->b, dec), c, d,
                        truncate_node(e->children[0], dec));
    }
    case ExprKind::sum: {
      std::vector<Expr> kids;
      for (const auto& c : e->children) {
        auto t = truncate_node(c, dec);
        if (!is_zero_const(t)) kids.push_back(std::move(t));
      }
      if (kids.empty()) return make_const(0.0);
      if (kids.size() == 1) return kids[0];
      return make_sum(std::move(kids));
    }
    case ExprKind::product: {
      std::vector<Expr> kids;
      for (const auto& c : e->children) {
        auto t = truncate_node(c, dec);
        if (is_zero_const(t)) return make_const(0.0);
        kids.push_back(std::move(t));
      }
      return make_prod(std::move(kids));
    }
  }
  return e;
}

}  // namespace

Expr simplify_algebra(const Expr& e) {
  Poly p = to_poly(*e);
  drop_zeros(p);
  return rebuild(p);
}

Expr truncate(const Expr& e, int decimals) {
  if (decimals < 0) fail(ErrorKind::config, "truncation decimals must be >= 0");
  return truncate_node(e, decimals);
}

}  // namespace causalkan
