#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "causalkan/atoms.hpp"

namespace causalkan {

enum class ExprKind { constant, variable, apply, sum, product };

struct ExprNode;
/// Expressions are immutable and share subtrees freely.
using Expr = std::shared_ptr<const ExprNode>;

/// Apply nodes evaluate c * f(a * u + b) + d where u is the child; for the
/// polynomial atoms f is the pure power u^n.
struct ExprNode {
  ExprKind kind = ExprKind::constant;
  double value = 0.0;     // constant
  std::size_t var = 0;    // variable index
  AtomId atom = AtomId::identity;
  double a = 1.0, b = 0.0, c = 1.0, d = 0.0;
  std::vector<Expr> children;  // apply: one child; sum/product: operands
};

Expr make_const(double v);
Expr make_var(std::size_t index);
Expr make_apply(AtomId atom, double a, double b, double c, double d, Expr child);
Expr make_sum(std::vector<Expr> terms);
Expr make_prod(std::vector<Expr> factors);
Expr negate(Expr e);

/// Structural total order (reals compared by value) and equality.
int expr_compare(const ExprNode& x, const ExprNode& y);
bool structurally_equal(const Expr& x, const Expr& y);

std::size_t max_var_index(const Expr& e);  // 0 when there are no variables
bool has_vars(const Expr& e);

/// Evaluates with vars[i] bound to Var(i). Throws evaluation error naming
/// the subterm on a domain violation, shape error if a variable is unbound.
double expr_eval(const Expr& e, std::span<const double> vars);

/// x1..xD for features; when `treatment` is set, index D renders as "t".
std::vector<std::string> default_var_names(std::size_t features, bool treatment);

/// Canonical infix text with shortest round-trip numbers.
std::string expr_render(const Expr& e, const std::vector<std::string>& names);

nlohmann::json expr_to_json(const Expr& e);
/// Throws parse error on malformed documents.
Expr expr_from_json(const nlohmann::json& doc);

/// Flattens sums and products, folds constants, expands polynomial atoms
/// and products into monomials, collects like terms and drops exact zeros.
/// Terms come out ordered by variable index, then degree descending, with
/// the constant last.
Expr simplify_algebra(const Expr& e);

/// Rounds every constant and every (a, b, c, d) half-to-even to `decimals`
/// places and drops terms whose coefficient rounds to zero.
Expr truncate(const Expr& e, int decimals);

std::size_t node_count(const Expr& e);

}  // namespace causalkan
