#include "causalkan/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "causalkan/error.hpp"
#include "causalkan/metrics.hpp"

namespace causalkan {

using nlohmann::json;

json HpPoint::to_json() const {
  return {{"hidden_widths", hidden_widths}, {"grid_size", grid_size},
          {"order", order},                 {"lambda_edge", lambda_edge},
          {"sparse_init", sparse_init},     {"use_product_nodes", use_product_nodes},
          {"head_widths", head_widths},     {"rep_width", rep_width},
          {"identity_base", identity_base}};
}

HpPoint HpPoint::from_json(const json& doc) {
  HpPoint hp;
  try {
    hp.hidden_widths = doc.value("hidden_widths", hp.hidden_widths);
    hp.grid_size = doc.value("grid_size", hp.grid_size);
    hp.order = doc.value("order", hp.order);
    hp.lambda_edge = doc.value("lambda_edge", hp.lambda_edge);
    hp.sparse_init = doc.value("sparse_init", hp.sparse_init);
    hp.use_product_nodes = doc.value("use_product_nodes", hp.use_product_nodes);
    hp.head_widths = doc.value("head_widths", hp.head_widths);
    hp.rep_width = doc.value("rep_width", hp.rep_width);
    hp.identity_base = doc.value("identity_base", hp.identity_base);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("hp point: ") + e.what());
  }
  return hp;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) fail(ErrorKind::config, "train.learning_rate must be > 0");
  if (max_epochs < 0) fail(ErrorKind::config, "train.max_epochs must be >= 0");
  if (patience < 1) fail(ErrorKind::config, "train.patience must be >= 1");
  if (!(lambda_ps >= 0.0)) fail(ErrorKind::config, "train.lambda_ps must be >= 0");
  reg.validate();
}

json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"max_epochs", max_epochs},
          {"patience", patience},
          {"batch_size", batch_size == 0 ? json("full") : json(batch_size)},
          {"lambda_edge", reg.lambda_edge},
          {"lambda_coeff", reg.lambda_coeff},
          {"lambda_smooth", reg.lambda_smooth},
          {"lambda_entropy", reg.lambda_entropy},
          {"lambda_ps", lambda_ps},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const json& doc) {
  TrainConfig c;
  try {
    c.learning_rate = doc.value("learning_rate", c.learning_rate);
    c.max_epochs = doc.value("max_epochs", c.max_epochs);
    c.patience = doc.value("patience", c.patience);
    if (doc.contains("batch_size")) {
      const auto& b = doc.at("batch_size");
      if (b.is_string()) {
        if (b.get<std::string>() != "full") fail(ErrorKind::config, "train.batch_size must be a number or \"full\"");
        c.batch_size = 0;
      } else {
        const auto v = b.get<long long>();
        if (v < 1) fail(ErrorKind::config, "train.batch_size must be positive");
        c.batch_size = static_cast<std::size_t>(v);
      }
    }
    c.reg.lambda_edge = doc.value("lambda_edge", c.reg.lambda_edge);
    c.reg.lambda_coeff = doc.value("lambda_coeff", c.reg.lambda_coeff);
    c.reg.lambda_smooth = doc.value("lambda_smooth", c.reg.lambda_smooth);
    c.reg.lambda_entropy = doc.value("lambda_entropy", c.reg.lambda_entropy);
    c.lambda_ps = doc.value("lambda_ps", c.lambda_ps);
    c.seed = doc.value("seed", c.seed);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("train: ") + e.what());
  }
  c.validate();
  return c;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr) {
  if (params.size() != grads.size()) fail(ErrorKind::shape, "adam: gradient size mismatch");
  for (double g : grads) {
    if (std::isnan(g)) fail(ErrorKind::numeric, "adam: NaN gradient");
  }
  if (state.m.empty() && state.step == 0) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) fail(ErrorKind::shape, "adam: state size mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = kAdamBeta1 * state.m[i] + (1.0 - kAdamBeta1) * g;
    state.v[i] = kAdamBeta2 * state.v[i] + (1.0 - kAdamBeta2) * g * g;
    const double mh = state.m[i] / c1;
    const double vh = state.v[i] / c2;
    params[i] -= lr * mh / (std::sqrt(vh) + kAdamEpsilon);
  }
}

json FitReport::to_json() const {
  return {{"best_epoch", best_epoch},
          {"predictive_val_loss", predictive_val_loss},
          {"epochs_run", val_loss_curve.size()},
          {"train_loss_curve", train_loss_curve},
          {"val_loss_curve", val_loss_curve}};
}

double predictive_loss(const CausalModel& m, const Dataset& data) {
  return mse(predict_factual(m, data.X, data.t), data.y);
}

FitReport fit(CausalModel& m, const SplitDataset& split, const TrainConfig& cfg) {
  cfg.validate();
  if (split.train.n() == 0 || split.val.n() == 0) {
    fail(ErrorKind::data, "fit needs non-empty train and validation splits");
  }
  if (m.architecture != Architecture::S) {
    std::vector<std::size_t> counts(m.arm_count(), 0);
    for (double t : split.train.t) ++counts[static_cast<std::size_t>(m.treatment.arm_of(t))];
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (counts[k] == 0) {
        fail(ErrorKind::data, "treatment arm " + std::to_string(k) + " is absent from the training data");
      }
    }
  }

  FitReport rep;
  std::vector<double> params = model_parameters(m);
  std::vector<double> best = params;
  double best_val = INFINITY;
  if (cfg.max_epochs == 0) {
    rep.predictive_val_loss = predictive_loss(m, split.val);
    return rep;
  }

  const std::size_t n = split.train.n();
  const bool full = cfg.batch_size == 0 || cfg.batch_size >= n;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  AdamState adam;
  std::vector<double> grad;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double epoch_loss = 0.0;
    if (full) {
      const auto v = objective(m, split.train, cfg.lambda_ps, cfg.reg, &grad);
      adam_step(params, grad, adam, cfg.learning_rate);
      set_model_parameters(m, params);
      epoch_loss = v.total;
    } else {
      std::shuffle(order.begin(), order.end(), rng);
      std::size_t batches = 0;
      for (std::size_t start = 0; start < n; start += cfg.batch_size) {
        const std::size_t end = std::min(n, start + cfg.batch_size);
        const auto batch = split.train.subset(std::span(order).subspan(start, end - start));
        const auto v = objective(m, batch, cfg.lambda_ps, cfg.reg, &grad);
        adam_step(params, grad, adam, cfg.learning_rate);
        set_model_parameters(m, params);
        epoch_loss += v.total;
        ++batches;
      }
      epoch_loss /= static_cast<double>(batches);
    }
    for (double p : params) {
      if (!std::isfinite(p)) fail(ErrorKind::numeric, "training diverged at epoch " + std::to_string(epoch));
    }
    const double val = predictive_loss(m, split.val);
    rep.train_loss_curve.push_back(epoch_loss);
    rep.val_loss_curve.push_back(val);
    if (!std::isfinite(val)) fail(ErrorKind::numeric, "validation loss is not finite at epoch " + std::to_string(epoch));
    if (val < best_val) {
      best_val = val;
      best = params;
      rep.best_epoch = epoch;
    } else if (epoch - rep.best_epoch >= cfg.patience) {
      break;
    }
  }
  set_model_parameters(m, best);
  rep.predictive_val_loss = best_val;
  return rep;
}

ComplexityScore complexity_score(const HpPoint& hp) {
  ComplexityScore cs;
  int score = 0;
  if (hp.hidden_widths.empty()) {
    score += 0;
  } else if (hp.hidden_widths.size() == 1 && hp.hidden_widths[0] == 5) {
    score += 2;
  } else {
    score += 3;
  }
  score += std::abs(hp.lambda_edge - 0.01) < 1e-12 ? 1 : 2;
  // 1, 3, 5 -> 1, 2, 3; other values take the nearest listed value (lower on ties).
  auto level = [&](int v) {
    static constexpr int listed[] = {1, 3, 5};
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (std::abs(v - listed[i]) < std::abs(v - listed[best])) best = i;
    }
    if (v != listed[best]) cs.flagged = true;
    return best + 1;
  };
  score += level(hp.grid_size);
  score += level(hp.order);
  if (hp.sparse_init) score -= 1;
  cs.score = score;
  return cs;
}

json LeaderboardEntry::to_json() const {
  json j{{"index", index},
         {"hp", hp.to_json()},
         {"complexity_score", complexity.score},
         {"complexity_flagged", complexity.flagged},
         {"best_epoch", best_epoch},
         {"diverged", diverged}};
  j["predictive_val_loss"] = diverged ? json(nullptr) : json(predictive_val_loss);
  if (!error.empty()) j["error"] = error;
  return j;
}

json SearchResult::leaderboard_json() const {
  json arr = json::array();
  for (const auto& e : leaderboard) arr.push_back(e.to_json());
  return {{"chosen", chosen}, {"entries", std::move(arr)}};
}

SearchResult hp_search(std::span<const HpPoint> space, const SplitDataset& split,
                       const TrainConfig& cfg, const SearchOptions& opt) {
  if (space.empty()) fail(ErrorKind::config, "hyperparameter space is empty");
  if (!(opt.tolerance >= 0.0)) fail(ErrorKind::config, "search tolerance must be >= 0");
  cfg.validate();
  const InputConditioning cond = condition_inputs(split.train, opt.treatment);

  const std::size_t n = space.size();
  std::vector<std::optional<CausalModel>> models(n);
  std::vector<FitReport> reports(n);
  std::vector<LeaderboardEntry> entries(n);

#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < n; ++i) {
    auto& e = entries[i];
    e.index = i;
    e.hp = space[i];
    e.complexity = complexity_score(space[i]);
    try {
      TrainConfig c = cfg;
      c.reg.lambda_edge = space[i].lambda_edge;
      CausalModel m = build(opt.architecture, opt.treatment, split.train.d(), space[i], opt.seed, &cond);
      reports[i] = fit(m, split, c);
      e.predictive_val_loss = reports[i].predictive_val_loss;
      e.best_epoch = reports[i].best_epoch;
      e.diverged = !std::isfinite(e.predictive_val_loss);
      models[i] = std::move(m);
    } catch (const Error& err) {
      e.diverged = true;
      e.error = err.what();
    }
  }

  double best = INFINITY;
  for (const auto& e : entries) {
    if (!e.diverged) best = std::min(best, e.predictive_val_loss);
  }
  if (!std::isfinite(best)) {
    std::string why = entries.front().error.empty() ? "non-finite loss" : entries.front().error;
    fail(ErrorKind::search, "every hyperparameter point diverged (first: " + why + ")");
  }
  const double band = best + opt.tolerance * std::abs(best);
  std::size_t chosen = n;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = entries[i];
    if (e.diverged || e.predictive_val_loss > band) continue;
    if (chosen == n) {
      chosen = i;
      continue;
    }
    const auto& c = entries[chosen];
    if (e.complexity.score < c.complexity.score ||
        (e.complexity.score == c.complexity.score && e.predictive_val_loss < c.predictive_val_loss)) {
      chosen = i;
    }
  }

  SearchResult res;
  res.model = std::move(*models[chosen]);
  res.chosen = chosen;
  res.report = reports[chosen];
  res.leaderboard = entries;
  std::stable_sort(res.leaderboard.begin(), res.leaderboard.end(),
                   [](const LeaderboardEntry& a, const LeaderboardEntry& b) {
                     if (a.diverged != b.diverged) return !a.diverged;
                     return a.predictive_val_loss < b.predictive_val_loss;
                   });
  return res;
}

GateDecision arch_gate(double kan_val_loss, std::optional<double> baseline_loss, double budget) {
  if (!(budget >= 0.0)) fail(ErrorKind::config, "architecture budget must be >= 0");
  GateDecision d;
  if (!baseline_loss) {
    d.note = "no-baseline: architecture gate skipped";
    return d;
  }
  const double excess = kan_val_loss - *baseline_loss;
  if (excess > budget) {
    d.verdict = GateDecision::Verdict::warn;
    d.note = "KAN val loss exceeds the baseline by " + std::to_string(excess) + " (budget " +
             std::to_string(budget) + ")";
  } else {
    d.note = "within budget of the baseline";
  }
  return d;
}

}  // namespace causalkan
