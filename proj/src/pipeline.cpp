#include "causalkan/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "causalkan/error.hpp"
#include "causalkan/format.hpp"
#include "causalkan/viz.hpp"

namespace causalkan {

using nlohmann::json;
namespace fs = std::filesystem;

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorKind::input, "cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) fail(ErrorKind::input, "cannot write '" + p.string() + "'");
  out << text;
  if (!out) fail(ErrorKind::input, "write failed for '" + p.string() + "'");
}

namespace {

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail(ErrorKind::config, "config field '" + path + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items()) {
    if (!ok.count(key)) {
      fail(ErrorKind::config, "unknown config field '" + (path.empty() ? key : path + "." + key) + "'");
    }
  }
}

template <class F>
auto section(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    fail(ErrorKind::config, "config field '" + path + "': " + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::config) throw;
    fail(ErrorKind::config, "config field '" + path + "': " + e.what());
  }
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

EffectSpec GeneratorSpec::default_effects() {
  EffectTerm square;
  square.feature = 0;
  square.atom = AtomId::poly2;
  EffectTerm linear;
  linear.feature = 2;
  linear.atom = AtomId::identity;
  linear.c = -0.5;
  return {square, linear};
}

Dataset GeneratorSpec::generate() const {
  if (kind == "homogeneous") return gen_homogeneous(n, d, tau, noise_sd, seed);
  if (kind == "heterogeneous") return gen_heterogeneous(n, d, effects.empty() ? default_effects() : effects, noise_sd, seed);
  fail(ErrorKind::config, "config field 'data.generator.kind' must be \"homogeneous\" or \"heterogeneous\"");
}

json GeneratorSpec::to_json() const {
  json j{{"kind", kind}, {"n", n}, {"d", d}, {"noise_sd", noise_sd}, {"seed", seed}};
  if (kind == "homogeneous") {
    j["tau"] = tau;
  } else {
    j["effects"] = effect_spec_to_json(effects.empty() ? default_effects() : effects);
  }
  return j;
}

GeneratorSpec GeneratorSpec::from_json(const json& doc) {
  check_keys(doc, "data.generator", {"kind", "n", "d", "tau", "noise_sd", "seed", "effects"});
  GeneratorSpec g;
  section("data.generator", [&] {
    g.kind = doc.value("kind", g.kind);
    g.n = doc.value("n", g.n);
    g.d = doc.value("d", g.d);
    g.tau = doc.value("tau", g.tau);
    g.noise_sd = doc.value("noise_sd", g.noise_sd);
    g.seed = doc.value("seed", g.seed);
    if (doc.contains("effects")) g.effects = effect_spec_from_json(doc.at("effects"));
  });
  if (g.kind != "homogeneous" && g.kind != "heterogeneous") {
    fail(ErrorKind::config, "config field 'data.generator.kind' must be \"homogeneous\" or \"heterogeneous\"");
  }
  if (g.d == 0) fail(ErrorKind::config, "config field 'data.generator.d' must be >= 1");
  if (!(g.noise_sd >= 0.0)) fail(ErrorKind::config, "config field 'data.generator.noise_sd' must be >= 0");
  for (const auto& e : g.effects) {
    if (e.feature >= g.d) fail(ErrorKind::config, "config field 'data.generator.effects' names a feature beyond d");
  }
  return g;
}

Dataset DataSource::load() const {
  if (generator) return generator->generate();
  if (!csv) fail(ErrorKind::config, "config field 'data' needs either 'csv' or 'generator'");
  return load_csv(*csv, schema);
}

json DataSource::to_json() const {
  json j = json::object();
  if (csv) {
    j["csv"] = csv->string();
    j["schema"] = schema.to_json();
  }
  if (generator) j["generator"] = generator->to_json();
  return j;
}

DataSource DataSource::from_json(const json& doc) {
  check_keys(doc, "data", {"csv", "schema", "generator"});
  DataSource s;
  if (doc.contains("csv")) s.csv = section("data.csv", [&] { return fs::path(doc.at("csv").get<std::string>()); });
  if (doc.contains("schema")) {
    const auto& sc = doc.at("schema");
    s.schema = section("data.schema", [&] {
      if (sc.is_string()) return CsvSchema::from_json(json::parse(read_text(sc.get<std::string>())));
      return CsvSchema::from_json(sc);
    });
  }
  if (doc.contains("generator")) s.generator = GeneratorSpec::from_json(doc.at("generator"));
  if (s.csv.has_value() == s.generator.has_value()) {
    fail(ErrorKind::config, "config field 'data' needs exactly one of 'csv' or 'generator'");
  }
  return s;
}

void PipelineConfig::validate() const {
  if (hp_grid.empty()) fail(ErrorKind::config, "config field 'hp_grid' must not be empty");
  for (std::size_t i = 0; i < hp_grid.size(); ++i) {
    const auto& hp = hp_grid[i];
    const std::string path = "hp_grid." + std::to_string(i);
    if (hp.grid_size < 1) fail(ErrorKind::config, "config field '" + path + ".grid_size' must be >= 1");
    if (hp.order < 0 || hp.order > SplineGrid::kMaxOrder) {
      fail(ErrorKind::config, "config field '" + path + ".order' must be in [0, 7]");
    }
    if (!(hp.lambda_edge >= 0.0)) fail(ErrorKind::config, "config field '" + path + ".lambda_edge' must be >= 0");
    if (hp.rep_width == 0) fail(ErrorKind::config, "config field '" + path + ".rep_width' must be >= 1");
  }
  section("train", [&] { train.validate(); });
  section("simplify", [&] { simplify.validate(); });
  if (!(search_tolerance >= 0.0)) fail(ErrorKind::config, "config field 'search.tolerance' must be >= 0");
  if (!(arch_budget >= 0.0)) fail(ErrorKind::config, "config field 'arch_gate.budget' must be >= 0");
  if (data.csv && !fs::exists(*data.csv)) {
    fail(ErrorKind::config, "config field 'data.csv': file '" + data.csv->string() + "' does not exist");
  }
  if (!treatment.is_discrete() && architecture != Architecture::S) {
    fail(ErrorKind::config, "config field 'architecture': continuous treatment needs the S architecture");
  }
}

json PipelineConfig::to_json() const {
  json grid = json::array();
  for (const auto& hp : hp_grid) grid.push_back(hp.to_json());
  json gate{{"budget", arch_budget}, {"baseline_loss", nullptr}};
  if (baseline_loss) gate["baseline_loss"] = *baseline_loss;
  return {{"architecture", architecture_name(architecture)},
          {"treatment", treatment.to_json()},
          {"hp_grid", std::move(grid)},
          {"train", train.to_json()},
          {"simplify", simplify.to_json()},
          {"search", {{"tolerance", search_tolerance}}},
          {"arch_gate", std::move(gate)},
          {"data", data.to_json()},
          {"skip_prune", skip_prune},
          {"skip_symbolify", skip_symbolify},
          {"plots", plots},
          {"strict", strict},
          {"output_dir", output_dir},
          {"seed", seed}};
}

PipelineConfig PipelineConfig::from_json(const json& doc) {
  check_keys(doc, "", {"architecture", "treatment", "hp_grid", "train", "simplify", "search", "arch_gate", "data",
                       "skip_prune", "skip_symbolify", "plots", "strict", "output_dir", "seed"});
  PipelineConfig c;
  if (doc.contains("architecture")) {
    c.architecture = section("architecture", [&] { return architecture_from_name(doc.at("architecture").get<std::string>()); });
  }
  if (doc.contains("treatment")) {
    check_keys(doc.at("treatment"), "treatment", {"kind", "arms", "reference"});
    c.treatment = section("treatment", [&] { return TreatmentSpace::from_json(doc.at("treatment")); });
  }
  if (doc.contains("hp_grid")) {
    const auto& g = doc.at("hp_grid");
    if (!g.is_array()) fail(ErrorKind::config, "config field 'hp_grid' must be an array");
    c.hp_grid.clear();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::string path = "hp_grid." + std::to_string(i);
      check_keys(g[i], path, {"hidden_widths", "grid_size", "order", "lambda_edge", "sparse_init",
                              "use_product_nodes", "head_widths", "rep_width", "identity_base"});
      c.hp_grid.push_back(section(path, [&] { return HpPoint::from_json(g[i]); }));
    }
  }
  if (doc.contains("train")) {
    check_keys(doc.at("train"), "train", {"learning_rate", "max_epochs", "patience", "batch_size", "lambda_edge",
                                          "lambda_coeff", "lambda_smooth", "lambda_entropy", "lambda_ps", "seed"});
    c.train = section("train", [&] { return TrainConfig::from_json(doc.at("train")); });
  }
  if (doc.contains("simplify")) {
    check_keys(doc.at("simplify"), "simplify", {"gamma_prune", "gamma_r2", "budget_prune", "budget_symb",
                                                "truncate_decimals", "budget_mode", "retrain_epochs"});
    c.simplify = section("simplify", [&] { return SimplifyBudgets::from_json(doc.at("simplify")); });
  }
  if (doc.contains("search")) {
    check_keys(doc.at("search"), "search", {"tolerance"});
    c.search_tolerance = section("search.tolerance", [&] { return doc.at("search").value("tolerance", 0.02); });
  }
  if (doc.contains("arch_gate")) {
    const auto& g = doc.at("arch_gate");
    check_keys(g, "arch_gate", {"budget", "baseline_loss"});
    c.arch_budget = section("arch_gate.budget", [&] { return g.value("budget", c.arch_budget); });
    if (g.contains("baseline_loss") && !g.at("baseline_loss").is_null()) {
      c.baseline_loss = section("arch_gate.baseline_loss", [&] { return g.at("baseline_loss").get<double>(); });
    }
  }
  if (!doc.contains("data")) fail(ErrorKind::config, "config field 'data' is required");
  c.data = DataSource::from_json(doc.at("data"));
  auto flag = [&](const char* key, bool& out) {
    if (doc.contains(key)) out = section(key, [&] { return doc.at(key).get<bool>(); });
  };
  flag("skip_prune", c.skip_prune);
  flag("skip_symbolify", c.skip_symbolify);
  flag("plots", c.plots);
  flag("strict", c.strict);
  if (doc.contains("output_dir")) c.output_dir = section("output_dir", [&] { return doc.at("output_dir").get<std::string>(); });
  if (doc.contains("seed")) c.seed = section("seed", [&] { return doc.at("seed").get<std::uint64_t>(); });
  c.validate();
  return c;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    fail(ErrorKind::config, "override '" + assignment + "' must look like path.to.field=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* cur = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) fail(ErrorKind::config, "override path '" + path + "' has an empty segment");
    json* next = nullptr;
    if (cur->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(key);
      } catch (const std::exception&) {
        fail(ErrorKind::config, "override path '" + path + "': '" + key + "' is not an array index");
      }
      if (idx >= cur->size()) fail(ErrorKind::config, "override path '" + path + "': index " + key + " out of range");
      next = &(*cur)[idx];
    } else {
      if (!cur->is_object()) *cur = json::object();
      next = &(*cur)[key];
    }
    if (dot == std::string::npos) {
      *next = std::move(value);
      return;
    }
    cur = next;
    start = dot + 1;
  }
}

fs::path resolve_output_dir(const PipelineConfig& cfg) {
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* env = std::getenv("CAUSALKAN_OUT"); env && *env) return env;
  return "causalkan_out";
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

EvalReport finish_report(std::span<const double> factual, std::span<const double> cate, const Dataset& data,
                         bool discrete) {
  EvalReport r;
  r.n = data.n();
  r.mse = mse(factual, data.y);
  if (data.truth && discrete && !cate.empty()) {
    r.pehe = pehe(cate, data.truth->tau);
    r.ate_error = ate_error(cate, data.truth->tau);
  }
  return r;
}

}  // namespace

EvalReport evaluate_model(const CausalModel& m, const Dataset& data) {
  const auto factual = predict_factual(m, data.X, data.t);
  std::vector<double> cate;
  if (m.treatment.is_discrete() && data.truth) cate = predict_cate_batch(m, data.X);
  return finish_report(factual, cate, data, m.treatment.is_discrete());
}

EvalReport evaluate_expressions(const ModelExpressions& e, const TreatmentSpace& ts, const Dataset& data) {
  std::vector<double> factual(data.n());
  if (ts.is_discrete()) {
    std::vector<std::vector<double>> arms;
    for (const auto& mu : e.mu) arms.push_back(eval_batch(mu, data.X));
    for (std::size_t i = 0; i < data.n(); ++i) {
      factual[i] = arms[static_cast<std::size_t>(ts.arm_of(data.t[i]))][i];
    }
  } else {
    factual = eval_batch(e.mu[0], data.X, data.t);
  }
  std::vector<double> cate;
  if (ts.is_discrete() && data.truth) cate = eval_batch(e.cate, data.X);
  return finish_report(factual, cate, data, ts.is_discrete());
}

json StageMetrics::to_json() const {
  json j{{"stage", stage}, {"val_loss", val_loss}, {"test", test.to_json()}};
  if (full) j["full_data"] = full->to_json();
  if (!note.empty()) j["note"] = note;
  return j;
}

// ---------------------------------------------------------------------------
// Pipeline

const CausalModel& PipelineResult::final_model() const {
  if (symbolic) return *symbolic;
  if (pruned) return *pruned;
  return original;
}

json canonical_report(const json& report) {
  json out = report;
  out.erase("timestamps");
  return out;
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  PipelineResult r;
  r.config = cfg;
  r.started_at = utc_now();

  Dataset data = cfg.data.load();
  data.validate();
  if (cfg.treatment.is_discrete()) {
    for (std::size_t i = 0; i < data.n(); ++i) {
      if (!cfg.treatment.contains(data.t[i])) {
        fail(ErrorKind::data, "row " + std::to_string(i + 1) + ": treatment " + format_real(data.t[i]) +
                                  " is not an arm label of the configured treatment space");
      }
    }
  }
  r.split = split(data, cfg.seed);

  SearchOptions opt;
  opt.architecture = cfg.architecture;
  opt.treatment = cfg.treatment;
  opt.tolerance = cfg.search_tolerance;
  opt.seed = cfg.seed;
  r.search = hp_search(cfg.hp_grid, r.split, cfg.train, opt);
  r.original = r.search.model;

  const bool with_full = data.truth.has_value();
  auto stage = [&](const std::string& name, double val, const CausalModel& m, std::string note) {
    StageMetrics s{name, val, evaluate_model(m, r.split.test), std::nullopt, std::move(note)};
    if (with_full) s.full = evaluate_model(m, data);
    r.stages.push_back(std::move(s));
  };

  double l_ref = predictive_loss(r.original, r.split.val);
  r.arch = arch_gate(l_ref, cfg.baseline_loss, cfg.arch_budget);
  LogRecord arch_rec{"original", "arch_gate", cfg.baseline_loss.value_or(l_ref), l_ref,
                     r.arch.verdict == GateDecision::Verdict::accept, r.arch.note};
  r.log.add(arch_rec);
  if (r.arch.verdict == GateDecision::Verdict::warn && cfg.strict) {
    fail(ErrorKind::state, "architecture gate: " + r.arch.note + " (strict mode)");
  }
  stage("original", l_ref, r.original, "");

  CausalModel current = r.original;
  if (cfg.skip_prune) {
    r.log.add({"pruned", "skip", l_ref, l_ref, true, "pruning skipped by config"});
  } else {
    GateResult g = prune_gate(current, r.split, cfg.simplify, l_ref, cfg.train);
    r.log.add(g.record);
    current = std::move(g.model);
    l_ref = g.val_loss;
    r.pruned = current;
    stage("pruned", l_ref, current, g.record.accepted ? "" : "pruning rejected; metrics of the retained model");
  }

  if (cfg.skip_symbolify) {
    r.log.add({"formula", "skip", l_ref, l_ref, true, "symbolification skipped by config"});
  } else {
    GateResult g = symbolify(current, r.split.train, r.split.val, cfg.simplify, l_ref);
    r.log.add(g.record);
    r.edge_fits = std::move(g.edges);
    const bool accepted = g.record.accepted;
    current = std::move(g.model);
    l_ref = g.val_loss;
    r.symbolic = current;
    if (accepted) {
      stage("formula", l_ref, current, "");
      r.composed = compose_expression(current);
      r.simplified = simplify_expressions(*r.composed);
      r.truncated = truncate_expressions(*r.simplified, cfg.simplify.truncate_decimals);
      const std::string what = "truncated to " + std::to_string(cfg.simplify.truncate_decimals) + " decimals";
      try {
        const double val_t = evaluate_expressions(*r.truncated, cfg.treatment, r.split.val).mse;
        r.log.add({"truncated", "truncate", l_ref, val_t, true, what + " (logged, not gated)"});
        StageMetrics s{"truncated", val_t, evaluate_expressions(*r.truncated, cfg.treatment, r.split.test),
                       std::nullopt, ""};
        if (with_full) s.full = evaluate_expressions(*r.truncated, cfg.treatment, data);
        r.stages.push_back(std::move(s));
      } catch (const Error& e) {
        r.log.add({"truncated", "truncate", l_ref, l_ref, false, what + "; evaluation failed: " + e.what()});
        stage("truncated", l_ref, current, std::string("truncated formula failed to evaluate: ") + e.what());
      }
    } else {
      const std::string note = "symbolification rolled back; metrics of the retained model, no formula";
      stage("formula", l_ref, current, note);
      stage("truncated", l_ref, current, note);
    }
  }
  r.finished_at = utc_now();
  return r;
}

json PipelineResult::report() const {
  json stages_j = json::array();
  for (const auto& s : stages) stages_j.push_back(s.to_json());
  json log_j = json::array();
  for (const auto& rec : log.records) log_j.push_back(rec.to_json());
  json edges_j = json::array();
  const auto names = subnet_names(final_model());
  for (const auto& e : edge_fits) {
    edges_j.push_back({{"subnet", names.at(e.subnet)},
                       {"layer", e.layer},
                       {"out", e.out},
                       {"in", e.in},
                       {"atom", atom_name(e.search.fit.atom)},
                       {"r2", e.search.fit.r2},
                       {"atoms_tried", e.search.tried.size()},
                       {"early_exit", e.search.early_exit}});
  }
  json j{{"format", "causalkan.run_report"},
         {"version", 1},
         {"versions", {{"causalkan", kVersion}, {"report_format", 1}, {"model_format", 1}}},
         {"config", config.to_json()},
         {"data",
          {{"n", split.train.n() + split.val.n() + split.test.n()},
           {"d", split.train.d()},
           {"n_train", split.train.n()},
           {"n_val", split.val.n()},
           {"n_test", split.test.n()},
           {"has_truth", split.train.truth.has_value()},
           {"split_seed", split.seed}}},
         {"search",
          {{"chosen", search.chosen},
           {"hp", search.leaderboard.empty() ? json() : config.hp_grid.at(search.chosen).to_json()},
           {"fit", search.report.to_json()},
           {"leaderboard", search.leaderboard_json()}}},
         {"arch_gate",
          {{"verdict", arch.verdict == GateDecision::Verdict::accept ? "accept" : "warn"}, {"note", arch.note}}},
         {"stages", std::move(stages_j)},
         {"log", std::move(log_j)},
         {"edge_fits", std::move(edges_j)},
         {"timestamps", {{"started", started_at}, {"finished", finished_at}}}};
  if (simplified) {
    const auto n = simplified->names();
    json f{{"decimals", config.simplify.truncate_decimals}, {"cate", expr_render(simplified->cate, n)}};
    json mus = json::array();
    for (const auto& mu : simplified->mu) mus.push_back(expr_render(mu, n));
    f["mu"] = std::move(mus);
    if (truncated) {
      f["cate_truncated"] = expr_render(truncated->cate, n);
      json tm = json::array();
      for (const auto& mu : truncated->mu) tm.push_back(expr_render(mu, n));
      f["mu_truncated"] = std::move(tm);
    }
    j["formula"] = std::move(f);
  }
  return j;
}

// ---------------------------------------------------------------------------
// Outputs

bool model_is_additive(const CausalModel& m) {
  if (m.representation || !m.treatment.is_discrete()) return false;
  if (m.architecture != Architecture::S && m.architecture != Architecture::T) return false;
  return std::all_of(m.heads.begin(), m.heads.end(), [](const KanNetwork& h) { return h.is_additive(); });
}

namespace {

std::string formula_text(const ModelExpressions& e, const std::string& heading) {
  const auto n = e.names();
  std::string out = "# " + heading + "\n";
  const std::string args = e.treatment_var ? "(x, t)" : "(x)";
  for (std::size_t k = 0; k < e.mu.size(); ++k) {
    out += (e.treatment_var ? std::string("mu") : "mu" + std::to_string(k)) + args + " = " + expr_render(e.mu[k], n) + "\n";
  }
  out += "CATE" + args + " = " + expr_render(e.cate, n) + "\n";
  return out;
}

}  // namespace

std::vector<fs::path> write_plots(const CausalModel& m, const Dataset& data, const fs::path& dir) {
  std::vector<fs::path> out;
  if (!model_is_additive(m) || data.n() == 0) return out;
  fs::create_directories(dir);

  std::vector<std::size_t> rows;
  const std::size_t stride = std::max<std::size_t>(1, data.n() / 200);
  for (std::size_t i = 0; i < data.n(); i += stride) rows.push_back(i);
  const Matrix background = data.X.select_rows(rows);

  const bool is_s = m.architecture == Architecture::S;
  const Predictor f = is_s ? mu_predictor(m, 0.0) : cate_predictor(m);
  std::vector<Plot> curves;
  if (is_s && m.treatment.arms >= 2) {
    curves.emplace_back(effect_curve_data(m, linear_grid(0.0, m.treatment.arms - 1.0, 21)));
  }
  const std::size_t shown = std::min<std::size_t>(data.d(), 12);
  for (std::size_t j = 0; j < shown; ++j) {
    const auto col = data.X.column(j);
    const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
    if (!(*hi > *lo)) continue;
    auto c = pdp(f, j, linear_grid(*lo, *hi, 41), background, std::pair{*lo, *hi});
    c.label = (is_s ? "PDP of mu0 on " : "PDP of CATE on ") + data.feature_names[j];
    curves.emplace_back(std::move(c));
  }
  if (!curves.empty()) {
    write_text(dir / "pdp.svg", render_svg(curves, is_s ? "Treatment edge and PDPs" : "CATE partial dependence"));
    write_text(dir / "pdp.json", emit_json(curves).dump(2) + "\n");
    out.push_back(dir / "pdp.svg");
    out.push_back(dir / "pdp.json");
  }

  const ContributionsMatrix cm = is_s ? head_contributions(m, data.X, 0) : cate_contributions(m, data.X);
  std::vector<std::string> labels = data.feature_names;
  if (cm.delta.cols() > labels.size()) labels.push_back("t");
  RadarSpec radar{"Deviations for individual 1", labels, prp_deviations(cm, 0)};
  const std::vector<Plot> radar_plot{radar};
  write_text(dir / "radar.svg", render_svg(radar_plot, ""));
  write_text(dir / "radar.json", emit_json(radar_plot).dump(2) + "\n");
  json delta = json::array();
  for (std::size_t i = 0; i < cm.delta.rows(); ++i) {
    const auto row = cm.delta.row(i);
    delta.push_back(std::vector<double>(row.begin(), row.end()));
  }
  json contrib{{"format", "causalkan.contributions"},
               {"target", is_s ? "mu0" : "cate"},
               {"labels", labels},
               {"bias", cm.bias},
               {"column_means", cm.column_means},
               {"delta", std::move(delta)}};
  write_text(dir / "contributions.json", contrib.dump() + "\n");
  out.push_back(dir / "radar.svg");
  out.push_back(dir / "radar.json");
  out.push_back(dir / "contributions.json");
  return out;
}

std::vector<fs::path> write_outputs(const PipelineResult& r, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<fs::path> out;
  auto put = [&](const fs::path& p, const std::string& text) {
    write_text(p, text);
    out.push_back(p);
  };
  put(dir / "run_report.json", r.report().dump(2) + "\n");
  put(dir / "pipeline_log.jsonl", r.log.to_jsonl());
  put(dir / "model.json", model_to_json(r.final_model()).dump(2) + "\n");
  if (r.simplified) {
    std::string text = formula_text(*r.simplified, "closed form (simplified)");
    json doc{{"format", "causalkan.formulas"}, {"version", 1}, {"simplified", r.simplified->to_json()}};
    if (r.truncated) {
      text += "\n" + formula_text(*r.truncated,
                                  "truncated to " + std::to_string(r.config.simplify.truncate_decimals) + " decimals");
      doc["truncated"] = r.truncated->to_json();
      doc["decimals"] = r.config.simplify.truncate_decimals;
    }
    put(dir / "formula.txt", text);
    put(dir / "formula.json", doc.dump(2) + "\n");
  }
  if (r.config.plots) {
    Dataset test = r.split.test;
    try {
      const auto written = write_plots(r.final_model(), test, dir / "plots");
      out.insert(out.end(), written.begin(), written.end());
    } catch (const Error& e) {
      put(dir / "plots" / "ERROR.txt", std::string("plot emission failed: ") + e.what() + "\n");
    }
  }
  return out;
}

}  // namespace causalkan
