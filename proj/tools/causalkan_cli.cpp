// causalkan command-line front end.

#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "causalkan/error.hpp"
#include "causalkan/format.hpp"
#include "causalkan/pipeline.hpp"

using namespace causalkan;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::config: return 2;
    case ErrorKind::input:
    case ErrorKind::parse:
    case ErrorKind::data: return 3;
    case ErrorKind::numeric:
    case ErrorKind::search: return 4;
    default: return 1;
  }
}

PipelineConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::exception& e) {
    fail(ErrorKind::config, "config '" + path + "' is not valid JSON: " + e.what());
  } catch (const Error& e) {
    fail(ErrorKind::config, e.what());
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return PipelineConfig::from_json(doc);
}

CsvSchema load_schema(const std::string& path) {
  if (path.empty()) return {};
  return CsvSchema::from_json(json::parse(read_text(path)));
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto v = parse_real(item);
    if (!v) fail(ErrorKind::input, "cannot parse '" + item + "' as a number");
    out.push_back(*v);
  }
  return out;
}

std::string stage_line(const StageMetrics& s) {
  std::ostringstream os;
  os << "  " << s.stage << ": val_loss=" << format_real(s.val_loss) << " test_mse=" << format_real(s.test.mse);
  if (s.test.pehe) os << " pehe=" << format_real(*s.test.pehe);
  if (s.test.ate_error) os << " ate_error=" << format_real(*s.test.ate_error);
  if (!s.note.empty()) os << "  (" << s.note << ")";
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"causalKAN: interpretable treatment-effect estimation with Kolmogorov-Arnold networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "train, gate, prune, symbolify and export");
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  bool strict = false;
  pipe->add_option("-c,--config", config_path, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  pipe->add_option("--set", overrides, "override a config field: path.to.field=value");
  pipe->add_option("-o,--out", out_dir, "output directory (default: $CAUSALKAN_OUT or ./causalkan_out)");
  pipe->add_flag("--strict", strict, "abort when the architecture gate warns");

  // generate
  auto* gen = app.add_subcommand("generate", "write a synthetic dataset with known effects");
  GeneratorSpec spec;
  std::string effects_path;
  std::string gen_out;
  gen->add_option("--kind", spec.kind, "homogeneous or heterogeneous")
      ->check(CLI::IsMember({"homogeneous", "heterogeneous"}));
  gen->add_option("-n", spec.n, "rows");
  gen->add_option("-d", spec.d, "covariates");
  gen->add_option("--tau", spec.tau, "constant effect (homogeneous)");
  gen->add_option("--noise-sd", spec.noise_sd, "outcome noise standard deviation");
  gen->add_option("--seed", spec.seed, "generator seed");
  gen->add_option("--effects", effects_path, "effect spec JSON (heterogeneous)")->check(CLI::ExistingFile);
  gen->add_option("-o,--out", gen_out, "output CSV")->required();

  // train
  auto* train = app.add_subcommand("train", "hyperparameter search and fit only");
  std::string train_config;
  std::vector<std::string> train_overrides;
  std::string train_out;
  train->add_option("-c,--config", train_config, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--set", train_overrides, "override a config field: path.to.field=value");
  train->add_option("-o,--out", train_out, "output directory");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "metrics of a saved model on a CSV");
  std::string model_path, data_path, schema_path;
  eval->add_option("-m,--model", model_path, "model.json")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_path, "CSV file")->required()->check(CLI::ExistingFile);
  eval->add_option("--schema", schema_path, "CSV schema (JSON)")->check(CLI::ExistingFile);

  // plot
  auto* plot = app.add_subcommand("plot", "PDP, radar and contribution plots of an additive model");
  std::string plot_out;
  plot->add_option("-m,--model", model_path, "model.json")->required()->check(CLI::ExistingFile);
  plot->add_option("--data", data_path, "CSV file")->required()->check(CLI::ExistingFile);
  plot->add_option("--schema", schema_path, "CSV schema (JSON)")->check(CLI::ExistingFile);
  plot->add_option("-o,--out", plot_out, "output directory")->required();

  // formula
  auto* formula = app.add_subcommand("formula", "render or evaluate a saved formula");
  std::string formula_path, x_text, which = "cate";
  double t_value = 0.0;
  bool use_truncated = false;
  formula->add_option("-f,--formula", formula_path, "formula.json")->required()->check(CLI::ExistingFile);
  formula->add_option("--which", which, "cate, or mu<k> for arm k");
  formula->add_option("-x", x_text, "comma-separated covariate values to evaluate at");
  formula->add_option("-t", t_value, "treatment value (continuous formulas)");
  formula->add_flag("--truncated", use_truncated, "use the truncated formula");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pipe->parsed()) {
      PipelineConfig cfg = load_config(config_path, overrides);
      if (strict) cfg.strict = true;
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      const fs::path dir = resolve_output_dir(cfg);
      const PipelineResult r = run_pipeline(cfg);
      if (r.arch.verdict == GateDecision::Verdict::warn) std::cerr << "warning: " << r.arch.note << "\n";
      write_outputs(r, dir);
      std::cout << "architecture " << architecture_name(cfg.architecture) << ", hp point " << r.search.chosen
                << " of " << cfg.hp_grid.size() << "\n";
      for (const auto& s : r.stages) std::cout << stage_line(s) << "\n";
      if (r.simplified) std::cout << "CATE(x) = " << expr_render(r.simplified->cate, r.simplified->names()) << "\n";
      std::cout << "outputs written to " << dir.string() << "\n";
    } else if (gen->parsed()) {
      if (!effects_path.empty()) spec.effects = effect_spec_from_json(json::parse(read_text(effects_path)));
      if (spec.kind == "heterogeneous" && spec.effects.empty()) spec.effects = GeneratorSpec::default_effects();
      const Dataset data = spec.generate();
      save_csv(data, gen_out);
      fs::path spec_path = gen_out;
      spec_path.replace_extension(".spec.json");
      write_text(spec_path, spec.to_json().dump(2) + "\n");
      std::cout << "wrote " << data.n() << " rows to " << gen_out << " (spec: " << spec_path.string() << ")\n";
    } else if (train->parsed()) {
      PipelineConfig cfg = load_config(train_config, train_overrides);
      if (!train_out.empty()) cfg.output_dir = train_out;
      const fs::path dir = resolve_output_dir(cfg);
      Dataset data = cfg.data.load();
      data.validate();
      const SplitDataset sp = split(data, cfg.seed);
      SearchOptions opt{cfg.architecture, cfg.treatment, cfg.search_tolerance, cfg.seed};
      const SearchResult res = hp_search(cfg.hp_grid, sp, cfg.train, opt);
      fs::create_directories(dir);
      write_text(dir / "model.json", model_to_json(res.model).dump(2) + "\n");
      json rep{{"chosen", res.chosen},
               {"fit", res.report.to_json()},
               {"leaderboard", res.leaderboard_json()},
               {"test", evaluate_model(res.model, sp.test).to_json()}};
      write_text(dir / "train_report.json", rep.dump(2) + "\n");
      std::cout << "best val loss " << format_real(res.report.predictive_val_loss) << " at epoch "
                << res.report.best_epoch << "; outputs in " << dir.string() << "\n";
    } else if (eval->parsed()) {
      const CausalModel m = model_from_json(json::parse(read_text(model_path)));
      Dataset data = load_csv(data_path, load_schema(schema_path));
      std::cout << evaluate_model(m, data).to_json().dump(2) << "\n";
    } else if (plot->parsed()) {
      const CausalModel m = model_from_json(json::parse(read_text(model_path)));
      Dataset data = load_csv(data_path, load_schema(schema_path));
      if (!model_is_additive(m)) {
        std::cerr << "model is not additive; only closed-form formulas are available for it\n";
        return 5;
      }
      for (const auto& p : write_plots(m, data, plot_out)) std::cout << p.string() << "\n";
    } else if (formula->parsed()) {
      json doc = json::parse(read_text(formula_path));
      if (doc.value("format", "") == "causalkan.formulas") {
        const char* key = use_truncated ? "truncated" : "simplified";
        if (!doc.contains(key)) fail(ErrorKind::input, std::string("formula file has no ") + key + " formula");
        doc = doc.at(key);
      }
      const ModelExpressions e = ModelExpressions::from_json(doc);
      Expr target;
      if (which == "cate") {
        target = e.cate;
      } else if (which.rfind("mu", 0) == 0) {
        const auto k = parse_real(which.substr(2));
        if (!k || *k < 0 || static_cast<std::size_t>(*k) >= e.mu.size()) {
          fail(ErrorKind::input, "--which " + which + " names no arm");
        }
        target = e.mu[static_cast<std::size_t>(*k)];
      } else {
        fail(ErrorKind::input, "--which must be cate or mu<k>");
      }
      std::cout << expr_render(target, e.names()) << "\n";
      if (!x_text.empty()) {
        auto vars = parse_list(x_text);
        if (vars.size() != e.input_dim) {
          fail(ErrorKind::shape, "expected " + std::to_string(e.input_dim) + " covariate values, got " +
                                     std::to_string(vars.size()));
        }
        if (e.treatment_var) vars.push_back(t_value);
        std::cout << format_real(expr_eval(target, vars)) << "\n";
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
