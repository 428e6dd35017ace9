#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "causalkan/pipeline.hpp"
#include "support.hpp"

using namespace causalkan;
namespace fs = std::filesystem;

namespace {

nlohmann::json small_config(const std::string& kind) {
  return nlohmann::json::parse(R"({
    "architecture": "T",
    "hp_grid": [{"hidden_widths": [], "grid_size": 3, "order": 3, "lambda_edge": 0.0, "identity_base": true}],
    "train": {"learning_rate": 0.03, "max_epochs": 150, "patience": 50},
    "simplify": {"gamma_r2": 0.9, "budget_symb": 0.5, "retrain_epochs": 10},
    "data": {"generator": {"kind": ")" + kind + R"(", "n": 300, "d": 3, "noise_sd": 0.5, "seed": 3}},
    "seed": 7
  })");
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("causalkan_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CAUSALKAN_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = PipelineConfig::from_json(small_config("homogeneous"));
  CHECK(c.architecture == Architecture::T);
  CHECK(c.hp_grid.size() == 1);
  CHECK(c.hp_grid[0].identity_base);
  CHECK(c.train.max_epochs == 150);
  CHECK(c.data.generator->n == 300);
  CHECK(PipelineConfig::from_json(c.to_json()).to_json() == c.to_json());

  auto doc = small_config("homogeneous");
  doc["train"]["learnign_rate"] = 0.1;
  try {
    (void)PipelineConfig::from_json(doc);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
    CHECK(std::string(e.what()).find("train.learnign_rate") != std::string::npos);
  }
  auto neg = small_config("homogeneous");
  neg["simplify"]["budget_prune"] = -1.0;
  try {
    (void)PipelineConfig::from_json(neg);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
    CHECK(std::string(e.what()).find("simplify") != std::string::npos);
  }
  auto top = small_config("homogeneous");
  top["colour"] = "blue";
  CHECK_KIND(PipelineConfig::from_json(top), ErrorKind::config);
  auto nodata = small_config("homogeneous");
  nodata.erase("data");
  CHECK_KIND(PipelineConfig::from_json(nodata), ErrorKind::config);
  auto missing = small_config("homogeneous");
  missing["data"] = {{"csv", "/nonexistent/data.csv"}};
  CHECK_KIND(PipelineConfig::from_json(missing), ErrorKind::config);
  auto cont = small_config("homogeneous");
  cont["treatment"] = {{"kind", "continuous"}, {"reference", 0.0}};
  CHECK_KIND(PipelineConfig::from_json(cont), ErrorKind::config);
}

TEST_CASE("dotted overrides") {
  auto doc = small_config("homogeneous");
  apply_override(doc, "train.learning_rate=0.5");
  apply_override(doc, "architecture=S");
  apply_override(doc, "hp_grid.0.grid_size=5");
  apply_override(doc, "simplify.budget_mode=relative");
  apply_override(doc, "data.generator.effects=[{\"feature\":1,\"atom\":\"sin\"}]");
  CHECK(doc["train"]["learning_rate"] == 0.5);
  CHECK(doc["architecture"] == "S");
  CHECK(doc["hp_grid"][0]["grid_size"] == 5);
  const auto c = PipelineConfig::from_json(doc);
  CHECK(c.architecture == Architecture::S);
  CHECK(c.simplify.mode == BudgetMode::relative);
  CHECK(c.data.generator->effects.size() == 1);
  CHECK_KIND(apply_override(doc, "novalue"), ErrorKind::config);
  CHECK_KIND(apply_override(doc, "hp_grid.3.order=1"), ErrorKind::config);
  CHECK_KIND(apply_override(doc, "a..b=1"), ErrorKind::config);
}

TEST_CASE("output directory resolution") {
  PipelineConfig c;
  c.output_dir = "explicit";
  CHECK(resolve_output_dir(c) == fs::path("explicit"));
  c.output_dir.clear();
  ::setenv("CAUSALKAN_OUT", "/tmp/from_env", 1);
  CHECK(resolve_output_dir(c) == fs::path("/tmp/from_env"));
  ::unsetenv("CAUSALKAN_OUT");
  CHECK(resolve_output_dir(c) == fs::path("causalkan_out"));
}

TEST_CASE("full pipeline run") {
  const auto cfg = PipelineConfig::from_json(small_config("heterogeneous"));
  const auto r = run_pipeline(cfg);
  REQUIRE(r.stages.size() == 4);
  const char* names[] = {"original", "pruned", "formula", "truncated"};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(r.stages[i].stage == names[i]);
    CHECK(r.stages[i].test.pehe.has_value());
    CHECK(r.stages[i].test.ate_error.has_value());
    CHECK(r.stages[i].full.has_value());
    CHECK(*r.stages[i].test.pehe >= *r.stages[i].test.ate_error - 1e-12);
  }
  CHECK(r.stages[0].test.n == r.split.test.n());
  CHECK(r.stages[0].full->n == 300);
  REQUIRE(r.log.records.size() >= 3);
  CHECK(r.log.records[0].action == "arch_gate");
  CHECK(r.log.records[1].stage == "pruned");
  CHECK(r.log.records[2].stage == "formula");

  const auto rep = r.report();
  CHECK(rep.at("format") == "causalkan.run_report");
  CHECK(rep.contains("timestamps"));
  CHECK(rep.at("stages").size() == 4);
  CHECK_FALSE(canonical_report(rep).contains("timestamps"));

  // Reproducible byte for byte apart from timestamps.
  const auto again = run_pipeline(cfg);
  CHECK(canonical_report(again.report()).dump() == canonical_report(rep).dump());

  const auto dir = scratch("outputs");
  const auto written = write_outputs(r, dir);
  for (const char* f : {"run_report.json", "pipeline_log.jsonl", "model.json"}) CHECK(fs::exists(dir / f));
  if (r.simplified) {
    CHECK(fs::exists(dir / "formula.txt"));
    CHECK(fs::exists(dir / "formula.json"));
  }
  CHECK(fs::exists(dir / "plots" / "pdp.svg"));
  CHECK(fs::exists(dir / "plots" / "radar.svg"));
  CHECK(model_from_json(nlohmann::json::parse(read_text(dir / "model.json"))) == r.final_model());
  fs::remove_all(dir);
}

TEST_CASE("skip contracts") {
  auto doc = small_config("homogeneous");
  doc["skip_symbolify"] = true;
  const auto r = run_pipeline(PipelineConfig::from_json(doc));
  REQUIRE(r.stages.size() == 2);
  CHECK(r.stages[0].stage == "original");
  CHECK(r.stages[1].stage == "pruned");
  CHECK_FALSE(r.simplified.has_value());
  CHECK_FALSE(r.report().contains("formula"));
  const auto dir = scratch("skip");
  write_outputs(r, dir);
  CHECK_FALSE(fs::exists(dir / "formula.txt"));
  CHECK_FALSE(fs::exists(dir / "formula.json"));
  fs::remove_all(dir);

  doc["skip_prune"] = true;
  const auto r2 = run_pipeline(PipelineConfig::from_json(doc));
  REQUIRE(r2.stages.size() == 1);
  CHECK(r2.final_model() == r2.original);
}

TEST_CASE("csv-backed run and data errors") {
  const auto dir = scratch("csv");
  GeneratorSpec g;
  g.n = 200;
  g.d = 2;
  save_csv(g.generate(), dir / "data.csv");
  auto doc = small_config("homogeneous");
  doc["data"] = {{"csv", (dir / "data.csv").string()}, {"schema", {{"mu0", "mu0"}, {"mu1", "mu1"}}}};
  doc["skip_symbolify"] = true;
  const auto r = run_pipeline(PipelineConfig::from_json(doc));
  CHECK(r.stages[0].test.pehe.has_value());
  // treatment labels outside the arm set
  std::ofstream(dir / "bad.csv") << "x1,t,y\n" << [] {
    std::string s;
    for (int i = 0; i < 20; ++i) s += std::to_string(i) + "," + (i == 5 ? "2" : std::to_string(i % 2)) + ",1\n";
    return s;
  }();
  doc["data"] = {{"csv", (dir / "bad.csv").string()}};
  CHECK_KIND(run_pipeline(PipelineConfig::from_json(doc)), ErrorKind::data);
  fs::remove_all(dir);
}

TEST_CASE("strict mode aborts on an architecture warning") {
  auto doc = small_config("homogeneous");
  doc["arch_gate"] = {{"budget", 0.0}, {"baseline_loss", 1e-6}};
  doc["skip_symbolify"] = true;
  const auto warn = run_pipeline(PipelineConfig::from_json(doc));
  CHECK(warn.arch.verdict == GateDecision::Verdict::warn);
  CHECK_FALSE(warn.log.records[0].accepted);
  doc["strict"] = true;
  CHECK_KIND(run_pipeline(PipelineConfig::from_json(doc)), ErrorKind::state);
}

TEST_CASE("command line exit codes") {
  const auto dir = scratch("cli");
  auto doc = small_config("homogeneous");
  doc["skip_symbolify"] = true;
  doc["output_dir"] = (dir / "run").string();
  write_text(dir / "ok.json", doc.dump());
  CHECK(run_cli("pipeline -c " + (dir / "ok.json").string()) == 0);
  CHECK(fs::exists(dir / "run" / "run_report.json"));

  CHECK(run_cli("pipeline -c " + (dir / "ok.json").string() + " --set train.bogus=1") == 2);
  CHECK(run_cli("pipeline -c " + (dir / "ok.json").string() + " --set train.learning_rate=-1") == 2);
  CHECK(run_cli("pipeline -c " + (dir / "missing.json").string()) != 0);
  write_text(dir / "broken.json", "{not json");
  CHECK(run_cli("pipeline -c " + (dir / "broken.json").string()) != 0);

  CHECK(run_cli("generate --kind heterogeneous -n 120 -d 3 --seed 2 -o " + (dir / "gen.csv").string()) == 0);
  CHECK(fs::exists(dir / "gen.csv"));
  write_text(dir / "schema.json", R"({"mu0":"mu0","mu1":"mu1"})");
  CHECK(run_cli("evaluate --model " + (dir / "run" / "model.json").string() + " --data " +
                (dir / "gen.csv").string() + " --schema " + (dir / "schema.json").string()) == 0);
  write_text(dir / "na.csv", "x1,x2,t,y\n1,NA,0,1\n");
  CHECK(run_cli("evaluate --model " + (dir / "run" / "model.json").string() + " --data " +
                (dir / "na.csv").string()) == 3);
  CHECK(run_cli("plot -m " + (dir / "run" / "model.json").string() + " --data " + (dir / "gen.csv").string() +
                " --schema " + (dir / "schema.json").string() + " -o " + (dir / "plots").string()) == 0);
  CHECK(fs::exists(dir / "plots" / "pdp.svg"));
  CHECK(run_cli("no-such-command") != 0);
  fs::remove_all(dir);
}
