#include "causalkan/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "causalkan/error.hpp"
#include "causalkan/format.hpp"

namespace causalkan {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

bool contains(const std::vector<std::string>& v, std::string_view s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

// Snapping potential outcomes to a dyadic grid keeps mu1 = mu0 + tau and
// tau = mu1 - mu0 exact in floating point. Covariates sit on a coarser grid
// so that low-degree polynomial effects of them are already exact there.
double snap(double v, int bits = 20) { return std::ldexp(std::nearbyint(std::ldexp(v, bits)), -bits); }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Dataset generate(std::size_t n, std::size_t d, const EffectSpec& effects, double noise_sd,
                 std::uint64_t seed) {
  if (n < 1 || d < 1) fail(ErrorKind::input, "generator needs n >= 1 and d >= 1");
  if (!(noise_sd >= 0.0)) fail(ErrorKind::input, "noise_sd must be >= 0");
  for (const auto& e : effects) {
    if (e.feature >= d) {
      fail(ErrorKind::input, "effect term refers to feature " + std::to_string(e.feature + 1) +
                                 " but d = " + std::to_string(d));
    }
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Dataset ds;
  ds.X = Matrix(n, d);
  ds.t.resize(n);
  ds.y.resize(n);
  GroundTruth truth;
  truth.mu.assign(2, std::vector<double>(n));
  truth.tau.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = ds.X.row(i);
    for (auto& v : x) v = snap(normal(rng), 10);
    const bool treated = unif(rng) < generator_propensity(x);
    const double eps = normal(rng);
    double tau = 0.0;
    for (const auto& e : effects) tau += e(x[e.feature]);
    const double mu0 = snap(generator_mu0(x));
    tau = snap(tau);
    const double mu1 = mu0 + tau;
    truth.mu[0][i] = mu0;
    truth.mu[1][i] = mu1;
    truth.tau[i] = mu1 - mu0;
    ds.t[i] = treated ? 1.0 : 0.0;
    ds.y[i] = (treated ? mu1 : mu0) + noise_sd * eps;
  }
  ds.truth = std::move(truth);
  ds.validate();
  return ds;
}

}  // namespace

void Dataset::validate() {
  if (X.rows() == 0 || X.cols() == 0) fail(ErrorKind::data, "dataset needs N >= 1 and D >= 1");
  if (t.size() != X.rows() || y.size() != X.rows()) {
    fail(ErrorKind::data, "treatment/outcome length does not match row count");
  }
  if (feature_names.empty()) {
    for (std::size_t j = 0; j < X.cols(); ++j) feature_names.push_back("x" + std::to_string(j + 1));
  }
  if (binary_features.empty()) binary_features.assign(X.cols(), false);
  if (feature_names.size() != X.cols() || binary_features.size() != X.cols()) {
    fail(ErrorKind::data, "feature metadata does not match column count");
  }
  for (std::size_t i = 0; i < X.rows(); ++i) {
    for (double v : X.row(i)) {
      if (!std::isfinite(v)) fail(ErrorKind::data, "non-finite covariate in row " + std::to_string(i + 1));
    }
    if (!std::isfinite(t[i]) || !std::isfinite(y[i])) {
      fail(ErrorKind::data, "non-finite treatment or outcome in row " + std::to_string(i + 1));
    }
  }
  if (truth) {
    for (const auto& m : truth->mu) {
      if (m.size() != X.rows()) fail(ErrorKind::data, "truth length does not match row count");
    }
    if (!truth->tau.empty() && truth->tau.size() != X.rows()) {
      fail(ErrorKind::data, "truth tau length does not match row count");
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> idx) const {
  Dataset out;
  out.X = X.select_rows(idx);
  out.t.reserve(idx.size());
  out.y.reserve(idx.size());
  for (auto i : idx) {
    out.t.push_back(t[i]);
    out.y.push_back(y[i]);
  }
  if (truth) {
    GroundTruth tr;
    for (const auto& m : truth->mu) {
      std::vector<double> s;
      s.reserve(idx.size());
      for (auto i : idx) s.push_back(m[i]);
      tr.mu.push_back(std::move(s));
    }
    for (auto i : idx) {
      if (!truth->tau.empty()) tr.tau.push_back(truth->tau[i]);
    }
    out.truth = std::move(tr);
  }
  out.feature_names = feature_names;
  out.binary_features = binary_features;
  return out;
}

CsvSchema CsvSchema::from_json(const nlohmann::json& doc) {
  CsvSchema s;
  try {
    if (doc.contains("treatment")) s.treatment = doc.at("treatment").get<std::string>();
    if (doc.contains("outcome")) s.outcome = doc.at("outcome").get<std::string>();
    if (doc.contains("mu0")) s.mu0 = doc.at("mu0").get<std::string>();
    if (doc.contains("mu1")) s.mu1 = doc.at("mu1").get<std::string>();
    if (doc.contains("binary")) s.binary = doc.at("binary").get<std::vector<std::string>>();
    if (doc.contains("ignore")) s.ignore = doc.at("ignore").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("schema: ") + e.what());
  }
  if (s.mu0.has_value() != s.mu1.has_value()) {
    fail(ErrorKind::parse, "schema must name both mu0 and mu1 or neither");
  }
  return s;
}

nlohmann::json CsvSchema::to_json() const {
  nlohmann::json j{{"treatment", treatment}, {"outcome", outcome}, {"binary", binary}, {"ignore", ignore}};
  if (mu0) j["mu0"] = *mu0;
  if (mu1) j["mu1"] = *mu1;
  return j;
}

Dataset parse_csv(const std::string& text, const CsvSchema& schema) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    for (auto f : split_fields(line)) header.emplace_back(f);
    break;
  }
  if (header.empty()) fail(ErrorKind::parse, "CSV has no header row");

  auto find_col = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorKind::parse, "CSV is missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t t_col = find_col(schema.treatment);
  const std::size_t y_col = find_col(schema.outcome);
  std::optional<std::size_t> mu0_col, mu1_col;
  if (schema.mu0) mu0_col = find_col(*schema.mu0);
  if (schema.mu1) mu1_col = find_col(*schema.mu1);
  for (const auto& b : schema.binary) find_col(b);

  std::vector<std::size_t> feature_cols;
  Dataset ds;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == t_col || c == y_col || c == mu0_col || c == mu1_col) continue;
    if (contains(schema.ignore, header[c])) continue;
    feature_cols.push_back(c);
    ds.feature_names.push_back(header[c]);
    ds.binary_features.push_back(contains(schema.binary, header[c]));
  }
  if (feature_cols.empty()) fail(ErrorKind::parse, "CSV has no feature columns");

  std::vector<double> values;
  std::vector<double> mu0, mu1;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      fail(ErrorKind::parse, "row " + std::to_string(row) + " (line " + std::to_string(line_no) +
                                 ") has " + std::to_string(fields.size()) + " fields, expected " +
                                 std::to_string(header.size()));
    }
    auto cell = [&](std::size_t c) {
      const auto v = parse_real(fields[c]);
      if (!v || !std::isfinite(*v)) {
        fail(ErrorKind::parse, "row " + std::to_string(row) + " (line " + std::to_string(line_no) +
                                   "), column '" + header[c] + "': cannot parse '" +
                                   std::string(fields[c]) + "' as a number");
      }
      return *v;
    };
    for (auto c : feature_cols) values.push_back(cell(c));
    ds.t.push_back(cell(t_col));
    ds.y.push_back(cell(y_col));
    if (mu0_col) mu0.push_back(cell(*mu0_col));
    if (mu1_col) mu1.push_back(cell(*mu1_col));
  }
  if (row == 0) fail(ErrorKind::parse, "CSV has no data rows");
  ds.X = Matrix(row, feature_cols.size());
  std::copy(values.begin(), values.end(), ds.X.data().begin());
  if (mu0_col && mu1_col) {
    GroundTruth tr;
    tr.tau.resize(row);
    for (std::size_t i = 0; i < row; ++i) tr.tau[i] = mu1[i] - mu0[i];
    tr.mu = {std::move(mu0), std::move(mu1)};
    ds.truth = std::move(tr);
  }
  ds.validate();
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::parse, "cannot open CSV file '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return parse_csv(ss.str(), schema);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::string to_csv(const Dataset& data) {
  std::string out;
  for (const auto& name : data.feature_names) out += name + ",";
  out += "t,y";
  const bool with_truth = data.truth && data.truth->mu.size() == 2;
  if (with_truth) out += ",mu0,mu1";
  out += "\n";
  for (std::size_t i = 0; i < data.n(); ++i) {
    for (double v : data.X.row(i)) out += format_real(v) + ",";
    out += format_real(data.t[i]) + "," + format_real(data.y[i]);
    if (with_truth) {
      out += "," + format_real(data.truth->mu[0][i]) + "," + format_real(data.truth->mu[1][i]);
    }
    out += "\n";
  }
  return out;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::data, "cannot write CSV file '" + path.string() + "'");
  f << to_csv(data);
}

SplitDataset split(const Dataset& data, std::uint64_t seed) {
  const std::size_t n = data.n();
  if (n < 10) fail(ErrorKind::input, "split needs at least 10 rows, got " + std::to_string(n));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t n_train = (8 * n + 9) / 10;
  const std::size_t n_val = n / 10;
  SplitDataset s;
  s.seed = seed;
  s.train_idx.assign(idx.begin(), idx.begin() + n_train);
  s.val_idx.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  s.test_idx.assign(idx.begin() + n_train + n_val, idx.end());
  s.train = data.subset(s.train_idx);
  s.val = data.subset(s.val_idx);
  s.test = data.subset(s.test_idx);
  return s;
}

Scaling fit_scaling(const Dataset& train, bool scale_outcome) {
  Scaling s;
  const double n = static_cast<double>(train.n());
  for (std::size_t j = 0; j < train.d(); ++j) {
    Standardization st;
    const bool binary = j < train.binary_features.size() && train.binary_features[j];
    if (!binary) {
      double mean = 0.0;
      for (std::size_t i = 0; i < train.n(); ++i) mean += train.X(i, j);
      mean /= n;
      double var = 0.0;
      for (std::size_t i = 0; i < train.n(); ++i) var += (train.X(i, j) - mean) * (train.X(i, j) - mean);
      var /= n;
      st.mean = mean;
      st.scale = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    s.features.push_back(st);
  }
  if (scale_outcome) {
    double mean = 0.0;
    for (double v : train.y) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : train.y) var += (v - mean) * (v - mean);
    var /= n;
    s.outcome = {mean, var > 1e-24 ? std::sqrt(var) : 1.0};
  }
  return s;
}

Dataset apply_scaling(const Dataset& data, const Scaling& s) {
  if (s.features.size() != data.d()) fail(ErrorKind::shape, "scaling does not match feature count");
  Dataset out = data;
  for (std::size_t i = 0; i < out.n(); ++i) {
    for (std::size_t j = 0; j < out.d(); ++j) out.X(i, j) = s.features[j].apply(out.X(i, j));
    out.y[i] = s.outcome.apply(out.y[i]);
  }
  if (out.truth) {
    for (auto& m : out.truth->mu) {
      for (auto& v : m) v = s.outcome.apply(v);
    }
    for (auto& v : out.truth->tau) v /= s.outcome.scale;
  }
  return out;
}

std::pair<SplitDataset, Scaling> standardize(const SplitDataset& sp, bool scale_outcome) {
  Scaling s = fit_scaling(sp.train, scale_outcome);
  SplitDataset out = sp;
  out.train = apply_scaling(sp.train, s);
  out.val = apply_scaling(sp.val, s);
  out.test = apply_scaling(sp.test, s);
  return {std::move(out), std::move(s)};
}

double EffectTerm::operator()(double x) const noexcept { return c * atom_value(atom, a * x + b) + d; }

nlohmann::json effect_spec_to_json(const EffectSpec& spec) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : spec) {
    arr.push_back({{"feature", e.feature + 1},
                   {"atom", std::string(atom_name(e.atom))},
                   {"a", e.a},
                   {"b", e.b},
                   {"c", e.c},
                   {"d", e.d}});
  }
  return arr;
}

EffectSpec effect_spec_from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) fail(ErrorKind::parse, "effect spec must be an array");
  EffectSpec spec;
  try {
    for (const auto& j : doc) {
      EffectTerm e;
      const auto feature = j.at("feature").get<std::size_t>();
      if (feature < 1) fail(ErrorKind::parse, "effect feature indices start at 1");
      e.feature = feature - 1;
      const auto name = j.at("atom").get<std::string>();
      const auto id = atom_from_name(name);
      if (!id) fail(ErrorKind::parse, "unknown atom '" + name + "' in effect spec");
      e.atom = *id;
      e.a = j.value("a", 1.0);
      e.b = j.value("b", 0.0);
      e.c = j.value("c", 1.0);
      e.d = j.value("d", 0.0);
      spec.push_back(e);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("effect spec: ") + e.what());
  }
  return spec;
}

double generator_mu0(std::span<const double> x) noexcept {
  double mu = 1.0;
  if (x.size() > 0) mu += 0.8 * x[0];
  if (x.size() > 1) mu -= 0.5 * x[1];
  if (x.size() > 2) mu += 0.3 * x[2] * x[2];
  return mu;
}

double generator_propensity(std::span<const double> x) noexcept {
  double logit = 0.0;
  if (x.size() > 0) logit += 0.8 * x[0];
  if (x.size() > 1) logit -= 0.6 * x[1];
  return sigmoid(logit);
}

Dataset gen_homogeneous(std::size_t n, std::size_t d, double tau, double noise_sd,
                        std::uint64_t seed) {
  EffectSpec spec;
  if (tau != 0.0) {
    // A constant term: c * f(0) + d with d = tau.
    EffectTerm e;
    e.atom = AtomId::identity;
    e.a = 0.0;
    e.c = 0.0;
    e.d = tau;
    spec.push_back(e);
  }
  return generate(n, d, spec, noise_sd, seed);
}

Dataset gen_heterogeneous(std::size_t n, std::size_t d, const EffectSpec& effects,
                          double noise_sd, std::uint64_t seed) {
  return generate(n, d, effects, noise_sd, seed);
}

}  // namespace causalkan
