#include "causalkan/viz.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "causalkan/error.hpp"
#include "causalkan/expr.hpp"

namespace causalkan {

using nlohmann::json;

namespace {

void finish_means(ContributionsMatrix& cm) {
  const std::size_t n = cm.delta.rows();
  cm.column_means.assign(cm.delta.cols(), 0.0);
  if (n == 0) return;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < cm.delta.cols(); ++j) cm.column_means[j] += cm.delta(i, j);
  }
  for (auto& v : cm.column_means) v /= static_cast<double>(n);
}

}  // namespace

ContributionsMatrix contributions(const KanNetwork& net, const Matrix& x) {
  if (!net.is_additive() || net.output_width() != 1) {
    fail(ErrorKind::structure, "contributions need a single-output additive network");
  }
  if (x.cols() != net.input_width()) fail(ErrorKind::shape, "input width mismatch");
  ContributionsMatrix cm;
  cm.delta = Matrix(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto terms = additive_terms(net, x.row(i));
    std::copy(terms.begin(), terms.end(), cm.delta.row(i).begin());
  }
  cm.bias = net.output_bias[0];
  cm.labels = default_var_names(x.cols(), false);
  finish_means(cm);
  return cm;
}

ContributionsMatrix head_contributions(const CausalModel& m, const Matrix& x, int arm) {
  if (x.cols() != m.input_dim) fail(ErrorKind::shape, "covariate width mismatch");
  if (m.representation) fail(ErrorKind::structure, "models with a representation are not additive in x");
  if (!m.treatment.is_discrete()) fail(ErrorKind::structure, "head contributions need a discrete treatment");
  m.treatment.arm_of(arm);
  ContributionsMatrix cm;
  if (m.architecture == Architecture::S) {
    Matrix xt(x.rows(), x.cols() + 1);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      std::copy(x.row(i).begin(), x.row(i).end(), xt.row(i).begin());
      xt(i, x.cols()) = arm;
    }
    cm = contributions(m.heads[0], xt);
    cm.labels = default_var_names(x.cols(), true);
  } else {
    cm = contributions(m.heads[static_cast<std::size_t>(arm)], x);
  }
  for (auto& v : cm.delta.data()) v *= m.outcome.scale;
  cm.bias = m.outcome.mean + m.outcome.scale * cm.bias;
  finish_means(cm);
  return cm;
}

ContributionsMatrix cate_contributions(const CausalModel& m, const Matrix& x) {
  if (x.cols() != m.input_dim) fail(ErrorKind::shape, "covariate width mismatch");
  ContributionsMatrix cm;
  cm.delta = Matrix(x.rows(), x.cols());
  cm.labels = default_var_names(x.cols(), false);
  if (m.architecture == Architecture::S) {
    cm.bias = effect_curve(m).effect(0.0, 1.0);
  } else if (m.architecture == Architecture::T) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const auto d = tkaam_decomposition(m, x.row(i));
      std::copy(d.contributions.begin(), d.contributions.end(), cm.delta.row(i).begin());
      cm.bias = d.bias_difference;
    }
    if (x.rows() == 0) cm.bias = tkaam_decomposition(m, std::vector<double>(x.cols(), 0.0)).bias_difference;
  } else {
    fail(ErrorKind::structure, "CATE contributions need an additive S or T model");
  }
  finish_means(cm);
  return cm;
}

std::vector<double> prp_deviations(const ContributionsMatrix& cm, std::size_t i) {
  if (i >= cm.delta.rows()) {
    fail(ErrorKind::input, "individual " + std::to_string(i) + " out of range (" +
                               std::to_string(cm.delta.rows()) + " rows)");
  }
  std::vector<double> out(cm.delta.cols());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = cm.delta(i, j) - cm.column_means[j];
  return out;
}

// ---------------------------------------------------------------------------
// Curves

namespace {

const char* kind_name(CurveKind k) {
  switch (k) {
    case CurveKind::pdp: return "pdp";
    case CurveKind::ice: return "ice";
    case CurveKind::effect_curve: return "effect_curve";
  }
  return "pdp";
}

CurveKind kind_from(const std::string& s) {
  if (s == "pdp") return CurveKind::pdp;
  if (s == "ice") return CurveKind::ice;
  if (s == "effect_curve") return CurveKind::effect_curve;
  fail(ErrorKind::parse, "unknown curve kind '" + s + "'");
}

void check_grid(std::span<const double> grid) {
  if (grid.empty()) fail(ErrorKind::input, "empty grid");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) fail(ErrorKind::input, "grid must be strictly increasing");
  }
}

bool outside(std::span<const double> grid, std::optional<std::pair<double, double>> range) {
  return range && (grid.front() < range->first || grid.back() > range->second);
}

void center(std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double& x : v) x -= mean;
}

std::vector<double> averaged_sweep(const Predictor& f, std::size_t feature, std::span<const double> grid,
                                   const Matrix& rows) {
  std::vector<double> out;
  out.reserve(grid.size());
  Matrix probe = rows;
  for (double g : grid) {
    for (std::size_t i = 0; i < probe.rows(); ++i) probe(i, feature) = g;
    const auto pred = f(probe);
    double s = 0.0;
    for (double v : pred) s += v;
    out.push_back(s / static_cast<double>(pred.size()));
  }
  return out;
}

}  // namespace

json CurveData::to_json() const {
  json meta{{"label", label}, {"extrapolated", extrapolated}};
  if (individual) meta["individual"] = *individual;
  return {{"kind", kind_name(kind)}, {"feature", feature}, {"grid", grid}, {"values", values}, {"meta", meta}};
}

CurveData CurveData::from_json(const json& doc) {
  try {
    CurveData c;
    c.kind = kind_from(doc.at("kind").get<std::string>());
    c.feature = doc.at("feature").get<std::size_t>();
    c.grid = doc.at("grid").get<std::vector<double>>();
    c.values = doc.at("values").get<std::vector<double>>();
    const auto& meta = doc.at("meta");
    c.label = meta.value("label", "");
    c.extrapolated = meta.value("extrapolated", false);
    if (meta.contains("individual")) c.individual = meta.at("individual").get<std::size_t>();
    if (c.grid.size() != c.values.size()) fail(ErrorKind::parse, "curve grid and values differ in length");
    return c;
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("curve document: ") + e.what());
  }
}

Predictor cate_predictor(const CausalModel& m) {
  return [&m](const Matrix& x) { return predict_cate_batch(m, x); };
}

Predictor mu_predictor(const CausalModel& m, double t) {
  return [&m, t](const Matrix& x) { return predict_mu_batch(m, x, t); };
}

CurveData pdp(const Predictor& f, std::size_t feature, std::span<const double> grid, const Matrix& background,
              std::optional<std::pair<double, double>> train_range) {
  if (background.empty()) fail(ErrorKind::input, "pdp needs a non-empty background set");
  if (feature >= background.cols()) fail(ErrorKind::input, "feature index out of range");
  check_grid(grid);
  CurveData c;
  c.kind = CurveKind::pdp;
  c.feature = feature;
  c.grid.assign(grid.begin(), grid.end());
  c.values = averaged_sweep(f, feature, grid, background);
  center(c.values);
  c.extrapolated = outside(grid, train_range);
  c.label = "PDP x" + std::to_string(feature + 1);
  return c;
}

CurveData ice(const Predictor& f, std::size_t feature, std::span<const double> grid, const Matrix& x,
              std::size_t individual, std::optional<std::pair<double, double>> train_range) {
  if (individual >= x.rows()) fail(ErrorKind::input, "individual index out of range");
  if (feature >= x.cols()) fail(ErrorKind::input, "feature index out of range");
  check_grid(grid);
  const std::size_t idx[] = {individual};
  CurveData c;
  c.kind = CurveKind::ice;
  c.feature = feature;
  c.individual = individual;
  c.grid.assign(grid.begin(), grid.end());
  c.values = averaged_sweep(f, feature, grid, x.select_rows(idx));
  center(c.values);
  c.extrapolated = outside(grid, train_range);
  c.label = "ICE x" + std::to_string(feature + 1) + " #" + std::to_string(individual);
  return c;
}

CurveData effect_curve_data(const CausalModel& m, std::span<const double> grid) {
  check_grid(grid);
  const EffectCurve ec = effect_curve(m);
  CurveData c;
  c.kind = CurveKind::effect_curve;
  c.feature = m.input_dim;
  c.grid.assign(grid.begin(), grid.end());
  for (double t : grid) c.values.push_back(ec(t));
  c.label = "treatment edge f_t";
  return c;
}

std::vector<double> linear_grid(double lo, double hi, std::size_t n) {
  if (n < 2 || !(hi > lo)) fail(ErrorKind::input, "linear_grid needs n >= 2 and hi > lo");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  g.back() = hi;
  return g;
}

json RadarSpec::to_json() const { return {{"kind", "radar"}, {"title", title}, {"axes", axes}, {"values", values}}; }

RadarSpec RadarSpec::from_json(const json& doc) {
  try {
    RadarSpec r;
    r.title = doc.value("title", "");
    r.axes = doc.at("axes").get<std::vector<std::string>>();
    r.values = doc.at("values").get<std::vector<double>>();
    if (r.axes.size() != r.values.size()) fail(ErrorKind::parse, "radar axes and values differ in length");
    return r;
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("radar document: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// SVG

std::vector<double> nice_ticks(double lo, double hi, int target) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) fail(ErrorKind::render, "non-finite axis range");
  if (hi < lo) std::swap(lo, hi);
  if (hi - lo < 1e-12) {
    const double pad = std::max(0.5, 0.1 * std::abs(lo));
    lo -= pad;
    hi += pad;
  }
  const double raw = (hi - lo) / std::max(1, target);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double f = raw / mag;
  const double step = (f < 1.5 ? 1.0 : f < 3.0 ? 2.0 : f < 7.0 ? 5.0 : 10.0) * mag;
  const long first = static_cast<long>(std::floor(lo / step + 1e-9));
  const long last = static_cast<long>(std::ceil(hi / step - 1e-9));
  std::vector<double> ticks;
  for (long i = first; i <= last; ++i) {
    const double v = static_cast<double>(i) * step;
    ticks.push_back(std::abs(v) < step * 1e-9 ? 0.0 : v);
  }
  return ticks;
}

namespace {

constexpr double kPanelW = 360.0;
constexpr double kPanelH = 260.0;
constexpr double kLeft = 52.0;
constexpr double kRight = 16.0;
constexpr double kTop = 30.0;
constexpr double kBottom = 36.0;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return std::string(buf) == "-0.00" ? "0.00" : buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string series_name(const Plot& p, std::size_t index) {
  if (const auto* c = std::get_if<CurveData>(&p)) {
    return c->label.empty() ? std::string(kind_name(c->kind)) + " #" + std::to_string(index) : c->label;
  }
  const auto& r = std::get<RadarSpec>(p);
  return r.title.empty() ? "radar #" + std::to_string(index) : r.title;
}

void check_finite(const Plot& p, std::size_t index) {
  auto bad = [](const std::vector<double>& v) {
    return std::any_of(v.begin(), v.end(), [](double x) { return !std::isfinite(x); });
  };
  bool broken = false;
  if (const auto* c = std::get_if<CurveData>(&p)) {
    broken = bad(c->grid) || bad(c->values);
    if (c->grid.size() != c->values.size() || c->grid.empty()) {
      fail(ErrorKind::render, "series '" + series_name(p, index) + "' has mismatched or empty data");
    }
  } else {
    const auto& r = std::get<RadarSpec>(p);
    broken = bad(r.values);
    if (r.values.size() != r.axes.size() || r.values.empty()) {
      fail(ErrorKind::render, "series '" + series_name(p, index) + "' has mismatched or empty data");
    }
  }
  if (broken) fail(ErrorKind::render, "series '" + series_name(p, index) + "' contains a non-finite value");
}

void render_curve(std::string& out, const CurveData& c, const std::string& name) {
  const auto [ymin, ymax] = std::minmax_element(c.values.begin(), c.values.end());
  const auto xt = nice_ticks(c.grid.front(), c.grid.back());
  const auto yt = nice_ticks(*ymin, *ymax);
  const double x0 = xt.front(), x1 = xt.back(), y0 = yt.front(), y1 = yt.back();
  const double w = kPanelW - kLeft - kRight, h = kPanelH - kTop - kBottom;
  auto px = [&](double x) { return kLeft + w * (x - x0) / (x1 - x0); };
  auto py = [&](double y) { return kTop + h * (1.0 - (y - y0) / (y1 - y0)); };

  out += "<text class=\"title\" x=\"" + num(kPanelW / 2) + "\" y=\"18\" text-anchor=\"middle\">" +
         escape(name) + (c.extrapolated ? " (extrapolated)" : "") + "</text>\n";
  out += "<rect class=\"frame\" x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(w) +
         "\" height=\"" + num(h) + "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (double t : xt) {
    out += "<line class=\"tick\" x1=\"" + num(px(t)) + "\" y1=\"" + num(kTop + h) + "\" x2=\"" + num(px(t)) +
           "\" y2=\"" + num(kTop + h + 4) + "\" stroke=\"#444\"/>";
    out += "<text x=\"" + num(px(t)) + "\" y=\"" + num(kTop + h + 16) + "\" text-anchor=\"middle\">" +
           tick_label(t) + "</text>\n";
  }
  for (double t : yt) {
    out += "<line class=\"tick\" x1=\"" + num(kLeft - 4) + "\" y1=\"" + num(py(t)) + "\" x2=\"" + num(kLeft) +
           "\" y2=\"" + num(py(t)) + "\" stroke=\"#444\"/>";
    out += "<text x=\"" + num(kLeft - 7) + "\" y=\"" + num(py(t) + 4) + "\" text-anchor=\"end\">" +
           tick_label(t) + "</text>\n";
  }
  const std::string xlabel = c.kind == CurveKind::effect_curve ? "t" : "x" + std::to_string(c.feature + 1);
  out += "<text x=\"" + num(kLeft + w / 2) + "\" y=\"" + num(kPanelH - 4) + "\" text-anchor=\"middle\">" +
         xlabel + "</text>\n";
  out += "<polyline class=\"series\" fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < c.grid.size(); ++i) {
    if (i) out += ' ';
    out += num(px(c.grid[i])) + "," + num(py(c.values[i]));
  }
  out += "\"/>\n";
}

void render_radar(std::string& out, const RadarSpec& r, const std::string& name) {
  double m = 0.0;
  for (double v : r.values) m = std::max(m, std::abs(v));
  if (m == 0.0) m = 1.0;
  const double cx = kPanelW / 2, cy = (kPanelH + kTop) / 2 - 6;
  const double radius = std::min(kPanelW, kPanelH - kTop) / 2 - 28;
  auto rad = [&](double v) { return radius * (0.5 + 0.5 * v / m); };
  const std::size_t d = r.values.size();
  auto point = [&](std::size_t j, double rr) {
    const double ang = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(d) - std::numbers::pi / 2;
    return std::pair{cx + rr * std::cos(ang), cy + rr * std::sin(ang)};
  };

  out += "<text class=\"title\" x=\"" + num(kPanelW / 2) + "\" y=\"18\" text-anchor=\"middle\">" + escape(name) +
         "</text>\n";
  for (double ring : {-m, 0.0, m}) {
    out += "<circle class=\"ring\" cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"" + num(rad(ring)) +
           "\" fill=\"none\" stroke=\"" + (ring == 0.0 ? "#888" : "#ccc") + "\"/>\n";
  }
  for (std::size_t j = 0; j < d; ++j) {
    const auto [ex, ey] = point(j, radius);
    const auto [lx, ly] = point(j, radius + 12);
    out += "<line class=\"spoke\" x1=\"" + num(cx) + "\" y1=\"" + num(cy) + "\" x2=\"" + num(ex) + "\" y2=\"" +
           num(ey) + "\" stroke=\"#bbb\"/>";
    out += "<text x=\"" + num(lx) + "\" y=\"" + num(ly + 4) + "\" text-anchor=\"middle\">" + escape(r.axes[j]) +
           "</text>\n";
  }
  out += "<polygon class=\"series\" fill=\"#1f5fa8\" fill-opacity=\"0.25\" stroke=\"#1f5fa8\" points=\"";
  for (std::size_t j = 0; j < d; ++j) {
    const auto [x, y] = point(j, rad(r.values[j]));
    if (j) out += ' ';
    out += num(x) + "," + num(y);
  }
  out += "\"/>\n";
  out += "<text class=\"legend\" x=\"" + num(kPanelW / 2) + "\" y=\"" + num(kPanelH - 4) +
         "\" text-anchor=\"middle\">shared symmetric scale +/-" + tick_label(m) + ", grey ring at 0</text>\n";
}

}  // namespace

std::string render_svg(std::span<const Plot> plots, const std::string& title) {
  if (plots.empty()) fail(ErrorKind::render, "nothing to render");
  for (std::size_t i = 0; i < plots.size(); ++i) check_finite(plots[i], i);
  const std::size_t cols = std::min<std::size_t>(2, plots.size());
  const std::size_t rows = (plots.size() + cols - 1) / cols;
  const double head = title.empty() ? 0.0 : 28.0;
  const double width = kPanelW * static_cast<double>(cols);
  const double height = kPanelH * static_cast<double>(rows) + head;

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + num(width) + "\" height=\"" +
         num(height) + "\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\" font-family=\"sans-serif\" " +
         "font-size=\"11\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty()) {
    out += "<text class=\"figure-title\" x=\"" + num(width / 2) + "\" y=\"20\" text-anchor=\"middle\" " +
           "font-size=\"14\">" + escape(title) + "</text>\n";
  }
  for (std::size_t i = 0; i < plots.size(); ++i) {
    const double ox = kPanelW * static_cast<double>(i % cols);
    const double oy = head + kPanelH * static_cast<double>(i / cols);
    out += "<g class=\"panel\" transform=\"translate(" + num(ox) + "," + num(oy) + ")\">\n";
    const std::string name = series_name(plots[i], i);
    if (const auto* c = std::get_if<CurveData>(&plots[i])) {
      render_curve(out, *c, name);
    } else {
      render_radar(out, std::get<RadarSpec>(plots[i]), name);
    }
    out += "</g>\n";
  }
  out += "</svg>\n";
  return out;
}

json emit_json(std::span<const Plot> plots) {
  json arr = json::array();
  for (const auto& p : plots) {
    arr.push_back(std::visit([](const auto& v) { return v.to_json(); }, p));
  }
  return {{"format", "causalkan.plots"}, {"version", 1}, {"plots", std::move(arr)}};
}

std::vector<Plot> plots_from_json(const json& doc) {
  std::vector<Plot> out;
  try {
    for (const auto& p : doc.at("plots")) {
      if (p.at("kind").get<std::string>() == "radar") {
        out.emplace_back(RadarSpec::from_json(p));
      } else {
        out.emplace_back(CurveData::from_json(p));
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("plots document: ") + e.what());
  }
  return out;
}

}  // namespace causalkan
