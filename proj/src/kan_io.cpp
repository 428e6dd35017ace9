#include "causalkan/kan_io.hpp"

#include <string>

#include "causalkan/error.hpp"

namespace causalkan {

namespace {

using nlohmann::json;

const json& field(const json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key)) {
    fail(ErrorKind::parse, std::string("missing field '") + key + "'");
  }
  return doc.at(key);
}

template <typename T>
T get(const json& doc, const char* key) {
  try {
    return field(doc, key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace

json atom_fit_to_json(const AtomFit& fit) {
  json j{{"atom", std::string(atom_name(fit.atom))},
         {"a", fit.a},
         {"b", fit.b},
         {"c", fit.c},
         {"d", fit.d},
         {"r2", fit.r2}};
  if (!fit.poly.empty()) j["poly"] = fit.poly;
  return j;
}

AtomFit atom_fit_from_json(const json& doc) {
  AtomFit fit;
  const auto name = get<std::string>(doc, "atom");
  const auto id = atom_from_name(name);
  if (!id) fail(ErrorKind::parse, "unknown atom '" + name + "'");
  fit.atom = *id;
  fit.a = get<double>(doc, "a");
  fit.b = get<double>(doc, "b");
  fit.c = get<double>(doc, "c");
  fit.d = get<double>(doc, "d");
  fit.r2 = get<double>(doc, "r2");
  if (doc.contains("poly")) fit.poly = get<std::vector<double>>(doc, "poly");
  if (is_polynomial(fit.atom) &&
      fit.poly.size() != static_cast<std::size_t>(polynomial_degree(fit.atom) + 1)) {
    fail(ErrorKind::parse, "polynomial atom '" + name + "' has wrong coefficient count");
  }
  return fit;
}

json network_to_json(const KanNetwork& net) {
  json layers = json::array();
  for (const auto& layer : net.layers) {
    json kinds = json::array();
    for (auto k : layer.node_kinds) kinds.push_back(k == NodeKind::sum ? "sum" : "product");
    json edges = json::array();
    for (const auto& e : layer.edges) {
      json je{{"active", e.active},
              {"base", e.base == BaseKind::silu ? "silu" : "identity"},
              {"w_b", e.w_b},
              {"w_s", e.w_s},
              {"coeffs", e.coeffs},
              {"grid",
               {{"min", e.grid.domain_min()},
                {"max", e.grid.domain_max()},
                {"G", e.grid.intervals()},
                {"k", e.grid.order()}}}};
      if (e.symbolic) je["symbolic"] = atom_fit_to_json(*e.symbolic);
      edges.push_back(std::move(je));
    }
    layers.push_back({{"n_in", layer.n_in},
                      {"n_out", layer.n_out},
                      {"node_kinds", std::move(kinds)},
                      {"edges", std::move(edges)}});
  }
  json stdz = json::array();
  for (const auto& s : net.input_standardization) stdz.push_back({{"mean", s.mean}, {"scale", s.scale}});
  return json{{"format", "causalkan.network"},
              {"version", kNetworkFormatVersion},
              {"widths", net.widths()},
              {"layers", std::move(layers)},
              {"input_standardization", std::move(stdz)},
              {"output_bias", net.output_bias}};
}

KanNetwork network_from_json(const json& doc) {
  const int version = get<int>(doc, "version");
  if (version != kNetworkFormatVersion) {
    fail(ErrorKind::parse, "unsupported network format version " + std::to_string(version));
  }
  KanNetwork net;
  const json& layers = field(doc, "layers");
  if (!layers.is_array()) fail(ErrorKind::parse, "'layers' must be an array");
  for (const auto& jl : layers) {
    KanLayer layer;
    layer.n_in = get<std::size_t>(jl, "n_in");
    layer.n_out = get<std::size_t>(jl, "n_out");
    for (const auto& k : field(jl, "node_kinds")) {
      const auto s = k.get<std::string>();
      if (s == "sum") {
        layer.node_kinds.push_back(NodeKind::sum);
      } else if (s == "product") {
        layer.node_kinds.push_back(NodeKind::product);
      } else {
        fail(ErrorKind::parse, "unknown node kind '" + s + "'");
      }
    }
    for (const auto& je : field(jl, "edges")) {
      const json& g = field(je, "grid");
      EdgeFunction e(SplineGrid(get<double>(g, "min"), get<double>(g, "max"), get<int>(g, "G"),
                                get<int>(g, "k")));
      e.active = get<bool>(je, "active");
      if (je.contains("base")) {
        const auto b = get<std::string>(je, "base");
        if (b == "silu") {
          e.base = BaseKind::silu;
        } else if (b == "identity") {
          e.base = BaseKind::identity;
        } else {
          fail(ErrorKind::parse, "unknown edge baseline '" + b + "'");
        }
      }
      e.w_b = get<double>(je, "w_b");
      e.w_s = get<double>(je, "w_s");
      e.coeffs = get<std::vector<double>>(je, "coeffs");
      if (je.contains("symbolic")) e.symbolic = atom_fit_from_json(je.at("symbolic"));
      layer.edges.push_back(std::move(e));
    }
    net.layers.push_back(std::move(layer));
  }
  for (const auto& s : field(doc, "input_standardization")) {
    net.input_standardization.push_back({get<double>(s, "mean"), get<double>(s, "scale")});
  }
  net.output_bias = get<std::vector<double>>(doc, "output_bias");
  try {
    net.validate();
  } catch (const Error& e) {
    fail(ErrorKind::parse, std::string("invalid network document: ") + e.what());
  }
  return net;
}

}  // namespace causalkan
