#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "causalkan/atoms.hpp"
#include "causalkan/kan.hpp"
#include "causalkan/matrix.hpp"

namespace causalkan {

/// Known potential outcomes, one vector per arm. `tau` is mu[1] - mu[0].
struct GroundTruth {
  std::vector<std::vector<double>> mu;
  std::vector<double> tau;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct Dataset {
  Matrix X;
  std::vector<double> t;
  std::vector<double> y;
  std::optional<GroundTruth> truth;
  std::vector<std::string> feature_names;
  std::vector<bool> binary_features;  // excluded from scaling

  std::size_t n() const noexcept { return X.rows(); }
  std::size_t d() const noexcept { return X.cols(); }

  /// Fills default feature names and flags, then checks shapes and finiteness.
  void validate();
  Dataset subset(std::span<const std::size_t> idx) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Column roles for CSV ingestion. Every other column is a feature, in header
/// order.
struct CsvSchema {
  std::string treatment = "t";
  std::string outcome = "y";
  std::optional<std::string> mu0;
  std::optional<std::string> mu1;
  std::vector<std::string> binary;
  std::vector<std::string> ignore;

  static CsvSchema from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);
Dataset parse_csv(const std::string& text, const CsvSchema& schema);
/// Writes features, t, y and (if present) mu0, mu1 columns; the default
/// schema reads it back to an equal dataset.
std::string to_csv(const Dataset& data);
void save_csv(const Dataset& data, const std::filesystem::path& path);

struct SplitDataset {
  Dataset train;
  Dataset val;
  Dataset test;
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;
  std::vector<std::size_t> test_idx;
  std::uint64_t seed = 0;
};

/// Seeded 80/10/10 partition: ceil(0.8N) / floor(0.1N) / remainder.
SplitDataset split(const Dataset& data, std::uint64_t seed);

struct Scaling {
  std::vector<Standardization> features;
  Standardization outcome;
};

/// Per-feature z-scoring from the training split; binary and constant
/// features get scale 1 (binary ones also keep mean 0).
Scaling fit_scaling(const Dataset& train, bool scale_outcome);
Dataset apply_scaling(const Dataset& data, const Scaling& s);
std::pair<SplitDataset, Scaling> standardize(const SplitDataset& split, bool scale_outcome);

/// One planted effect term c * f(a * x_j + b) + d.
struct EffectTerm {
  std::size_t feature = 0;
  AtomId atom = AtomId::identity;
  double a = 1.0;
  double b = 0.0;
  double c = 1.0;
  double d = 0.0;

  double operator()(double x) const noexcept;
  friend bool operator==(const EffectTerm&, const EffectTerm&) = default;
};

using EffectSpec = std::vector<EffectTerm>;

nlohmann::json effect_spec_to_json(const EffectSpec& spec);
EffectSpec effect_spec_from_json(const nlohmann::json& doc);

/// Baseline surface mu0(x) = 1 + 0.8 x1 - 0.5 x2 + 0.3 x3^2 (terms beyond d
/// are dropped) and confounded assignment logit(e) = 0.8 x1 - 0.6 x2.
double generator_mu0(std::span<const double> x) noexcept;
double generator_propensity(std::span<const double> x) noexcept;

/// Covariates are N(0, 1) draws rounded to multiples of 2^-10; mu0 and tau
/// are rounded to multiples of 2^-20.
Dataset gen_homogeneous(std::size_t n, std::size_t d, double tau, double noise_sd,
                        std::uint64_t seed);
Dataset gen_heterogeneous(std::size_t n, std::size_t d, const EffectSpec& effects,
                          double noise_sd, std::uint64_t seed);

}  // namespace causalkan
