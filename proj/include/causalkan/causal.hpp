#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "causalkan/data.hpp"
#include "causalkan/hp.hpp"
#include "causalkan/kan.hpp"
#include "causalkan/matrix.hpp"

namespace causalkan {

enum class Architecture { S, T, TAR, Dragon };

std::string architecture_name(Architecture a);
Architecture architecture_from_name(const std::string& name);

struct TreatmentSpace {
  enum class Kind { binary, discrete, continuous };
  Kind kind = Kind::binary;
  int arms = 2;            // K for binary/discrete
  double reference = 0.0;  // t0 for continuous

  static TreatmentSpace binary() { return {}; }
  static TreatmentSpace discrete(int k);
  static TreatmentSpace continuous(double t0);

  bool is_discrete() const noexcept { return kind != Kind::continuous; }
  bool contains(double t) const noexcept;
  /// Arm label of a discrete t (input error if t is not a label 0..K-1).
  int arm_of(double t) const;

  nlohmann::json to_json() const;
  static TreatmentSpace from_json(const nlohmann::json& doc);

  friend bool operator==(const TreatmentSpace&, const TreatmentSpace&) = default;
};

/// Data-driven input conditioning shared by every architecture.
struct InputConditioning {
  std::vector<Standardization> features;
  std::vector<std::pair<double, double>> feature_domains;  // standardized units
  Standardization treatment;
  std::pair<double, double> treatment_domain{0.0, 1.0};
  Standardization outcome;
};

/// Layer-0 domains are the standardized training range widened by 10% of
/// its width on each side. Discrete treatments use [0, K-1] unscaled.
InputConditioning condition_inputs(const Dataset& train, const TreatmentSpace& ts);

struct CausalModel {
  Architecture architecture = Architecture::S;
  TreatmentSpace treatment;
  std::size_t input_dim = 0;
  std::vector<KanNetwork> heads;  // S: one net on (x, t); otherwise one per arm
  std::optional<KanNetwork> representation;
  std::optional<KanNetwork> propensity;
  Standardization outcome;  // nets predict (y - mean) / scale

  std::size_t arm_count() const noexcept {
    return treatment.is_discrete() ? static_cast<std::size_t>(treatment.arms) : 0;
  }

  friend bool operator==(const CausalModel&, const CausalModel&) = default;
};

CausalModel build(Architecture arch, const TreatmentSpace& ts, std::size_t input_dim,
                  const HpPoint& hp, std::uint64_t seed,
                  const InputConditioning* conditioning = nullptr);

/// Subnets in a fixed order: heads, representation, propensity.
std::vector<KanNetwork*> subnets(CausalModel& m);
std::vector<const KanNetwork*> subnets(const CausalModel& m);
std::vector<std::string> subnet_names(const CausalModel& m);

std::vector<double> model_parameters(const CausalModel& m);
void set_model_parameters(CausalModel& m, std::span<const double> params);

/// The input matrix each subnet sees on `data`, in subnets() order: (x, t)
/// for S, x for T heads and the representation, z(x) for TAR/Dragon heads
/// and the propensity head.
std::vector<Matrix> subnet_inputs(const CausalModel& m, const Dataset& data);

/// Representation z(x) for TAR/Dragon; x itself otherwise.
Matrix representation_of(const CausalModel& m, const Matrix& x);

double predict_mu(const CausalModel& m, std::span<const double> x, double t);
std::vector<double> predict_mu_batch(const CausalModel& m, const Matrix& x, double t);
/// mu at each row's own treatment.
std::vector<double> predict_factual(const CausalModel& m, const Matrix& x,
                                    std::span<const double> t);

double predict_cate(const CausalModel& m, std::span<const double> x);
std::vector<double> predict_cate_batch(const CausalModel& m, const Matrix& x);
double pairwise_cate(const CausalModel& m, std::span<const double> x, int a, int b);

inline constexpr double kPropensityClip = 1e-7;

/// Dragon only: N x K matrix of treatment probabilities, clipped to
/// [kPropensityClip, 1 - kPropensityClip] (column 1 is e(x)
/// for binary treatment).
Matrix predict_propensity(const CausalModel& m, const Matrix& x);

/// Loss on `data` in outcome units: S mean factual squared error; T/TAR the
/// factual-arm squared error summed over arms and divided by N; Dragon adds
/// lambda_ps times the mean cross-entropy of the propensity head.
double architecture_loss(const CausalModel& m, const Dataset& data, double lambda_ps);

/// Mean propensity cross-entropy on `data` (Dragon only).
double propensity_log_loss(const CausalModel& m, const Dataset& data);

struct ObjectiveValue {
  double outcome = 0.0;     // standardized outcome units
  double propensity = 0.0;  // mean cross-entropy, unweighted
  double regularizer = 0.0;
  double total = 0.0;
};

/// Training objective with outcomes in standardized units, plus the summed
/// subnet regularizers. When `grad` is non-null it receives the gradient with
/// respect to model_parameters().
ObjectiveValue objective(const CausalModel& m, const Dataset& data, double lambda_ps,
                         const RegularizerWeights& reg, std::vector<double>* grad);

std::vector<double> dose_response(const CausalModel& m, std::span<const double> x,
                                  std::span<const double> t_values);
double cate_continuous(const CausalModel& m, std::span<const double> x, double t);

/// Treatment-input edge of an additive S model, in outcome units.
struct EffectCurve {
  EdgeFunction edge;
  Standardization input;
  double scale = 1.0;

  double operator()(double t) const;
  /// f_t(b) - f_t(a); the binary CATE is effect(0, 1).
  double effect(double a, double b) const { return (*this)(b) - (*this)(a); }
};

EffectCurve effect_curve(const CausalModel& m);

struct TkaamDecomposition {
  std::vector<double> contributions;  // f_j^1(x_j) - f_j^0(x_j), outcome units
  double bias_difference = 0.0;
};

TkaamDecomposition tkaam_decomposition(const CausalModel& m, std::span<const double> x,
                                       int a = 0, int b = 1);

/// Per-input contributions of a single-output additive net in its own
/// output units (before bias). Structure error for non-additive nets.
std::vector<double> additive_terms(const KanNetwork& net, std::span<const double> x);

/// Stacks shallow TAR/Dragon outcome heads into one K-output network on z.
/// Structure error if any head has hidden layers.
KanNetwork merge_shallow_heads(const CausalModel& m);

nlohmann::json model_to_json(const CausalModel& m);
CausalModel model_from_json(const nlohmann::json& doc);

}  // namespace causalkan
