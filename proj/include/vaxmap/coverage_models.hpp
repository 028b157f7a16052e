#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vaxmap {

enum class ModelClass { BinomialNN, BetaBinomialOD, LonoBinomialOD, BinomialTS };

const char* to_string(ModelClass c);
ModelClass parse_model_class(const std::string& text);

// Classes whose likelihood carries a per-cluster logit-normal nugget.
inline bool has_cluster_nugget(ModelClass c) {
  return c == ModelClass::LonoBinomialOD || c == ModelClass::BinomialTS;
}

/// Weakly informative priors. Fixed effects are Normal(0, fixed_sd^2) on the
/// standardized-covariate scale; the remaining entries are Normal priors on
/// log-parameters. `rho_median` defaults to one fifth of the data diameter
/// when left unset.
struct PriorSpec {
  double fixed_sd = 10.0;
  std::optional<double> rho_median;
  double log_rho_sd = 1.0;
  double log_sigma_s_mean = 0.0;
  double log_sigma_s_sd = 1.0;
  double log_d_mean = 0.0;
  double log_d_sd = 1.5;
  double log_nugget_mean = 0.0;
  double log_nugget_sd = 1.0;

  void validate() const;
};

struct ModelSpec {
  ModelClass model_class = ModelClass::BinomialNN;
  bool include_strata = false;
  std::vector<std::string> covariate_names;
  PriorSpec priors;

  // alpha, beta..., gamma (when include_strata)
  std::size_t fixed_effect_count() const { return 1 + covariate_names.size() + (include_strata ? 1 : 0); }
};

/// One joint parameter state. `gamma` is present iff strata are modelled;
/// `d` only for the Beta-Binomial class; `sigma_nugget` (sigma_delta or
/// sigma_epsilon) only for the Lono-Binomial and true-signal classes.
struct ParamVector {
  double alpha = 0.0;
  Eigen::VectorXd beta;
  std::optional<double> gamma;
  Eigen::VectorXd field;
  double rho = 1.0;
  double sigma_s = 1.0;
  std::optional<double> d;
  std::optional<double> sigma_nugget;
};

/// alpha + beta'x + gamma 1[urban] + s.
double linear_predictor(const ParamVector& params, std::span<const double> covariates, bool urban, double s_value);

double expit(double eta);
double logit(double p);
// log(expit(eta)) without overflow.
double log_expit(double eta);

double log_binomial_coefficient(int n, int y);

// Probabilities inside log-likelihoods are clamped to [kProbFloor, 1 - kProbFloor].
inline constexpr double kProbFloor = 1e-12;

double loglik_binomial(int y, int n, double eta);

/// Beta-Binomial with mean mu and dispersion d: shapes a = mu d, b = (1-mu) d.
double loglik_betabinomial(int y, int n, double mu, double d);
// Same density parameterized by the logit of mu; mu is clamped, not rejected.
double loglik_betabinomial_eta(int y, int n, double eta, double d);
// d/d eta of loglik_betabinomial_eta.
double betabinomial_score_eta(int y, int n, double eta, double d);
// d^2/d eta^2 of loglik_betabinomial_eta (observed curvature).
double betabinomial_hessian_eta(int y, int n, double eta, double d);
// Expected information E[score^2] in eta.
double betabinomial_fisher_eta(int n, double eta, double d);

// 16 sqrt(3) / (15 pi)
double lono_h();

/// expit(eta / sqrt(1 + h^2 sigma_delta^2)).
double lono_target(double eta, double sigma_delta);
/// expit(eta + epsilon).
double ts_target(double eta, double epsilon);

}  // namespace vaxmap
