#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "graphcorr/corrmat.hpp"
#include "graphcorr/graph.hpp"
#include "graphcorr/linalg.hpp"
#include "graphcorr/pcprior.hpp"

namespace graphcorr {

// ---------------------------------------------------------------------------
// Data and model description
// ---------------------------------------------------------------------------

struct Observation {
  std::string id;
  std::string marker;
  double time = 0.0;
  double y = 0.0;
  double x_bin = 0.0;
  double x_con = 0.0;
};

// Rows in file order; individuals are identified by `id`.
struct LongitudinalDataset {
  std::vector<Observation> rows;

  std::size_t num_individuals() const;
};

LongitudinalDataset parse_dataset_csv(const std::string& text);
LongitudinalDataset load_dataset_csv(const std::string& path);
std::string dataset_to_csv(const LongitudinalDataset& data);

// Design terms. Time powers are usable as fixed and random effects,
// covariates as fixed effects only.
enum class Term { Intercept, T, T2, T3, XBin, XCon };

const char* term_name(Term t);
std::optional<Term> term_from_name(std::string_view name);

struct MarkerSpec {
  std::string name;
  int fixed_degree = 1;               // polynomial time degree, 0..3
  std::vector<Term> covariates;       // subset of {XBin, XCon}
  std::vector<std::pair<Term, std::string>> random;  // time term -> child

  std::vector<Term> fixed_terms() const;
};

struct ModelSpec {
  TreeGraph graph;
  std::vector<MarkerSpec> markers;
  std::optional<double> residual_sd;  // fixed for every marker when set

  // Every child of the graph must be the random effect of exactly one
  // (marker, term); throws InvalidArgument otherwise.
  void check() const;
  std::size_t num_fixed() const;
  std::size_t marker_index(std::string_view name) const;  // throws if unknown
  // (marker index, term) of each child, in the graph's child order.
  std::vector<std::pair<std::size_t, Term>> child_terms() const;
};

// JSON: {"graph": "<DSL text>" | "graph_file": path, "markers": [{"name",
// "fixed_degree", "covariates": [..], "random": {"intercept": "c1", ..}}],
// "residual_sd": number?}. Relative graph_file paths resolve against
// `base_dir`.
ModelSpec parse_model_spec(const std::string& json_text, const std::string& base_dir = ".");
ModelSpec load_model_spec(const std::string& path);

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

// Unconstrained parameters. beta is marker-major in fixed_terms() order;
// log_sigma_c follows the graph's child order, theta = log q^2 its latent
// order; log_sigma_eps has one entry per marker, or none when the residual
// sd is fixed by the spec.
struct ParameterVector {
  Vector beta;
  Vector log_sigma_c;
  Vector theta;
  Vector log_sigma_eps;

  Vector flatten() const;
  static ParameterVector unflatten(const ModelSpec& spec, const Vector& x);
  std::vector<std::string> names(const ModelSpec& spec) const;
};

std::vector<std::string> parameter_names(const ModelSpec& spec);
std::size_t parameter_count(const ModelSpec& spec);

// Simulation truths. rho holds one target per correlation class, keyed by
// any member pair "a:b"; beta is keyed "marker:term".
struct Truths {
  std::map<std::string, double> beta;
  std::map<std::string, double> sigma_c;
  std::map<std::string, double> rho;
  std::map<std::string, double> sigma_eps;
};

Truths parse_truths(const std::string& json_text);
Truths load_truths(const std::string& path);
// Parameters implied by truths; latent variances via solve_variances.
ParameterVector truths_to_parameters(const ModelSpec& spec, const Truths& truths);

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct PriorSpec {
  PCPriorSpec pc;
  double sd_rate = 1.0;    // Exponential rate on each sigma_c and sigma_eps
  double beta_sd = 100.0;  // Normal(0, beta_sd^2) on each fixed effect
  DensityMode mode = DensityMode::Exact;
};

struct PosteriorTerms {
  double loglik = 0.0;
  double log_prior_theta = 0.0;     // PC prior on theta
  double log_prior_nuisance = 0.0;  // sigma_c, sigma_eps, beta
  double total = 0.0;
};

// Data bound to a spec, with per-individual designs prepared once.
class MixedModel {
 public:
  MixedModel(ModelSpec spec, const LongitudinalDataset& data);

  const ModelSpec& spec() const { return spec_; }
  std::size_t num_individuals() const { return blocks_.size(); }
  std::size_t num_observations() const;

  // Sum over individuals of log N(y_i; X_i beta, Z_i D C D Z_i^T + R_i).
  double marginal_loglik(const ParameterVector& p) const;
  PosteriorTerms log_posterior(const ParameterVector& p, const PriorSpec& prior) const;
  PosteriorTerms log_posterior(const ParameterVector& p, const PriorSpec& prior,
                               const SequentialPrior& theta_prior) const;

  // F with D C D = F F^T, K x (K + P): columns for each child's own unit
  // noise, then one per latent.
  Matrix random_factor(const ParameterVector& p) const;

  // Default start: per-marker least squares beta, log scales 0, theta 0.
  ParameterVector default_start() const;

  // Direct dense evaluation (forms each marginal covariance); test oracle.
  double marginal_loglik_dense(const ParameterVector& p) const;

 private:
  struct Block {
    std::string id;
    Vector y;
    Matrix x;  // n_i x num_fixed
    Matrix z;  // n_i x K
    std::vector<std::size_t> marker;
    std::size_t design;  // index into designs_
  };
  // Random-effect design shared by individuals observed identically.
  struct Design {
    std::vector<Matrix> gram;            // per marker, Z_m^T Z_m (K x K)
    std::vector<std::size_t> row_count;  // per marker
  };

  Vector residual_variances(const ParameterVector& p) const;

  ModelSpec spec_;
  Matrix descent_;  // K x P, 1 where the child descends from the latent
  std::vector<Block> blocks_;
  std::vector<Design> designs_;
};

// ---------------------------------------------------------------------------
// Optimization and sampling
// ---------------------------------------------------------------------------

using Objective = std::function<double(const Vector&)>;

// Central differences with step 1e-6 max(1, |x_i|).
Vector numeric_gradient(const Objective& f, const Vector& x);
// Second central differences of f with step 1e-4 max(1, |x_i|).
Matrix numeric_hessian(const Objective& f, const Vector& x);

struct MaximizeOptions {
  double grad_tol = 1e-5;
  int max_iter = 500;
};

struct MaximizeResult {
  Vector x;
  double value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

// BFGS ascent with finite-difference gradients and backtracking line search.
MaximizeResult maximize(const Objective& f, const Vector& start, const MaximizeOptions& opts = {});

struct ChainResult {
  Matrix draws;  // retained draws, one per row
  double acceptance = 0.0;  // over the retained part
  double burnin_acceptance = 0.0;
  Matrix proposal;  // covariance at the end of burn-in
};

// Adaptive random-walk Metropolis. The first 40% of n_iter are burn-in
// (adapting proposal covariance and scale toward acceptance 0.2-0.4) and are
// discarded. Evaluation failures count as rejections.
ChainResult metropolis(const Objective& log_density, const Vector& start, const Matrix& proposal_cov,
                       std::size_t n_iter, std::uint64_t seed);

struct Summary {
  std::string name;
  double mean = 0.0;
  double lower = 0.0;  // 2.5%
  double upper = 0.0;  // 97.5%
};

struct FitResult {
  std::vector<std::string> parameter_names;
  ParameterVector map_point;
  double map_log_posterior = 0.0;
  bool map_converged = false;
  int map_iterations = 0;
  Matrix samples;  // retained unconstrained draws
  double acceptance = 0.0;
  std::vector<Summary> summaries;  // sigma_c[..], rho[..], q2[..], beta[..], sigma_eps[..]

  const Summary& summary(std::string_view name) const;  // throws if absent
};

ParameterVector map_fit(const MixedModel& model, const PriorSpec& prior,
                        const std::optional<ParameterVector>& init = {}, MaximizeResult* info = nullptr);

struct FitOptions {
  std::size_t n_iter = 20000;
  std::uint64_t seed = 0;
  std::optional<ParameterVector> init;
};

// MAP, then adaptive Metropolis started at the MAP with the inverse
// negative Hessian as initial proposal.
FitResult fit(const MixedModel& model, const PriorSpec& prior, const FitOptions& opts);

// Summaries on the natural scale from unconstrained draws.
std::vector<Summary> summarize(const ModelSpec& spec, const Matrix& draws);

std::string fit_to_json(const FitResult& fit);

// ---------------------------------------------------------------------------
// Simulation and recovery
// ---------------------------------------------------------------------------

// b_i ~ N(0, D C D), y = X beta + Z b_i + eps; x_bin ~ Bernoulli(0.5) and
// x_con ~ N(1, 0.5) per individual. Individuals are named "1".."N". A fixed
// residual sd in the spec overrides truth.log_sigma_eps, and -inf there
// gives noiseless responses.
struct Simulation {
  LongitudinalDataset data;
  Matrix random_effects;  // N x K true b_i
};

Simulation simulate_dataset(const ModelSpec& spec, const ParameterVector& truth, std::size_t n,
                            const std::vector<double>& times, std::uint64_t seed);

struct RecoveryRow {
  std::string name;
  double truth = 0.0;
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool covered = false;
  double abs_error = 0.0;
};

// Natural-scale truth values keyed like FitResult summaries.
std::map<std::string, double> truth_values(const ModelSpec& spec, const Truths& truths);

// One row per truth; every truth name must have a summary.
std::vector<RecoveryRow> recovery_report(const std::map<std::string, double>& truths, const FitResult& fit);
std::string recovery_markdown(const std::vector<RecoveryRow>& rows);
std::string recovery_csv(const std::vector<RecoveryRow>& rows);

}  // namespace graphcorr
