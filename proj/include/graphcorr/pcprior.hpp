#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "graphcorr/corrmat.hpp"
#include "graphcorr/graph.hpp"
#include "graphcorr/linalg.hpp"

namespace graphcorr {

enum class DensityMode { Exact, Approximate };
enum class Parametrization { Variance, LogVariance };

// KLD(flexible || base) for zero-mean Gaussians with the given correlation
// (or covariance) matrices: 0.5 (tr(B^-1 A) - n - log|A| + log|B|).
// Evaluated through the eigenvalues of L^-1 (A - B) L^-T so that nearly
// equal arguments keep full relative precision.
double kld_gaussian(const Matrix& flexible, const Matrix& base);

// One flexible/base pair of the contraction sequence: the flexible graph
// with `removed` at variance xi, against the graph where `removed` is gone.
// All other latents are held at `conditioning`.
// Upper end of the bracket for distance inversion. The distance of a latent
// over two or more children grows like sqrt(log xi), so a low ceiling would
// reject ordinary draws at small lambda; a distance that is still not reached
// here has saturated.
inline constexpr double kMaxStepVariance = 1e150;

class StepProfile {
 public:
  StepProfile(const TreeGraph& flexible, const std::string& removed,
              const VarianceAssignment& conditioning);

  const std::string& removed() const { return removed_; }

  // sqrt(2 KLD); zero at xi = 0.
  double distance(double xi) const;
  // d'(xi), analytic; xi > 0.
  double slope(double xi) const;
  Matrix flexible_correlation(double xi) const;

  // lim 2 KLD(xi) / xi^2 at xi -> 0, Richardson-extrapolated from h, h/2, h/4.
  double fisher_at_base(double h = 1e-3) const;

  // Exact: log(lambda) - lambda d(xi) + log d'(xi). Approximate: exponential with rate lambda sqrt(I(0)).
  // LogVariance adds log(xi). Throws Numeric if d' <= 0.
  double log_density(double xi, double lambda, DensityMode mode = DensityMode::Exact,
                     Parametrization param = Parametrization::Variance) const;

  // Solves distance(xi) = d by bracketing and geometric bisection.
  // Throws Numeric if d is beyond the distance reached at kMaxStepVariance.
  double inverse_distance(double d) const;

 private:
  struct Point {
    double distance = 0.0;
    double slope = 0.0;
  };
  Point evaluate(double xi, bool with_slope) const;

  std::string removed_;
  std::size_t removed_index_;
  PathRuleCorrelation flex_corr_;
  std::vector<double> q2_;  // flexible-graph order; slot removed_index_ is overwritten
  Matrix base_;
  Matrix base_chol_inv_;  // L^-1 with base = L L^T
  Matrix base_inv_;
  double base_log_det_ = 0.0;
};

struct PCPriorSpec {
  double lambda = 5.0;
  std::vector<std::string> removal_order;  // empty: default_removal_order
};

// Step k of a contraction sequence as a profile, conditioning on the
// variances (from q2, original latent order) of latents removed later.
StepProfile sequence_step(const TreeGraph& graph, const ModelSequence& seq, std::size_t k,
                          std::span<const double> q2);

struct PriorStep {
  std::string removed;
  double xi = 0.0;
  double log_density = 0.0;
};

struct JointPrior {
  double total = 0.0;
  std::vector<PriorStep> steps;  // in removal order
};

// Sum over the removal order of each step's log density.
JointPrior joint_log_prior(const TreeGraph& graph, std::span<const double> q2, const PCPriorSpec& spec,
                           DensityMode mode = DensityMode::Exact,
                           Parametrization param = Parametrization::Variance);

// Reusable evaluator for repeated calls on one graph (MCMC, optimization).
class SequentialPrior {
 public:
  SequentialPrior(const TreeGraph& graph, const PCPriorSpec& spec);
  JointPrior evaluate(std::span<const double> q2, DensityMode mode = DensityMode::Exact,
                      Parametrization param = Parametrization::Variance) const;
  const ModelSequence& sequence() const { return seq_; }

 private:
  TreeGraph graph_;
  PCPriorSpec spec_;
  ModelSequence seq_;
};

struct PriorDraw {
  std::vector<double> q2;         // original latent order
  std::vector<double> distances;  // original latent order
};

// Root-first generation: each step draws d ~ Exp(lambda) and inverts the
// step distance given the latents already drawn. Sample i uses its own
// engine seeded from (seed, i), so output does not depend on scheduling.
std::vector<PriorDraw> sample_prior(const TreeGraph& graph, const PCPriorSpec& spec, std::size_t n,
                                    std::uint64_t seed);

struct CalibrationRow {
  double lambda = 0.0;
  std::optional<double> conditioning_sd;  // none for single-latent graphs
  std::string pair_class;
  std::array<double, 9> deciles{};  // 10%, 20%, ..., 90%
  double mean = 0.0;
  std::size_t n = 0;
};

// Correlations induced by the first step of the removal order when its
// distance is drawn from Exp(lambda); the remaining latents are held at
// standard deviation `sd` (variance sd^2) for every sd in conditioning_sds.
std::vector<CalibrationRow> calibrate_lambda(const TreeGraph& graph, const std::vector<double>& lambdas,
                                             std::size_t n, const std::vector<double>& conditioning_sds,
                                             std::uint64_t seed,
                                             const std::vector<std::string>& removal_order = {});

}  // namespace graphcorr
