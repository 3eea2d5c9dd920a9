#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "graphcorr/graph.hpp"
#include "graphcorr/linalg.hpp"

namespace graphcorr {

// Latent name -> variance q^2 of that latent.
using VarianceAssignment = std::map<std::string, double, std::less<>>;

// Variances in the graph's latent order. Throws InvalidArgument when a latent
// is missing, an extra name is given, or a value is not strictly positive.
std::vector<double> aligned_variances(const TreeGraph& graph, const VarianceAssignment& v);
VarianceAssignment named_variances(const TreeGraph& graph, std::span<const double> q2);

// Joint precision of the latent GGM with node order [children..., latents...].
// Children have unit conditional variance around their parent, each latent
// has variance q^2 around its parent (around 0 for the root).
Matrix assemble_precision(const TreeGraph& graph, std::span<const double> q2);

enum class CorrelationMethod { Inversion, PathRule };

// Children block of Diag(S)^-1/2 S Diag(S)^-1/2 with S the inverse precision.
Matrix children_correlation(const TreeGraph& graph, std::span<const double> q2);

// Same matrix from the ancestor chains alone: Var(c) = 1 + sum of q^2 along
// the chain, Cov(a, b) = sum of q^2 over the shared part. No inversion.
Matrix correlation_oracle(const TreeGraph& graph, std::span<const double> q2);

Matrix correlation(const TreeGraph& graph, std::span<const double> q2, CorrelationMethod method);

// Path-rule evaluator with the ancestor bookkeeping done once. Accepts zero
// variances (a zero-variance latent contributes nothing), which is how the
// prior evaluates a removed latent at the base point. No input checks.
class PathRuleCorrelation {
 public:
  explicit PathRuleCorrelation(const TreeGraph& graph);
  Matrix operator()(std::span<const double> q2) const;

  // log det of the correlation, accurate when it is close to singular:
  // log det(I + Q^1/2 U^T U Q^1/2) - sum log Var(c), U the descendant indicator.
  double log_det(std::span<const double> q2) const;

  // A(q2 with q2[l] = xi) - A(q2 with q2[l] = 0), accurate for small xi.
  Matrix increment(std::span<const double> q2, std::size_t l, double xi) const;
  // Elementwise d A / d q2[l].
  Matrix derivative(std::span<const double> q2, std::size_t l) const;
  // d log det A / d q2[l]; every q2 must be positive.
  double log_det_derivative(std::span<const double> q2, std::size_t l) const;

 private:
  std::size_t k_;
  Matrix shared_children_;  // P x P counts of children below both latents
  std::vector<std::vector<std::size_t>> chains_;
  std::vector<std::vector<std::size_t>> shared_;  // upper triangle, row-major
};

// Child pairs whose ancestor chains coincide as an unordered pair of sets.
// Such pairs have equal correlation for every variance assignment.
struct CorrelationClass {
  std::vector<std::size_t> chain_a;  // latent indices, nearest first
  std::vector<std::size_t> chain_b;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // child indices, i < j

  std::string label(const TreeGraph& graph) const;  // "c1:c2" of the first pair
};

std::vector<CorrelationClass> correlation_classes(const TreeGraph& graph);

// Index into correlation_classes() for a child pair.
std::size_t class_of_pair(const std::vector<CorrelationClass>& classes, std::size_t i, std::size_t j);

struct PairTarget {
  std::string a;
  std::string b;
  double rho = 0.0;
};

// Finds variances reproducing one target correlation per correlation class
// (damped Gauss-Newton on log-variances with analytic path-rule Jacobian).
// Throws InvalidArgument for missing or conflicting class targets and
// Error(Infeasible) when the targets cannot be met within 1e-8.
std::vector<double> solve_variances(const TreeGraph& graph, const std::vector<PairTarget>& targets);

// D C D with D = diag(sigma).
Matrix scale_to_covariance(const Matrix& corr, std::span<const double> sigma);

}  // namespace graphcorr
