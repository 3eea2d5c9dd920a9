#include "graphcorr/pcprior.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "graphcorr/error.hpp"
#include "graphcorr/stats.hpp"

namespace graphcorr {

namespace {

// With delta the eigenvalues of M = L^-1 (A - B) L^-T, 2 KLD(A || B) is
// sum(delta - log1p(delta)), which keeps full precision near A = B.
double kld_sum(const Eigen::VectorXd& delta) {
  double kld = 0.0;
  for (Eigen::Index i = 0; i < delta.size(); ++i) {
    if (delta(i) <= -1.0) fail(ErrorKind::Numeric, "flexible matrix is not positive definite");
    kld += x_minus_log1p(delta(i));
  }
  return kld;
}

Matrix whitened(const Matrix& diff, const Matrix& base_chol_inv) {
  Matrix m = base_chol_inv * diff * base_chol_inv.transpose();
  return 0.5 * (m + m.transpose());
}

double kld_from_difference(const Matrix& diff, const Matrix& base_chol_inv) {
  const Matrix m = whitened(diff, base_chol_inv);
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return std::max(0.0, 0.5 * kld_sum(es.eigenvalues()));
}

Matrix lower_inverse(const Eigen::LLT<Matrix>& llt) {
  const auto n = llt.matrixLLT().rows();
  Matrix inv = Matrix::Identity(n, n);
  llt.matrixL().solveInPlace(inv);
  return inv;
}

std::mt19937_64 stream_engine(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  for (auto s : stream) {
    words.push_back(static_cast<std::uint32_t>(s));
    words.push_back(static_cast<std::uint32_t>(s >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

void check_lambda(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) fail(ErrorKind::InvalidArgument, "lambda must be positive");
}

}  // namespace

double kld_gaussian(const Matrix& flexible, const Matrix& base) {
  if (flexible.rows() != base.rows() || flexible.cols() != base.cols() || flexible.rows() != flexible.cols()) {
    fail(ErrorKind::InvalidArgument, "KLD arguments must be square matrices of equal dimension");
  }
  spd_factor(flexible, "flexible model matrix");
  auto base_llt = spd_factor(base, "base model matrix");
  return kld_from_difference(flexible - base, lower_inverse(base_llt));
}

// -------------------------------------------------------------------------
// StepProfile
// -------------------------------------------------------------------------

StepProfile::StepProfile(const TreeGraph& flexible, const std::string& removed,
                         const VarianceAssignment& conditioning)
    : removed_(removed), flex_corr_(flexible) {
  auto idx = flexible.latent_index(removed);
  if (!idx) fail(ErrorKind::InvalidArgument, "'" + removed + "' is not a latent of the flexible graph");
  removed_index_ = *idx;

  q2_.assign(flexible.num_latents(), 0.0);
  for (std::size_t l = 0; l < flexible.num_latents(); ++l) {
    if (l == removed_index_) continue;
    auto it = conditioning.find(flexible.latent_name(l));
    if (it == conditioning.end()) {
      fail(ErrorKind::InvalidArgument, "no conditioning variance for latent '" + flexible.latent_name(l) + "'");
    }
    if (!(it->second > 0.0)) fail(ErrorKind::InvalidArgument, "variance must be positive (latent '" + it->first + "')");
    q2_[l] = it->second;
  }

  if (flexible.num_latents() == 1) {
    base_ = Matrix::Identity(flexible.num_children(), flexible.num_children());
  } else {
    // A zero-variance latent is exactly the graph with that latent removed.
    base_ = flex_corr_(q2_);
  }
  const auto base_llt = spd_factor(base_, "base model correlation");
  base_chol_inv_ = lower_inverse(base_llt);
  base_log_det_ = log_det(base_llt);
  base_inv_ = base_chol_inv_.transpose() * base_chol_inv_;
}

Matrix StepProfile::flexible_correlation(double xi) const {
  std::vector<double> q2 = q2_;
  q2[removed_index_] = xi;
  return flex_corr_(q2);
}

// Near the base, 2 KLD = sum(delta - log1p delta) and its derivative
// tr(A^-1 (A - B) B^-1 A') use the accurately formed A - B. When A is close to
// singular (min delta < -1/2) both switch to tr(B^-1 A) - K - log det A + log det B
// and tr(B^-1 A') - (log det A)', with log det A from the tree structure.
StepProfile::Point StepProfile::evaluate(double xi, bool with_slope) const {
  std::vector<double> q2 = q2_;
  q2[removed_index_] = xi;
  const Matrix diff = flex_corr_.increment(q2_, removed_index_, xi);
  const Matrix m = whitened(diff, base_chol_inv_);
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  const bool singular = es.eigenvalues().minCoeff() < -0.5;
  const double kld2 = singular ? m.trace() - (flex_corr_.log_det(q2) - base_log_det_) : kld_sum(es.eigenvalues());
  Point out;
  out.distance = std::sqrt(std::max(0.0, kld2));
  if (!with_slope) return out;
  const Matrix da = flex_corr_.derivative(q2, removed_index_);
  double dkld2;
  if (singular) {
    dkld2 = (base_inv_.cwiseProduct(da)).sum() - flex_corr_.log_det_derivative(q2, removed_index_);
  } else {
    const auto llt = spd_factor(base_ + diff, "flexible model correlation");
    const Matrix left = llt.solve(diff);
    dkld2 = (left * base_inv_).cwiseProduct(da.transpose()).sum();
  }
  out.slope = dkld2 / (2.0 * out.distance);
  return out;
}

double StepProfile::distance(double xi) const {
  if (!(xi >= 0.0)) fail(ErrorKind::InvalidArgument, "variance must be nonnegative");
  if (xi == 0.0) return 0.0;
  return evaluate(xi, false).distance;
}

double StepProfile::slope(double xi) const {
  if (!(xi > 0.0) || !std::isfinite(xi)) fail(ErrorKind::InvalidArgument, "variance must be positive");
  return evaluate(xi, true).slope;
}

double StepProfile::fisher_at_base(double h) const {
  auto g = [&](double x) {
    const double d = distance(x);
    return (d / x) * (d / x);
  };
  const double g1 = g(h), g2 = g(h / 2), g4 = g(h / 4);
  const double r1 = 2.0 * g2 - g1;
  const double r2 = 2.0 * g4 - g2;
  return (4.0 * r2 - r1) / 3.0;
}

double StepProfile::log_density(double xi, double lambda, DensityMode mode, Parametrization param) const {
  if (!(xi > 0.0) || !std::isfinite(xi)) fail(ErrorKind::InvalidArgument, "variance must be positive");
  check_lambda(lambda);
  double out;
  if (mode == DensityMode::Exact) {
    const auto point = evaluate(xi, true);
    if (!(point.slope > 0.0)) {
      fail(ErrorKind::Numeric, "distance profile for '" + removed_ + "' is not increasing at " + std::to_string(xi));
    }
    out = std::log(lambda) - lambda * point.distance + std::log(point.slope);
  } else {
    const double rate = lambda * std::sqrt(fisher_at_base());
    out = std::log(rate) - rate * xi;
  }
  if (param == Parametrization::LogVariance) out += std::log(xi);
  return out;
}

double StepProfile::inverse_distance(double d) const {
  if (!(d >= 0.0) || !std::isfinite(d)) fail(ErrorKind::InvalidArgument, "distance must be finite and nonnegative");
  if (d == 0.0) return 0.0;
  double lo = 1.0, hi = 1.0;
  if (distance(hi) < d) {
    while (distance(hi) < d) {
      lo = hi;
      hi *= 2.0;
      if (hi > kMaxStepVariance) {
        fail(ErrorKind::Numeric, "distance " + std::to_string(d) + " not reached for '" + removed_ +
                                     "' below variance 1e150 (distance saturates)");
      }
    }
  } else {
    while (distance(lo) > d) {
      hi = lo;
      lo *= 0.5;
    }
  }
  while (hi / lo - 1.0 > 1e-12) {
    const double mid = std::sqrt(lo * hi);
    if (distance(mid) < d) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::sqrt(lo * hi);
}

// -------------------------------------------------------------------------
// Sequential prior
// -------------------------------------------------------------------------

StepProfile sequence_step(const TreeGraph& graph, const ModelSequence& seq, std::size_t k,
                          std::span<const double> q2) {
  const TreeGraph& flex = seq.graphs.at(k);
  VarianceAssignment cond;
  for (const auto& name : flex.latent_names()) {
    if (name == seq.removal_order[k]) continue;
    cond[name] = q2[*graph.latent_index(name)];
  }
  return StepProfile(flex, seq.removal_order[k], cond);
}

SequentialPrior::SequentialPrior(const TreeGraph& graph, const PCPriorSpec& spec)
    : graph_(graph), spec_(spec), seq_(contract(graph, spec.removal_order.empty()
                                                            ? std::optional<std::vector<std::string>>{}
                                                            : spec.removal_order)) {
  check_lambda(spec.lambda);
}

JointPrior SequentialPrior::evaluate(std::span<const double> q2, DensityMode mode, Parametrization param) const {
  if (q2.size() != graph_.num_latents()) fail(ErrorKind::InvalidArgument, "variance count does not match the graph");
  JointPrior out;
  for (std::size_t k = 0; k < seq_.graphs.size(); ++k) {
    const auto profile = sequence_step(graph_, seq_, k, q2);
    const double xi = q2[*graph_.latent_index(seq_.removal_order[k])];
    const double lp = profile.log_density(xi, spec_.lambda, mode, param);
    out.steps.push_back({seq_.removal_order[k], xi, lp});
    out.total += lp;
  }
  return out;
}

JointPrior joint_log_prior(const TreeGraph& graph, std::span<const double> q2, const PCPriorSpec& spec,
                           DensityMode mode, Parametrization param) {
  return SequentialPrior(graph, spec).evaluate(q2, mode, param);
}

std::vector<PriorDraw> sample_prior(const TreeGraph& graph, const PCPriorSpec& spec, std::size_t n,
                                    std::uint64_t seed) {
  check_lambda(spec.lambda);
  const SequentialPrior prior(graph, spec);
  const auto& seq = prior.sequence();
  const std::size_t p = graph.num_latents();
  std::vector<PriorDraw> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = stream_engine(seed, {i});
    std::exponential_distribution<double> exp_dist(spec.lambda);
    PriorDraw draw{std::vector<double>(p, 0.0), std::vector<double>(p, 0.0)};
    for (std::size_t k = p; k-- > 0;) {
      const auto profile = sequence_step(graph, seq, k, draw.q2);
      const std::size_t idx = *graph.latent_index(seq.removal_order[k]);
      const double d = exp_dist(rng);
      draw.distances[idx] = d;
      draw.q2[idx] = profile.inverse_distance(d);
    }
    out.push_back(std::move(draw));
  }
  return out;
}

std::vector<CalibrationRow> calibrate_lambda(const TreeGraph& graph, const std::vector<double>& lambdas,
                                             std::size_t n, const std::vector<double>& conditioning_sds,
                                             std::uint64_t seed, const std::vector<std::string>& removal_order) {
  for (double l : lambdas) check_lambda(l);
  std::vector<CalibrationRow> rows;
  if (n == 0) return rows;

  const auto seq = contract(graph, removal_order.empty() ? std::optional<std::vector<std::string>>{}
                                                          : removal_order);
  const auto classes = correlation_classes(graph);
  std::vector<std::optional<double>> conditions;
  if (graph.num_latents() == 1) {
    conditions.push_back(std::nullopt);
  } else {
    if (conditioning_sds.empty()) {
      fail(ErrorKind::InvalidArgument, "calibrating a multi-latent graph needs conditioning standard deviations");
    }
    for (double sd : conditioning_sds) {
      if (!(sd > 0.0)) fail(ErrorKind::InvalidArgument, "conditioning standard deviations must be positive");
      conditions.emplace_back(sd);
    }
  }

  for (std::size_t li = 0; li < lambdas.size(); ++li) {
    for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
      VarianceAssignment cond;
      for (const auto& name : graph.latent_names()) {
        if (name != seq.removal_order.front()) cond[name] = (*conditions[ci]) * (*conditions[ci]);
      }
      const StepProfile profile(graph, seq.removal_order.front(), cond);
      std::exponential_distribution<double> exp_dist(lambdas[li]);
      std::vector<std::vector<double>> values(classes.size());
      for (std::size_t i = 0; i < n; ++i) {
        auto rng = stream_engine(seed, {li, ci, i});
        const Matrix c = profile.flexible_correlation(profile.inverse_distance(exp_dist(rng)));
        for (std::size_t k = 0; k < classes.size(); ++k) {
          const auto [a, b] = classes[k].pairs.front();
          values[k].push_back(c(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)));
        }
      }
      for (std::size_t k = 0; k < classes.size(); ++k) {
        auto& v = values[k];
        std::sort(v.begin(), v.end());
        CalibrationRow row;
        row.lambda = lambdas[li];
        row.conditioning_sd = conditions[ci];
        row.pair_class = classes[k].label(graph);
        for (std::size_t q = 0; q < 9; ++q) row.deciles[q] = quantile_sorted(v, 0.1 * static_cast<double>(q + 1));
        row.mean = mean_of(v);
        row.n = n;
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

}  // namespace graphcorr
