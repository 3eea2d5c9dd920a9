#include "graphcorr/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <unordered_map>

#include "graphcorr/error.hpp"
#include "graphcorr/stats.hpp"
#include "graphcorr/textio.hpp"
#include "json.hpp"

namespace graphcorr {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double term_value(Term t, const Observation& o) {
  switch (t) {
    case Term::Intercept: return 1.0;
    case Term::T: return o.time;
    case Term::T2: return o.time * o.time;
    case Term::T3: return o.time * o.time * o.time;
    case Term::XBin: return o.x_bin;
    case Term::XCon: return o.x_con;
  }
  return 0.0;
}

std::mt19937_64 seeded_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

// Offset of each marker's block in beta.
std::vector<Eigen::Index> beta_offsets(const ModelSpec& spec) {
  std::vector<Eigen::Index> out;
  Eigen::Index off = 0;
  for (const auto& m : spec.markers) {
    out.push_back(off);
    off += static_cast<Eigen::Index>(m.fixed_terms().size());
  }
  return out;
}

double log_exponential_sd(double log_sd, double rate) {
  // Exponential(rate) on sd = exp(log_sd), with the log-Jacobian.
  return std::log(rate) - rate * std::exp(log_sd) + log_sd;
}

}  // namespace

// ---------------------------------------------------------------------------
// MixedModel
// ---------------------------------------------------------------------------

MixedModel::MixedModel(ModelSpec spec, const LongitudinalDataset& data) : spec_(std::move(spec)) {
  spec_.check();
  const auto& g = spec_.graph;
  const auto k = static_cast<Eigen::Index>(g.num_children());
  descent_ = Matrix::Zero(k, static_cast<Eigen::Index>(g.num_latents()));
  for (std::size_t c = 0; c < g.num_children(); ++c) {
    for (auto l : g.child_ancestors(c)) descent_(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(l)) = 1.0;
  }

  if (data.rows.empty()) fail(ErrorKind::InvalidArgument, "dataset has no observations");
  const auto offsets = beta_offsets(spec_);
  const auto terms = spec_.child_terms();
  std::unordered_map<std::string, std::size_t> block_of;
  std::vector<std::vector<const Observation*>> grouped;
  for (const auto& r : data.rows) {
    auto [it, fresh] = block_of.emplace(r.id, grouped.size());
    if (fresh) grouped.emplace_back();
    grouped[it->second].push_back(&r);
  }
  const auto nb = static_cast<Eigen::Index>(spec_.num_fixed());
  std::unordered_map<std::string, std::size_t> design_of;
  for (const auto& rows : grouped) {
    Block b;
    b.id = rows.front()->id;
    const auto n = static_cast<Eigen::Index>(rows.size());
    b.y.resize(n);
    b.x = Matrix::Zero(n, nb);
    b.z = Matrix::Zero(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Observation& o = *rows[static_cast<std::size_t>(i)];
      const std::size_t m = spec_.marker_index(o.marker);
      b.marker.push_back(m);
      b.y(i) = o.y;
      const auto fixed = spec_.markers[m].fixed_terms();
      for (std::size_t t = 0; t < fixed.size(); ++t) {
        b.x(i, offsets[m] + static_cast<Eigen::Index>(t)) = term_value(fixed[t], o);
      }
      for (Eigen::Index c = 0; c < k; ++c) {
        if (terms[static_cast<std::size_t>(c)].first == m) b.z(i, c) = term_value(terms[static_cast<std::size_t>(c)].second, o);
      }
    }
    // Key on the exact bytes of Z and the row markers.
    std::string key(reinterpret_cast<const char*>(b.z.data()), sizeof(double) * static_cast<std::size_t>(b.z.size()));
    key.append(reinterpret_cast<const char*>(b.marker.data()), sizeof(std::size_t) * b.marker.size());
    auto [it, fresh] = design_of.emplace(std::move(key), designs_.size());
    if (fresh) {
      Design d;
      d.gram.assign(spec_.markers.size(), Matrix::Zero(k, k));
      d.row_count.assign(spec_.markers.size(), 0);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto m = b.marker[static_cast<std::size_t>(i)];
        d.gram[m] += b.z.row(i).transpose() * b.z.row(i);
        ++d.row_count[m];
      }
      designs_.push_back(std::move(d));
    }
    b.design = it->second;
    blocks_.push_back(std::move(b));
  }
}

std::size_t MixedModel::num_observations() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += static_cast<std::size_t>(b.y.size());
  return n;
}

Matrix MixedModel::random_factor(const ParameterVector& p) const {
  // Child c is sigma_c (u_c + sum_a q_a v_a) / sqrt(Var c) with independent
  // unit u, v: the path rule written as a factor.
  const auto k = descent_.rows();
  const auto np = descent_.cols();
  Matrix f = Matrix::Zero(k, k + np);
  Vector q(np);
  for (Eigen::Index l = 0; l < np; ++l) q(l) = std::exp(0.5 * p.theta(l));
  for (Eigen::Index c = 0; c < k; ++c) {
    double var = 1.0;
    for (Eigen::Index l = 0; l < np; ++l) var += descent_(c, l) * q(l) * q(l);
    const double scale = std::exp(p.log_sigma_c(c)) / std::sqrt(var);
    f(c, c) = scale;
    for (Eigen::Index l = 0; l < np; ++l) f(c, k + l) = scale * descent_(c, l) * q(l);
  }
  return f;
}

Vector MixedModel::residual_variances(const ParameterVector& p) const {
  Vector v(static_cast<Eigen::Index>(spec_.markers.size()));
  for (Eigen::Index m = 0; m < v.size(); ++m) {
    v(m) = spec_.residual_sd ? (*spec_.residual_sd) * (*spec_.residual_sd) : std::exp(2.0 * p.log_sigma_eps(m));
  }
  return v;
}

double MixedModel::marginal_loglik(const ParameterVector& p) const {
  // Per individual, with V = Z F F^T Z^T + W^-1:
  //   log det V = -log det W + log det M,  M = I + F^T Z^T W Z F
  //   r^T V^-1 r = |W^1/2 (r - Z F a)|^2 + |a|^2,  a = M^-1 F^T Z^T W r,
  // the second evaluated at its minimizer so rounding in a is second order.
  // M depends on the individual only through its design.
  if (!p.flatten().allFinite()) fail(ErrorKind::InvalidArgument, "parameters must be finite");
  const Matrix f = random_factor(p);
  const Vector res_var = residual_variances(p);
  const Vector log_res_var = res_var.array().log();
  const auto dim = f.cols();

  std::vector<Eigen::LLT<Matrix>> factors;
  std::vector<double> design_log_det;
  for (std::size_t di = 0; di < designs_.size(); ++di) {
    const auto& d = designs_[di];
    Matrix ztwz = Matrix::Zero(f.rows(), f.rows());
    double ld = 0.0;
    for (std::size_t m = 0; m < d.gram.size(); ++m) {
      if (d.row_count[m] == 0) continue;
      ztwz += d.gram[m] / res_var(static_cast<Eigen::Index>(m));
      ld += static_cast<double>(d.row_count[m]) * log_res_var(static_cast<Eigen::Index>(m));
    }
    Matrix m = f.transpose() * ztwz * f;
    m.diagonal().array() += 1.0;
    factors.emplace_back(m);
    if (factors.back().info() != Eigen::Success) {
      for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
        if (blocks_[bi].design == di) {
          fail(ErrorKind::Numeric, "marginal covariance of individual '" + blocks_[bi].id + "' (index " +
                                       std::to_string(bi) + ") is not positive definite");
        }
      }
    }
    design_log_det.push_back(ld + log_det(factors.back()));
  }

  double total = 0.0;
  Vector w, r, e, a(dim);
  for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
    const Block& b = blocks_[bi];
    r.noalias() = b.y - b.x * p.beta;
    w.resize(r.size());
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      w(i) = 1.0 / res_var(static_cast<Eigen::Index>(b.marker[static_cast<std::size_t>(i)]));
    }
    a.noalias() = f.transpose() * (b.z.transpose() * w.cwiseProduct(r));
    factors[b.design].solveInPlace(a);
    e.noalias() = r - b.z * (f * a);
    const double quad = e.cwiseProduct(w).dot(e) + a.squaredNorm();
    const double li = -0.5 * (static_cast<double>(r.size()) * kLog2Pi + design_log_det[b.design] + quad);
    if (!std::isfinite(li)) {
      fail(ErrorKind::Numeric, "marginal log likelihood of individual '" + b.id + "' (index " + std::to_string(bi) +
                                   ") is not finite");
    }
    total += li;
  }
  return total;
}

double MixedModel::marginal_loglik_dense(const ParameterVector& p) const {
  const Matrix f = random_factor(p);
  const Matrix g = f * f.transpose();
  const Vector res_var = residual_variances(p);
  double total = 0.0;
  for (const auto& b : blocks_) {
    Matrix v = b.z * g * b.z.transpose();
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      v(i, i) += res_var(static_cast<Eigen::Index>(b.marker[static_cast<std::size_t>(i)]));
    }
    Eigen::LLT<Matrix> llt(v);
    if (llt.info() != Eigen::Success) fail(ErrorKind::Numeric, "dense marginal covariance is not positive definite");
    const Vector r = b.y - b.x * p.beta;
    total += -0.5 * (static_cast<double>(r.size()) * kLog2Pi + log_det(llt) + r.dot(llt.solve(r)));
  }
  return total;
}

PosteriorTerms MixedModel::log_posterior(const ParameterVector& p, const PriorSpec& prior,
                                         const SequentialPrior& theta_prior) const {
  PosteriorTerms out;
  out.loglik = marginal_loglik(p);
  std::vector<double> q2(static_cast<std::size_t>(p.theta.size()));
  for (std::size_t l = 0; l < q2.size(); ++l) q2[l] = std::exp(p.theta(static_cast<Eigen::Index>(l)));
  out.log_prior_theta = theta_prior.evaluate(q2, prior.mode, Parametrization::LogVariance).total;
  double nuisance = 0.0;
  for (Eigen::Index c = 0; c < p.log_sigma_c.size(); ++c) nuisance += log_exponential_sd(p.log_sigma_c(c), prior.sd_rate);
  for (Eigen::Index m = 0; m < p.log_sigma_eps.size(); ++m) {
    nuisance += log_exponential_sd(p.log_sigma_eps(m), prior.sd_rate);
  }
  const double s2 = prior.beta_sd * prior.beta_sd;
  for (Eigen::Index j = 0; j < p.beta.size(); ++j) {
    nuisance += -0.5 * (kLog2Pi + std::log(s2)) - 0.5 * p.beta(j) * p.beta(j) / s2;
  }
  out.log_prior_nuisance = nuisance;
  out.total = out.loglik + out.log_prior_theta + out.log_prior_nuisance;
  return out;
}

PosteriorTerms MixedModel::log_posterior(const ParameterVector& p, const PriorSpec& prior) const {
  if (!(prior.sd_rate > 0.0) || !(prior.beta_sd > 0.0)) {
    fail(ErrorKind::InvalidArgument, "prior rate and beta sd must be positive");
  }
  return log_posterior(p, prior, SequentialPrior(spec_.graph, prior.pc));
}

ParameterVector MixedModel::default_start() const {
  // Least squares on the fixed design alone, marker by marker.
  const auto nb = static_cast<Eigen::Index>(spec_.num_fixed());
  Matrix xtx = Matrix::Zero(nb, nb);
  Vector xty = Vector::Zero(nb);
  for (const auto& b : blocks_) {
    xtx += b.x.transpose() * b.x;
    xty += b.x.transpose() * b.y;
  }
  ParameterVector p;
  p.beta = xtx.ldlt().solve(xty);
  if (!p.beta.allFinite() || (xtx * p.beta - xty).norm() > 1e-6 * (1.0 + xty.norm())) {
    fail(ErrorKind::InvalidArgument, "fixed-effect design is rank deficient");
  }
  p.log_sigma_c = Vector::Zero(static_cast<Eigen::Index>(spec_.graph.num_children()));
  p.theta = Vector::Zero(static_cast<Eigen::Index>(spec_.graph.num_latents()));
  p.log_sigma_eps = Vector::Zero(spec_.residual_sd ? 0 : static_cast<Eigen::Index>(spec_.markers.size()));
  return p;
}

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

Vector numeric_gradient(const Objective& f, const Vector& x) {
  Vector g(x.size());
  Vector xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x(i)));
    xp(i) = x(i) + h;
    const double fp = f(xp);
    xp(i) = x(i) - h;
    const double fm = f(xp);
    xp(i) = x(i);
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

Matrix numeric_hessian(const Objective& f, const Vector& x) {
  const auto n = x.size();
  Matrix hess(n, n);
  Vector h(n);
  for (Eigen::Index i = 0; i < n; ++i) h(i) = 1e-4 * std::max(1.0, std::abs(x(i)));
  const double f0 = f(x);
  Vector xp = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    xp(i) = x(i) + h(i);
    const double fp = f(xp);
    xp(i) = x(i) - h(i);
    const double fm = f(xp);
    xp(i) = x(i);
    hess(i, i) = (fp - 2.0 * f0 + fm) / (h(i) * h(i));
    for (Eigen::Index j = 0; j < i; ++j) {
      double s = 0.0;
      for (int si : {1, -1}) {
        for (int sj : {1, -1}) {
          xp(i) = x(i) + si * h(i);
          xp(j) = x(j) + sj * h(j);
          s += si * sj * f(xp);
        }
      }
      xp(i) = x(i);
      xp(j) = x(j);
      hess(i, j) = hess(j, i) = s / (4.0 * h(i) * h(j));
    }
  }
  return hess;
}

MaximizeResult maximize(const Objective& f, const Vector& start, const MaximizeOptions& opts) {
  const auto n = start.size();
  MaximizeResult res;
  res.x = start;
  res.value = f(start);
  if (!std::isfinite(res.value)) fail(ErrorKind::Numeric, "objective is not finite at the starting point");
  Vector g = numeric_gradient(f, res.x);
  Matrix h_inv = Matrix::Identity(n, n);  // inverse Hessian of -f
  bool fresh = true;
  for (res.iterations = 0; res.iterations < opts.max_iter; ++res.iterations) {
    res.grad_norm = g.norm();
    if (res.grad_norm < opts.grad_tol) {
      res.converged = true;
      break;
    }
    Vector dir = h_inv * g;
    if (!(g.dot(dir) > 0.0)) {
      h_inv.setIdentity();
      dir = g;
      fresh = true;
    }
    // Keep trial steps within exp() range of the log-scale parameters.
    const double longest = dir.cwiseAbs().maxCoeff();
    if (longest > 5.0) dir *= 5.0 / longest;
    const double slope = g.dot(dir);
    double step = 1.0;
    double trial_value = -std::numeric_limits<double>::infinity();
    Vector trial;
    for (int k = 0; k < 60; ++k, step *= 0.5) {
      trial = res.x + step * dir;
      trial_value = f(trial);
      if (std::isfinite(trial_value) && trial_value >= res.value + 1e-4 * step * slope) break;
    }
    if (!(std::isfinite(trial_value) && trial_value >= res.value + 1e-4 * step * slope)) {
      if (fresh) break;  // no ascent even along the gradient
      h_inv.setIdentity();
      fresh = true;
      continue;
    }
    const Vector g_new = numeric_gradient(f, trial);
    const Vector s = trial - res.x;
    const Vector y = g - g_new;  // gradient change of -f
    res.x = trial;
    res.value = trial_value;
    g = g_new;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh) h_inv *= sy / y.squaredNorm();
      const double rho = 1.0 / sy;
      const Matrix a = Matrix::Identity(n, n) - rho * s * y.transpose();
      h_inv = a * h_inv * a.transpose() + rho * s * s.transpose();
      fresh = false;
    }
  }
  res.grad_norm = g.norm();
  if (!res.converged && res.grad_norm < opts.grad_tol) res.converged = true;
  return res;
}

// ---------------------------------------------------------------------------
// Adaptive Metropolis
// ---------------------------------------------------------------------------

namespace {

Matrix proposal_root(const Matrix& cov) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  Vector ev = es.eigenvalues().cwiseMax(1e-12 * std::max(1e-300, es.eigenvalues().cwiseAbs().maxCoeff()));
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
}

double safe_eval(const Objective& f, const Vector& x) {
  try {
    const double v = f(x);
    return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
  } catch (const Error&) {
    return -std::numeric_limits<double>::infinity();
  }
}

}  // namespace

ChainResult metropolis(const Objective& log_density, const Vector& start, const Matrix& proposal_cov,
                       std::size_t n_iter, std::uint64_t seed) {
  if (n_iter == 0) fail(ErrorKind::InvalidArgument, "n_iter must be at least 1");
  const auto d = start.size();
  if (proposal_cov.rows() != d || proposal_cov.cols() != d) {
    fail(ErrorKind::InvalidArgument, "proposal covariance does not match the start dimension");
  }
  double current = safe_eval(log_density, start);
  if (!std::isfinite(current)) fail(ErrorKind::Numeric, "log density is not finite at the chain start");

  auto rng = seeded_engine(seed, 0);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;

  const std::size_t burn = n_iter * 2 / 5;
  const std::size_t batch = 50;
  Matrix base = proposal_cov;
  double log_scale = 0.0;
  Matrix root = proposal_root(base);

  // Running moments of the burn-in draws after its first tenth.
  const std::size_t learn_from = burn / 10;
  Vector mean = Vector::Zero(d);
  Matrix m2 = Matrix::Zero(d, d);
  std::size_t learned = 0;

  ChainResult out;
  out.draws.resize(static_cast<Eigen::Index>(n_iter - burn), d);
  Vector x = start;
  std::size_t accepted_batch = 0, accepted_burn = 0, accepted_kept = 0;
  for (std::size_t it = 0; it < n_iter; ++it) {
    Vector z(d);
    for (Eigen::Index i = 0; i < d; ++i) z(i) = normal(rng);
    const Vector prop = x + std::exp(log_scale) * (root * z);
    const double value = safe_eval(log_density, prop);
    const bool accept = std::isfinite(value) && std::log(unif(rng)) < value - current;
    if (accept) {
      x = prop;
      current = value;
    }
    if (it < burn) {
      accepted_batch += accept;
      accepted_burn += accept;
      if (it >= learn_from) {
        ++learned;
        const Vector delta = x - mean;
        mean += delta / static_cast<double>(learned);
        m2 += delta * (x - mean).transpose();
      }
      if ((it + 1) % batch == 0) {
        const double rate = static_cast<double>(accepted_batch) / static_cast<double>(batch);
        const double step = 1.0 / std::sqrt(static_cast<double>((it + 1) / batch));
        if (rate < 0.2 || rate > 0.4) log_scale += step * (rate - 0.3) * 3.0;
        accepted_batch = 0;
        if (learned >= std::max<std::size_t>(200, 20 * static_cast<std::size_t>(d)) && (it + 1) % (4 * batch) == 0) {
          Matrix emp = m2 / static_cast<double>(learned - 1);
          emp = 0.5 * (emp + emp.transpose());
          emp.diagonal().array() += 1e-10 * (1.0 + emp.diagonal().cwiseAbs().maxCoeff());
          base = (2.38 * 2.38 / static_cast<double>(d)) * emp;
          root = proposal_root(base);
        }
      }
    } else {
      accepted_kept += accept;
      out.draws.row(static_cast<Eigen::Index>(it - burn)) = x.transpose();
    }
  }
  out.burnin_acceptance = burn ? static_cast<double>(accepted_burn) / static_cast<double>(burn) : 0.0;
  out.acceptance = static_cast<double>(accepted_kept) / static_cast<double>(n_iter - burn);
  out.proposal = std::exp(2.0 * log_scale) * base;
  return out;
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

namespace {

Objective posterior_objective(const MixedModel& model, const PriorSpec& prior,
                              std::shared_ptr<const SequentialPrior> theta_prior) {
  return [&model, &prior, theta_prior](const Vector& x) {
    try {
      const auto p = ParameterVector::unflatten(model.spec(), x);
      return model.log_posterior(p, prior, *theta_prior).total;
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Numeric || e.kind() == ErrorKind::InvalidArgument) {
        return -std::numeric_limits<double>::infinity();
      }
      throw;
    }
  };
}

}  // namespace

ParameterVector map_fit(const MixedModel& model, const PriorSpec& prior, const std::optional<ParameterVector>& init,
                        MaximizeResult* info) {
  auto theta_prior = std::make_shared<const SequentialPrior>(model.spec().graph, prior.pc);
  const auto f = posterior_objective(model, prior, theta_prior);
  const ParameterVector start = init ? *init : model.default_start();
  const Vector x0 = start.flatten();
  if (static_cast<std::size_t>(x0.size()) != parameter_count(model.spec())) {
    fail(ErrorKind::InvalidArgument, "initial parameters do not match the model");
  }
  if (!std::isfinite(f(x0))) fail(ErrorKind::Numeric, "log posterior is not finite at the initial parameters");
  auto res = maximize(f, x0);
  if (info) *info = res;
  return ParameterVector::unflatten(model.spec(), res.x);
}

std::vector<Summary> summarize(const ModelSpec& spec, const Matrix& draws) {
  const auto& g = spec.graph;
  const auto classes = correlation_classes(g);
  const PathRuleCorrelation corr(g);
  std::vector<std::string> names;
  for (const auto& c : g.child_names()) names.push_back("sigma_c[" + c + "]");
  for (const auto& cl : classes) names.push_back("rho[" + cl.label(g) + "]");
  for (const auto& l : g.latent_names()) names.push_back("q2[" + l + "]");
  for (const auto& m : spec.markers) {
    for (Term t : m.fixed_terms()) names.push_back("beta[" + m.name + ":" + term_name(t) + "]");
  }
  for (const auto& m : spec.markers) names.push_back("sigma_eps[" + m.name + "]");

  std::vector<std::vector<double>> values(names.size());
  for (Eigen::Index r = 0; r < draws.rows(); ++r) {
    const auto p = ParameterVector::unflatten(spec, draws.row(r).transpose());
    std::size_t k = 0;
    for (Eigen::Index c = 0; c < p.log_sigma_c.size(); ++c) values[k++].push_back(std::exp(p.log_sigma_c(c)));
    std::vector<double> q2(static_cast<std::size_t>(p.theta.size()));
    for (std::size_t l = 0; l < q2.size(); ++l) q2[l] = std::exp(p.theta(static_cast<Eigen::Index>(l)));
    const Matrix c = corr(q2);
    for (const auto& cl : classes) {
      const auto [i, j] = cl.pairs.front();
      values[k++].push_back(c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    for (double v : q2) values[k++].push_back(v);
    for (Eigen::Index j = 0; j < p.beta.size(); ++j) values[k++].push_back(p.beta(j));
    for (std::size_t m = 0; m < spec.markers.size(); ++m) {
      values[k++].push_back(spec.residual_sd ? *spec.residual_sd
                                             : std::exp(p.log_sigma_eps(static_cast<Eigen::Index>(m))));
    }
  }
  std::vector<Summary> out;
  for (std::size_t k = 0; k < names.size(); ++k) {
    auto& v = values[k];
    Summary s{names[k], mean_of(v), 0.0, 0.0};
    std::sort(v.begin(), v.end());
    s.lower = quantile_sorted(v, 0.025);
    s.upper = quantile_sorted(v, 0.975);
    out.push_back(s);
  }
  return out;
}

const Summary& FitResult::summary(std::string_view name) const {
  for (const auto& s : summaries) {
    if (s.name == name) return s;
  }
  fail(ErrorKind::InvalidArgument, "fit has no parameter '" + std::string(name) + "'");
}

FitResult fit(const MixedModel& model, const PriorSpec& prior, const FitOptions& opts) {
  if (opts.n_iter < 10) fail(ErrorKind::InvalidArgument, "n_iter must be at least 10");
  auto theta_prior = std::make_shared<const SequentialPrior>(model.spec().graph, prior.pc);
  const auto f = posterior_objective(model, prior, theta_prior);

  FitResult out;
  out.parameter_names = parameter_names(model.spec());
  MaximizeResult info;
  out.map_point = map_fit(model, prior, opts.init, &info);
  out.map_log_posterior = info.value;
  out.map_converged = info.converged;
  out.map_iterations = info.iterations;

  const Vector x = out.map_point.flatten();
  const auto d = x.size();
  Matrix neg_hess = -numeric_hessian(f, x);
  neg_hess = 0.5 * (neg_hess + neg_hess.transpose());
  Matrix cov;
  Eigen::SelfAdjointEigenSolver<Matrix> es(neg_hess);
  if (es.info() == Eigen::Success && neg_hess.allFinite() && es.eigenvalues().minCoeff() > 0.0) {
    cov = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  } else if (es.info() == Eigen::Success && neg_hess.allFinite()) {
    // Curvature is not negative everywhere: floor the eigenvalues.
    const double top = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    const Vector ev = es.eigenvalues().cwiseAbs().cwiseMax(1e-6 * top);
    cov = es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  } else {
    cov = Matrix::Identity(d, d) * 1e-4;
  }
  cov *= 2.38 * 2.38 / static_cast<double>(d);

  auto chain = metropolis(f, x, cov, opts.n_iter, opts.seed);
  out.samples = std::move(chain.draws);
  out.acceptance = chain.acceptance;
  out.summaries = summarize(model.spec(), out.samples);
  return out;
}

std::string fit_to_json(const FitResult& fit) {
  using nlohmann::ordered_json;
  auto num = [](double v) { return std::isfinite(v) ? ordered_json(std::stod(format_number(v))) : ordered_json(); };
  ordered_json j;
  ordered_json point = ordered_json::object();
  const Vector x = fit.map_point.flatten();
  for (std::size_t i = 0; i < fit.parameter_names.size(); ++i) {
    point[fit.parameter_names[i]] = num(x(static_cast<Eigen::Index>(i)));
  }
  j["map"] = {{"point", point},
              {"log_posterior", num(fit.map_log_posterior)},
              {"converged", fit.map_converged},
              {"iterations", fit.map_iterations}};
  j["mcmc"] = {{"retained", fit.samples.rows()}, {"acceptance", num(fit.acceptance)}};
  ordered_json rows = ordered_json::array();
  for (const auto& s : fit.summaries) {
    rows.push_back({{"name", s.name}, {"mean", num(s.mean)}, {"lower", num(s.lower)}, {"upper", num(s.upper)}});
  }
  j["summaries"] = rows;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

Simulation simulate_dataset(const ModelSpec& spec, const ParameterVector& truth, std::size_t n,
                            const std::vector<double>& times, std::uint64_t seed) {
  spec.check();
  if (times.empty()) fail(ErrorKind::InvalidArgument, "simulation needs at least one time point");
  if (static_cast<std::size_t>(truth.beta.size()) != spec.num_fixed() ||
      static_cast<std::size_t>(truth.log_sigma_c.size()) != spec.graph.num_children() ||
      static_cast<std::size_t>(truth.theta.size()) != spec.graph.num_latents() ||
      (!spec.residual_sd && static_cast<std::size_t>(truth.log_sigma_eps.size()) != spec.markers.size())) {
    fail(ErrorKind::InvalidArgument, "true parameters do not match the model spec");
  }
  if (!truth.log_sigma_c.allFinite() || !truth.theta.allFinite() || !truth.beta.allFinite()) {
    fail(ErrorKind::InvalidArgument, "true scales and variances must be positive and finite");
  }

  // The factor needs only the spec, so build it on an empty model shell.
  LongitudinalDataset shell;
  shell.rows.push_back({"0", spec.markers.front().name, 0.0, 0.0, 0.0, 0.0});
  const MixedModel model(spec, shell);
  const Matrix f = model.random_factor(truth);
  const auto k = f.rows();
  const auto offsets = beta_offsets(spec);
  const auto terms = spec.child_terms();

  Simulation sim;
  sim.random_effects.resize(static_cast<Eigen::Index>(n), k);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = seeded_engine(seed, i);
    Observation base;
    base.id = std::to_string(i + 1);
    base.x_bin = coin(rng) ? 1.0 : 0.0;
    base.x_con = 1.0 + std::sqrt(0.5) * normal(rng);
    Vector a(f.cols());
    for (Eigen::Index j = 0; j < a.size(); ++j) a(j) = normal(rng);
    const Vector b = f * a;
    sim.random_effects.row(static_cast<Eigen::Index>(i)) = b.transpose();
    for (std::size_t m = 0; m < spec.markers.size(); ++m) {
      const auto& marker = spec.markers[m];
      const double sd = spec.residual_sd ? *spec.residual_sd : std::exp(truth.log_sigma_eps(static_cast<Eigen::Index>(m)));
      const auto fixed = marker.fixed_terms();
      for (double t : times) {
        Observation o = base;
        o.marker = marker.name;
        o.time = t;
        double mu = 0.0;
        for (std::size_t j = 0; j < fixed.size(); ++j) {
          mu += truth.beta(offsets[m] + static_cast<Eigen::Index>(j)) * term_value(fixed[j], o);
        }
        for (Eigen::Index c = 0; c < k; ++c) {
          if (terms[static_cast<std::size_t>(c)].first == m) mu += b(c) * term_value(terms[static_cast<std::size_t>(c)].second, o);
        }
        const double noise = normal(rng);
        o.y = sd > 0.0 ? mu + sd * noise : mu;
        sim.data.rows.push_back(std::move(o));
      }
    }
  }
  return sim;
}

// ---------------------------------------------------------------------------
// Recovery report
// ---------------------------------------------------------------------------

std::vector<RecoveryRow> recovery_report(const std::map<std::string, double>& truths, const FitResult& fit) {
  std::vector<RecoveryRow> rows;
  for (const auto& s : fit.summaries) {
    auto it = truths.find(s.name);
    if (it == truths.end()) continue;
    rows.push_back({s.name, it->second, s.mean, s.lower, s.upper, s.lower <= it->second && it->second <= s.upper,
                    std::abs(s.mean - it->second)});
  }
  if (rows.size() != truths.size()) {
    for (const auto& [name, v] : truths) {
      bool found = false;
      for (const auto& r : rows) found = found || r.name == name;
      if (!found) fail(ErrorKind::InvalidArgument, "truth '" + name + "' has no matching fitted parameter");
    }
  }
  return rows;
}

std::string recovery_markdown(const std::vector<RecoveryRow>& rows) {
  std::string out = "| Parameter | True value | Mean estimate | Credible interval | Covered | Abs. error |\n";
  out += "|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    out += "| " + r.name + " | " + format_number(r.truth) + " | " + format_number(r.mean) + " | [" +
           format_number(r.lower) + " ; " + format_number(r.upper) + "] | " + (r.covered ? "yes" : "no") + " | " +
           format_number(r.abs_error) + " |\n";
  }
  return out;
}

std::string recovery_csv(const std::vector<RecoveryRow>& rows) {
  std::string out = "parameter,truth,mean,lower,upper,covered,abs_error\n";
  for (const auto& r : rows) {
    out += r.name + "," + format_number(r.truth) + "," + format_number(r.mean) + "," + format_number(r.lower) + "," +
           format_number(r.upper) + "," + (r.covered ? "1" : "0") + "," + format_number(r.abs_error) + "\n";
  }
  return out;
}

}  // namespace graphcorr
