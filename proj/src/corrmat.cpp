#include "graphcorr/corrmat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "graphcorr/error.hpp"

namespace graphcorr {

namespace {

void check_variances(const TreeGraph& graph, std::span<const double> q2) {
  if (q2.size() != graph.num_latents()) {
    fail(ErrorKind::InvalidArgument, "expected " + std::to_string(graph.num_latents()) +
                                         " variances, got " + std::to_string(q2.size()));
  }
  for (std::size_t l = 0; l < q2.size(); ++l) {
    if (!(q2[l] > 0.0) || !std::isfinite(q2[l])) {
      fail(ErrorKind::InvalidArgument,
           "variance must be positive (latent '" + graph.latent_name(l) + "')");
    }
  }
}

std::vector<std::size_t> sorted(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

std::vector<double> aligned_variances(const TreeGraph& graph, const VarianceAssignment& v) {
  std::vector<double> out(graph.num_latents());
  for (std::size_t l = 0; l < graph.num_latents(); ++l) {
    auto it = v.find(graph.latent_name(l));
    if (it == v.end()) fail(ErrorKind::InvalidArgument, "no variance given for latent '" + graph.latent_name(l) + "'");
    out[l] = it->second;
  }
  for (const auto& [name, value] : v) {
    if (!graph.latent_index(name)) fail(ErrorKind::InvalidArgument, "'" + name + "' is not a latent of the graph");
  }
  check_variances(graph, out);
  return out;
}

VarianceAssignment named_variances(const TreeGraph& graph, std::span<const double> q2) {
  VarianceAssignment out;
  for (std::size_t l = 0; l < graph.num_latents(); ++l) out[graph.latent_name(l)] = q2[l];
  return out;
}

Matrix assemble_precision(const TreeGraph& graph, std::span<const double> q2) {
  check_variances(graph, q2);
  const std::size_t k = graph.num_children();
  const std::size_t n = k + graph.num_latents();
  Matrix q = Matrix::Zero(n, n);
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t p = k + graph.child_parent(c);
    q(c, c) += 1.0;
    q(p, p) += 1.0;
    q(c, p) -= 1.0;
    q(p, c) -= 1.0;
  }
  for (std::size_t l = 0; l < graph.num_latents(); ++l) {
    const double prec = 1.0 / q2[l];
    const std::size_t i = k + l;
    q(i, i) += prec;
    const std::size_t parent = graph.latent_parent(l);
    if (parent == TreeGraph::npos) continue;
    const std::size_t j = k + parent;
    q(j, j) += prec;
    q(i, j) -= prec;
    q(j, i) -= prec;
  }
  return q;
}

Matrix children_correlation(const TreeGraph& graph, std::span<const double> q2) {
  const Matrix q = assemble_precision(graph, q2);
  const auto k = static_cast<Eigen::Index>(graph.num_children());
  auto llt = spd_factor(q, "latent GGM precision");
  Matrix rhs = Matrix::Identity(q.rows(), k);
  Matrix sigma = llt.solve(rhs).topRows(k);
  Vector inv_sd = sigma.diagonal().array().rsqrt();
  Matrix c = inv_sd.asDiagonal() * sigma * inv_sd.asDiagonal();
  c = 0.5 * (c + c.transpose()).eval();
  c.diagonal().setOnes();
  return c;
}

PathRuleCorrelation::PathRuleCorrelation(const TreeGraph& graph) : k_(graph.num_children()) {
  const auto p = static_cast<Eigen::Index>(graph.num_latents());
  shared_children_ = Matrix::Zero(p, p);
  chains_.resize(k_);
  for (std::size_t c = 0; c < k_; ++c) {
    chains_[c] = graph.child_ancestors(c);
    for (auto a : chains_[c]) {
      for (auto b : chains_[c]) shared_children_(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) += 1.0;
    }
  }
  for (std::size_t i = 0; i < k_; ++i) {
    for (std::size_t j = i + 1; j < k_; ++j) {
      std::vector<std::size_t> common;
      for (auto l : chains_[i]) {
        if (std::find(chains_[j].begin(), chains_[j].end(), l) != chains_[j].end()) common.push_back(l);
      }
      shared_.push_back(std::move(common));
    }
  }
}

Matrix PathRuleCorrelation::operator()(std::span<const double> q2) const {
  Vector var(k_);
  for (std::size_t c = 0; c < k_; ++c) {
    double v = 1.0;
    for (auto l : chains_[c]) v += q2[l];
    var(c) = v;
  }
  Matrix out = Matrix::Identity(k_, k_);
  std::size_t idx = 0;
  for (std::size_t i = 0; i < k_; ++i) {
    for (std::size_t j = i + 1; j < k_; ++j) {
      double cov = 0.0;
      for (auto l : shared_[idx++]) cov += q2[l];
      out(i, j) = out(j, i) = cov / (std::sqrt(var(i)) * std::sqrt(var(j)));
    }
  }
  return out;
}

double PathRuleCorrelation::log_det(std::span<const double> q2) const {
  const auto p = shared_children_.rows();
  Vector root(p);
  for (Eigen::Index l = 0; l < p; ++l) root(l) = std::sqrt(q2[static_cast<std::size_t>(l)]);
  Matrix m = root.asDiagonal() * shared_children_ * root.asDiagonal();
  m.diagonal().array() += 1.0;
  double out = graphcorr::log_det(spd_factor(m, "child covariance capacitance"));
  for (std::size_t c = 0; c < k_; ++c) {
    double v = 1.0;
    for (auto l : chains_[c]) v += q2[l];
    out -= std::log(v);
  }
  return out;
}

namespace {

bool contains(const std::vector<std::size_t>& v, std::size_t x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

Matrix PathRuleCorrelation::increment(std::span<const double> q2, std::size_t l, double xi) const {
  // With q2[l] = 0: cov c, variances v; x = xi a / v. The change is
  // (xi s - c (R - 1)) / (sqrt(v_i v_j) R), R = sqrt((1 + x_i)(1 + x_j)).
  Vector var(k_), lx(k_);
  for (std::size_t c = 0; c < k_; ++c) {
    double v = 1.0;
    for (auto a : chains_[c]) {
      if (a != l) v += q2[a];
    }
    var(c) = v;
    lx(c) = contains(chains_[c], l) ? std::log1p(xi / v) : 0.0;
  }
  Matrix out = Matrix::Zero(k_, k_);
  std::size_t idx = 0;
  for (std::size_t i = 0; i < k_; ++i) {
    for (std::size_t j = i + 1; j < k_; ++j) {
      double cov = 0.0;
      bool shared = false;
      for (auto a : shared_[idx++]) {
        if (a == l) {
          shared = true;
        } else {
          cov += q2[a];
        }
      }
      const double half = 0.5 * (lx(i) + lx(j));
      const double num = (shared ? xi : 0.0) - cov * std::expm1(half);
      out(i, j) = out(j, i) = num / (std::sqrt(var(i)) * std::sqrt(var(j)) * std::exp(half));
    }
  }
  return out;
}

Matrix PathRuleCorrelation::derivative(std::span<const double> q2, std::size_t l) const {
  Vector var(k_), a(k_);
  for (std::size_t c = 0; c < k_; ++c) {
    double v = 1.0;
    for (auto b : chains_[c]) v += q2[b];
    var(c) = v;
    a(c) = contains(chains_[c], l) ? 1.0 / v : 0.0;
  }
  Matrix out = Matrix::Zero(k_, k_);
  std::size_t idx = 0;
  for (std::size_t i = 0; i < k_; ++i) {
    for (std::size_t j = i + 1; j < k_; ++j) {
      double cov = 0.0;
      bool shared = false;
      for (auto b : shared_[idx++]) {
        cov += q2[b];
        shared = shared || b == l;
      }
      const double root = std::sqrt(var(i)) * std::sqrt(var(j));
      const double corr = cov / root;
      out(i, j) = out(j, i) = (shared ? 1.0 / root : 0.0) - 0.5 * corr * (a(i) + a(j));
    }
  }
  return out;
}

double PathRuleCorrelation::log_det_derivative(std::span<const double> q2, std::size_t l) const {
  // d log det(I + U Q U^T) / dq_l = u_l^T (I + U Q U^T)^-1 u_l
  //   = (1 - [T^-1]_ll / q_l) / q_l with T = Q^-1 + U^T U.
  const auto p = shared_children_.rows();
  Matrix t = shared_children_;
  for (Eigen::Index b = 0; b < p; ++b) {
    const double q = q2[static_cast<std::size_t>(b)];
    if (!(q > 0.0)) fail(ErrorKind::InvalidArgument, "log det derivative needs positive variances");
    t(b, b) += 1.0 / q;
  }
  const auto llt = spd_factor(t, "latent capacitance");
  Vector e = Vector::Zero(p);
  const auto li = static_cast<Eigen::Index>(l);
  e(li) = 1.0;
  const double tinv = llt.solve(e)(li);
  const double ql = q2[l];
  double out = (1.0 - tinv / ql) / ql;
  for (std::size_t c = 0; c < k_; ++c) {
    if (!contains(chains_[c], l)) continue;
    double v = 1.0;
    for (auto b : chains_[c]) v += q2[b];
    out -= 1.0 / v;
  }
  return out;
}

Matrix correlation_oracle(const TreeGraph& graph, std::span<const double> q2) {
  check_variances(graph, q2);
  return PathRuleCorrelation(graph)(q2);
}

Matrix correlation(const TreeGraph& graph, std::span<const double> q2, CorrelationMethod method) {
  return method == CorrelationMethod::Inversion ? children_correlation(graph, q2)
                                                : correlation_oracle(graph, q2);
}

// -------------------------------------------------------------------------
// Correlation classes and the inverse problem
// -------------------------------------------------------------------------

std::string CorrelationClass::label(const TreeGraph& graph) const {
  return graph.child_name(pairs.front().first) + ":" + graph.child_name(pairs.front().second);
}

std::vector<CorrelationClass> correlation_classes(const TreeGraph& graph) {
  const std::size_t k = graph.num_children();
  std::vector<std::vector<std::size_t>> chains(k), keys(k);
  for (std::size_t c = 0; c < k; ++c) {
    chains[c] = graph.child_ancestors(c);
    keys[c] = sorted(chains[c]);
  }
  std::vector<CorrelationClass> out;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      auto match = [&](const CorrelationClass& cls) {
        auto ka = sorted(cls.chain_a), kb = sorted(cls.chain_b);
        return (ka == keys[i] && kb == keys[j]) || (ka == keys[j] && kb == keys[i]);
      };
      auto it = std::find_if(out.begin(), out.end(), match);
      if (it == out.end()) {
        out.push_back({chains[i], chains[j], {{i, j}}});
      } else {
        it->pairs.emplace_back(i, j);
      }
    }
  }
  return out;
}

std::size_t class_of_pair(const std::vector<CorrelationClass>& classes, std::size_t i, std::size_t j) {
  if (i > j) std::swap(i, j);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto& p = classes[c].pairs;
    if (std::find(p.begin(), p.end(), std::make_pair(i, j)) != p.end()) return c;
  }
  fail(ErrorKind::InvalidArgument, "pair does not belong to any correlation class");
}

std::vector<double> solve_variances(const TreeGraph& graph, const std::vector<PairTarget>& targets) {
  const auto classes = correlation_classes(graph);
  const std::size_t m = classes.size();
  const std::size_t p = graph.num_latents();
  if (m == 0) fail(ErrorKind::InvalidArgument, "graph with a single child has no correlations to target");

  std::vector<double> goal(m, std::numeric_limits<double>::quiet_NaN());
  for (const auto& t : targets) {
    auto a = graph.child_index(t.a), b = graph.child_index(t.b);
    if (!a || !b || *a == *b) {
      fail(ErrorKind::InvalidArgument, "target '" + t.a + ":" + t.b + "' must name two distinct children");
    }
    if (!(t.rho > 0.0 && t.rho < 1.0)) {
      fail(ErrorKind::InvalidArgument, "target correlation for '" + t.a + ":" + t.b + "' must lie in (0, 1)");
    }
    const std::size_t c = class_of_pair(classes, *a, *b);
    if (!std::isnan(goal[c]) && std::abs(goal[c] - t.rho) > 1e-12) {
      fail(ErrorKind::InvalidArgument, "conflicting targets for correlation class " + classes[c].label(graph));
    }
    goal[c] = t.rho;
  }
  for (std::size_t c = 0; c < m; ++c) {
    if (std::isnan(goal[c])) fail(ErrorKind::InvalidArgument, "no target for correlation class " + classes[c].label(graph));
  }

  // Residuals and Jacobian with respect to x = log q^2.
  auto evaluate = [&](const Vector& x, Vector& r, Matrix* jac) {
    Vector q = x.array().exp();
    for (std::size_t c = 0; c < m; ++c) {
      const auto& ca = classes[c].chain_a;
      const auto& cb = classes[c].chain_b;
      double va = 1.0, vb = 1.0, cov = 0.0;
      for (auto l : ca) va += q(l);
      for (auto l : cb) vb += q(l);
      for (auto l : ca) {
        if (std::find(cb.begin(), cb.end(), l) != cb.end()) cov += q(l);
      }
      const double denom = std::sqrt(va * vb);
      const double rho = cov / denom;
      r(c) = rho - goal[c];
      if (!jac) continue;
      for (std::size_t l = 0; l < p; ++l) {
        const bool in_a = std::find(ca.begin(), ca.end(), l) != ca.end();
        const bool in_b = std::find(cb.begin(), cb.end(), l) != cb.end();
        double d = 0.0;
        if (in_a && in_b) d += 1.0 / denom;
        if (in_a) d -= 0.5 * rho / va;
        if (in_b) d -= 0.5 * rho / vb;
        (*jac)(c, l) = d * q(l);
      }
    }
  };

  Vector x = Vector::Zero(p);
  Vector r(m), r_new(m);
  Matrix jac(m, p);
  evaluate(x, r, &jac);
  double mu = 1e-3;
  for (int iter = 0; iter < 1000 && r.lpNorm<Eigen::Infinity>() > 1e-14; ++iter) {
    Matrix jtj = jac.transpose() * jac;
    Vector g = jac.transpose() * r;
    bool improved = false;
    for (int tries = 0; tries < 30; ++tries) {
      Matrix a = jtj;
      a.diagonal().array() += mu * (jtj.diagonal().array() + 1e-12);
      Vector step = a.ldlt().solve(-g);
      Vector x_new = (x + step).cwiseMax(-60.0).cwiseMin(60.0);
      evaluate(x_new, r_new, nullptr);
      if (r_new.squaredNorm() < r.squaredNorm()) {
        x = x_new;
        mu = std::max(mu / 3.0, 1e-12);
        improved = true;
        break;
      }
      mu *= 4.0;
    }
    if (!improved) break;
    evaluate(x, r, &jac);
  }

  Eigen::Index worst = 0;
  const double err = r.cwiseAbs().maxCoeff(&worst);
  if (err > 1e-8) {
    fail(ErrorKind::Infeasible, "target correlations are infeasible for this graph: class " +
                                    classes[worst].label(graph) + " reaches " +
                                    std::to_string(r(worst) + goal[worst]) + " instead of " +
                                    std::to_string(goal[worst]));
  }
  std::vector<double> q2(p);
  for (std::size_t l = 0; l < p; ++l) q2[l] = std::exp(x(l));
  return q2;
}

Matrix scale_to_covariance(const Matrix& corr, std::span<const double> sigma) {
  if (static_cast<std::size_t>(corr.rows()) != sigma.size() || corr.rows() != corr.cols()) {
    fail(ErrorKind::InvalidArgument, "scale vector length does not match the correlation matrix");
  }
  for (double s : sigma) {
    if (!(s > 0.0)) fail(ErrorKind::InvalidArgument, "child scales must be positive");
  }
  Eigen::Map<const Vector> d(sigma.data(), static_cast<Eigen::Index>(sigma.size()));
  return d.asDiagonal() * corr * d.asDiagonal();
}

}  // namespace graphcorr
