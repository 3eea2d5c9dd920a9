#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "graphcorr/error.hpp"
#include "graphcorr/inference.hpp"
#include "graphcorr/stats.hpp"
#include "json.hpp"

using namespace graphcorr;

namespace {

const std::string kData = GRAPHCORR_DATA_DIR;

ModelSpec two_markers() { return load_model_spec(kData + "/two_markers_model.json"); }
Truths two_marker_truths() { return load_truths(kData + "/two_markers_truths.json"); }

std::vector<double> times_0_to_10() {
  std::vector<double> t;
  for (int i = 0; i <= 10; ++i) t.push_back(i);
  return t;
}

// One marker, random intercept and slope under one latent.
const char* kSlopeSpec = R"({
  "graph": "latent p1\nchild a : p1\nchild b : p1\n",
  "markers": [{"name": "m", "fixed_degree": 1, "random": {"intercept": "a", "t": "b"}}]
})";

ParameterVector random_parameters(const ModelSpec& spec, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> scale(-2.0, 1.0), theta(-4.0, 4.0);
  ParameterVector p;
  p.beta.resize(static_cast<Eigen::Index>(spec.num_fixed()));
  for (auto& v : p.beta) v = normal(rng);
  p.log_sigma_c.resize(static_cast<Eigen::Index>(spec.graph.num_children()));
  for (auto& v : p.log_sigma_c) v = scale(rng);
  p.theta.resize(static_cast<Eigen::Index>(spec.graph.num_latents()));
  for (auto& v : p.theta) v = theta(rng);
  p.log_sigma_eps.resize(spec.residual_sd ? 0 : static_cast<Eigen::Index>(spec.markers.size()));
  for (auto& v : p.log_sigma_eps) v = scale(rng);
  return p;
}

Simulation two_marker_sim(std::size_t n, std::uint64_t seed) {
  auto spec = two_markers();
  return simulate_dataset(spec, truths_to_parameters(spec, two_marker_truths()), n, times_0_to_10(), seed);
}

double pearson(const Vector& a, const Vector& b) {
  const Vector x = a.array() - a.mean();
  const Vector y = b.array() - b.mean();
  return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
}

}  // namespace

TEST_CASE("dataset csv") {
  const std::string text =
      "id,marker,time,y,x_bin,x_con\n"
      "1,y1,0,0.5,1,0.25\n"
      "1,y1,1,0.75,1,0.25\n"
      "2,y2,0,-0.001,0,1.5\n";
  auto d = parse_dataset_csv(text);
  REQUIRE(d.rows.size() == 3);
  CHECK(d.num_individuals() == 2);
  CHECK(d.rows[2].marker == "y2");
  CHECK(d.rows[2].y == -1e-3);
  CHECK(dataset_to_csv(d) == text);

  // Columns in any order; covariates optional.
  auto e = parse_dataset_csv("y,time,marker,id\n2.5,3,m,a\n");
  CHECK(e.rows[0].y == 2.5);
  CHECK(e.rows[0].time == 3.0);
  CHECK(e.rows[0].x_bin == 0.0);

  CHECK_THROWS_AS(parse_dataset_csv("id,marker,time\n1,m,0\n"), ParseError);
  CHECK_THROWS_AS(parse_dataset_csv("id,marker,time,y,z\n1,m,0,1,2\n"), ParseError);
  CHECK_THROWS_AS(parse_dataset_csv(""), ParseError);
  try {
    parse_dataset_csv("id,marker,time,y\n1,m,0,1\n1,m,1,abc\n");
    FAIL("expected a parse error");
  } catch (const ParseError& err) {
    CHECK(err.line() == 3);
    CHECK(err.column() == 7);
  }
  CHECK_THROWS_AS(load_dataset_csv(kData + "/missing.csv"), Error);
}

TEST_CASE("model spec") {
  auto spec = two_markers();
  CHECK(spec.markers.size() == 2);
  CHECK(spec.num_fixed() == 4);
  CHECK(parameter_count(spec) == 4 + 4 + 3 + 2);
  const auto names = parameter_names(spec);
  CHECK(names.front() == "beta[y1:intercept]");
  CHECK(names.back() == "log_sigma_eps[y2]");

  auto cubic = load_model_spec(kData + "/cubic_model.json");
  CHECK(cubic.graph.num_latents() == 7);
  CHECK(cubic.graph.num_children() == 8);
  CHECK(cubic.num_fixed() == 12);

  const std::string g = R"("graph": "latent p1\nchild a : p1\nchild b : p1\n")";
  auto bad = [&](const std::string& markers, const std::string& extra = "") {
    return parse_model_spec("{" + g + extra + ", \"markers\": " + markers + "}");
  };
  CHECK_NOTHROW(bad(R"([{"name": "m", "random": {"intercept": "a", "t": "b"}}])"));
  CHECK_THROWS_AS(bad(R"([{"name": "m", "random": {"intercept": "a"}}])"), Error);           // b unused
  CHECK_THROWS_AS(bad(R"([{"name": "m", "random": {"intercept": "a", "t": "a"}}])"), Error);  // a twice
  CHECK_THROWS_AS(bad(R"([{"name": "m", "random": {"x_bin": "a", "t": "b"}}])"), Error);
  CHECK_THROWS_AS(bad(R"([{"name": "m", "random": {"intercept": "a", "t": "zz"}}])"), Error);
  CHECK_THROWS_AS(bad(R"([{"name": "m", "fixed_degree": 4, "random": {"intercept": "a", "t": "b"}}])"), Error);
  CHECK_THROWS_AS(bad(R"([{"name": "m", "color": 1, "random": {"intercept": "a", "t": "b"}}])"), Error);
  CHECK_THROWS_AS(bad(R"([{"name": "m", "random": {"intercept": "a", "t": "b"}}])", R"(, "extra": 1)"), Error);
  CHECK_THROWS_AS(bad(R"([{"name": "m", "random": {"intercept": "a", "t": "b"}}])", R"(, "graph_file": "x")"),
                  Error);
  CHECK_THROWS_AS(parse_model_spec("{\"markers\": []}"), Error);
  CHECK_THROWS_AS(parse_model_spec("not json"), Error);
}

TEST_CASE("truths") {
  auto spec = two_markers();
  auto tp = truths_to_parameters(spec, two_marker_truths());
  const auto values = truth_values(spec, two_marker_truths());
  CHECK(values.at("rho[c1:c2]") == doctest::Approx(0.9).epsilon(1e-10));
  CHECK(values.at("sigma_c[c4]") == 0.5);
  CHECK(values.at("beta[y2:t]") == -0.1);

  // Summaries of a single draw reproduce every natural-scale truth.
  Matrix one = tp.flatten().transpose();
  for (const auto& s : summarize(spec, one)) {
    auto it = values.find(s.name);
    if (it != values.end()) CHECK(s.mean == doctest::Approx(it->second).epsilon(1e-10));
  }

  auto t = two_marker_truths();
  t.sigma_c.erase("c4");
  CHECK_THROWS_AS(truths_to_parameters(spec, t), Error);
  t = two_marker_truths();
  t.beta["y1:t2"] = 1.0;
  CHECK_THROWS_AS(truths_to_parameters(spec, t), Error);
  t = two_marker_truths();
  t.rho["c1:c3"] = 0.95;  // exceeds what the within-pair values allow
  CHECK_THROWS_AS(truths_to_parameters(spec, t), Error);
}

TEST_CASE("marginal likelihood: closed-form two-observation case") {
  auto spec = parse_model_spec(kSlopeSpec);
  LongitudinalDataset d;
  d.rows.push_back({"i", "m", 0.0, 0.7, 0, 0});
  d.rows.push_back({"i", "m", 2.0, -0.4, 0, 0});
  MixedModel model(spec, d);
  ParameterVector p;
  p.beta = Vector(2);
  p.beta << 0.1, -0.2;
  p.log_sigma_c = Vector(2);
  p.log_sigma_c << std::log(1.3), std::log(0.6);
  p.theta = Vector(1);
  p.theta << std::log(2.0);
  p.log_sigma_eps = Vector(1);
  p.log_sigma_eps << std::log(0.4);

  const double a = 1.3, b = 0.6, s2 = 0.16, rho = 2.0 / 3.0;
  const double v11 = a * a + s2;
  const double v12 = a * a + 2 * rho * a * b;
  const double v22 = a * a + 4 * rho * a * b + 4 * b * b + s2;
  const double det = v11 * v22 - v12 * v12;
  const double r1 = 0.7 - 0.1, r2 = -0.4 - (0.1 - 0.4);
  const double quad = (v22 * r1 * r1 - 2 * v12 * r1 * r2 + v11 * r2 * r2) / det;
  const double expected = -std::log(2 * M_PI) - 0.5 * std::log(det) - 0.5 * quad;
  CHECK(model.marginal_loglik(p) == doctest::Approx(expected).epsilon(1e-10));
  CHECK(model.marginal_loglik_dense(p) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("marginal likelihood: vanishing random effects give iid residuals") {
  auto sim = two_marker_sim(20, 3);
  auto spec = two_markers();
  MixedModel model(spec, sim.data);
  std::mt19937_64 rng(8);
  auto p = random_parameters(spec, rng);
  p.log_sigma_c.setConstant(-40.0);
  p.log_sigma_eps.setZero();
  double expected = 0.0;
  const auto fixed = spec.markers[0].fixed_terms();
  for (const auto& o : sim.data.rows) {
    const std::size_t m = spec.marker_index(o.marker);
    const double mu = p.beta(2 * static_cast<Eigen::Index>(m)) + p.beta(2 * static_cast<Eigen::Index>(m) + 1) * o.time;
    expected += -0.5 * std::log(2 * M_PI) - 0.5 * (o.y - mu) * (o.y - mu);
  }
  CHECK(fixed.size() == 2);
  CHECK(model.marginal_loglik(p) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("marginal likelihood: block form matches dense evaluation") {
  std::mt19937_64 rng(9);
  for (const char* file : {"/two_markers_model.json", "/cubic_model.json"}) {
    auto spec = load_model_spec(kData + file);
    LongitudinalDataset d;
    // Unbalanced: individuals with different subsets of visits.
    std::normal_distribution<double> normal;
    std::bernoulli_distribution keep(0.7);
    for (int i = 0; i < 15; ++i) {
      for (const auto& m : spec.markers) {
        for (int t = 0; t <= 6; ++t) {
          if (!keep(rng)) continue;
          d.rows.push_back({std::to_string(i), m.name, 0.5 * t, normal(rng), double(i % 2), 1.0 + 0.1 * i});
        }
      }
    }
    MixedModel model(spec, d);
    for (int rep = 0; rep < 10; ++rep) {
      auto p = random_parameters(spec, rng);
      CHECK(model.marginal_loglik(p) == doctest::Approx(model.marginal_loglik_dense(p)).epsilon(1e-10));
    }
  }
}

TEST_CASE("marginal likelihood: truth beats inflated scales") {
  auto spec = two_markers();
  const auto truth = truths_to_parameters(spec, two_marker_truths());
  auto inflated = truth;
  inflated.log_sigma_c.array() += 0.5;
  inflated.theta.array() += 0.5;
  inflated.log_sigma_eps.array() += 0.5;
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto sim = simulate_dataset(spec, truth, 20, times_0_to_10(), 1000 + seed);
    MixedModel model(spec, sim.data);
    wins += model.marginal_loglik(truth) > model.marginal_loglik(inflated);
  }
  CHECK(wins >= 95);
}

TEST_CASE("marginal likelihood: permutation invariance") {
  auto spec = two_markers();
  auto sim = two_marker_sim(30, 4);
  std::mt19937_64 rng(10);
  auto p = random_parameters(spec, rng);
  const double base = MixedModel(spec, sim.data).marginal_loglik(p);
  auto shuffled = sim.data;
  std::shuffle(shuffled.rows.begin(), shuffled.rows.end(), rng);
  CHECK(MixedModel(spec, shuffled).marginal_loglik(p) == doctest::Approx(base).epsilon(1e-11));
}

TEST_CASE("log posterior") {
  auto spec = two_markers();
  auto sim = two_marker_sim(30, 5);
  MixedModel model(spec, sim.data);
  PriorSpec prior;
  std::mt19937_64 rng(11);
  int finite = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    auto p = random_parameters(spec, rng);
    const auto t = model.log_posterior(p, prior);
    finite += std::isfinite(t.total);
    if (rep < 20) {
      CHECK(t.total == doctest::Approx(t.loglik + t.log_prior_theta + t.log_prior_nuisance).epsilon(1e-12));
      // theta -> xi -> theta round trip.
      auto q = p;
      for (auto& v : q.theta) v = std::log(std::exp(v));
      CHECK(model.log_posterior(q, prior).total == doctest::Approx(t.total).epsilon(1e-12));
    }
  }
  CHECK(finite == 1000);

  auto p = random_parameters(spec, rng);
  const auto t = model.log_posterior(p, prior);
  double nuisance = 0.0;
  for (auto v : p.log_sigma_c) nuisance += -std::exp(v) + v;
  for (auto v : p.log_sigma_eps) nuisance += -std::exp(v) + v;
  for (auto v : p.beta) nuisance += -0.5 * std::log(2 * M_PI * 1e4) - 0.5 * v * v / 1e4;
  CHECK(t.log_prior_nuisance == doctest::Approx(nuisance).epsilon(1e-12));
  std::vector<double> q2;
  for (auto v : p.theta) q2.push_back(std::exp(v));
  CHECK(t.log_prior_theta ==
        doctest::Approx(joint_log_prior(spec.graph, q2, prior.pc, DensityMode::Exact, Parametrization::LogVariance).total)
            .epsilon(1e-12));
  PriorSpec bad;
  bad.sd_rate = 0.0;
  CHECK_THROWS_AS(model.log_posterior(p, bad), Error);
}

TEST_CASE("finite-difference gradient of the marginal likelihood") {
  auto spec = two_markers();
  auto sim = two_marker_sim(30, 6);
  MixedModel model(spec, sim.data);
  std::mt19937_64 rng(12);
  const Objective block = [&](const Vector& x) { return model.marginal_loglik(ParameterVector::unflatten(spec, x)); };
  const Objective dense = [&](const Vector& x) {
    return model.marginal_loglik_dense(ParameterVector::unflatten(spec, x));
  };
  for (int rep = 0; rep < 10; ++rep) {
    const Vector x = random_parameters(spec, rng).flatten();
    const Vector g = numeric_gradient(block, x);
    Vector oracle(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double h = 1e-4 * std::max(1.0, std::abs(x(i)));
      Vector a = x, b = x, c = x, e = x;
      a(i) += h;
      b(i) -= h;
      c(i) += 2 * h;
      e(i) -= 2 * h;
      oracle(i) = (8 * (dense(a) - dense(b)) - (dense(c) - dense(e))) / (12 * h);
    }
    CHECK((g - oracle).norm() <= 1e-4 * std::max(1.0, oracle.norm()));
  }
}

TEST_CASE("maximize") {
  // Concave quadratic with known maximizer.
  Matrix a(3, 3);
  a << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
  Vector c(3);
  c << 1, -2, 0.5;
  const Objective f = [&](const Vector& x) { return -0.5 * x.dot(a * x) + c.dot(x); };
  auto r = maximize(f, Vector::Zero(3));
  CHECK(r.converged);
  CHECK((r.x - a.ldlt().solve(c)).norm() < 1e-6);
  const Objective bad = [](const Vector&) { return std::nan(""); };
  CHECK_THROWS_AS(maximize(bad, Vector::Zero(2)), Error);

  Matrix hess = numeric_hessian(f, Vector::Ones(3));
  CHECK((hess + a).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("map fit") {
  // Balanced intercept-only data without noise: each fixed effect is its
  // marker's sample mean for any variance components.
  auto spec = parse_model_spec(R"({
    "graph": "latent p1\nchild a : p1\nchild b : p1\n",
    "markers": [{"name": "u", "fixed_degree": 0, "random": {"intercept": "a"}},
                {"name": "v", "fixed_degree": 0, "random": {"intercept": "b"}}],
    "residual_sd": 0.2
  })");
  std::mt19937_64 rng(13);
  std::normal_distribution<double> normal;
  LongitudinalDataset d;
  double sum_u = 0.0, sum_v = 0.0;
  std::size_t rows = 0;
  for (int i = 0; i < 40; ++i) {
    const double shared = normal(rng);
    const double u = 0.3 + shared, v = -1.0 + 0.5 * shared + 0.5 * normal(rng);
    for (int t = 0; t < 4; ++t) {
      d.rows.push_back({std::to_string(i), "u", double(t), u, 0, 0});
      d.rows.push_back({std::to_string(i), "v", double(t), v, 0, 0});
      sum_u += u;
      sum_v += v;
      ++rows;
    }
  }
  MixedModel model(spec, d);
  PriorSpec prior;
  prior.beta_sd = 1e6;  // keep prior shrinkage far below the tolerance
  MaximizeResult info;
  auto map = map_fit(model, prior, {}, &info);
  CHECK(info.converged);
  CHECK(map.beta(0) == doctest::Approx(sum_u / rows).epsilon(1e-6));
  CHECK(map.beta(1) == doctest::Approx(sum_v / rows).epsilon(1e-6));

  // Restarting at the optimum stays there.
  MaximizeResult again;
  auto restart = map_fit(model, prior, map, &again);
  CHECK((restart.flatten() - map.flatten()).cwiseAbs().maxCoeff() < 1e-6);

  ParameterVector wrong = map;
  wrong.theta = Vector::Zero(3);
  CHECK_THROWS_AS(map_fit(model, prior, wrong), Error);
}

TEST_CASE("adaptive metropolis on a Gaussian target") {
  Vector mu(2);
  mu << 1.5, -0.5;
  Matrix cov(2, 2);
  cov << 1.0, 0.6, 0.6, 0.5;
  const Matrix prec = cov.inverse();
  const Objective f = [&](const Vector& x) { return -0.5 * (x - mu).dot(prec * (x - mu)); };
  const auto chain = metropolis(f, Vector::Zero(2), Matrix::Identity(2, 2) * 0.01, 30000, 7);
  CHECK(chain.draws.rows() == 18000);
  CHECK(chain.acceptance >= 0.1);
  CHECK(chain.acceptance <= 0.5);
  for (Eigen::Index j = 0; j < 2; ++j) {
    // Batch-means Monte Carlo standard error.
    const Eigen::Index nb = 30, len = chain.draws.rows() / nb;
    std::vector<double> means;
    for (Eigen::Index b = 0; b < nb; ++b) means.push_back(chain.draws.col(j).segment(b * len, len).mean());
    const double m = mean_of(means);
    double v = 0.0;
    for (double x : means) v += (x - m) * (x - m);
    const double mcse = std::sqrt(v / (nb - 1) / nb);
    CHECK(std::abs(chain.draws.col(j).mean() - mu(j)) < 3 * mcse);
  }

  const auto again = metropolis(f, Vector::Zero(2), Matrix::Identity(2, 2) * 0.01, 30000, 7);
  CHECK(again.draws == chain.draws);
  const auto other = metropolis(f, Vector::Zero(2), Matrix::Identity(2, 2) * 0.01, 30000, 8);
  CHECK(!(other.draws == chain.draws));

  // Evaluation failures are rejections: the chain never leaves x > 0.
  const Objective half = [](const Vector& x) -> double {
    if (x(0) <= 0.0) throw Error(ErrorKind::Numeric, "outside support");
    return -x(0);
  };
  const auto trunc = metropolis(half, Vector::Ones(1), Matrix::Identity(1, 1), 5000, 1);
  CHECK(trunc.draws.minCoeff() > 0.0);
  CHECK_THROWS_AS(metropolis(half, -Vector::Ones(1), Matrix::Identity(1, 1), 100, 1), Error);
  CHECK_THROWS_AS(metropolis(f, Vector::Zero(2), Matrix::Identity(3, 3), 100, 1), Error);
  CHECK_THROWS_AS(metropolis(f, Vector::Zero(2), Matrix::Identity(2, 2), 0, 1), Error);
}

TEST_CASE("fit on a small simulated dataset") {
  auto spec = two_markers();
  auto sim = two_marker_sim(60, 14);
  MixedModel model(spec, sim.data);
  FitOptions opts;
  opts.n_iter = 3000;
  opts.seed = 2;
  const auto result = fit(model, PriorSpec{}, opts);
  CHECK(result.samples.rows() == 1800);
  CHECK(result.acceptance >= 0.1);
  CHECK(result.acceptance <= 0.5);
  for (const auto& s : result.summaries) {
    CHECK(s.lower <= s.mean);
    CHECK(s.mean <= s.upper);
    if (s.name.rfind("rho[", 0) == 0) {
      CHECK(s.lower > 0.0);
      CHECK(s.upper < 1.0);
    }
  }
  CHECK(result.summary("rho[c1:c2]").mean == doctest::Approx(0.9).epsilon(0.1));
  CHECK_THROWS_AS(result.summary("rho[zz]"), Error);

  const auto again = fit(model, PriorSpec{}, opts);
  CHECK(again.samples == result.samples);
  CHECK(fit_to_json(again) == fit_to_json(result));

  const auto j = nlohmann::json::parse(fit_to_json(result));
  CHECK(j["map"]["point"].size() == parameter_count(spec));
  CHECK(j["mcmc"]["retained"] == 1800);
  CHECK(j["summaries"].size() == result.summaries.size());
}

TEST_CASE("simulation") {
  auto spec = two_markers();
  const auto truth = truths_to_parameters(spec, two_marker_truths());
  auto sim = simulate_dataset(spec, truth, 200, times_0_to_10(), 1);
  CHECK(sim.data.rows.size() == 200 * 11 * 2);
  CHECK(sim.data.num_individuals() == 200);
  CHECK(std::abs(pearson(sim.random_effects.col(0), sim.random_effects.col(1)) - 0.9) < 0.05);
  CHECK(std::abs(pearson(sim.random_effects.col(2), sim.random_effects.col(3)) - 0.9) < 0.05);
  CHECK(std::abs(pearson(sim.random_effects.col(0), sim.random_effects.col(2)) - 0.8) < 0.05);

  auto again = simulate_dataset(spec, truth, 200, times_0_to_10(), 1);
  CHECK(dataset_to_csv(again.data) == dataset_to_csv(sim.data));

  // Without residual noise y is the linear predictor.
  auto noiseless = truth;
  noiseless.log_sigma_eps.setConstant(-std::numeric_limits<double>::infinity());
  auto exact = simulate_dataset(spec, noiseless, 10, times_0_to_10(), 2);
  double worst = 0.0;
  for (const auto& o : exact.data.rows) {
    const auto i = static_cast<Eigen::Index>(std::stoul(o.id) - 1);
    const auto m = static_cast<Eigen::Index>(spec.marker_index(o.marker));
    const double mu = truth.beta(2 * m) + truth.beta(2 * m + 1) * o.time + exact.random_effects(i, 2 * m) +
                      exact.random_effects(i, 2 * m + 1) * o.time;
    worst = std::max(worst, std::abs(o.y - mu));
  }
  CHECK(worst < 1e-12);

  auto cubic = load_model_spec(kData + "/cubic_model.json");
  auto cubic_sim = simulate_dataset(cubic, truths_to_parameters(cubic, load_truths(kData + "/cubic_truths.json")), 500,
                                    times_0_to_10(), 3);
  CHECK(cubic_sim.data.rows.size() == 500 * 11 * 2);
  CHECK(cubic_sim.random_effects.cols() == 8);

  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto s = simulate_dataset(spec, truth, 200, times_0_to_10(), 500 + seed);
    total += pearson(s.random_effects.col(0), s.random_effects.col(1));
  }
  CHECK(std::abs(total / 50 - 0.9) < 0.02);

  CHECK_THROWS_AS(simulate_dataset(spec, truth, 10, {}, 1), Error);
  auto wrong = truth;
  wrong.theta = Vector::Zero(1);
  CHECK_THROWS_AS(simulate_dataset(spec, wrong, 10, times_0_to_10(), 1), Error);
}

TEST_CASE("recovery report") {
  FitResult perfect;
  perfect.summaries = {{"rho[c1:c2]", 0.9, 0.9, 0.9}, {"sigma_c[c1]", 1.0, 1.0, 1.0}};
  const std::map<std::string, double> truths{{"rho[c1:c2]", 0.9}, {"sigma_c[c1]", 1.0}};
  const auto rows = recovery_report(truths, perfect);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.covered);
    CHECK(r.abs_error == 0.0);
  }
  CHECK(recovery_markdown(rows).find("| rho[c1:c2] | 0.9 | 0.9 | [0.9 ; 0.9] | yes | 0 |") != std::string::npos);
  CHECK(recovery_csv(rows) == "parameter,truth,mean,lower,upper,covered,abs_error\n"
                              "rho[c1:c2],0.9,0.9,0.9,0.9,1,0\n"
                              "sigma_c[c1],1,1,1,1,1,0\n");

  const std::map<std::string, double> mismatched{{"rho[c9:c10]", 0.5}};
  CHECK_THROWS_AS(recovery_report(mismatched, perfect), Error);
}
