#include <cmath>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "graphcorr/corrmat.hpp"
#include "graphcorr/error.hpp"

using namespace graphcorr;

namespace {

std::vector<double> on_graph(const TreeGraph& g, const TreeGraph& original, const std::vector<double>& q2) {
  std::vector<double> out;
  for (const auto& n : g.latent_names()) out.push_back(q2[*original.latent_index(n)]);
  return out;
}

}  // namespace

TEST_CASE("precision of the one-parent graph") {
  auto g = parse_graph(fixtures::kOneLatentThreeChildren);
  std::vector<double> q2{1.0};
  Matrix q = assemble_precision(g, q2);
  Matrix expected(4, 4);
  expected << 1, 0, 0, -1,  //
      0, 1, 0, -1,          //
      0, 0, 1, -1,          //
      -1, -1, -1, 4;
  CHECK((q - expected).cwiseAbs().maxCoeff() == 0.0);
  std::vector<double> q2b{0.25};
  CHECK(assemble_precision(g, q2b)(3, 3) == doctest::Approx(3.0 + 4.0));
}

TEST_CASE("precision and covariance of the two-parent graph") {
  auto g = parse_graph(fixtures::kTwoLevel);
  const double q1 = 1.7, q2v = 0.6;
  std::vector<double> q2{q1, q2v};
  Matrix q = assemble_precision(g, q2);
  // Order: c1 c2 c3 p1 p2.
  CHECK(q(4, 4) == doctest::Approx(2.0 + 1.0 / q2v));
  CHECK(q(4, 3) == doctest::Approx(-1.0 / q2v));
  CHECK(q(3, 3) == doctest::Approx(1.0 / q1 + 1.0 + 1.0 / q2v));
  CHECK(q(2, 3) == -1.0);
  CHECK(q(0, 4) == -1.0);
  CHECK(q(2, 4) == 0.0);

  std::vector<double> unit{1.0, 1.0};
  Matrix qu = assemble_precision(g, unit);
  CHECK(qu(4, 4) == 3.0);
  CHECK(qu(4, 3) == -1.0);

  // Covariance display: Var(c1) = q1 + q2 + 1, Cov(c1, c3) = q1, Var(p2) = q1 + q2.
  Matrix sigma = q.inverse();
  CHECK(sigma(0, 0) == doctest::Approx(q1 + q2v + 1.0));
  CHECK(sigma(0, 1) == doctest::Approx(q1 + q2v));
  CHECK(sigma(0, 2) == doctest::Approx(q1));
  CHECK(sigma(2, 2) == doctest::Approx(q1 + 1.0));
  CHECK(sigma(4, 4) == doctest::Approx(q1 + q2v));
  CHECK(sigma(3, 3) == doctest::Approx(q1));
}

TEST_CASE("precision of the three-parent graph") {
  auto g = parse_graph(fixtures::kThreeLatentFourChildren);
  std::vector<double> q2{2.0, 0.5, 4.0};
  Matrix q = assemble_precision(g, q2);
  // c1..c4, p1, p2, p3
  CHECK(q(4, 4) == doctest::Approx(0.5 + 2.0 + 0.25));
  CHECK(q(5, 5) == doctest::Approx(3.0 + 2.0));
  CHECK(q(6, 6) == doctest::Approx(1.0 + 0.25));
  CHECK(q(5, 4) == doctest::Approx(-2.0));
  CHECK(q(6, 5) == 0.0);
}

TEST_CASE("nonpositive variances are rejected") {
  auto g = parse_graph(fixtures::kOneLatentThreeChildren);
  std::vector<double> bad{-1.0}, zero{0.0};
  CHECK_THROWS_AS(assemble_precision(g, bad), Error);
  CHECK_THROWS_AS(children_correlation(g, zero), Error);
  CHECK_THROWS_AS(correlation_oracle(g, bad), Error);
  try {
    children_correlation(g, bad);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("variance must be positive") != std::string::npos);
  }
}

TEST_CASE("closed-form correlations") {
  SUBCASE("exchangeable") {
    auto g = parse_graph(fixtures::kOneLatentThreeChildren);
    std::vector<double> q2{1.0};
    Matrix c = children_correlation(g, q2);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) CHECK(c(i, j) == doctest::Approx(i == j ? 1.0 : 0.5).epsilon(1e-14));
    }
  }
  SUBCASE("two parents") {
    auto g = parse_graph(fixtures::kTwoLevel);
    std::vector<double> q2{1.0, 1.0};
    Matrix c = children_correlation(g, q2);
    CHECK(c(0, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(c(0, 2) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-14));
    CHECK(c(1, 2) == doctest::Approx(0.408248290463863).epsilon(1e-12));
  }
  SUBCASE("longitudinal pairs") {
    auto g = parse_graph(fixtures::kTwoPairs);
    std::vector<double> q2{8.0, 1.0, 1.0};
    for (auto method : {CorrelationMethod::Inversion, CorrelationMethod::PathRule}) {
      Matrix c = correlation(g, q2, method);
      CHECK(c(0, 1) == doctest::Approx(0.9).epsilon(1e-13));
      CHECK(c(2, 3) == doctest::Approx(0.9).epsilon(1e-13));
      CHECK(c(0, 2) == doctest::Approx(0.8).epsilon(1e-13));
      CHECK(c(1, 3) == doctest::Approx(0.8).epsilon(1e-13));
    }
  }
  SUBCASE("three parents, rho2 from the ancestor chains") {
    auto g = parse_graph(fixtures::kThreeLatentFourChildren);
    const double q1 = 0.7, q2v = 2.5, q3 = 1.3;
    std::vector<double> q2{q1, q2v, q3};
    Matrix c = correlation_oracle(g, q2);
    CHECK(c(0, 3) == doctest::Approx(q1 / (std::sqrt(q1 + q2v + 1) * std::sqrt(q1 + q3 + 1))));
    CHECK(c(0, 1) == doctest::Approx((q1 + q2v) / (q1 + q2v + 1)));
  }
  SUBCASE("single child") {
    auto g = parse_graph("latent p1\nchild c1 : p1\n");
    std::vector<double> q2{3.0};
    CHECK(correlation_oracle(g, q2).rows() == 1);
    CHECK(correlation_oracle(g, q2)(0, 0) == 1.0);
    CHECK(children_correlation(g, q2)(0, 0) == 1.0);
  }
}

TEST_CASE("contraction table on the seven-latent graph") {
  auto g = parse_graph(fixtures::kSevenLatent);
  auto seq = contract(g);
  const auto& e = seq.graphs[4];
  const auto& f = seq.graphs[5];
  const auto& gg = seq.graphs[6];
  for (double q1 : {0.5, 1.0, 2.0, 5.0, 10.0}) {
    for (double q2v : {0.0001, 0.5, 3.0, 10.0}) {
      const double q3 = 2.0;
      std::vector<double> ve{q1, q2v, q3}, vf{q1, q2v}, vg{q1};
      Matrix ce = children_correlation(e, ve);
      CHECK(std::abs(ce(0, 1) - (q1 + q2v) / (1 + q1 + q2v)) < 1e-10);
      CHECK(std::abs(ce(0, 4) - q1 / std::sqrt((1 + q1 + q2v) * (1 + q1 + q3))) < 1e-10);
      CHECK(std::abs(ce(4, 5) - (q1 + q3) / (1 + q1 + q3)) < 1e-10);
      Matrix cf = children_correlation(f, vf);
      CHECK(std::abs(cf(0, 1) - (q1 + q2v) / (1 + q1 + q2v)) < 1e-10);
      CHECK(std::abs(cf(0, 4) - q1 / std::sqrt((1 + q1 + q2v) * (1 + q1))) < 1e-10);
      CHECK(std::abs(cf(4, 5) - q1 / (1 + q1)) < 1e-10);
      Matrix cg = children_correlation(gg, vg);
      CHECK(std::abs(cg(2, 7) - q1 / (1 + q1)) < 1e-10);
    }
  }
}

TEST_CASE("property: inversion and path rule agree on random trees") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    auto g = parse_graph(fixtures::random_tree(rng, 12, 20));
    auto q2 = fixtures::random_variances(rng, g.num_latents());
    Matrix a = children_correlation(g, q2);
    Matrix b = correlation_oracle(g, q2);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((a.diagonal().array() - 1.0).abs().maxCoeff() <= 1e-12);
    CHECK(min_eigenvalue(a) > -1e-10);
    CHECK((a - a.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.minCoeff() >= 0.0);
    CHECK(a.maxCoeff() <= 1.0);
  }
}

TEST_CASE("property: one-latent graphs are exchangeable") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    auto g = parse_graph(fixtures::random_tree(rng, 1, 15, 2));
    auto q2 = fixtures::random_variances(rng, 1);
    Matrix c = children_correlation(g, q2);
    const double ref = c(0, 1);
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
      for (Eigen::Index j = 0; j < c.cols(); ++j) {
        if (i != j) CHECK(std::abs(c(i, j) - ref) < 1e-14);
      }
    }
    CHECK(ref == doctest::Approx(q2[0] / (1 + q2[0])));
  }
}

TEST_CASE("property: contraction lowers shared correlations only") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 100; ++rep) {
    auto g = parse_graph(fixtures::random_tree(rng, 8, 10, 2));
    auto q2 = fixtures::random_variances(rng, g.num_latents());
    auto seq = contract(g);
    for (std::size_t k = 0; k + 1 < seq.graphs.size(); ++k) {
      const auto& big = seq.graphs[k];
      const auto& small = seq.graphs[k + 1];
      const auto& gone = seq.removal_order[k];
      Matrix cb = correlation_oracle(big, on_graph(big, g, q2));
      Matrix cs = correlation_oracle(small, on_graph(small, g, q2));
      for (std::size_t i = 0; i < g.num_children(); ++i) {
        for (std::size_t j = i + 1; j < g.num_children(); ++j) {
          auto ai = ancestors(big, g.child_name(i));
          auto aj = ancestors(big, g.child_name(j));
          const bool in_i = std::find(ai.begin(), ai.end(), gone) != ai.end();
          const bool in_j = std::find(aj.begin(), aj.end(), gone) != aj.end();
          const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
          if (in_i && in_j) CHECK(cs(ii, jj) <= cb(ii, jj) + 1e-15);
          if (!in_i && !in_j) CHECK(cs(ii, jj) == doctest::Approx(cb(ii, jj)).epsilon(1e-14));
        }
      }
    }
  }
}

TEST_CASE("correlation classes") {
  auto g = parse_graph(fixtures::kTwoPairs);
  auto classes = correlation_classes(g);
  REQUIRE(classes.size() == 3);
  CHECK(classes[0].label(g) == "c1:c2");
  CHECK(classes[1].label(g) == "c1:c3");
  CHECK(classes[1].pairs.size() == 4);
  CHECK(classes[2].label(g) == "c3:c4");
  CHECK(correlation_classes(parse_graph(fixtures::kSevenLatent)).size() == 10);
}

TEST_CASE("solve_variances") {
  SUBCASE("longitudinal pairs") {
    auto g = parse_graph(fixtures::kTwoPairs);
    auto q2 = solve_variances(g, {{"c1", "c2", 0.9}, {"c3", "c4", 0.9}, {"c1", "c3", 0.8}});
    CHECK(q2[0] == doctest::Approx(8.0).epsilon(1e-9));
    CHECK(q2[1] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(q2[2] == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("exchangeable") {
    auto g = parse_graph(fixtures::kOneLatentThreeChildren);
    auto q2 = solve_variances(g, {{"c2", "c3", 0.5}});
    CHECK(q2[0] == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("infeasible") {
    auto g = parse_graph(fixtures::kTwoPairs);
    try {
      solve_variances(g, {{"c1", "c2", 0.5}, {"c3", "c4", 0.5}, {"c1", "c3", 0.9}});
      FAIL("expected infeasible");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Infeasible);
    }
  }
  SUBCASE("bad target sets") {
    auto g = parse_graph(fixtures::kTwoPairs);
    CHECK_THROWS_AS(solve_variances(g, {{"c1", "c2", 0.9}}), Error);
    CHECK_THROWS_AS(solve_variances(g, {{"c1", "c2", 0.9}, {"c3", "c4", 0.9}, {"c1", "c3", 0.8}, {"c2", "c4", 0.7}}),
                    Error);
    CHECK_THROWS_AS(solve_variances(g, {{"c1", "c1", 0.9}}), Error);
    CHECK_THROWS_AS(solve_variances(g, {{"c1", "c2", 1.2}}), Error);
  }
}

TEST_CASE("property: solve_variances inverts the path rule") {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 60; ++rep) {
    auto g = parse_graph(fixtures::random_tree(rng, 6, 8, 2));
    auto q2 = fixtures::random_variances(rng, g.num_latents(), 0.2, 5.0);
    Matrix c = correlation_oracle(g, q2);
    std::vector<PairTarget> targets;
    for (const auto& cls : correlation_classes(g)) {
      for (auto [i, j] : cls.pairs) {
        targets.push_back({g.child_name(i), g.child_name(j),
                           c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))});
      }
    }
    std::vector<double> solved;
    REQUIRE_NOTHROW(solved = solve_variances(g, targets));
    Matrix back = correlation_oracle(g, solved);
    CHECK((back - c).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("scale_to_covariance") {
  std::vector<double> s{2.0, 3.0};
  Matrix cov = scale_to_covariance(Matrix::Identity(2, 2), s);
  CHECK(cov(0, 0) == 4.0);
  CHECK(cov(1, 1) == 9.0);
  CHECK(cov(0, 1) == 0.0);

  auto g1 = parse_graph(fixtures::kOneLatentThreeChildren);
  std::vector<double> one{1.0}, ones{1.0, 1.0, 1.0};
  Matrix c1 = children_correlation(g1, one);
  CHECK((scale_to_covariance(c1, ones) - c1).cwiseAbs().maxCoeff() == 0.0);

  auto g = parse_graph(fixtures::kTwoPairs);
  std::vector<double> q2{8.0, 1.0, 1.0}, sd{1.0, 0.2, 0.1, 0.5};
  Matrix cov4 = scale_to_covariance(correlation_oracle(g, q2), sd);
  CHECK(cov4(0, 1) == doctest::Approx(0.18).epsilon(1e-13));
  CHECK(min_eigenvalue(cov4) > 0.0);
  std::vector<double> wrong{1.0};
  CHECK_THROWS_AS(scale_to_covariance(c1, wrong), Error);
}
