#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "graphcorr/graph.hpp"

namespace fixtures {

// One latent, three children.
inline const char* kOneLatentThreeChildren = "latent p1\nchild c1 : p1\nchild c2 : p1\nchild c3 : p1\n";

// One latent, two children: the exchangeable 2x2 case with closed forms.
inline const char* kOneLatentTwoChildren = "latent p1\nchild c1 : p1\nchild c2 : p1\n";

// p2 under p1; c1, c2 under p2; c3 under p1.
inline const char* kTwoLevel =
    "latent p1\nlatent p2 : p1\nchild c1 : p2\nchild c2 : p2\nchild c3 : p1\n";

// p2, p3 under p1; c1..c3 under p2; c4 under p3.
inline const char* kThreeLatentFourChildren =
    "latent p1\nlatent p2 : p1\nlatent p3 : p1\n"
    "child c1 : p2\nchild c2 : p2\nchild c3 : p2\nchild c4 : p3\n";

// Longitudinal linear model: (c1, c2) under p2, (c3, c4) under p3.
inline const char* kTwoPairs =
    "latent p1\nlatent p2 : p1\nlatent p3 : p1\n"
    "child c1 : p2\nchild c2 : p2\nchild c3 : p3\nchild c4 : p3\n";

// Seven latents over eight children: two marker groups, each with two pairs.
inline const char* kSevenLatent =
    "latent p1\n"
    "latent p2 : p1\nlatent p3 : p1\n"
    "latent p4 : p2\nlatent p5 : p2\nlatent p6 : p3\nlatent p7 : p3\n"
    "child c1 : p4\nchild c2 : p4\nchild c3 : p5\nchild c4 : p5\n"
    "child c5 : p6\nchild c6 : p6\nchild c7 : p7\nchild c8 : p7\n";

// Random valid tree in DSL form: latents attach to earlier latents, every
// latent without latent children gets one child, the rest attach anywhere.
inline std::string random_tree(std::mt19937_64& rng, std::size_t max_latents, std::size_t max_children,
                               std::size_t min_children = 1) {
  std::uniform_int_distribution<std::size_t> nl(1, max_latents);
  const std::size_t p = nl(rng);
  std::vector<std::size_t> parent(p + 1, 0);
  std::vector<bool> has_latent_child(p + 1, false);
  std::string out = "latent p1\n";
  for (std::size_t l = 2; l <= p; ++l) {
    std::uniform_int_distribution<std::size_t> par(1, l - 1);
    parent[l] = par(rng);
    has_latent_child[parent[l]] = true;
    out += "latent p" + std::to_string(l) + " : p" + std::to_string(parent[l]) + "\n";
  }
  std::vector<std::size_t> leaves;
  for (std::size_t l = 1; l <= p; ++l) {
    if (!has_latent_child[l]) leaves.push_back(l);
  }
  const std::size_t lo = std::max(min_children, leaves.size());
  std::uniform_int_distribution<std::size_t> nc(lo, std::max(lo, max_children));
  const std::size_t k = nc(rng);
  std::vector<std::size_t> attach(leaves);
  std::uniform_int_distribution<std::size_t> par(1, p);
  while (attach.size() < k) attach.push_back(par(rng));
  std::shuffle(attach.begin(), attach.end(), rng);
  for (std::size_t c = 1; c <= k; ++c) {
    out += "child c" + std::to_string(c) + " : p" + std::to_string(attach[c - 1]) + "\n";
  }
  return out;
}

inline std::vector<double> random_variances(std::mt19937_64& rng, std::size_t p, double lo = 0.05,
                                            double hi = 20.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> q2(p);
  for (auto& v : q2) v = u(rng);
  return q2;
}

}  // namespace fixtures
