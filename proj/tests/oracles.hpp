#pragma once

// Slow, obviously-correct reference implementations shared by the unit and
// acceptance tests.

#include "dreambox/metrics.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <vector>

namespace oracle {

// Every (ood, in) pair, ties worth one half.
inline double pairwise_auroc(const std::vector<dreambox::ScoredInstance>& xs)
{
  double wins = 0, pairs = 0;
  for (const auto& o : xs) {
    if (o.truth != dreambox::Truth::ood)
      continue;
    for (const auto& i : xs) {
      if (i.truth != dreambox::Truth::in_dist)
        continue;
      wins += o.ood_score > i.ood_score ? 1.0 : o.ood_score == i.ood_score ? 0.5 : 0.0;
      pairs += 1;
    }
  }
  return wins / pairs;
}

// Sweeps every observed score as the acceptance threshold (score <= t means
// "accepted as in-distribution") and takes the smallest one that accepts at
// least 95% of the in-distribution instances.
inline double sweep_fpr95(const std::vector<dreambox::ScoredInstance>& xs)
{
  std::set<double> thresholds;
  for (const auto& x : xs)
    thresholds.insert(x.ood_score);
  for (double t : thresholds) {
    std::size_t in = 0, in_ok = 0, ood = 0, ood_ok = 0;
    for (const auto& x : xs) {
      if (x.truth == dreambox::Truth::in_dist) {
        ++in;
        in_ok += x.ood_score <= t;
      } else {
        ++ood;
        ood_ok += x.ood_score <= t;
      }
    }
    if (100 * in_ok >= 95 * in)
      return static_cast<double>(ood_ok) / static_cast<double>(ood);
  }
  return 1.0;
}

// Random scored sets with both populations present. Scores are drawn from a
// small grid half of the time so ties are common.
inline std::vector<dreambox::ScoredInstance> random_instances(std::mt19937_64& rng, std::size_t max_size = 200)
{
  std::uniform_int_distribution<std::size_t> size(2, max_size);
  std::bernoulli_distribution coin;
  const bool coarse = coin(rng);
  std::uniform_int_distribution<int> grid(0, 10);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<dreambox::ScoredInstance> xs(size(rng));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i].ood_score = coarse ? grid(rng) / 10.0 : u(rng);
    xs[i].truth = coin(rng) ? dreambox::Truth::ood : dreambox::Truth::in_dist;
    xs[i].image_id = static_cast<std::int64_t>(i);
  }
  xs[0].truth = dreambox::Truth::in_dist;
  xs[1].truth = dreambox::Truth::ood;
  std::shuffle(xs.begin(), xs.end(), rng);
  return xs;
}

} // namespace oracle
