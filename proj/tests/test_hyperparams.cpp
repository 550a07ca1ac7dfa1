#include <gtest/gtest.h>

#include "lineqcox/cox_inference.hpp"
#include "lineqcox/point_process.hpp"

using namespace lineqcox;

// Data drawn from the constrained prior with a short lengthscale; the
// exhaustive search over a 3-point grid should not land two cells away.
TEST(SelectHyperparams, SelfConsistentOnCoarseGrid) {
  const auto grid = make_grid(Interval{0.0, 1.0}, 40);
  const auto sys = build_constraint_system({ConstraintSpec::nonnegative()}, grid, 10.0);
  const double variance = 100.0;
  const std::vector<double> ells{0.05, 0.2, 0.8};
  const std::size_t truth = 0;
  int hits = 0;
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    const auto prior = factorize_covariance(grid, KernelParams{variance, {ells[truth]}});
    TmvnProblem prob{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size())), prior.covariance, sys};
    const auto draw = sample_tmvn_hmc(prob, sys.feasible_point(), 20, 1000 + rep).back();
    const auto spec = IntensitySpec::table(grid, draw.cwiseMax(0.0));
    const auto pattern = simulate_poisson(spec, 5, 2000 + rep);
    std::vector<KernelParams> cands;
    for (double l : ells) cands.push_back({variance, {l}});
    const auto best = select_hyperparams(pattern, grid, sys, cands, {1000, 20, rep});
    const auto idx = static_cast<std::size_t>(std::find(ells.begin(), ells.end(), best.params.lengthscales[0]) - ells.begin());
    hits += idx <= truth + 1;
  }
  EXPECT_GE(hits, 8);
}
