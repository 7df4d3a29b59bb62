#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "sssm/rng.hpp"
#include "sssm/stm.hpp"

using namespace sssm;

namespace {

StageMap make_stages(std::vector<int> g, int n_stages) {
  StageMap s;
  s.n_primitives = static_cast<int>(g.size());
  s.n_stages = n_stages;
  s.g = std::move(g);
  return s;
}

// Random feasible theta for a stage structure: a row-stochastic phi plus
// random within-block rows.  Covers the whole blockwise-feasible set.
TransitionMatrix random_feasible_theta(Rng& rng, const StageMap& stages) {
  const int nq = stages.n_stages, nz = stages.n_primitives;
  const Eigen::MatrixXd phi = testutil::random_row_stochastic(rng, nq, nq);
  TransitionMatrix theta = TransitionMatrix::Zero(nz, nz);
  for (int i = 0; i < nz; ++i) {
    for (int r = 0; r < nq; ++r) {
      const auto block = stages.block(r);
      Eigen::VectorXd within(block.size());
      for (Eigen::Index k = 0; k < within.size(); ++k)
        within[k] = -std::log(1.0 - rng.uniform());
      within /= within.sum();
      for (Eigen::Index k = 0; k < within.size(); ++k)
        theta(i, block[k]) = phi(stages.g[i], r) * within[k];
    }
  }
  return theta;
}

// The negative-Dirichlet MAP objective for one row (uniform penalty alpha):
// sum_j xi_j log t_j - alpha * sum_j log t_j, grid-searched on the simplex.
double sparse_row_objective(const Eigen::VectorXd& xi, const Eigen::VectorXd& t,
                            double alpha) {
  double obj = 0.0;
  for (Eigen::Index j = 0; j < t.size(); ++j) {
    if (t[j] <= 0.0) {
      if (xi[j] > 0.0) return -std::numeric_limits<double>::infinity();
      continue;
    }
    obj += (xi[j] - alpha) * std::log(t[j]);
  }
  return obj;
}

}  // namespace

TEST_CASE("count_transitions: direct counting") {
  const TransitionCounts xi = count_transitions({{0, 0, 1}}, 2);
  CHECK(xi(0, 0) == 1.0);
  CHECK(xi(0, 1) == 1.0);
  CHECK(xi(1, 0) == 0.0);
  CHECK(xi(1, 1) == 0.0);

  CHECK(count_transitions({}, 3).isZero());

  const TransitionCounts xi2 = count_transitions({{0, 1}, {1, 0}}, 2);
  CHECK(xi2(0, 1) == 1.0);
  CHECK(xi2(1, 0) == 1.0);
  CHECK(xi2(0, 0) == 0.0);

  CHECK_THROWS(count_transitions({{0, 2}}, 2));
}

TEST_CASE("estimate_sparse_map: closed-form rows") {
  TransitionCounts xi(1, 3);
  xi << 3, 10, 0;
  const TransitionMatrix t = estimate_sparse_map(xi, 5.0);
  CHECK(t(0, 0) == 0.0);
  CHECK(t(0, 1) == 1.0);
  CHECK(t(0, 2) == 0.0);

  TransitionCounts xi2(1, 2);
  xi2 << 2, 2;
  const TransitionMatrix t2 = estimate_sparse_map(xi2, 0.0);
  CHECK(t2(0, 0) == doctest::Approx(0.5));

  TransitionCounts xi3(1, 2);
  xi3 << 6, 6;
  const TransitionMatrix t3 = estimate_sparse_map(xi3, 2.0);
  CHECK(t3(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("estimate_sparse_map: degenerate row falls back to uniform") {
  TransitionCounts xi(1, 3);
  xi << 1, 1, 1;
  WarningLog log;
  const TransitionMatrix t = estimate_sparse_map(xi, 5.0, &log);
  CHECK(t(0, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(log.messages.size() == 1);
}

TEST_CASE("estimate_sparse_map: matches simplex grid search (1x3 rows)") {
  // Grid step 0.01 over the 2-simplex; closed form must be within 0.02 of the
  // grid argmax entrywise.
  Rng rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::VectorXd xi(3);
    for (int j = 0; j < 3; ++j) xi[j] = 12.0 * rng.uniform();
    const double alpha = (rep % 3 == 0) ? 0.0 : 2.0 * rng.uniform();
    TransitionCounts xim = xi.transpose();
    const TransitionMatrix t = estimate_sparse_map(xim, alpha);

    Eigen::VectorXd best(3);
    double best_obj = -std::numeric_limits<double>::infinity();
    for (int a = 0; a <= 100; ++a)
      for (int b = 0; a + b <= 100; ++b) {
        Eigen::VectorXd cand(3);
        cand << a / 100.0, b / 100.0, (100 - a - b) / 100.0;
        const double obj = sparse_row_objective(xi, cand, alpha);
        if (obj > best_obj) {
          best_obj = obj;
          best = cand;
        }
      }
    // Skip instances where the grid argmax sits on a -inf/-inf tie ridge.
    if (!std::isfinite(best_obj)) continue;
    CHECK((t.row(0).transpose() - best).cwiseAbs().maxCoeff() < 0.02);
  }
}

TEST_CASE("build_alpha_mask: rule per cell") {
  const Eigen::MatrixXd m = build_alpha_mask(3, 4.0);
  Eigen::MatrixXd expect(3, 3);
  expect << 0, 0, 4, 4, 0, 0, 4, 4, 0;
  CHECK((m - expect).norm() == 0.0);
  CHECK(build_alpha_mask(1, 7.0)(0, 0) == 0.0);
  CHECK(build_alpha_mask(3, 0.0).isZero());
}

TEST_CASE("stage_marginal: aggregation and errors") {
  TransitionMatrix theta(2, 2);
  theta << 5.0 / 8, 3.0 / 8, 0, 1;
  const StageMap stages = make_stages({0, 1}, 2);
  const StageMatrix phi = stage_marginal(theta, stages);
  CHECK(phi(0, 0) == doctest::Approx(5.0 / 8));
  CHECK(phi(1, 0) == 0.0);

  // Single stage.
  Rng rng(1);
  TransitionMatrix t1 = testutil::random_row_stochastic(rng, 3, 3);
  CHECK(stage_marginal(t1, make_stages({0, 0, 0}, 1))(0, 0) ==
        doctest::Approx(1.0));

  // Identity theta with identity g.
  CHECK((stage_marginal(Eigen::MatrixXd::Identity(3, 3),
                        make_stages({0, 1, 2}, 3)) -
         Eigen::MatrixXd::Identity(3, 3))
            .norm() < 1e-12);

  // Block inconsistency names the stage pair.
  TransitionMatrix bad(3, 3);
  bad << 0.5, 0.5, 0.0, 0.1, 0.1, 0.8, 0.0, 0.0, 1.0;
  CHECK_THROWS_WITH_AS(stage_marginal(bad, make_stages({0, 0, 1}, 2)),
                       doctest::Contains("stages (0,"),
                       std::invalid_argument);
}

TEST_CASE("estimate_blockwise_map: hand example") {
  TransitionCounts xi(2, 2);
  xi << 5, 3, 0, 7;
  const StageMap stages = make_stages({0, 1}, 2);
  const auto [theta, phi] = estimate_blockwise_map(xi, stages, 4.0);
  CHECK(phi(0, 0) == doctest::Approx(5.0 / 8));
  CHECK(phi(0, 1) == doctest::Approx(3.0 / 8));
  CHECK(phi(1, 0) == 0.0);
  CHECK(phi(1, 1) == doctest::Approx(1.0));
  CHECK((theta - phi).norm() < 1e-12);
}

TEST_CASE("estimate_blockwise_map: alpha 0 and single stage is plain MLE") {
  Rng rng(8);
  TransitionCounts xi(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) xi(i, j) = 10.0 * rng.uniform();
  const auto [theta, phi] =
      estimate_blockwise_map(xi, make_stages({0, 0, 0}, 1), 0.0);
  for (int i = 0; i < 3; ++i)
    CHECK((theta.row(i) - xi.row(i) / xi.row(i).sum()).cwiseAbs().maxCoeff() <
          1e-12);
  CHECK(phi(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("estimate_blockwise_map: within-stage label permutation symmetry") {
  TransitionCounts xi(3, 3);
  xi << 4, 2, 1, 3, 5, 2, 0, 1, 6;
  const StageMap stages = make_stages({0, 0, 1}, 2);
  const auto [theta, phi] = estimate_blockwise_map(xi, stages, 1.5);

  // Swap primitives 0 and 1 (both stage 0).
  Eigen::PermutationMatrix<3> perm;
  perm.indices() << 1, 0, 2;
  const TransitionCounts xi_p = perm.transpose() * xi * perm;
  const auto [theta_p, phi_p] = estimate_blockwise_map(xi_p, stages, 1.5);
  CHECK((phi - phi_p).norm() < 1e-12);
  CHECK(((perm.transpose() * theta * perm) - theta_p).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("estimate_blockwise_map: fallbacks warn") {
  // Stage-row with everything thresholded away.
  TransitionCounts xi(2, 2);
  xi << 0.5, 0.5, 0.0, 0.0;
  WarningLog log;
  const auto [theta, phi] =
      estimate_blockwise_map(xi, make_stages({0, 1}, 2), 10.0, &log);
  CHECK(is_row_stochastic(theta));
  CHECK(!log.messages.empty());
}

TEST_CASE("estimate_blockwise_map: round-trip block consistency") {
  Rng rng(13);
  for (int rep = 0; rep < 100; ++rep) {
    const int nz = 2 + static_cast<int>(rng.next_u64() % 3);
    const int nq = 1 + static_cast<int>(rng.next_u64() % 2);
    std::vector<int> g(nz);
    for (int q = 0; q < nq; ++q) g[q] = q;  // surjectivity
    for (int i = nq; i < nz; ++i) g[i] = static_cast<int>(rng.next_u64() % nq);
    std::sort(g.begin(), g.end());
    const StageMap stages = make_stages(g, nq);
    TransitionCounts xi(nz, nz);
    for (int i = 0; i < nz; ++i)
      for (int j = 0; j < nz; ++j) xi(i, j) = 10.0 * rng.uniform();
    const auto [theta, phi] = estimate_blockwise_map(xi, stages, 1.0);
    CHECK(is_row_stochastic(theta));
    CHECK((stage_marginal(theta, stages) - phi).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("estimate_blockwise_map: reduces to sparse MAP with ordered mask") {
  // N_Q = N_Z, g identity: each block is a single entry, so theta equals the
  // row-wise thresholded normalization with the ordered alpha mask.
  Rng rng(17);
  const int n = 3;
  TransitionCounts xi(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) xi(i, j) = 2.0 + 8.0 * rng.uniform();
  const double alpha = 1.5;
  const StageMap stages = make_stages({0, 1, 2}, 3);
  const auto [theta, phi] = estimate_blockwise_map(xi, stages, alpha);
  const Eigen::MatrixXd mask = build_alpha_mask(n, alpha);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd row =
        (xi.row(i).transpose() - mask.row(i).transpose()).cwiseMax(0.0);
    row /= row.sum();
    CHECK((theta.row(i).transpose() - row).cwiseAbs().maxCoeff() < 1e-12);
  }
  (void)phi;
}

TEST_CASE("estimate_blockwise_map: scale invariance of (xi, alpha)") {
  Rng rng(19);
  TransitionCounts xi(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) xi(i, j) = 10.0 * rng.uniform();
  const StageMap stages = make_stages({0, 0, 1}, 2);
  const auto [t1, p1] = estimate_blockwise_map(xi, stages, 1.3);
  const auto [t2, p2] = estimate_blockwise_map(4.0 * xi, stages, 4.0 * 1.3);
  CHECK((t1 - t2).cwiseAbs().maxCoeff() < 1e-12);
  (void)p1;
  (void)p2;
}

TEST_CASE("map_objective: simple values") {
  const StageMap stages = make_stages({0, 1}, 2);
  TransitionCounts xi(2, 2);
  xi << 5, 3, 0, 7;
  TransitionMatrix theta(2, 2);
  theta << 0.5, 0.5, 0.0, 1.0;
  // alpha = 0: pure sum xi log theta.
  CHECK(map_objective(theta, xi, stages, 0.0) ==
        doctest::Approx(5 * std::log(0.5) + 3 * std::log(0.5) +
                        7 * std::log(1.0)));
  // Empty data, alpha = 0.
  CHECK(map_objective(theta, TransitionCounts::Zero(2, 2), stages, 0.0) ==
        0.0);
  // xi mass on a zero theta entry -> -inf.
  TransitionMatrix t0(2, 2);
  t0 << 1.0, 0.0, 0.0, 1.0;
  CHECK(map_objective(t0, xi, stages, 0.0) ==
        -std::numeric_limits<double>::infinity());
}

TEST_CASE("map_objective: blockwise estimate beats random feasible points") {
  Rng rng(23);
  const StageMap stages = make_stages({0, 0, 1}, 2);
  TransitionCounts xi(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) xi(i, j) = 10.0 * rng.uniform();
  const double alpha = 1.0;
  const auto [theta, phi] = estimate_blockwise_map(xi, stages, alpha);
  const double best = map_objective(theta, xi, stages, alpha);
  for (int rep = 0; rep < 200; ++rep) {
    const TransitionMatrix cand = random_feasible_theta(rng, stages);
    CHECK(map_objective(cand, xi, stages, alpha) <= best + 1e-6);
  }
  (void)phi;
}
