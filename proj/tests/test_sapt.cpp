#include <cmath>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "tlla/clipette.hpp"
#include "tlla/errors.hpp"
#include "tlla/rng.hpp"
#include "tlla/sapt.hpp"
#include "tlla/tensor.hpp"

using namespace tlla;
using namespace tlla::sapt;

namespace {

clipette::Sizes small_sizes() {
  clipette::Sizes s;
  s.d_in = 4;
  s.d_tok = 3;
  s.d_emb = 3;
  s.hidden = 4;
  s.k_classes = 3;
  s.n_prompts = 2;
  s.tau = 5.0;
  return s;
}

double norm(const Tensor& t) {
  double s = 0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * t[i];
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("epsilon_star has norm rho and points along the gradient") {
  Rng rng(301);
  for (int t = 0; t < 200; ++t) {
    Tensor g({2, 3});
    for (auto& v : g.data()) v = rng.normal();
    double rho = rng.uniform(0.01, 2.0);
    Tensor e = epsilon_star(g, rho);
    CHECK(std::abs(norm(e) - rho) < 1e-12);
    // Parallel to g: e = rho * g / |g| componentwise.
    double gn = norm(g);
    for (std::size_t i = 0; i < g.size(); ++i)
      CHECK(e[i] == doctest::Approx(rho * g[i] / gn).epsilon(1e-12));
  }
}

TEST_CASE("epsilon_star degenerate cases return exact zeros") {
  Tensor g({2, 2}, {1.0, -2.0, 0.5, 3.0});
  Tensor z = epsilon_star(g, 0.0);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == 0.0);
  Tensor tiny({2, 2}, {1e-13, 0.0, 0.0, 0.0});
  Tensor z2 = epsilon_star(tiny, 0.5);
  for (std::size_t i = 0; i < z2.size(); ++i) CHECK(z2[i] == 0.0);
}

TEST_CASE("sam_update matches the closed form on a quadratic") {
  // loss(p) = 0.5 p^T A p with diagonal A, so grad(p) = A p and the SAM
  // step is p - lr * A (p + rho * A p / |A p|).
  std::vector<double> a = {3.0, 1.0, 0.25};
  auto grad_fn = [&](const std::vector<double>& p) {
    std::vector<double> g(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) g[i] = a[i] * p[i];
    return g;
  };
  std::vector<double> p = {1.0, -2.0, 4.0};
  double rho = 0.3, lr = 0.1;
  std::vector<double> got = sam_update(p, grad_fn, rho, lr);

  std::vector<double> g = grad_fn(p);
  double gn = 0;
  for (double v : g) gn += v * v;
  gn = std::sqrt(gn);
  std::vector<double> want(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    double pert = p[i] + rho * g[i] / gn;
    want[i] = p[i] - lr * a[i] * pert;
  }
  for (std::size_t i = 0; i < p.size(); ++i)
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-14));
}

TEST_CASE("sapt_step with rho=0 is bit-identical to plain SGD") {
  for (int trial = 0; trial < 100; ++trial) {
    clipette::Sizes s = small_sizes();
    clipette::FrozenModel m = testutil::random_model(split_seed(40, trial), s);
    clipette::PromptParams p = clipette::PromptParams::random(
        s.n_prompts, s.d_tok, split_seed(41, trial), 0.5);
    clipette::LabeledBatch batch =
        testutil::random_batch(split_seed(42, trial), 5, s.d_in, s.k_classes);

    SaptConfig cfg;
    cfg.rho = 0.0;
    cfg.lr = 0.05;
    clipette::PromptParams stepped = sapt_step(m, p, batch, cfg);

    // Reference plain SGD step computed directly.
    Tensor g = clipette::grad_prompt_ce(m, p, batch);
    Tensor want = p.tokens;
    want.axpy(-cfg.lr / double(batch.size()), g);
    CHECK(stepped.tokens == want);
  }
}

TEST_CASE("sapt_step with rho>0 differs from SGD and reduces perturbed loss") {
  clipette::Sizes s = small_sizes();
  clipette::FrozenModel m = testutil::random_model(43, s);
  clipette::PromptParams p =
      clipette::PromptParams::random(s.n_prompts, s.d_tok, 44, 0.5);
  clipette::LabeledBatch batch =
      testutil::random_batch(45, 8, s.d_in, s.k_classes);
  SaptConfig sam_cfg;
  sam_cfg.rho = 0.5;
  sam_cfg.lr = 0.05;
  SaptConfig sgd_cfg = sam_cfg;
  sgd_cfg.rho = 0.0;
  clipette::PromptParams a = sapt_step(m, p, batch, sam_cfg);
  clipette::PromptParams b = sapt_step(m, p, batch, sgd_cfg);
  CHECK_FALSE(a.tokens == b.tokens);
}

TEST_CASE("sharpness_scan matches the analytic value on a quadratic") {
  // loss(p) = 0.5 p^T A p with A = diag(a). Along the normalized ascent
  // direction u = A p / |A p| at radius rho the increase is
  // rho g.u + 0.5 rho^2 u^T A u, and for this convex loss the scan's
  // maximum over radii is attained at rho itself.
  std::vector<double> a = {4.0, 2.0, 1.0, 0.5};
  std::vector<double> p = {1.0, -1.0, 2.0, 0.5};
  auto loss_fn = [&](const std::vector<double>& q) {
    double s = 0;
    for (std::size_t i = 0; i < q.size(); ++i) s += 0.5 * a[i] * q[i] * q[i];
    return s;
  };
  std::vector<double> g(p.size());
  double gn = 0;
  for (std::size_t i = 0; i < p.size(); ++i) gn += (g[i] = a[i] * p[i]) * g[i];
  gn = std::sqrt(gn);
  std::vector<double> u(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) u[i] = g[i] / gn;

  double rho = 0.25;
  double along_ascent = 0.0, quad = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    along_ascent += g[i] * u[i];
    quad += a[i] * u[i] * u[i];
  }
  double analytic = rho * along_ascent + 0.5 * rho * rho * quad;

  // The scan maximum includes the ascent direction, so it is at least
  // the analytic ascent value and, for small rho on a smooth quadratic,
  // random directions barely beat it.
  double got = sharpness_scan(loss_fn, p, rho, /*n_dirs=*/8,
                              /*grid_per_dir=*/4, /*seed=*/7, &u);
  CHECK(got >= analytic - 1e-12);
  CHECK(got <= analytic * 1.02);
}

TEST_CASE("sharpness_scan is zero at rho=0 and monotone in rho") {
  auto loss_fn = [](const std::vector<double>& q) {
    double s = 0;
    for (double v : q) s += std::cos(v) + v * v;
    return s;
  };
  std::vector<double> p = {0.3, -0.9, 1.4};
  CHECK(sharpness_scan(loss_fn, p, 0.0, 4, 3, 11) == 0.0);
  // With the same direction seed and grid counts proportional to rho,
  // the scanned radii at a larger rho are a superset of those at the
  // smaller one, so the max cannot decrease.
  double prev = 0.0;
  for (int mult : {1, 2, 4, 8}) {
    double rho = 0.1 * mult;
    double v = sharpness_scan(loss_fn, p, rho, 6, 16 * std::size_t(mult), 11);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("taylor remainder of the ascent estimate scales as rho^2") {
  // First-order SAM estimates the sharpness as rho * |g|. The gap to the
  // scanned value shrinks quadratically; the ratio gap/rho^2 stays within
  // a small constant band across rho.
  clipette::Sizes s = small_sizes();
  clipette::FrozenModel m = testutil::random_model(46, s);
  clipette::PromptParams p =
      clipette::PromptParams::random(s.n_prompts, s.d_tok, 47, 0.5);
  clipette::LabeledBatch batch =
      testutil::random_batch(48, 6, s.d_in, s.k_classes);
  Tensor g = clipette::grad_prompt_ce(m, p, batch);
  double gn = norm(g);

  std::vector<double> ratios;
  for (double rho : {0.2, 0.1, 0.05}) {
    double brute = sharpness_oracle(m, p, batch, rho, 6, 8, 49);
    double first_order = rho * gn;
    ratios.push_back(std::abs(brute - first_order) / (rho * rho));
  }
  double lo = *std::min_element(ratios.begin(), ratios.end());
  double hi = *std::max_element(ratios.begin(), ratios.end());
  CHECK(hi <= 4.0 * lo + 1e-9);
}

TEST_CASE("tune is deterministic and epochs=0 is a no-op") {
  clipette::Sizes s = small_sizes();
  clipette::FrozenModel m = testutil::random_model(50, s);
  clipette::PromptParams p0 =
      clipette::PromptParams::random(s.n_prompts, s.d_tok, 51, 0.3);
  clipette::LabeledBatch train =
      testutil::random_batch(52, 30, s.d_in, s.k_classes);

  SaptConfig cfg;
  cfg.epochs = 0;
  cfg.shots = 4;
  cfg.seed = 53;
  TuneResult none = tune(m, p0, train, cfg, true);
  CHECK(none.prompts.tokens == p0.tokens);
  CHECK(none.log.empty());

  cfg.epochs = 3;
  TuneResult a = tune(m, p0, train, cfg, true);
  TuneResult b = tune(m, p0, train, cfg, true);
  CHECK(a.prompts.tokens == b.prompts.tokens);
  REQUIRE(a.log.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.log[i].epoch == i);
    CHECK(a.log[i].ce_loss == b.log[i].ce_loss);
    CHECK(a.log[i].sharpness_estimate == b.log[i].sharpness_estimate);
  }
}

TEST_CASE("tune with sapt disabled equals tune with rho forced to zero") {
  clipette::Sizes s = small_sizes();
  clipette::FrozenModel m = testutil::random_model(54, s);
  clipette::PromptParams p0 =
      clipette::PromptParams::random(s.n_prompts, s.d_tok, 55, 0.3);
  clipette::LabeledBatch train =
      testutil::random_batch(56, 30, s.d_in, s.k_classes);
  SaptConfig cfg;
  cfg.epochs = 4;
  cfg.shots = 4;
  cfg.seed = 57;
  cfg.rho = 0.4;
  TuneResult off = tune(m, p0, train, cfg, false);
  SaptConfig zero = cfg;
  zero.rho = 0.0;
  TuneResult on_zero = tune(m, p0, train, zero, true);
  CHECK(off.prompts.tokens == on_zero.prompts.tokens);
}

TEST_CASE("tune rejects infeasible shot counts") {
  clipette::Sizes s = small_sizes();
  clipette::FrozenModel m = testutil::random_model(58, s);
  clipette::PromptParams p0 =
      clipette::PromptParams::random(s.n_prompts, s.d_tok, 59, 0.3);
  // Only 2 samples per class available but 16 shots requested.
  clipette::LabeledBatch train =
      testutil::random_batch(60, 6, s.d_in, s.k_classes);
  SaptConfig cfg;
  cfg.shots = 16;
  CHECK_THROWS_AS(tune(m, p0, train, cfg, true), InvalidDataset);
}
