#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "tlla/errors.hpp"
#include "tlla/rng.hpp"
#include "tlla/scalar_ops.hpp"
#include "tlla/tape.hpp"
#include "tlla/tensor.hpp"

using namespace tlla;

namespace {

// Independent long-double softmax for cross-checking the production
// implementation.
std::vector<double> softmax_oracle(const std::vector<double>& v, double tau) {
  long double mx = -std::numeric_limits<long double>::infinity();
  for (double x : v) mx = std::max<long double>(mx, (long double)tau * x);
  long double sum = 0.0L;
  std::vector<long double> e(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    e[i] = expl((long double)tau * v[i] - mx);
    sum += e[i];
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (double)(e[i] / sum);
  return out;
}

long double entropy_oracle(const std::vector<double>& p) {
  long double h = 0.0L;
  for (double x : p)
    if (x > 0.0) h -= (long double)x * logl((long double)x);
  return h;
}

}  // namespace

TEST_CASE("softmax_t matches a long-double oracle") {
  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    std::size_t n = 2 + rng.below(9);
    double tau = rng.uniform(0.1, 30.0);
    std::vector<double> v = rng.normal_vec(n);
    for (auto& x : v) x *= 3.0;
    Tensor probs = softmax_t(Tensor::vec(v), tau);
    auto ref = softmax_oracle(v, tau);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(probs[i] == doctest::Approx(ref[i]).epsilon(1e-12));
      CHECK(probs[i] > 0.0);
      sum += probs[i];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("softmax_t is invariant to logit shifts") {
  std::vector<double> v = {0.3, -1.2, 2.0, 0.0};
  Tensor a = softmax_t(Tensor::vec(v), 4.0);
  for (auto& x : v) x += 57.25;
  Tensor b = softmax_t(Tensor::vec(v), 4.0);
  for (std::size_t i = 0; i < v.size(); ++i)
    CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("softmax_t input validation") {
  CHECK_THROWS_AS(softmax_t(Tensor::vec({}), 1.0), InvalidValue);
  CHECK_THROWS_AS(softmax_t(Tensor::vec({1.0, NAN}), 1.0), InvalidValue);
  CHECK_THROWS_AS(softmax_t(Tensor::vec({1.0, 2.0}), -1.0), InvalidConfig);
}

TEST_CASE("entropy matches oracle and known values") {
  // Uniform distribution has entropy log(n).
  CHECK(entropy(Tensor::vec({0.25, 0.25, 0.25, 0.25})) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-14));
  // One-hot has entropy 0 under the 0*log(0)=0 convention.
  CHECK(entropy(Tensor::vec({0.0, 1.0, 0.0})) == 0.0);

  Rng rng(12);
  for (int t = 0; t < 30; ++t) {
    std::size_t n = 2 + rng.below(7);
    std::vector<double> p(n);
    double s = 0.0;
    for (auto& x : p) s += (x = rng.uniform(1e-6, 1.0));
    for (auto& x : p) x /= s;
    CHECK(entropy(Tensor::vec(p)) ==
          doctest::Approx((double)entropy_oracle(p)).epsilon(1e-12));
  }
}

TEST_CASE("entropy is permutation invariant") {
  std::vector<double> p = {0.1, 0.2, 0.3, 0.4};
  double h = entropy(Tensor::vec(p));
  std::vector<double> q = {0.4, 0.1, 0.3, 0.2};
  CHECK(entropy(Tensor::vec(q)) == h);
}

TEST_CASE("entropy input validation") {
  CHECK_THROWS_AS(entropy(Tensor::vec({0.5, 0.6})), InvalidValue);
  CHECK_THROWS_AS(entropy(Tensor::vec({1.2, -0.2})), InvalidValue);
}

TEST_CASE("cosine_sim basics") {
  CHECK(cosine_sim(Tensor::vec({1, 0, 0}), Tensor::vec({1, 0, 0})) == 1.0);
  CHECK(cosine_sim(Tensor::vec({1, 0}), Tensor::vec({0, 1})) ==
        doctest::Approx(0.0));
  CHECK(cosine_sim(Tensor::vec({2, 0}), Tensor::vec({-3, 0})) == -1.0);
  // Scale invariance.
  double a = cosine_sim(Tensor::vec({1.0, 2.0, 3.0}), Tensor::vec({-1, 0, 2}));
  double b =
      cosine_sim(Tensor::vec({10.0, 20.0, 30.0}), Tensor::vec({-1, 0, 2}));
  CHECK(a == doctest::Approx(b).epsilon(1e-14));
  CHECK_THROWS_AS(cosine_sim(Tensor::vec({0, 0}), Tensor::vec({1, 0})),
                  DegenerateVector);
}

TEST_CASE("tape gradients match central finite differences") {
  // A composite graph exercising affine, tanh, normalize, cosine,
  // softmax, log and pick in one scalar loss.
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t n = 3 + rng.below(4);
    std::size_t m = 3 + rng.below(4);
    Tensor w({m, n}), b({m}), x({n}), ref({m});
    for (auto& v : w.data()) v = rng.normal();
    for (auto& v : b.data()) v = 0.3 * rng.normal();
    for (auto& v : x.data()) v = rng.normal();
    for (auto& v : ref.data()) v = rng.normal();

    auto build = [&](const std::vector<double>& flat, Tape& t,
                     Tape::Var& xl) {
      Tensor xv = x;
      xv.data() = flat;
      xl = t.leaf(xv, /*requires_grad=*/true);
      auto h = t.tanh_(t.affine(t.leaf(w), t.leaf(b), xl));
      auto e = t.normalize(h);
      auto c = t.cosine(e, t.leaf(ref));
      auto probs = t.softmax_t(
          t.concat_scalars({c, t.dot(e, t.leaf(ref)), t.scale(c, -2.0)}), 5.0);
      return t.scale(t.pick(t.log_(probs), 1), -1.0);
    };

    Tape tape;
    Tape::Var leaf = 0;
    auto loss = build(x.data(), tape, leaf);
    tape.backward(loss);
    const Tensor& g = tape.grad(leaf);
    auto fd = testutil::fd_grad(
        [&](const std::vector<double>& flat) {
          Tape t;
          Tape::Var xl = 0;
          return t.scalar_value(build(flat, t, xl));
        },
        x.data());
    CHECK(testutil::max_rel_err(std::vector<double>(g.data()), fd) < 1e-5);
  }
}

TEST_CASE("grad of squared norm is 2p") {
  Tape t;
  auto p = t.leaf(Tensor::vec({1.5, -2.0, 0.25}), true);
  auto loss = t.dot(p, p);
  t.backward(loss);
  const Tensor& g = t.grad(p);
  CHECK(g[0] == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(g[1] == doctest::Approx(-4.0).epsilon(1e-14));
  CHECK(g[2] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("loss detached from a tracked leaf gives a zero gradient") {
  Tape t;
  auto p = t.leaf(Tensor::vec({1.0, 2.0}), true);
  auto q = t.leaf(Tensor::vec({3.0, 4.0}), true);
  auto loss = t.dot(q, q);
  t.backward(loss);
  const Tensor& g = t.grad(p);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
}

TEST_CASE("backward is linear in the output") {
  // grad(a*f + b*g) == a*grad(f) + b*grad(g) for scalar outputs f, g.
  auto build = [](double a, double b, std::vector<double>* out) {
    Tape t;
    auto p = t.leaf(Tensor::vec({0.7, -0.4, 1.1}), true);
    auto f = t.dot(p, p);
    auto g = t.pick(t.tanh_(p), 2);
    auto loss = t.add(t.scale(f, a), t.scale(g, b));
    t.backward(loss);
    *out = t.grad(p).data();
    return 0;
  };
  std::vector<double> gf, gg, gmix;
  build(1.0, 0.0, &gf);
  build(0.0, 1.0, &gg);
  build(2.5, -3.0, &gmix);
  for (std::size_t i = 0; i < gf.size(); ++i)
    CHECK(gmix[i] == doctest::Approx(2.5 * gf[i] - 3.0 * gg[i]).epsilon(1e-12));
}

TEST_CASE("replay reproduces the recorded forward bit for bit") {
  Tape t;
  Rng rng(33);
  Tensor w({4, 5}), b({4}), x({5});
  for (auto& v : w.data()) v = rng.normal();
  for (auto& v : b.data()) v = rng.normal();
  for (auto& v : x.data()) v = rng.normal();
  auto xl = t.leaf(x, true);
  auto out = t.normalize(t.tanh_(t.affine(t.leaf(w), t.leaf(b), xl)));
  Tensor before = t.value(out);
  const Tensor& after = t.replay(out);
  CHECK(before == after);
}

TEST_CASE("backward on a non-scalar output throws") {
  Tape t;
  auto p = t.leaf(Tensor::vec({1.0, 2.0}), true);
  auto y = t.tanh_(p);
  CHECK_THROWS_AS(t.backward(y), InvalidTape);
}

TEST_CASE("grad of an untracked leaf throws") {
  Tape t;
  auto c = t.leaf(Tensor::vec({1.0, 2.0}));
  auto p = t.leaf(Tensor::vec({1.0, 2.0}), true);
  auto loss = t.dot(p, c);
  t.backward(loss);
  CHECK_THROWS_AS(t.grad(c), InvalidTape);
}

TEST_CASE("backward pass counter increments once per backward") {
  reset_backward_pass_count();
  Tape t;
  auto p = t.leaf(Tensor::vec({1.0, -1.0}), true);
  auto loss = t.dot(p, p);
  t.backward(loss);
  CHECK(backward_pass_count() == 1);
  t.backward(loss);
  CHECK(backward_pass_count() == 2);
  reset_backward_pass_count();
  CHECK(backward_pass_count() == 0);
}

TEST_CASE("rng streams are deterministic and split streams differ") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(split_seed(7, 0) != split_seed(7, 1));
  CHECK(split_seed(7, 0) != split_seed(8, 0));
  // Normal draws have roughly zero mean / unit variance.
  Rng c(5);
  double s = 0, s2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double x = c.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / n) < 0.03);
  CHECK(std::abs(s2 / n - 1.0) < 0.05);
}
