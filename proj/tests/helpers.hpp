#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "tlla/clipette.hpp"
#include "tlla/rng.hpp"
#include "tlla/tensor.hpp"

namespace testutil {

// Central finite-difference gradient of a scalar function of a flat
// parameter vector.
inline std::vector<double> fd_grad(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double xi = x[i];
    x[i] = xi + h;
    double fp = f(x);
    x[i] = xi - h;
    double fm = f(x);
    x[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Largest relative error over components whose reference magnitude is at
// least `floor`; components below the floor are compared absolutely.
inline double max_rel_err(const std::vector<double>& got,
                          const std::vector<double>& ref,
                          double floor = 1e-8) {
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    double denom = std::abs(ref[i]);
    double err = std::abs(got[i] - ref[i]);
    if (denom >= floor) err /= denom;
    worst = std::max(worst, err);
  }
  return worst;
}

// Small random frozen model with no training, for gradient and counting
// tests. Weights are O(1) so encoder outputs are non-degenerate.
inline tlla::clipette::FrozenModel random_model(std::uint64_t seed,
                                                tlla::clipette::Sizes sizes) {
  using namespace tlla;
  Rng rng(seed);
  clipette::FrozenModel m;
  m.sizes = sizes;
  m.tau = sizes.tau;
  auto fill = [&](Tensor& t, double s) {
    for (auto& v : t.data()) v = s * rng.normal();
  };
  auto mk = [&](std::size_t out, std::size_t in) {
    clipette::Dense d{Tensor({out, in}), Tensor({out})};
    fill(d.w, 1.0 / std::sqrt(double(in)));
    fill(d.b, 0.1);
    return d;
  };
  m.img1 = mk(sizes.hidden, sizes.d_in);
  m.img2 = mk(sizes.d_emb, sizes.hidden);
  m.txt1 = mk(sizes.hidden, sizes.d_tok);
  m.txt2 = mk(sizes.d_emb, sizes.hidden);
  m.class_tokens = Tensor({sizes.k_classes, sizes.d_tok});
  fill(m.class_tokens, 1.0);
  return m;
}

inline tlla::clipette::LabeledBatch random_batch(std::uint64_t seed,
                                                 std::size_t n,
                                                 std::size_t d_in,
                                                 std::size_t k_classes) {
  using namespace tlla;
  Rng rng(seed);
  clipette::LabeledBatch b;
  b.inputs = Tensor({n, d_in});
  for (auto& v : b.inputs.data()) v = rng.normal();
  b.labels.resize(n);
  for (auto& y : b.labels) y = rng.below(k_classes);
  return b;
}

}  // namespace testutil
