#include "tlla/landscape.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "tlla/rng.hpp"
#include "tlla/scalar_ops.hpp"

namespace tlla::landscape {

std::pair<Tensor, Tensor> sample_directions(const PromptParams& p,
                                            std::uint64_t seed) {
  if (!p.tokens.all_finite())
    throw InvalidValue("sample_directions: non-finite prompts");
  std::size_t L = p.n_tokens(), d = p.token_dim();
  for (std::size_t j = 0; j < L; ++j) {
    double n = norm2(p.tokens.row_span(j));
    if (n < 1e-12)
      throw DegeneratePrompt("sample_directions: near-zero prompt token");
  }

  Rng rng(split_seed(seed, 0xD125ull));
  Tensor d1({L, d}), d2({L, d});
  for (auto& v : d1.data()) v = rng.normal();
  for (auto& v : d2.data()) v = rng.normal();

  // Gram-Schmidt on the flattened vectors before any rescaling.
  double n1sq = dot(d1.span(), d1.span());
  double proj = dot(d2.span(), d1.span()) / n1sq;
  for (std::size_t i = 0; i < d2.size(); ++i) d2[i] -= proj * d1[i];

  // Filter normalization: token block j of each direction is rescaled
  // to the norm of prompt token j.
  for (std::size_t j = 0; j < L; ++j) {
    double pn = norm2(p.tokens.row_span(j));
    for (Tensor* dir : {&d1, &d2}) {
      double dn = norm2(dir->row_span(j));
      if (dn < 1e-12)
        throw DegeneratePrompt("sample_directions: degenerate direction block");
      double s = pn / dn;
      for (std::size_t c = 0; c < d; ++c) dir->at(j, c) *= s;
    }
  }
  return {std::move(d1), std::move(d2)};
}

namespace {

double eval_loss(const FrozenModel& model, const PromptParams& p,
                 const LabeledBatch& data, LossKind kind) {
  if (kind == LossKind::CE) return clipette::ce_loss(model, p, data);
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto row = data.inputs.row_span(i);
    Tensor x({row.size()}, std::vector<double>(row.begin(), row.end()));
    sum += entropy(model.class_probs(p, x));
  }
  return sum / double(data.size());
}

}  // namespace

LandscapeGrid loss_grid(const FrozenModel& model, const PromptParams& p,
                        const LabeledBatch& data, const Tensor& d1,
                        const Tensor& d2, std::size_t resolution, double span,
                        LossKind kind) {
  if (resolution < 3 || resolution % 2 == 0)
    throw InvalidConfig("loss_grid: resolution must be odd and >= 3");

  LandscapeGrid grid;
  grid.kind = kind;
  grid.alphas.resize(resolution);
  grid.betas.resize(resolution);
  for (std::size_t i = 0; i < resolution; ++i) {
    double t = 2.0 * double(i) / double(resolution - 1) - 1.0;
    grid.alphas[i] = span * t;
    grid.betas[i] = span * t;
  }

  grid.losses.resize(resolution * resolution);
  std::vector<double> offset(p.flat_dim());
  for (std::size_t i = 0; i < resolution; ++i) {
    for (std::size_t j = 0; j < resolution; ++j) {
      for (std::size_t c = 0; c < offset.size(); ++c)
        offset[c] = grid.alphas[i] * d1[c] + grid.betas[j] * d2[c];
      PromptParams q = p.offset_by(offset);
      double loss = eval_loss(model, q, data, kind);
      if (!std::isfinite(loss))
        throw InvalidValue("loss_grid: non-finite loss value");
      grid.losses[i * resolution + j] = loss;
    }
  }
  std::size_t c = (resolution - 1) / 2;
  grid.base_loss = grid.at(c, c);
  return grid;
}

void export_grid(const LandscapeGrid& grid, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write landscape CSV: " + path);
  f << "alpha,beta,loss\n";
  char buf[96];
  for (std::size_t i = 0; i < grid.alphas.size(); ++i)
    for (std::size_t j = 0; j < grid.betas.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", grid.alphas[i],
                    grid.betas[j], grid.at(i, j));
      f << buf;
    }
  if (!f) throw IoError("write failure: " + path);
}

}  // namespace tlla::landscape
