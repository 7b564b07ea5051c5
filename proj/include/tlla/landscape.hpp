#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tlla/clipette.hpp"

namespace tlla::landscape {

using clipette::FrozenModel;
using clipette::LabeledBatch;
using clipette::PromptParams;

enum class LossKind { CE, Entropy };

// Loss values over a 2D slice of prompt space spanned by two
// filter-normalized directions. losses is row-major |alphas| x |betas|.
struct LandscapeGrid {
  std::vector<double> alphas;
  std::vector<double> betas;
  std::vector<double> losses;
  LossKind kind = LossKind::CE;
  double base_loss = 0.0;

  double at(std::size_t i, std::size_t j) const {
    return losses[i * betas.size() + j];
  }
};

// Two seeded Gaussian directions in prompt space. d2 is Gram-Schmidt
// orthogonalized against d1 (flattened) before per-token rescaling;
// afterwards each token block of either direction matches the norm of
// the corresponding prompt token.
std::pair<Tensor, Tensor> sample_directions(const PromptParams& p,
                                            std::uint64_t seed);

// losses[i][j] = loss(p + alpha_i * d1 + beta_j * d2), coordinates
// uniformly spaced over [-span, span]. resolution must be odd and >= 3
// so the exact center (0, 0) is a grid point. For LossKind::Entropy the
// loss is the mean prediction entropy over the rows of `data` (labels
// ignored); pass a single-row batch for a per-view landscape.
LandscapeGrid loss_grid(const FrozenModel& model, const PromptParams& p,
                        const LabeledBatch& data, const Tensor& d1,
                        const Tensor& d2, std::size_t resolution, double span,
                        LossKind kind);

// CSV: header `alpha,beta,loss`, one row per cell ordered by (i, j),
// 17-significant-digit decimals.
void export_grid(const LandscapeGrid& grid, const std::string& path);

}  // namespace tlla::landscape
