#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tlla/clipette.hpp"

namespace tlla::sapt {

using clipette::FrozenModel;
using clipette::LabeledBatch;
using clipette::PromptParams;

// Grid the perturbation radius is searched over.
inline const std::vector<double> kRhoGrid = {0.05, 0.1, 0.3, 0.5, 0.7};

struct SaptConfig {
  double rho = 0.7;
  double lr = 0.002;       // interpreted against the summed CE loss,
                           // scaled by 1/batch_size internally
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::size_t shots = 16;
  std::uint64_t seed = 0;
};

// rho * g / |g|_F over the flattened matrix; zero when |g| < 1e-12 or
// rho == 0 (a stationary point needs no ascent).
Tensor epsilon_star(const Tensor& grad, double rho);

// One ascent-then-descent step on an arbitrary gradient function over a
// flat parameter vector. Returns p - lr * grad(p + epsilon_star(grad(p))).
// The inner gradient is treated as constant (first-order step).
std::vector<double> sam_update(
    const std::vector<double>& p,
    const std::function<std::vector<double>(const std::vector<double>&)>&
        grad_fn,
    double rho, double lr);

// SAM step on prompt parameters. With rho == 0 this is bit-identical to
// a plain SGD step (no perturbed re-evaluation takes place).
PromptParams sapt_step(const FrozenModel& model, const PromptParams& p,
                       const LabeledBatch& batch, const SaptConfig& cfg);

// Brute-force lower bound on max_{|e| <= rho} loss(p + e) - loss(p):
// scans n_dirs seeded random unit directions at grid_per_dir radii in
// (0, rho], plus an optional ascent direction.
double sharpness_scan(
    const std::function<double(const std::vector<double>&)>& loss_fn,
    const std::vector<double>& p, double rho, std::size_t n_dirs,
    std::size_t grid_per_dir, std::uint64_t seed,
    const std::vector<double>* ascent_dir = nullptr);

// sharpness_scan specialized to CE over prompts, including the
// epsilon_star direction.
double sharpness_oracle(const FrozenModel& model, const PromptParams& p,
                        const LabeledBatch& batch, double rho,
                        std::size_t n_dirs, std::size_t grid_per_dir,
                        std::uint64_t seed);

struct EpochLog {
  std::size_t epoch;
  double ce_loss;
  double sharpness_estimate;
  double wall_ms;
};

struct TuneResult {
  PromptParams prompts;
  std::vector<EpochLog> log;
};

// Few-shot prompt tuning: samples `shots` examples per class without
// replacement (seeded), then runs epochs of mini-batch SAM steps (plain
// SGD when sapt_enabled is false; rho is ignored in that case).
TuneResult tune(const FrozenModel& model, const PromptParams& p0,
                const LabeledBatch& train_set, const SaptConfig& cfg,
                bool sapt_enabled);

// JSON-lines, one record per epoch.
void write_training_log(const std::vector<EpochLog>& log,
                        const std::string& path);

}  // namespace tlla::sapt
