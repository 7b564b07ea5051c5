#include "tlla/sapt.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "tlla/rng.hpp"

namespace tlla::sapt {

Tensor epsilon_star(const Tensor& grad, double rho) {
  if (!grad.all_finite())
    throw InvalidValue("epsilon_star: non-finite gradient");
  Tensor eps(grad.shape());
  if (rho == 0.0) return eps;
  double n = grad.norm2();
  if (n < 1e-12) return eps;
  eps = grad;
  eps *= rho / n;
  return eps;
}

std::vector<double> sam_update(
    const std::vector<double>& p,
    const std::function<std::vector<double>(const std::vector<double>&)>&
        grad_fn,
    double rho, double lr) {
  std::vector<double> g = grad_fn(p);
  double n = norm2(g);
  std::vector<double> g2;
  if (rho == 0.0 || n < 1e-12) {
    g2 = std::move(g);
  } else {
    std::vector<double> perturbed = p;
    for (std::size_t i = 0; i < p.size(); ++i)
      perturbed[i] += rho * g[i] / n;
    g2 = grad_fn(perturbed);
  }
  std::vector<double> out = p;
  for (std::size_t i = 0; i < p.size(); ++i) out[i] -= lr * g2[i];
  return out;
}

PromptParams sapt_step(const FrozenModel& model, const PromptParams& p,
                       const LabeledBatch& batch, const SaptConfig& cfg) {
  if (batch.size() == 0) throw InvalidDataset("sapt_step: empty batch");
  Tensor g = clipette::grad_prompt_ce(model, p, batch);
  Tensor eps = epsilon_star(g, cfg.rho);
  const Tensor* g2 = &g;
  Tensor g_perturbed;
  if (eps.norm2() > 0.0) {
    PromptParams perturbed = p.offset_by(eps.span());
    g_perturbed = clipette::grad_prompt_ce(model, perturbed, batch);
    g2 = &g_perturbed;
  }
  if (!g2->all_finite())
    throw TrainingDiverged("sapt_step: non-finite gradient");
  PromptParams out{p.tokens};
  out.tokens.axpy(-cfg.lr / double(batch.size()), *g2);
  return out;
}

double sharpness_scan(
    const std::function<double(const std::vector<double>&)>& loss_fn,
    const std::vector<double>& p, double rho, std::size_t n_dirs,
    std::size_t grid_per_dir, std::uint64_t seed,
    const std::vector<double>* ascent_dir) {
  if (n_dirs < 1) throw InvalidConfig("sharpness_scan: n_dirs must be >= 1");
  if (rho == 0.0) return 0.0;
  double base = loss_fn(p);
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> probe(p.size());

  auto scan_dir = [&](const std::vector<double>& unit) {
    for (std::size_t gi = 1; gi <= grid_per_dir; ++gi) {
      double r = rho * double(gi) / double(grid_per_dir);
      for (std::size_t i = 0; i < p.size(); ++i)
        probe[i] = p[i] + r * unit[i];
      best = std::max(best, loss_fn(probe) - base);
    }
  };

  for (std::size_t d = 0; d < n_dirs; ++d) {
    Rng rng(split_seed(seed, d));
    std::vector<double> dir = rng.normal_vec(p.size());
    double n = norm2(dir);
    if (n < 1e-12) continue;
    for (auto& v : dir) v /= n;
    scan_dir(dir);
  }
  if (ascent_dir != nullptr) {
    double n = norm2(*ascent_dir);
    if (n >= 1e-12) {
      std::vector<double> dir = *ascent_dir;
      for (auto& v : dir) v /= n;
      scan_dir(dir);
    }
  }
  return best == -std::numeric_limits<double>::infinity() ? 0.0 : best;
}

double sharpness_oracle(const FrozenModel& model, const PromptParams& p,
                        const LabeledBatch& batch, double rho,
                        std::size_t n_dirs, std::size_t grid_per_dir,
                        std::uint64_t seed) {
  if (rho == 0.0) return 0.0;
  Tensor g = clipette::grad_prompt_ce(model, p, batch);
  std::vector<double> ascent(g.data());
  auto loss_fn = [&](const std::vector<double>& flat) {
    PromptParams q{Tensor(p.tokens.shape(),
                          std::vector<double>(flat.begin(), flat.end()))};
    return clipette::ce_loss(model, q, batch);
  };
  return sharpness_scan(loss_fn, p.tokens.data(), rho, n_dirs, grid_per_dir,
                        seed, &ascent);
}

namespace {

LabeledBatch sample_shots(const LabeledBatch& train_set, std::size_t shots,
                          std::size_t k_classes, std::uint64_t seed,
                          std::size_t d_in) {
  std::vector<std::vector<std::size_t>> by_class(k_classes);
  for (std::size_t i = 0; i < train_set.size(); ++i)
    by_class[train_set.labels[i]].push_back(i);
  std::vector<std::size_t> chosen;
  for (std::size_t k = 0; k < k_classes; ++k) {
    if (by_class[k].size() < shots)
      throw InvalidDataset("tune: fewer than `shots` samples for a class");
    Rng rng(split_seed(seed, 0x5807ull + k));
    rng.shuffle(by_class[k]);
    chosen.insert(chosen.end(), by_class[k].begin(), by_class[k].begin() + shots);
  }
  LabeledBatch out;
  out.inputs = Tensor({chosen.size(), d_in});
  out.labels.resize(chosen.size());
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    auto src = train_set.inputs.row_span(chosen[i]);
    for (std::size_t j = 0; j < d_in; ++j) out.inputs.at(i, j) = src[j];
    out.labels[i] = train_set.labels[chosen[i]];
  }
  return out;
}

}  // namespace

TuneResult tune(const FrozenModel& model, const PromptParams& p0,
                const LabeledBatch& train_set, const SaptConfig& cfg,
                bool sapt_enabled) {
  LabeledBatch shots = sample_shots(train_set, cfg.shots,
                                    model.k_classes(), cfg.seed,
                                    model.sizes.d_in);
  SaptConfig step_cfg = cfg;
  if (!sapt_enabled) step_cfg.rho = 0.0;

  TuneResult result;
  result.prompts = p0;
  Rng order_rng(split_seed(cfg.seed, 0x0DE4ull));
  std::vector<std::size_t> order(shots.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    order_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      std::size_t n = std::min(cfg.batch_size, order.size() - start);
      LabeledBatch batch;
      batch.inputs = Tensor({n, model.sizes.d_in});
      batch.labels.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        auto src = shots.inputs.row_span(order[start + i]);
        for (std::size_t j = 0; j < model.sizes.d_in; ++j)
          batch.inputs.at(i, j) = src[j];
        batch.labels[i] = shots.labels[order[start + i]];
      }
      result.prompts = sapt_step(model, result.prompts, batch, step_cfg);
    }
    double ce = clipette::ce_loss(model, result.prompts, shots);
    if (!std::isfinite(ce)) throw TrainingDiverged("tune: non-finite loss");
    double sharp = sharpness_oracle(model, result.prompts, shots,
                                    cfg.rho > 0.0 ? cfg.rho : 0.1,
                                    /*n_dirs=*/4, /*grid_per_dir=*/2,
                                    split_seed(cfg.seed, 0x04AC + epoch));
    auto t1 = std::chrono::steady_clock::now();
    double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    result.log.push_back({epoch, ce, sharp, ms});
  }
  return result;
}

void write_training_log(const std::vector<EpochLog>& log,
                        const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write training log: " + path);
  char buf[160];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf,
                  "{\"epoch\":%zu,\"ce_loss\":%.17g,"
                  "\"sharpness_estimate\":%.17g,\"wall_ms\":%.3f}\n",
                  e.epoch, e.ce_loss, e.sharpness_estimate, e.wall_ms);
    f << buf;
  }
}

}  // namespace tlla::sapt
