#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tlla/clipette.hpp"

namespace tlla::stss {

using clipette::FrozenModel;
using clipette::LabeledBatch;
using clipette::PromptParams;

inline const std::vector<double> kRhoPrimeGrid = {0.05, 0.1, 0.3, 0.5, 0.7};

struct AugConfig {
  std::size_t n_views = 63;  // augmented views per sample, excluding x itself
  double noise_sigma = 0.0;
  double mask_frac = 0.4;
  double scale_lo = 1.0;
  double scale_hi = 1.0;
  std::uint64_t seed = 0;
};

struct StssConfig {
  double rho_prime = 0.1;
  std::size_t m_perturb = 10;
  std::size_t top_r = 31;  // selection plateau sits just below half the 64-view pool
  double lambda = 4.0;    // score = base_entropy + lambda * sharpness
  std::uint64_t seed = 0;
};

struct SharpnessReport {
  std::size_t view_index = 0;
  double base_entropy = 0.0;
  std::vector<double> perturbed_entropies;  // M entries
  double sharpness = 0.0;  // max(perturbed) - base
  double score = 0.0;      // base + lambda * sharpness
  std::size_t predicted_class = 0;
  double max_prob = 0.0;   // unperturbed argmax probability (tie-break key)
};

struct SelectionResult {
  std::vector<SharpnessReport> reports;
  std::vector<std::size_t> selected_indices;  // r lowest scores
  std::size_t final_prediction = 0;
  std::vector<std::size_t> vote_tally;  // per-class counts among selected
};

// View 0 is x unmodified. Each other view applies, in order: a
// multiplicative scale drawn Uniform(lo, hi), independent coordinate
// masking with probability mask_frac, and additive N(0, sigma^2) noise.
// View j uses the derived stream split_seed(cfg.seed, j).
std::vector<Tensor> augment_views(const Tensor& x, const AugConfig& cfg);

// Forward-only sharpness score of one view: the image
// embedding is computed once; M Gaussian prompt perturbations of radius
// rho_prime probe the entropy of the class posterior. The perturbation
// stream for a view is seeded with split_seed(cfg.seed, view_index).
SharpnessReport sharpness_score(const FrozenModel& model,
                                const PromptParams& p, const Tensor& view,
                                const StssConfig& cfg,
                                std::size_t view_index = 0);

// Selection/voting core over precomputed reports: keeps the top_r lowest
// scores (ties -> lower view index); plurality vote over kept views,
// ties -> larger summed max_prob, then lower class index.
SelectionResult select_from_reports(std::vector<SharpnessReport> reports,
                                    std::size_t top_r, std::size_t k_classes);

SelectionResult select_and_vote(const FrozenModel& model,
                                const PromptParams& p,
                                const std::vector<Tensor>& views,
                                const StssConfig& cfg);

struct AdaptResult {
  std::vector<SelectionResult> per_sample;
  std::vector<std::size_t> true_labels;
  double accuracy = 0.0;
};

// Full per-sample pipeline: sample i uses aug seed split_seed(aug.seed, i)
// and scoring seed split_seed(stss.seed, i).
AdaptResult adapt_dataset(const FrozenModel& model, const PromptParams& p,
                          const LabeledBatch& test_set, const AugConfig& aug,
                          const StssConfig& cfg);

// JSON-lines, one record per test sample; scores rounded to 9 decimals.
void write_results_jsonl(const AdaptResult& result, const std::string& path);

}  // namespace tlla::stss
