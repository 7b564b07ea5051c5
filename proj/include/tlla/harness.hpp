#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tlla/datagen.hpp"
#include "tlla/landscape.hpp"
#include "tlla/sapt.hpp"
#include "tlla/stss.hpp"

namespace tlla::harness {

// Fully-resolved experiment configuration. The JSON form (defaults,
// then config file, then dotted-path overrides, each CLI flag mapping
// to exactly one field) is the single source of truth; this struct is
// its typed view.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "runs/out";

  clipette::Sizes sizes;
  struct {
    std::size_t epochs = 200;
    double lr = 0.5;
    std::size_t batch_size = 32;
    std::size_t n_per_class = 32;
    std::string checkpoint;  // load instead of pretraining when set
  } pretrain;
  sapt::SaptConfig sapt;
  stss::AugConfig aug;
  stss::StssConfig stss;
  struct {
    bool sapt_on = true;
    bool stss_on = true;
  } flags;
  struct {
    double class_sep = 3.0;
    std::size_t n_train_per_class = 32;
    std::size_t n_test_per_class = 20;
    double source_noise_sigma = 0.0;
    double target_noise_sigma = 0.1;
    std::vector<double> target_rotations = {0.3, 0.6, 0.9, 1.2};
  } data;
  struct {
    double noise_sigma = 0.1;  // sigma of the seeded offset added to the
                               // pretrained prompts before tuning
  } prompt_init;
  struct {
    std::string param = "rho_prime";
    std::vector<double> values;
  } sweep;
  struct {
    double near_rot = 0.1;
    double far_rot = 1.2;
    std::size_t n_samples = 500;
  } separability;
  struct {
    std::size_t resolution = 41;
    double span = 1.0;
    std::string loss = "ce";  // "ce" or "entropy"
    std::string tag = "default";
  } landscape;

  nlohmann::json resolved;  // the merged JSON this struct was built from

  static nlohmann::json defaults();
  // Merge file (optional) and overrides onto the defaults, then type-check.
  static RunConfig from_sources(const std::optional<std::string>& config_path,
                                const std::vector<std::string>& set_overrides,
                                const std::optional<std::uint64_t>& seed_flag,
                                const std::optional<std::string>& out_flag);
  static RunConfig from_json(nlohmann::json merged);

  datagen::DomainSpec source_spec(std::uint64_t draw_seed,
                                  std::size_t n_per_class) const;
  datagen::DomainSpec target_spec(double rot_theta, std::uint64_t draw_seed,
                                  std::size_t n_per_class) const;
  std::string digest() const;
};

// Pretrained + tuned state shared by every downstream stage.
struct Pipeline {
  clipette::FrozenModel model;
  clipette::PromptParams prompts;
  std::vector<sapt::EpochLog> tune_log;
  double pretrain_ms = 0.0;
  double tune_ms = 0.0;
};

Pipeline prepare(const RunConfig& cfg);

struct DomainMetrics {
  std::string name;
  double rot_theta = 0.0;
  double accuracy = 0.0;
  double mean_score = 0.0;    // sharpness-based score of the original view
  double median_score = 0.0;
  double mean_entropy = 0.0;  // base prediction entropy of the original view
  double distance_proxy = 0.0;
};

struct MetricsReport {
  std::uint64_t seed = 0;
  std::string config_digest;
  double source_zero_shot_accuracy = 0.0;
  std::vector<DomainMetrics> domains;
  double pretrain_ms = 0.0, tune_ms = 0.0, adapt_ms = 0.0;

  nlohmann::json to_json(const nlohmann::json& resolved_config) const;
};

// pretrain (or load) -> tune -> adapt each target; writes metrics.json,
// per-sample JSON-lines, the training log and the resolved config into
// cfg.out. Any stage failure removes this run's partial outputs.
MetricsReport run(const RunConfig& cfg);

struct SweepRow {
  double param_value;
  std::string domain;
  double accuracy;
  double mean_score;
};

// Re-runs adaptation only, sharing one tuned pipeline across values.
// param is one of rho_prime | top_r | lambda | m_perturb. Also writes
// sweep_<param>.csv under cfg.out.
std::vector<SweepRow> sweep(const RunConfig& cfg, const std::string& param,
                            const std::vector<double>& values);
std::vector<SweepRow> sweep_with_pipeline(const RunConfig& cfg,
                                          const Pipeline& pipe,
                                          const std::string& param,
                                          const std::vector<double>& values);

struct SeparabilityReport {
  double proxy_near = 0.0, proxy_far = 0.0;
  double mean_near = 0.0, mean_far = 0.0;
  double median_near = 0.0, median_far = 0.0;
  double u_statistic = 0.0;
  double p_one_sided = 0.0;  // near stochastically smaller
  double ecdf_gap = 0.0;
  std::vector<double> scores_near, scores_far;
};

// Scores n original samples per domain under the tuned prompts.
// Requires proxy(source, near) < proxy(source, far).
SeparabilityReport separability_check(const RunConfig& cfg,
                                      const Pipeline& pipe,
                                      const datagen::DomainSpec& near,
                                      const datagen::DomainSpec& far,
                                      std::size_t n);

// Per-sample original-view sharpness scores of a dataset (forward-only).
std::vector<double> original_scores(const Pipeline& pipe,
                                    const clipette::LabeledBatch& data,
                                    const stss::StssConfig& cfg);

}  // namespace tlla::harness
