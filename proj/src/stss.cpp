#include "tlla/stss.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "tlla/rng.hpp"
#include "tlla/scalar_ops.hpp"

namespace tlla::stss {

std::vector<Tensor> augment_views(const Tensor& x, const AugConfig& cfg) {
  if (!x.all_finite()) throw InvalidValue("augment_views: non-finite input");
  std::vector<Tensor> views;
  views.reserve(cfg.n_views + 1);
  views.push_back(x);
  for (std::size_t v = 1; v <= cfg.n_views; ++v) {
    Rng rng(split_seed(cfg.seed, v));
    Tensor view = x;
    double scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
    view *= scale;
    for (std::size_t i = 0; i < view.size(); ++i)
      if (rng.uniform01() < cfg.mask_frac) view[i] = 0.0;
    if (cfg.noise_sigma > 0.0)
      for (std::size_t i = 0; i < view.size(); ++i)
        view[i] += cfg.noise_sigma * rng.normal();
    views.push_back(std::move(view));
  }
  return views;
}

SharpnessReport sharpness_score(const FrozenModel& model,
                                const PromptParams& p, const Tensor& view,
                                const StssConfig& cfg,
                                std::size_t view_index) {
  if (cfg.m_perturb == 0)
    throw InvalidConfig("sharpness_score: m_perturb must be >= 1");

  SharpnessReport rep;
  rep.view_index = view_index;

  Tensor img_emb = model.encode_image(view);
  Tensor base_probs = model.class_probs_from_embedding(p, img_emb);
  rep.base_entropy = entropy(base_probs);
  rep.predicted_class = 0;
  for (std::size_t k = 1; k < base_probs.size(); ++k)
    if (base_probs[k] > base_probs[rep.predicted_class])
      rep.predicted_class = k;
  rep.max_prob = base_probs[rep.predicted_class];

  Rng rng(split_seed(cfg.seed, view_index));
  rep.perturbed_entropies.resize(cfg.m_perturb);
  std::vector<double> eps(p.flat_dim());
  for (std::size_t m = 0; m < cfg.m_perturb; ++m) {
    for (auto& e : eps) e = rng.normal();
    double n = norm2(eps);
    if (cfg.rho_prime == 0.0 || n < 1e-12) {
      rep.perturbed_entropies[m] = rep.base_entropy;
      continue;
    }
    PromptParams q = p.offset_by(eps, cfg.rho_prime / n);
    rep.perturbed_entropies[m] =
        entropy(model.class_probs_from_embedding(q, img_emb));
  }
  double max_pert = *std::max_element(rep.perturbed_entropies.begin(),
                                      rep.perturbed_entropies.end());
  rep.sharpness = max_pert - rep.base_entropy;
  rep.score = rep.base_entropy + cfg.lambda * rep.sharpness;
  return rep;
}

SelectionResult select_from_reports(std::vector<SharpnessReport> reports,
                                    std::size_t top_r,
                                    std::size_t k_classes) {
  if (reports.empty())
    throw InvalidDataset("select_from_reports: empty view pool");
  if (top_r == 0 || top_r > reports.size())
    throw InvalidConfig("select_from_reports: top_r out of range");

  std::vector<std::size_t> idx(reports.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (reports[a].score != reports[b].score)
      return reports[a].score < reports[b].score;
    return reports[a].view_index < reports[b].view_index;
  });

  SelectionResult res;
  res.vote_tally.assign(k_classes, 0);
  std::vector<double> prob_mass(k_classes, 0.0);
  for (std::size_t i = 0; i < top_r; ++i) {
    const SharpnessReport& r = reports[idx[i]];
    res.selected_indices.push_back(r.view_index);
    res.vote_tally[r.predicted_class] += 1;
    prob_mass[r.predicted_class] += r.max_prob;
  }
  std::sort(res.selected_indices.begin(), res.selected_indices.end());

  std::size_t winner = 0;
  for (std::size_t k = 1; k < k_classes; ++k) {
    if (res.vote_tally[k] > res.vote_tally[winner] ||
        (res.vote_tally[k] == res.vote_tally[winner] &&
         prob_mass[k] > prob_mass[winner]))
      winner = k;
  }
  res.final_prediction = winner;
  res.reports = std::move(reports);
  return res;
}

SelectionResult select_and_vote(const FrozenModel& model,
                                const PromptParams& p,
                                const std::vector<Tensor>& views,
                                const StssConfig& cfg) {
  if (views.empty()) throw InvalidDataset("select_and_vote: no views");
  if (cfg.top_r > views.size())
    throw InvalidConfig("select_and_vote: top_r exceeds pool size");
  std::vector<SharpnessReport> reports;
  reports.reserve(views.size());
  for (std::size_t v = 0; v < views.size(); ++v)
    reports.push_back(sharpness_score(model, p, views[v], cfg, v));
  return select_from_reports(std::move(reports), cfg.top_r,
                             model.k_classes());
}

AdaptResult adapt_dataset(const FrozenModel& model, const PromptParams& p,
                          const LabeledBatch& test_set, const AugConfig& aug,
                          const StssConfig& cfg) {
  if (test_set.size() == 0)
    throw InvalidDataset("adapt_dataset: empty test set");
  AdaptResult result;
  result.true_labels = test_set.labels;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    auto row = test_set.inputs.row_span(i);
    Tensor x({row.size()}, std::vector<double>(row.begin(), row.end()));
    AugConfig a = aug;
    a.seed = split_seed(aug.seed, i);
    StssConfig s = cfg;
    s.seed = split_seed(cfg.seed, i);
    SelectionResult sel = select_and_vote(model, p, augment_views(x, a), s);
    if (sel.final_prediction == test_set.labels[i]) ++hits;
    result.per_sample.push_back(std::move(sel));
  }
  result.accuracy = double(hits) / double(test_set.size());
  return result;
}

void write_results_jsonl(const AdaptResult& result, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write results: " + path);
  for (std::size_t i = 0; i < result.per_sample.size(); ++i) {
    const SelectionResult& s = result.per_sample[i];
    f << "{\"sample_id\":" << i
      << ",\"true_label\":" << result.true_labels[i]
      << ",\"final_prediction\":" << s.final_prediction
      << ",\"selected_indices\":[";
    for (std::size_t j = 0; j < s.selected_indices.size(); ++j)
      f << (j ? "," : "") << s.selected_indices[j];
    f << "],\"scores\":[";
    char buf[32];
    for (std::size_t j = 0; j < s.reports.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.9f", s.reports[j].score);
      f << (j ? "," : "") << buf;
    }
    f << "]}\n";
  }
}

}  // namespace tlla::stss
