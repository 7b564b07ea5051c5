#include "tlla/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "tlla/rng.hpp"
#include "tlla/scalar_ops.hpp"
#include "tlla/stats.hpp"

namespace fs = std::filesystem;

namespace tlla::harness {

namespace {

// Stream indices for seed derivation (see rng.hpp split_seed).
enum SeedStream : std::uint64_t {
  kPretrainCorpus = 1,
  kPretrainInit = 2,
  kTuneData = 3,
  kPromptInit = 4,
  kTuneSeed = 5,
  kSourceTest = 7,
  kProxyReference = 8,
  kTargetAug = 100,    // + target index
  kTargetStss = 200,   // + target index
  kTargetDraw = 300,   // + target index
  kSepNearDraw = 400,
  kSepFarDraw = 401,
  kSepNearScore = 410,
  kSepFarScore = 411,
  kSourceAug = 600,
  kSourceStss = 601,
};

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void deep_merge(nlohmann::json& base, const nlohmann::json& patch) {
  if (!patch.is_object() || !base.is_object()) {
    base = patch;
    return;
  }
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (base.contains(it.key()) && base[it.key()].is_object() &&
        it.value().is_object())
      deep_merge(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

void apply_override(nlohmann::json& cfg, const std::string& expr) {
  std::size_t eq = expr.find('=');
  if (eq == std::string::npos)
    throw InvalidConfig("override must be key.path=value: " + expr);
  std::string path = expr.substr(0, eq);
  std::string raw = expr.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;  // plain string
  }
  nlohmann::json* node = &cfg;
  std::size_t pos = 0;
  while (true) {
    std::size_t dot = path.find('.', pos);
    std::string key = path.substr(pos, dot - pos);
    if (key.empty()) throw InvalidConfig("bad override path: " + path);
    // Only keys that exist in the schema (the defaults) may be set;
    // anything else is a typo we should not silently accept.
    if (!node->is_object() || !node->contains(key))
      throw InvalidConfig("unknown config key: " + path);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    pos = dot + 1;
  }
}

template <typename T>
T get_field(const nlohmann::json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("config field ") + section + "." + key +
                        ": " + e.what());
  }
}

void atomic_write(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot write: " + path.string());
    f << content;
    if (!f) throw IoError("write failure: " + path.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move into place: " + path.string());
}

std::string domain_name(double rot) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "target_rot_%g", rot);
  return buf;
}

}  // namespace

nlohmann::json RunConfig::defaults() {
  return nlohmann::json{
      {"out", "runs/out"},
      {"sizes",
       {{"d_in", 16},
        {"d_tok", 8},
        {"d_emb", 8},
        {"hidden", 32},
        {"k_classes", 10},
        {"n_prompts", 4},
        {"tau", 10.0}}},
      {"pretrain",
       {{"epochs", 200},
        {"lr", 0.5},
        {"batch_size", 32},
        {"n_per_class", 32},
        {"checkpoint", ""}}},
      {"sapt",
       {{"rho", 0.7},
        {"lr", 0.002},
        {"epochs", 50},
        {"batch_size", 32},
        {"shots", 16}}},
      {"aug",
       {{"n_views", 63},
        {"noise_sigma", 0.0},
        {"mask_frac", 0.4},
        {"scale_lo", 1.0},
        {"scale_hi", 1.0}}},
      {"stss",
       {{"rho_prime", 0.1},
        {"m_perturb", 10},
        {"top_r", 31},
        {"lambda", 4.0}}},
      {"flags", {{"sapt_on", true}, {"stss_on", true}}},
      {"data",
       {{"class_sep", 3.0},
        {"n_train_per_class", 32},
        {"n_test_per_class", 20},
        {"source_noise_sigma", 0.0},
        {"target_noise_sigma", 0.1},
        {"target_rotations", {0.3, 0.6, 0.9, 1.2}}}},
      {"prompt_init", {{"noise_sigma", 0.1}}},
      {"sweep",
       {{"param", "rho_prime"}, {"values", {0.0, 0.05, 0.1, 0.3, 0.5, 0.7, 1.5}}}},
      {"separability",
       {{"near_rot", 0.1}, {"far_rot", 1.2}, {"n_samples", 500}}},
      {"landscape",
       {{"resolution", 41}, {"span", 1.0}, {"loss", "ce"}, {"tag", "default"}}},
  };
}

RunConfig RunConfig::from_sources(
    const std::optional<std::string>& config_path,
    const std::vector<std::string>& set_overrides,
    const std::optional<std::uint64_t>& seed_flag,
    const std::optional<std::string>& out_flag) {
  nlohmann::json merged = defaults();
  if (config_path) {
    std::ifstream f(*config_path, std::ios::binary);
    if (!f) throw IoError("config file not found: " + *config_path);
    nlohmann::json file_cfg;
    try {
      f >> file_cfg;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("config parse failure in " + *config_path + ": " +
                       e.what());
    }
    deep_merge(merged, file_cfg);
  }
  for (const auto& o : set_overrides) apply_override(merged, o);
  if (seed_flag) merged["seed"] = *seed_flag;
  if (!merged.contains("seed")) {
    if (const char* env = std::getenv("TLLA_SEED"))
      merged["seed"] = std::strtoull(env, nullptr, 10);
    else
      merged["seed"] = 0;
  }
  if (out_flag) merged["out"] = *out_flag;
  return from_json(std::move(merged));
}

RunConfig RunConfig::from_json(nlohmann::json merged) {
  RunConfig c;
  try {
    c.seed = merged.at("seed").get<std::uint64_t>();
    c.out = merged.at("out").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("config: ") + e.what());
  }
  c.sizes.d_in = get_field<std::size_t>(merged, "sizes", "d_in");
  c.sizes.d_tok = get_field<std::size_t>(merged, "sizes", "d_tok");
  c.sizes.d_emb = get_field<std::size_t>(merged, "sizes", "d_emb");
  c.sizes.hidden = get_field<std::size_t>(merged, "sizes", "hidden");
  c.sizes.k_classes = get_field<std::size_t>(merged, "sizes", "k_classes");
  c.sizes.n_prompts = get_field<std::size_t>(merged, "sizes", "n_prompts");
  c.sizes.tau = get_field<double>(merged, "sizes", "tau");
  if (!(c.sizes.tau > 0.0)) throw InvalidConfig("sizes.tau must be positive");

  c.pretrain.epochs = get_field<std::size_t>(merged, "pretrain", "epochs");
  c.pretrain.lr = get_field<double>(merged, "pretrain", "lr");
  c.pretrain.batch_size =
      get_field<std::size_t>(merged, "pretrain", "batch_size");
  c.pretrain.n_per_class =
      get_field<std::size_t>(merged, "pretrain", "n_per_class");
  c.pretrain.checkpoint =
      get_field<std::string>(merged, "pretrain", "checkpoint");

  c.sapt.rho = get_field<double>(merged, "sapt", "rho");
  c.sapt.lr = get_field<double>(merged, "sapt", "lr");
  c.sapt.epochs = get_field<std::size_t>(merged, "sapt", "epochs");
  c.sapt.batch_size = get_field<std::size_t>(merged, "sapt", "batch_size");
  c.sapt.shots = get_field<std::size_t>(merged, "sapt", "shots");
  c.sapt.seed = split_seed(c.seed, kTuneSeed);
  if (c.sapt.rho < 0.0 || !(c.sapt.lr > 0.0) || c.sapt.batch_size == 0 ||
      c.sapt.shots == 0)
    throw InvalidConfig("sapt: invalid tuning parameters");

  c.aug.n_views = get_field<std::size_t>(merged, "aug", "n_views");
  c.aug.noise_sigma = get_field<double>(merged, "aug", "noise_sigma");
  c.aug.mask_frac = get_field<double>(merged, "aug", "mask_frac");
  c.aug.scale_lo = get_field<double>(merged, "aug", "scale_lo");
  c.aug.scale_hi = get_field<double>(merged, "aug", "scale_hi");
  if (c.aug.noise_sigma < 0.0 || c.aug.mask_frac < 0.0 ||
      c.aug.mask_frac >= 1.0 || !(c.aug.scale_lo > 0.0) ||
      c.aug.scale_lo > 1.0 || c.aug.scale_hi < 1.0)
    throw InvalidConfig("aug: invalid augmentation parameters");

  c.stss.rho_prime = get_field<double>(merged, "stss", "rho_prime");
  c.stss.m_perturb = get_field<std::size_t>(merged, "stss", "m_perturb");
  c.stss.top_r = get_field<std::size_t>(merged, "stss", "top_r");
  c.stss.lambda = get_field<double>(merged, "stss", "lambda");
  if (c.stss.rho_prime < 0.0 || c.stss.m_perturb == 0 || c.stss.top_r == 0 ||
      c.stss.top_r > c.aug.n_views + 1 || c.stss.lambda < 0.0)
    throw InvalidConfig("stss: invalid selection parameters");

  c.flags.sapt_on = get_field<bool>(merged, "flags", "sapt_on");
  c.flags.stss_on = get_field<bool>(merged, "flags", "stss_on");

  c.data.class_sep = get_field<double>(merged, "data", "class_sep");
  c.data.n_train_per_class =
      get_field<std::size_t>(merged, "data", "n_train_per_class");
  c.data.n_test_per_class =
      get_field<std::size_t>(merged, "data", "n_test_per_class");
  c.data.source_noise_sigma =
      get_field<double>(merged, "data", "source_noise_sigma");
  c.data.target_noise_sigma =
      get_field<double>(merged, "data", "target_noise_sigma");
  c.data.target_rotations =
      get_field<std::vector<double>>(merged, "data", "target_rotations");
  if (c.data.n_train_per_class < c.sapt.shots)
    throw InvalidConfig("data.n_train_per_class must cover sapt.shots");

  c.prompt_init.noise_sigma =
      get_field<double>(merged, "prompt_init", "noise_sigma");

  c.sweep.param = get_field<std::string>(merged, "sweep", "param");
  c.sweep.values = get_field<std::vector<double>>(merged, "sweep", "values");

  c.separability.near_rot =
      get_field<double>(merged, "separability", "near_rot");
  c.separability.far_rot = get_field<double>(merged, "separability", "far_rot");
  c.separability.n_samples =
      get_field<std::size_t>(merged, "separability", "n_samples");

  c.landscape.resolution =
      get_field<std::size_t>(merged, "landscape", "resolution");
  c.landscape.span = get_field<double>(merged, "landscape", "span");
  c.landscape.loss = get_field<std::string>(merged, "landscape", "loss");
  c.landscape.tag = get_field<std::string>(merged, "landscape", "tag");
  if (c.landscape.loss != "ce" && c.landscape.loss != "entropy")
    throw InvalidConfig("landscape.loss must be 'ce' or 'entropy'");

  c.resolved = std::move(merged);
  return c;
}

datagen::DomainSpec RunConfig::source_spec(std::uint64_t draw_seed,
                                           std::size_t n_per_class) const {
  datagen::DomainSpec s;
  s.k_classes = sizes.k_classes;
  s.d_in = sizes.d_in;
  s.n_per_class = n_per_class;
  s.class_sep = data.class_sep;
  s.rot_theta = 0.0;
  s.scale = 1.0;
  s.noise_sigma = data.source_noise_sigma;
  s.seed = draw_seed;
  return s;
}

datagen::DomainSpec RunConfig::target_spec(double rot_theta,
                                           std::uint64_t draw_seed,
                                           std::size_t n_per_class) const {
  datagen::DomainSpec s = source_spec(draw_seed, n_per_class);
  s.rot_theta = rot_theta;
  s.noise_sigma = data.target_noise_sigma;
  return s;
}

std::string RunConfig::digest() const {
  // The digest identifies the experimental configuration: the output
  // location and the seed vary across repeats of the same experiment and
  // are excluded.
  nlohmann::json semantic = resolved;
  semantic.erase("out");
  semantic.erase("seed");
  std::string dump = semantic.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

Pipeline prepare(const RunConfig& cfg) {
  Pipeline pipe;
  double t0 = now_ms();
  clipette::PromptParams pretrained_prompts;
  if (!cfg.pretrain.checkpoint.empty()) {
    auto [model, prompts] = clipette::load_checkpoint(cfg.pretrain.checkpoint);
    pipe.model = std::move(model);
    pretrained_prompts = std::move(prompts);
  } else {
    datagen::DomainDataset corpus = datagen::gen_domain(
        cfg.source_spec(split_seed(cfg.seed, kPretrainCorpus),
                        cfg.pretrain.n_per_class));
    clipette::PretrainResult pr = clipette::pretrain(
        cfg.sizes, corpus.batch, split_seed(cfg.seed, kPretrainInit),
        cfg.pretrain.epochs, cfg.pretrain.lr, cfg.pretrain.batch_size);
    pipe.model = std::move(pr.model);
    pretrained_prompts = std::move(pr.prompts);
  }
  pipe.pretrain_ms = now_ms() - t0;

  t0 = now_ms();
  datagen::DomainDataset tune_data = datagen::gen_domain(cfg.source_spec(
      split_seed(cfg.seed, kTuneData), cfg.data.n_train_per_class));

  clipette::PromptParams p0 = pretrained_prompts;
  if (cfg.prompt_init.noise_sigma > 0.0) {
    Rng rng(split_seed(cfg.seed, kPromptInit));
    for (auto& v : p0.tokens.data()) v += cfg.prompt_init.noise_sigma * rng.normal();
  }
  sapt::TuneResult tr =
      sapt::tune(pipe.model, p0, tune_data.batch, cfg.sapt, cfg.flags.sapt_on);
  pipe.prompts = std::move(tr.prompts);
  pipe.tune_log = std::move(tr.log);
  pipe.tune_ms = now_ms() - t0;
  return pipe;
}

std::vector<double> original_scores(const Pipeline& pipe,
                                    const clipette::LabeledBatch& data,
                                    const stss::StssConfig& cfg) {
  std::vector<double> scores;
  scores.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto row = data.inputs.row_span(i);
    Tensor x({row.size()}, std::vector<double>(row.begin(), row.end()));
    stss::StssConfig per = cfg;
    per.seed = split_seed(cfg.seed, i);
    scores.push_back(
        stss::sharpness_score(pipe.model, pipe.prompts, x, per, 0).score);
  }
  return scores;
}

namespace {

struct DomainEval {
  DomainMetrics metrics;
  std::optional<stss::AdaptResult> adapt;  // present when STSS ran
};

DomainEval evaluate_domain(const RunConfig& cfg, const Pipeline& pipe,
                           const std::string& name,
                           const datagen::DomainDataset& test,
                           std::uint64_t aug_seed, std::uint64_t stss_seed,
                           bool stss_on) {
  DomainEval ev;
  ev.metrics.name = name;
  ev.metrics.rot_theta = test.spec.rot_theta;

  stss::AugConfig aug = cfg.aug;
  aug.seed = aug_seed;
  stss::StssConfig sc = cfg.stss;
  sc.seed = stss_seed;

  std::vector<double> scores, entropies;
  if (stss_on) {
    stss::AdaptResult res =
        stss::adapt_dataset(pipe.model, pipe.prompts, test.batch, aug, sc);
    ev.metrics.accuracy = res.accuracy;
    for (const auto& s : res.per_sample) {
      scores.push_back(s.reports[0].score);
      entropies.push_back(s.reports[0].base_entropy);
    }
    ev.adapt = std::move(res);
  } else {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      auto row = test.batch.inputs.row_span(i);
      Tensor x({row.size()}, std::vector<double>(row.begin(), row.end()));
      stss::StssConfig per = sc;
      per.seed = split_seed(sc.seed, i);
      stss::SharpnessReport rep =
          stss::sharpness_score(pipe.model, pipe.prompts, x, per, 0);
      scores.push_back(rep.score);
      entropies.push_back(rep.base_entropy);
      if (rep.predicted_class == test.batch.labels[i]) ++hits;
    }
    ev.metrics.accuracy = double(hits) / double(test.size());
  }
  ev.metrics.mean_score = stats::mean(scores);
  ev.metrics.median_score = stats::median(scores);
  ev.metrics.mean_entropy = stats::mean(entropies);
  return ev;
}

std::string metrics_json_string(const MetricsReport& rep,
                                const nlohmann::json& resolved) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["seed"] = rep.seed;
  j["config_digest"] = rep.config_digest;
  j["config"] = resolved;
  j["source_zero_shot_accuracy"] = rep.source_zero_shot_accuracy;
  j["domains"] = nlohmann::json::array();
  for (const auto& d : rep.domains) {
    j["domains"].push_back({{"name", d.name},
                            {"rot_theta", d.rot_theta},
                            {"accuracy", d.accuracy},
                            {"mean_score", d.mean_score},
                            {"median_score", d.median_score},
                            {"mean_entropy", d.mean_entropy},
                            {"distance_proxy", d.distance_proxy}});
  }
  j["timing"] = {{"pretrain_ms", rep.pretrain_ms},
                 {"tune_ms", rep.tune_ms},
                 {"adapt_ms", rep.adapt_ms}};
  return j.dump(2) + "\n";
}

}  // namespace

nlohmann::json MetricsReport::to_json(
    const nlohmann::json& resolved_config) const {
  return nlohmann::json::parse(metrics_json_string(*this, resolved_config));
}

MetricsReport run(const RunConfig& cfg) {
  fs::path out(cfg.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory: " + cfg.out);

  std::vector<fs::path> written;
  auto emit = [&](const fs::path& p, const std::string& content) {
    atomic_write(p, content);
    written.push_back(p);
  };
  auto cleanup = [&]() {
    for (const auto& p : written) {
      std::error_code rec;
      fs::remove(p, rec);
    }
  };

  std::string stage = "config";
  try {
    emit(out / "resolved_config.json", cfg.resolved.dump(2) + "\n");

    stage = "pretrain";
    Pipeline pipe = prepare(cfg);

    stage = "tune";
    clipette::save_checkpoint(pipe.model, pipe.prompts,
                              (out / "checkpoint.json").string());
    written.push_back(out / "checkpoint.json");
    sapt::write_training_log(pipe.tune_log,
                             (out / "training_log.jsonl").string());
    written.push_back(out / "training_log.jsonl");

    stage = "adapt";
    double t0 = now_ms();
    MetricsReport rep;
    rep.seed = cfg.seed;
    rep.config_digest = cfg.digest();
    rep.pretrain_ms = pipe.pretrain_ms;
    rep.tune_ms = pipe.tune_ms;

    datagen::DomainDataset proxy_ref = datagen::gen_domain(cfg.source_spec(
        split_seed(cfg.seed, kProxyReference), cfg.data.n_test_per_class));
    datagen::DomainDataset source_test = datagen::gen_domain(cfg.source_spec(
        split_seed(cfg.seed, kSourceTest), cfg.data.n_test_per_class));

    rep.source_zero_shot_accuracy =
        clipette::zero_shot_accuracy(pipe.model, pipe.prompts, source_test.batch);

    auto handle_domain = [&](const std::string& name,
                             const datagen::DomainDataset& test,
                             std::uint64_t aug_seed, std::uint64_t stss_seed) {
      DomainEval ev = evaluate_domain(cfg, pipe, name, test, aug_seed,
                                      stss_seed, cfg.flags.stss_on);
      ev.metrics.distance_proxy =
          datagen::domain_distance_proxy(proxy_ref, test, cfg.seed);
      if (ev.adapt) {
        std::string path = (out / ("samples_" + name + ".jsonl")).string();
        stss::write_results_jsonl(*ev.adapt, path);
        written.push_back(path);
      }
      rep.domains.push_back(ev.metrics);
    };

    handle_domain("source", source_test, split_seed(cfg.seed, kSourceAug),
                  split_seed(cfg.seed, kSourceStss));
    for (std::size_t t = 0; t < cfg.data.target_rotations.size(); ++t) {
      double rot = cfg.data.target_rotations[t];
      datagen::DomainDataset test = datagen::gen_domain(cfg.target_spec(
          rot, split_seed(cfg.seed, kTargetDraw + t), cfg.data.n_test_per_class));
      handle_domain(domain_name(rot), test, split_seed(cfg.seed, kTargetAug + t),
                    split_seed(cfg.seed, kTargetStss + t));
    }
    rep.adapt_ms = now_ms() - t0;

    stage = "report";
    emit(out / "metrics.json", metrics_json_string(rep, cfg.resolved));
    return rep;
  } catch (const Error& e) {
    cleanup();
    throw Error(e.kind(), "stage " + stage + ": " + e.what());
  } catch (const std::exception& e) {
    cleanup();
    throw Error("RuntimeError", "stage " + stage + ": " + e.what());
  }
}

std::vector<SweepRow> sweep_with_pipeline(const RunConfig& cfg,
                                          const Pipeline& pipe,
                                          const std::string& param,
                                          const std::vector<double>& values) {
  if (values.empty()) throw InvalidConfig("sweep: empty value list");
  std::vector<SweepRow> rows;
  for (double value : values) {
    RunConfig c = cfg;
    if (param == "rho_prime") {
      if (value < 0.0) throw InvalidConfig("sweep: rho_prime must be >= 0");
      c.stss.rho_prime = value;
    } else if (param == "top_r") {
      auto r = static_cast<std::size_t>(std::llround(value));
      if (r == 0 || r > cfg.aug.n_views + 1)
        throw InvalidConfig("sweep: top_r out of range");
      c.stss.top_r = r;
    } else if (param == "lambda") {
      if (value < 0.0) throw InvalidConfig("sweep: lambda must be >= 0");
      c.stss.lambda = value;
    } else if (param == "m_perturb") {
      auto m = static_cast<std::size_t>(std::llround(value));
      if (m == 0) throw InvalidConfig("sweep: m_perturb must be >= 1");
      c.stss.m_perturb = m;
    } else {
      throw InvalidConfig("sweep: unknown parameter " + param);
    }
    for (std::size_t t = 0; t < cfg.data.target_rotations.size(); ++t) {
      double rot = cfg.data.target_rotations[t];
      datagen::DomainDataset test = datagen::gen_domain(cfg.target_spec(
          rot, split_seed(cfg.seed, kTargetDraw + t), cfg.data.n_test_per_class));
      DomainEval ev = evaluate_domain(
          c, pipe, domain_name(rot), test, split_seed(cfg.seed, kTargetAug + t),
          split_seed(cfg.seed, kTargetStss + t), /*stss_on=*/true);
      rows.push_back(
          {value, ev.metrics.name, ev.metrics.accuracy, ev.metrics.mean_score});
    }
  }

  fs::path out(cfg.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory: " + cfg.out);
  std::string csv = "param_value,domain,accuracy,mean_score\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%s,%.17g,%.17g\n", r.param_value,
                  r.domain.c_str(), r.accuracy, r.mean_score);
    csv += buf;
  }
  atomic_write(out / ("sweep_" + param + ".csv"), csv);
  return rows;
}

std::vector<SweepRow> sweep(const RunConfig& cfg, const std::string& param,
                            const std::vector<double>& values) {
  Pipeline pipe = prepare(cfg);
  return sweep_with_pipeline(cfg, pipe, param, values);
}

SeparabilityReport separability_check(const RunConfig& cfg,
                                      const Pipeline& pipe,
                                      const datagen::DomainSpec& near,
                                      const datagen::DomainSpec& far,
                                      std::size_t n) {
  std::size_t k = cfg.sizes.k_classes;
  std::size_t per_class = (n + k - 1) / k;

  datagen::DomainSpec near_spec = near;
  near_spec.n_per_class = per_class;
  near_spec.seed = split_seed(cfg.seed, kSepNearDraw);
  datagen::DomainSpec far_spec = far;
  far_spec.n_per_class = per_class;
  far_spec.seed = split_seed(cfg.seed, kSepFarDraw);

  datagen::DomainDataset near_ds = datagen::gen_domain(near_spec);
  datagen::DomainDataset far_ds = datagen::gen_domain(far_spec);
  datagen::DomainDataset source_ref = datagen::gen_domain(cfg.source_spec(
      split_seed(cfg.seed, kProxyReference), per_class));

  SeparabilityReport rep;
  rep.proxy_near = datagen::domain_distance_proxy(source_ref, near_ds, cfg.seed);
  rep.proxy_far = datagen::domain_distance_proxy(source_ref, far_ds, cfg.seed);
  if (!(rep.proxy_near < rep.proxy_far))
    throw PreconditionFailed(
        "separability_check: near domain is not closer to the source than "
        "the far domain under the distance proxy");

  stss::StssConfig near_cfg = cfg.stss;
  near_cfg.seed = split_seed(cfg.seed, kSepNearScore);
  stss::StssConfig far_cfg = cfg.stss;
  far_cfg.seed = split_seed(cfg.seed, kSepFarScore);
  rep.scores_near = original_scores(pipe, near_ds.batch, near_cfg);
  rep.scores_far = original_scores(pipe, far_ds.batch, far_cfg);

  rep.mean_near = stats::mean(rep.scores_near);
  rep.mean_far = stats::mean(rep.scores_far);
  rep.median_near = stats::median(rep.scores_near);
  rep.median_far = stats::median(rep.scores_far);
  stats::RankSumResult rs = stats::mann_whitney(rep.scores_near, rep.scores_far);
  rep.u_statistic = rs.u_statistic;
  rep.p_one_sided = rs.p_one_sided;
  rep.ecdf_gap = stats::ecdf_gap(rep.scores_near, rep.scores_far);
  return rep;
}

}  // namespace tlla::harness
