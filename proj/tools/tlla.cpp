// tlla — command-line front end: data generation, pretraining, prompt
// tuning, test-time adaptation, sweeps, separability analysis and
// loss-landscape export.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tlla/harness.hpp"
#include "tlla/rng.hpp"

namespace fs = std::filesystem;
using tlla::harness::Pipeline;
using tlla::harness::RunConfig;

namespace {

void print_json_error(const std::string& kind, const std::string& msg) {
  nlohmann::json j{{"error", kind}, {"message", msg}};
  std::cerr << j.dump() << "\n";
}

struct CommonOpts {
  std::optional<std::string> config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config, "JSON config file");
  cmd->add_option("--set", o.sets,
                  "dotted-path override, e.g. stss.rho_prime=0.3");
  cmd->add_option("--seed", o.seed, "run seed (overrides config)");
  cmd->add_option("--out", o.out, "output directory (overrides config)");
}

void cmd_gen_data(const RunConfig& cfg) {
  fs::create_directories(cfg.out);
  tlla::datagen::DomainDataset source = tlla::datagen::gen_domain(
      cfg.source_spec(tlla::split_seed(cfg.seed, 3), cfg.data.n_train_per_class));
  tlla::datagen::save_csv(source, (fs::path(cfg.out) / "source.csv").string());
  for (std::size_t t = 0; t < cfg.data.target_rotations.size(); ++t) {
    double rot = cfg.data.target_rotations[t];
    tlla::datagen::DomainDataset target = tlla::datagen::gen_domain(
        cfg.target_spec(rot, tlla::split_seed(cfg.seed, 300 + t),
                        cfg.data.n_test_per_class));
    char name[64];
    std::snprintf(name, sizeof name, "target_rot_%g.csv", rot);
    tlla::datagen::save_csv(target, (fs::path(cfg.out) / name).string());
  }
  std::cout << "datasets written to " << cfg.out << "\n";
}

void cmd_pretrain(const RunConfig& cfg) {
  fs::create_directories(cfg.out);
  tlla::datagen::DomainDataset corpus = tlla::datagen::gen_domain(
      cfg.source_spec(tlla::split_seed(cfg.seed, 1), cfg.pretrain.n_per_class));
  tlla::clipette::PretrainResult pr = tlla::clipette::pretrain(
      cfg.sizes, corpus.batch, tlla::split_seed(cfg.seed, 2),
      cfg.pretrain.epochs, cfg.pretrain.lr, cfg.pretrain.batch_size);
  std::string path = (fs::path(cfg.out) / "checkpoint.json").string();
  tlla::clipette::save_checkpoint(pr.model, pr.prompts, path);
  std::cout << "checkpoint written to " << path << "\n";
}

void cmd_tune(const RunConfig& cfg) {
  fs::create_directories(cfg.out);
  Pipeline pipe = tlla::harness::prepare(cfg);
  std::string path = (fs::path(cfg.out) / "checkpoint.json").string();
  tlla::clipette::save_checkpoint(pipe.model, pipe.prompts, path);
  tlla::sapt::write_training_log(
      pipe.tune_log, (fs::path(cfg.out) / "training_log.jsonl").string());
  std::cout << "tuned checkpoint written to " << path << "\n";
}

void cmd_adapt(const RunConfig& cfg) {
  tlla::harness::MetricsReport rep = tlla::harness::run(cfg);
  std::cout << "metrics written to " << (fs::path(cfg.out) / "metrics.json").string()
            << "\n";
  for (const auto& d : rep.domains)
    std::printf("  %-18s accuracy %.4f  mean_score %.4f\n", d.name.c_str(),
                d.accuracy, d.mean_score);
}

void cmd_sweep(const RunConfig& cfg) {
  auto rows = tlla::harness::sweep(cfg, cfg.sweep.param, cfg.sweep.values);
  std::cout << "sweep table written to "
            << (fs::path(cfg.out) / ("sweep_" + cfg.sweep.param + ".csv")).string()
            << " (" << rows.size() << " rows)\n";
}

void cmd_separability(const RunConfig& cfg) {
  Pipeline pipe = tlla::harness::prepare(cfg);
  tlla::datagen::DomainSpec near =
      cfg.target_spec(cfg.separability.near_rot, 0, 1);
  tlla::datagen::DomainSpec far =
      cfg.target_spec(cfg.separability.far_rot, 0, 1);
  tlla::harness::SeparabilityReport rep = tlla::harness::separability_check(
      cfg, pipe, near, far, cfg.separability.n_samples);

  nlohmann::json j{{"proxy_near", rep.proxy_near},
                   {"proxy_far", rep.proxy_far},
                   {"mean_near", rep.mean_near},
                   {"mean_far", rep.mean_far},
                   {"median_near", rep.median_near},
                   {"median_far", rep.median_far},
                   {"u_statistic", rep.u_statistic},
                   {"p_one_sided", rep.p_one_sided},
                   {"ecdf_gap", rep.ecdf_gap},
                   {"seed", cfg.seed},
                   {"config_digest", cfg.digest()}};
  fs::create_directories(cfg.out);
  std::string path = (fs::path(cfg.out) / "separability.json").string();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw tlla::IoError("cannot write: " + path);
  f << j.dump(2) << "\n";
  std::cout << "separability report written to " << path << "\n";
}

void cmd_landscape(const RunConfig& cfg) {
  Pipeline pipe = tlla::harness::prepare(cfg);
  auto [d1, d2] =
      tlla::landscape::sample_directions(pipe.prompts, tlla::split_seed(cfg.seed, 500));

  tlla::landscape::LossKind kind = cfg.landscape.loss == "entropy"
                                       ? tlla::landscape::LossKind::Entropy
                                       : tlla::landscape::LossKind::CE;
  tlla::clipette::LabeledBatch data;
  if (kind == tlla::landscape::LossKind::CE) {
    data = tlla::datagen::gen_domain(
               cfg.source_spec(tlla::split_seed(cfg.seed, 3),
                               cfg.data.n_train_per_class))
               .batch;
  } else {
    // A single test view from the first shifted target.
    double rot = cfg.data.target_rotations.empty()
                     ? 0.0
                     : cfg.data.target_rotations[0];
    tlla::datagen::DomainDataset t = tlla::datagen::gen_domain(
        cfg.target_spec(rot, tlla::split_seed(cfg.seed, 300), 1));
    data.inputs = tlla::Tensor({1, cfg.sizes.d_in});
    for (std::size_t j = 0; j < cfg.sizes.d_in; ++j)
      data.inputs.at(0, j) = t.batch.inputs.at(0, j);
    data.labels = {t.batch.labels[0]};
  }

  tlla::landscape::LandscapeGrid grid = tlla::landscape::loss_grid(
      pipe.model, pipe.prompts, data, d1, d2, cfg.landscape.resolution,
      cfg.landscape.span, kind);
  fs::create_directories(cfg.out);
  char name[96];
  std::snprintf(name, sizeof name, "landscape_%s_%llu.csv",
                cfg.landscape.tag.c_str(), (unsigned long long)cfg.seed);
  std::string path = (fs::path(cfg.out) / name).string();
  tlla::landscape::export_grid(grid, path);
  std::cout << "landscape grid written to " << path << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"test-time loss-landscape adaptation toolkit"};
  app.require_subcommand(1);

  struct Cmd {
    const char* name;
    const char* help;
    void (*fn)(const RunConfig&);
  };
  const std::vector<Cmd> cmds = {
      {"gen-data", "generate the synthetic source/target datasets", cmd_gen_data},
      {"pretrain", "pretrain the frozen dual-encoder model", cmd_pretrain},
      {"tune", "pretrain (or load) and run prompt tuning", cmd_tune},
      {"adapt", "full pipeline: pretrain -> tune -> test-time adaptation",
       cmd_adapt},
      {"sweep", "re-run adaptation over a grid of one parameter", cmd_sweep},
      {"separability", "compare sharpness scores across two shifted domains",
       cmd_separability},
      {"landscape", "export a 2D loss-landscape grid as CSV", cmd_landscape},
  };

  std::vector<CommonOpts> opts(cmds.size());
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    CLI::App* sub = app.add_subcommand(cmds[i].name, cmds[i].help);
    add_common(sub, opts[i]);
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    print_json_error("UsageError", e.what());
    return 1;
  }

  for (std::size_t i = 0; i < cmds.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    RunConfig cfg;
    try {
      cfg = RunConfig::from_sources(opts[i].config, opts[i].sets,
                                    opts[i].seed, opts[i].out);
    } catch (const tlla::Error& e) {
      print_json_error(e.kind(), e.what());
      return 1;
    } catch (const std::exception& e) {
      print_json_error("ConfigError", e.what());
      return 1;
    }
    try {
      cmds[i].fn(cfg);
      return 0;
    } catch (const tlla::Error& e) {
      print_json_error(e.kind(), e.what());
      return 2;
    } catch (const std::exception& e) {
      print_json_error("RuntimeError", e.what());
      return 2;
    }
  }
  return 1;
}
