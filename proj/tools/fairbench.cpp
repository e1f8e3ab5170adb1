#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fairgraph/bench.hpp"

namespace fs = std::filesystem;
using namespace fairgraph;

namespace {

struct CommonFlags {
  std::string out;
  std::uint64_t seed = 0;
  int runs = 0;
  int jobs = 0;
  std::string omit_rule = "mark";
  bool seed_set = false;
};

void add_common_flags(CLI::App* cmd, CommonFlags* flags) {
  cmd->add_option("--out", flags->out, "output directory override");
  cmd->add_option("--seed", flags->seed, "base seed override")
      ->each([flags](const std::string&) { flags->seed_set = true; });
  cmd->add_option("--runs", flags->runs, "number of runs override")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--jobs", flags->jobs, "worker thread count")->check(CLI::PositiveNumber);
  cmd->add_option("--omit-rule", flags->omit_rule, "low-accuracy handling in plots")
      ->check(CLI::IsMember({"omit", "mark"}));
}

ExperimentConfig load_config(const std::string& path, const CommonFlags& flags) {
  ExperimentConfig config = ExperimentConfig::from_file(path);
  if (!flags.out.empty()) config.out_dir = flags.out;
  if (flags.seed_set) config.base_seed = flags.seed;
  if (flags.runs > 0) config.runs = flags.runs;
  if (flags.jobs > 0) config.jobs = flags.jobs;
  config.validate();
  return config;
}

OmitRule omit_rule_from(const std::string& name) {
  return name == "omit" ? OmitRule::omit : OmitRule::mark;
}

int cmd_run(const std::string& config_path, const CommonFlags& flags) {
  const ExperimentConfig config = load_config(config_path, flags);
  std::fprintf(stderr, "dataset %s: %zu models x %zu interventions x %d runs\n",
               config.name.c_str(), config.models.size(), config.interventions.size(),
               config.runs);
  const ExperimentResult result = run_experiment(config);
  if (result.failures > 0)
    std::fprintf(stderr, "warning: %d run(s) failed and were skipped by aggregation\n",
                 result.failures);
  const auto outputs = write_experiment_outputs(config, result, omit_rule_from(flags.omit_rule));
  for (const auto& name : outputs)
    std::printf("%s\n", (fs::path(config.out_dir) / name).string().c_str());
  return result.failures > 0 ? 2 : 0;
}

int cmd_sweep_gamma(const std::string& config_path, const CommonFlags& flags) {
  const ExperimentConfig config = load_config(config_path, flags);
  const AttributedGraph graph = build_experiment_graph(config);
  fs::create_directories(config.out_dir);
  const Split split = stratified_split(graph.labels(), config.split_fractions, config.base_seed);
  const Eigen::VectorXi y_test = subset(graph.labels(), split.test);
  const Eigen::VectorXi s_test = subset(graph.sensitive(), split.test);

  nlohmann::json summary = nlohmann::json::array();
  for (const Architecture arch : config.models) {
    ModelConfig mc = config.model;
    mc.architecture = arch;
    mc.seed = config.base_seed;
    const std::string name = architecture_name(arch);
    const TrainResult tr = train(mc, graph, graph.attributes(), split);
    const EvalReport base = evaluate(tr.test_predictions.logits, y_test, s_test);
    const GammaSweepResult sweep =
        gamma_sweep(tr.test_predictions, s_test, y_test, config.gamma_grid, config.gamma_trials,
                    config.base_seed);
    const auto [gamma_plus, gamma_minus] = select_plus_minus(sweep, base.disparity);
    const std::string csv_path =
        (fs::path(config.out_dir) / ("gamma_sweep_" + name + ".csv")).string();
    const std::string svg_path = (fs::path(config.out_dir) / ("gamma_" + name + ".svg")).string();
    write_text_file(csv_path, sweep.to_csv());
    write_text_file(svg_path, emit_gamma_svg(sweep));
    nlohmann::json row;
    row["model"] = name;
    row["original_dsp"] = base.disparity;
    row["original_auc"] = base.auc;
    row["gamma_plus"] = gamma_plus;
    row["gamma_minus"] = gamma_minus;
    summary.push_back(std::move(row));
    std::printf("%s\n%s\n", csv_path.c_str(), svg_path.c_str());
  }
  const std::string summary_path = (fs::path(config.out_dir) / "gamma_selection.json").string();
  write_text_file(summary_path, summary.dump(2) + "\n");
  std::printf("%s\n", summary_path.c_str());
  return 0;
}

int cmd_gridsearch(const std::string& config_path, const CommonFlags& flags) {
  const ExperimentConfig config = load_config(config_path, flags);
  const AttributedGraph graph = build_experiment_graph(config);
  fs::create_directories(config.out_dir);

  const auto lrs = config.grid_learning_rate.empty()
                       ? std::vector<double>{config.model.learning_rate}
                       : config.grid_learning_rate;
  const auto hiddens =
      config.grid_hidden.empty() ? std::vector<int>{config.model.hidden} : config.grid_hidden;
  const auto dropouts = config.grid_dropout.empty() ? std::vector<double>{config.model.dropout}
                                                    : config.grid_dropout;
  const auto wds = config.grid_weight_decay.empty()
                       ? std::vector<double>{config.model.weight_decay}
                       : config.grid_weight_decay;

  std::ostringstream csv;
  csv << "model,learning_rate,hidden,dropout,weight_decay,val_auc_mean\n";
  nlohmann::json best = nlohmann::json::array();
  for (const Architecture arch : config.models) {
    const std::string name = architecture_name(arch);
    double best_auc = -1.0;
    nlohmann::json best_row;
    for (const double lr : lrs)
      for (const int hidden : hiddens)
        for (const double dropout : dropouts)
          for (const double wd : wds) {
            double auc_sum = 0.0;
            for (int r = 0; r < config.runs; ++r) {
              const std::uint64_t seed = config.base_seed + static_cast<std::uint64_t>(r);
              const Split split =
                  stratified_split(graph.labels(), config.split_fractions, seed);
              ModelConfig mc = config.model;
              mc.architecture = arch;
              mc.learning_rate = lr;
              mc.hidden = hidden;
              mc.dropout = dropout;
              mc.weight_decay = wd;
              mc.seed = seed;
              const TrainResult tr = train(mc, graph, graph.attributes(), split);
              Eigen::VectorXd val_logits(static_cast<Eigen::Index>(split.validation.size()));
              for (std::size_t i = 0; i < split.validation.size(); ++i)
                val_logits[static_cast<Eigen::Index>(i)] = tr.full_logits[split.validation[i]];
              const EvalReport rep =
                  evaluate(val_logits, subset(graph.labels(), split.validation),
                           subset(graph.sensitive(), split.validation));
              auc_sum += rep.auc;
            }
            const double val_auc = auc_sum / config.runs;
            csv << name << ',' << detail::format_g(lr) << ',' << hidden << ','
                << detail::format_g(dropout) << ',' << detail::format_g(wd) << ','
                << detail::format_g(val_auc) << '\n';
            if (val_auc > best_auc) {
              best_auc = val_auc;
              best_row = {{"model", name},
                          {"learning_rate", lr},
                          {"hidden", hidden},
                          {"dropout", dropout},
                          {"weight_decay", wd},
                          {"val_auc_mean", val_auc}};
            }
          }
    best.push_back(std::move(best_row));
  }
  const std::string csv_path = (fs::path(config.out_dir) / "gridsearch.csv").string();
  const std::string best_path = (fs::path(config.out_dir) / "best_settings.json").string();
  write_text_file(csv_path, csv.str());
  write_text_file(best_path, best.dump(2) + "\n");
  std::printf("%s\n%s\n", csv_path.c_str(), best_path.c_str());
  return 0;
}

int cmd_plot(const std::string& records_path, const std::string& metric,
             const CommonFlags& flags) {
  std::ifstream is(records_path, std::ios::binary);
  if (!is) throw ParseError("cannot open " + records_path);
  const std::vector<RunRecord> records = parse_runs_csv(is);
  const FairnessMetric fm = metric == "deo" ? FairnessMetric::deo : FairnessMetric::dsp;
  const fs::path dir = flags.out.empty() ? fs::path(".") : fs::path(flags.out);
  fs::create_directories(dir);
  const fs::path out = dir / ("tradeoff_" + metric + ".svg");
  write_text_file(out.string(), emit_tradeoff_svg(records, fm, omit_rule_from(flags.omit_rule)));
  std::printf("%s\n", out.string().c_str());
  return 0;
}

int cmd_synth(const std::string& spec_path, const CommonFlags& flags) {
  SyntheticSpec spec = SyntheticSpec::from_file(spec_path);
  if (flags.seed_set) spec.seed = flags.seed;
  const AttributedGraph g = generate_synthetic(spec);
  const std::string out_dir = flags.out.empty() ? "." : flags.out;
  const std::string written = save_dataset(g, out_dir, fs::path(spec_path).stem().string());
  std::printf("%s\n", written.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairness-aware node classification benchmark"};
  app.require_subcommand(1);

  std::string config_path, records_path, metric = "dsp";
  CommonFlags flags;

  CLI::App* run = app.add_subcommand("run", "run a model x intervention grid");
  run->add_option("config", config_path, "experiment config file")->required();
  add_common_flags(run, &flags);

  CLI::App* sweep = app.add_subcommand("sweep-gamma", "sweep the postprocess flip budget");
  sweep->add_option("config", config_path, "experiment config file")->required();
  add_common_flags(sweep, &flags);

  CLI::App* grid = app.add_subcommand("gridsearch", "hyperparameter search on validation AUC");
  grid->add_option("config", config_path, "experiment config file")->required();
  add_common_flags(grid, &flags);

  CLI::App* plot = app.add_subcommand("plot", "tradeoff plot from a runs csv");
  plot->add_option("records", records_path, "runs.csv produced by `run`")->required();
  plot->add_option("--metric", metric, "fairness metric")
      ->check(CLI::IsMember({"dsp", "deo"}));
  add_common_flags(plot, &flags);

  CLI::App* synth = app.add_subcommand("synth", "generate and save a synthetic dataset");
  synth->add_option("spec", config_path, "synthetic spec file")->required();
  add_common_flags(synth, &flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, flags);
    if (sweep->parsed()) return cmd_sweep_gamma(config_path, flags);
    if (grid->parsed()) return cmd_gridsearch(config_path, flags);
    if (plot->parsed()) return cmd_plot(records_path, metric, flags);
    if (synth->parsed()) return cmd_synth(config_path, flags);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
