#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fairgraph/config.hpp"
#include "fairgraph/dataset.hpp"
#include "fairgraph/error.hpp"
#include "fairgraph/gnn.hpp"
#include "fairgraph/graph.hpp"
#include "fairgraph/interventions.hpp"
#include "fairgraph/metrics.hpp"
#include "fairgraph/rng.hpp"

namespace fairgraph {

enum class Intervention {
  original,
  unaware,
  pfr_x,
  pfr_a,
  pfr_ax,
  postprocess_plus,
  postprocess_minus,
};

inline std::string intervention_name(Intervention iv) {
  switch (iv) {
    case Intervention::original: return "Original";
    case Intervention::unaware: return "Unaware";
    case Intervention::pfr_x: return "PFR-X";
    case Intervention::pfr_a: return "PFR-A";
    case Intervention::pfr_ax: return "PFR-AX";
    case Intervention::postprocess_plus: return "PostProcess+";
    case Intervention::postprocess_minus: return "PostProcess-";
  }
  throw ConfigError("unknown intervention");
}

inline Intervention intervention_from(std::string name) {
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::replace(name.begin(), name.end(), '_', '-');
  if (name == "original") return Intervention::original;
  if (name == "unaware") return Intervention::unaware;
  if (name == "pfr-x" || name == "pfrx") return Intervention::pfr_x;
  if (name == "pfr-a" || name == "pfra") return Intervention::pfr_a;
  if (name == "pfr-ax" || name == "pfrax") return Intervention::pfr_ax;
  if (name == "postprocess+" || name == "postprocess-plus" || name == "postprocessplus")
    return Intervention::postprocess_plus;
  if (name == "postprocess-" || name == "postprocess-minus" || name == "postprocessminus")
    return Intervention::postprocess_minus;
  throw ConfigError("unknown intervention: '" + name + "'");
}

namespace detail {

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(text);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::vector<double> parse_double_list(const std::string& text, const std::string& key) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) {
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(item, &pos);
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': '" + item + "' is not a number");
    }
    if (pos != item.size())
      throw ConfigError("key '" + key + "': '" + item + "' is not a number");
    out.push_back(v);
  }
  return out;
}

inline std::string format_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace detail

// Full experiment description: one data source, a model list, an
// intervention list, and the shared hyperparameters of every stage.
struct ExperimentConfig {
  std::string name = "synthetic";
  std::optional<DatasetSpec> dataset;
  std::optional<SyntheticSpec> synthetic;
  std::vector<Architecture> models{Architecture::gcn};
  std::vector<Intervention> interventions{Intervention::original};
  int runs = 5;
  std::uint64_t base_seed = 0;
  std::string out_dir = "out";
  int jobs = 1;
  std::array<double, 3> split_fractions{0.5, 0.25, 0.25};

  ModelConfig model;  // architecture field is overridden per entry of `models`
  PfrConfig pfr;
  NetembedConfig netembed;
  int reverser_rounds = 10;
  std::vector<double> gamma_grid = default_gamma_grid();
  int gamma_trials = 20;

  // Hyperparameter lists for the gridsearch subcommand; empty = current value.
  std::vector<double> grid_learning_rate, grid_dropout, grid_weight_decay;
  std::vector<int> grid_hidden;

  void validate() const {
    if (dataset.has_value() == synthetic.has_value())
      throw ConfigError("experiment: exactly one of dataset_spec and synthetic_spec is required");
    if (models.empty()) throw ConfigError("experiment: at least one model is required");
    if (interventions.empty())
      throw ConfigError("experiment: at least one intervention is required");
    for (std::size_t i = 0; i < interventions.size(); ++i)
      for (std::size_t j = i + 1; j < interventions.size(); ++j)
        if (interventions[i] == interventions[j])
          throw ConfigError("experiment: duplicate intervention " +
                            intervention_name(interventions[i]));
    const bool has_pp = std::any_of(interventions.begin(), interventions.end(), [](Intervention v) {
      return v == Intervention::postprocess_plus || v == Intervention::postprocess_minus;
    });
    const bool has_orig = std::any_of(interventions.begin(), interventions.end(),
                                      [](Intervention v) { return v == Intervention::original; });
    if (has_pp && !has_orig)
      throw ConfigError("experiment: PostProcess interventions require Original in the list");
    if (runs < 1) throw ConfigError("experiment: runs must be >= 1");
    if (jobs < 1) throw ConfigError("experiment: jobs must be >= 1");
    if (reverser_rounds < 0) throw ConfigError("experiment: reverser_rounds must be >= 0");
    if (gamma_trials < 1) throw ConfigError("experiment: gamma_trials must be >= 1");
    if (gamma_grid.empty()) throw ConfigError("experiment: gamma grid is empty");
    for (std::size_t i = 1; i < gamma_grid.size(); ++i)
      if (gamma_grid[i] <= gamma_grid[i - 1])
        throw ConfigError("experiment: gamma grid must be strictly increasing");
    model.validate();
  }

  // Reads a key-value experiment file. Paths inside are resolved relative to
  // the experiment file's directory.
  static ExperimentConfig from_file(const std::string& path) {
    const KeyValueConfig cfg = KeyValueConfig::from_file(path);
    cfg.require_keys(
        {"name",         "dataset_spec",   "synthetic_spec",  "models",
         "interventions", "runs",          "seed",            "out",
         "jobs",          "train_fraction", "val_fraction",   "test_fraction",
         "layers",        "hidden",        "dropout",         "weight_decay",
         "learning_rate", "epochs",        "pfr_k",           "pfr_t",
         "pfr_p",         "pfr_alpha",     "pfr_dims",        "embed_window",
         "embed_b",       "embed_k",       "embed_volume",    "reverser_rounds",
         "gamma_grid",    "gamma_trials",  "grid_learning_rate", "grid_hidden",
         "grid_dropout",  "grid_weight_decay"},
        {});
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    const auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    ExperimentConfig e;
    if (cfg.has("dataset_spec")) {
      e.dataset = DatasetSpec::from_file(resolve(cfg.get_string("dataset_spec")));
      e.name = e.dataset->name;
    }
    if (cfg.has("synthetic_spec")) {
      e.synthetic = SyntheticSpec::from_file(resolve(cfg.get_string("synthetic_spec")));
      e.name = "synthetic";
    }
    e.name = cfg.get_string("name", e.name);
    if (cfg.has("models")) {
      e.models.clear();
      for (const auto& m : detail::split_list(cfg.get_string("models")))
        e.models.push_back(architecture_from(m));
    }
    if (cfg.has("interventions")) {
      e.interventions.clear();
      for (const auto& iv : detail::split_list(cfg.get_string("interventions")))
        e.interventions.push_back(intervention_from(iv));
    }
    e.runs = static_cast<int>(cfg.get_int("runs", e.runs));
    e.base_seed = cfg.get_u64("seed", e.base_seed);
    e.out_dir = cfg.get_string("out", e.out_dir);
    e.jobs = static_cast<int>(cfg.get_int("jobs", e.jobs));
    e.split_fractions[0] = cfg.get_double("train_fraction", e.split_fractions[0]);
    e.split_fractions[1] = cfg.get_double("val_fraction", e.split_fractions[1]);
    e.split_fractions[2] = cfg.get_double("test_fraction", e.split_fractions[2]);
    e.model.layers = static_cast<int>(cfg.get_int("layers", e.model.layers));
    e.model.hidden = static_cast<int>(cfg.get_int("hidden", e.model.hidden));
    e.model.dropout = cfg.get_double("dropout", e.model.dropout);
    e.model.weight_decay = cfg.get_double("weight_decay", e.model.weight_decay);
    e.model.learning_rate = cfg.get_double("learning_rate", e.model.learning_rate);
    e.model.epochs = static_cast<int>(cfg.get_int("epochs", e.model.epochs));
    e.pfr.k = static_cast<int>(cfg.get_int("pfr_k", e.pfr.k));
    if (cfg.has("pfr_t")) e.pfr.t = cfg.get_double("pfr_t");
    e.pfr.p = static_cast<int>(cfg.get_int("pfr_p", e.pfr.p));
    e.pfr.alpha = cfg.get_double("pfr_alpha", e.pfr.alpha);
    e.pfr.out_dims = static_cast<int>(cfg.get_int("pfr_dims", e.pfr.out_dims));
    e.netembed.C = static_cast<int>(cfg.get_int("embed_window", e.netembed.C));
    e.netembed.b = cfg.get_double("embed_b", e.netembed.b);
    e.netembed.k = static_cast<int>(cfg.get_int("embed_k", e.netembed.k));
    if (cfg.has("embed_volume")) {
      const std::string v = cfg.get_string("embed_volume");
      if (v == "paper") e.netembed.volume = VolumeConvention::paper;
      else if (v == "standard") e.netembed.volume = VolumeConvention::standard_total_degree;
      else throw ConfigError("embed_volume must be 'paper' or 'standard'");
    }
    e.reverser_rounds = static_cast<int>(cfg.get_int("reverser_rounds", e.reverser_rounds));
    if (cfg.has("gamma_grid"))
      e.gamma_grid = detail::parse_double_list(cfg.get_string("gamma_grid"), "gamma_grid");
    e.gamma_trials = static_cast<int>(cfg.get_int("gamma_trials", e.gamma_trials));
    if (cfg.has("grid_learning_rate"))
      e.grid_learning_rate =
          detail::parse_double_list(cfg.get_string("grid_learning_rate"), "grid_learning_rate");
    if (cfg.has("grid_hidden"))
      for (const double v : detail::parse_double_list(cfg.get_string("grid_hidden"), "grid_hidden"))
        e.grid_hidden.push_back(static_cast<int>(v));
    if (cfg.has("grid_dropout"))
      e.grid_dropout = detail::parse_double_list(cfg.get_string("grid_dropout"), "grid_dropout");
    if (cfg.has("grid_weight_decay"))
      e.grid_weight_decay =
          detail::parse_double_list(cfg.get_string("grid_weight_decay"), "grid_weight_decay");
    e.validate();
    return e;
  }

  // Canonical key-value view of the effective configuration; hashed into the
  // manifest so reruns can be matched to their config.
  std::vector<std::pair<std::string, std::string>> to_key_values() const {
    std::vector<std::pair<std::string, std::string>> kv;
    kv.emplace_back("name", name);
    kv.emplace_back("source", dataset ? "dataset:" + dataset->name : "synthetic");
    if (synthetic) {
      const auto& s = *synthetic;
      kv.emplace_back("synthetic.n", std::to_string(s.n));
      kv.emplace_back("synthetic.h_s", detail::format_g(s.homophily_sensitive));
      kv.emplace_back("synthetic.h_l", detail::format_g(s.homophily_label));
      kv.emplace_back("synthetic.protected_fraction", detail::format_g(s.protected_fraction));
      kv.emplace_back("synthetic.pos_rate_protected", detail::format_g(s.pos_rate_protected));
      kv.emplace_back("synthetic.pos_rate_other", detail::format_g(s.pos_rate_other));
      kv.emplace_back("synthetic.dims", std::to_string(s.dims));
      kv.emplace_back("synthetic.noise", detail::format_g(s.noise));
      kv.emplace_back("synthetic.label_signal", detail::format_g(s.label_signal));
      kv.emplace_back("synthetic.avg_degree", detail::format_g(s.avg_degree));
      kv.emplace_back("synthetic.seed", std::to_string(s.seed));
    }
    std::string model_list, iv_list;
    for (const auto a : models) model_list += (model_list.empty() ? "" : ",") + architecture_name(a);
    for (const auto iv : interventions)
      iv_list += (iv_list.empty() ? "" : ",") + intervention_name(iv);
    kv.emplace_back("models", model_list);
    kv.emplace_back("interventions", iv_list);
    kv.emplace_back("runs", std::to_string(runs));
    kv.emplace_back("seed", std::to_string(base_seed));
    kv.emplace_back("split", detail::format_g(split_fractions[0]) + "/" +
                                 detail::format_g(split_fractions[1]) + "/" +
                                 detail::format_g(split_fractions[2]));
    kv.emplace_back("layers", std::to_string(model.layers));
    kv.emplace_back("hidden", std::to_string(model.hidden));
    kv.emplace_back("dropout", detail::format_g(model.dropout));
    kv.emplace_back("weight_decay", detail::format_g(model.weight_decay));
    kv.emplace_back("learning_rate", detail::format_g(model.learning_rate));
    kv.emplace_back("epochs", std::to_string(model.epochs));
    kv.emplace_back("pfr.k", std::to_string(pfr.k));
    kv.emplace_back("pfr.t", pfr.t ? detail::format_g(*pfr.t) : "auto");
    kv.emplace_back("pfr.p", std::to_string(pfr.p));
    kv.emplace_back("pfr.alpha", detail::format_g(pfr.alpha));
    kv.emplace_back("pfr.dims", std::to_string(pfr.out_dims));
    kv.emplace_back("embed.window", std::to_string(netembed.C));
    kv.emplace_back("embed.b", detail::format_g(netembed.b));
    kv.emplace_back("embed.k", std::to_string(netembed.k));
    kv.emplace_back("embed.volume",
                    netembed.volume == VolumeConvention::paper ? "paper" : "standard");
    kv.emplace_back("reverser_rounds", std::to_string(reverser_rounds));
    std::string grid;
    for (const double g : gamma_grid) grid += (grid.empty() ? "" : ",") + detail::format_g(g);
    kv.emplace_back("gamma_grid", grid);
    kv.emplace_back("gamma_trials", std::to_string(gamma_trials));
    return kv;
  }
};

struct StageTimings {
  double debias = 0.0;
  double embed = 0.0;
  double train = 0.0;
  double postprocess = 0.0;
  double total = 0.0;
};

struct RunRecord {
  std::string dataset;
  std::string model;
  std::string intervention;
  std::uint64_t seed = 0;
  EvalReport report;
  StageTimings timings;
  bool failed = false;
  std::string error;
};

struct ExperimentResult {
  std::vector<RunRecord> records;
  int failures = 0;
};

inline Eigen::VectorXi subset(const Eigen::VectorXi& full, const std::vector<int>& idx) {
  Eigen::VectorXi out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = full[idx[i]];
  return out;
}

namespace detail {

inline double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// Mean evaluation report over `trials` seeded postprocess applications at a
// fixed gamma, using the same per-trial seed derivation as gamma_sweep so
// the numbers agree with the sweep at that grid point.
inline EvalReport averaged_postprocess_report(const PredictionSet& preds,
                                              const Eigen::VectorXi& s_test,
                                              const Eigen::VectorXi& y_test, double gamma,
                                              int trials, std::uint64_t seed) {
  EvalReport acc;
  acc.auc = acc.f1 = acc.disparity = acc.inequality = 0.0;
  acc.n_s1y1 = acc.n_s1y0 = acc.n_s0y1 = acc.n_s0y0 = 0.0;
  for (int t = 0; t < trials; ++t) {
    PostProcessConfig cfg;
    cfg.gamma = gamma;
    cfg.trials = trials;
    cfg.seed = Rng::mix(seed, static_cast<std::uint64_t>(t));
    const PredictionSet flipped = postprocess(preds, s_test, cfg);
    const EvalReport rep = evaluate(flipped.logits, y_test, s_test);
    acc.auc += rep.auc;
    acc.f1 += rep.f1;
    acc.disparity += rep.disparity;
    acc.inequality += rep.inequality;
    acc.n_s1y1 += rep.n_s1y1;
    acc.n_s1y0 += rep.n_s1y0;
    acc.n_s0y1 += rep.n_s0y1;
    acc.n_s0y0 += rep.n_s0y0;
  }
  // Divide rather than multiply by a reciprocal so the means match
  // gamma_sweep's bitwise, which uses the same accumulation order.
  acc.auc /= trials;
  acc.f1 /= trials;
  acc.disparity /= trials;
  acc.inequality /= trials;
  acc.n_s1y1 /= trials;
  acc.n_s1y0 /= trials;
  acc.n_s0y1 /= trials;
  acc.n_s0y0 /= trials;
  return acc;
}

}  // namespace detail

inline AttributedGraph build_experiment_graph(const ExperimentConfig& config) {
  if (config.dataset) return load_dataset(*config.dataset);
  return generate_synthetic(*config.synthetic);
}

// Runs the model × intervention × seed grid. Record order is fixed
// (model-major, then intervention, then seed) and every cell is seeded from
// base_seed + run index alone, so results are independent of `jobs`.
// A failing cell is recorded with its error and skipped by aggregation.
inline ExperimentResult run_experiment(const ExperimentConfig& config,
                                       const AttributedGraph& graph) {
  config.validate();
  const std::size_t n_models = config.models.size();
  const std::size_t n_iv = config.interventions.size();
  const std::size_t n_runs = static_cast<std::size_t>(config.runs);

  ExperimentResult result;
  result.records.resize(n_models * n_iv * n_runs);
  const auto record_index = [&](std::size_t mi, std::size_t ii, std::size_t r) {
    return (mi * n_iv + ii) * n_runs + r;
  };

  // One task per (model, run): PostProcess arms depend on the Original
  // predictions of the same cell, so a task owns the whole intervention row.
  struct Task {
    std::size_t mi, r;
  };
  std::vector<Task> tasks;
  tasks.reserve(n_models * n_runs);
  for (std::size_t mi = 0; mi < n_models; ++mi)
    for (std::size_t r = 0; r < n_runs; ++r) tasks.push_back({mi, r});

  const auto has_iv = [&](Intervention iv) {
    return std::find(config.interventions.begin(), config.interventions.end(), iv) !=
           config.interventions.end();
  };
  const auto iv_slot = [&](Intervention iv) {
    return static_cast<std::size_t>(
        std::find(config.interventions.begin(), config.interventions.end(), iv) -
        config.interventions.begin());
  };
  const bool wants_pp =
      has_iv(Intervention::postprocess_plus) || has_iv(Intervention::postprocess_minus);

  const auto run_task = [&](const Task& task) {
    const std::uint64_t seed = config.base_seed + task.r;
    ModelConfig mc = config.model;
    mc.architecture = config.models[task.mi];
    mc.seed = seed;
    const std::string model_name = architecture_name(mc.architecture);

    const auto init_record = [&](Intervention iv) {
      RunRecord rec;
      rec.dataset = config.name;
      rec.model = model_name;
      rec.intervention = intervention_name(iv);
      rec.seed = seed;
      return rec;
    };

    Split split;
    try {
      split = stratified_split(graph.labels(), config.split_fractions, seed);
    } catch (const std::exception& e) {
      for (std::size_t ii = 0; ii < n_iv; ++ii) {
        RunRecord rec = init_record(config.interventions[ii]);
        rec.failed = true;
        rec.error = e.what();
        result.records[record_index(task.mi, ii, task.r)] = std::move(rec);
      }
      return;
    }
    const Eigen::VectorXi y_test = subset(graph.labels(), split.test);
    const Eigen::VectorXi s_test = subset(graph.sensitive(), split.test);

    // Train on a (possibly transformed) graph and evaluate test predictions.
    const auto train_cell = [&](const AttributedGraph& data, RunRecord& rec) {
      const double t0 = detail::now_seconds();
      const TrainResult tr = train(mc, data, data.attributes(), split);
      rec.timings.train = detail::now_seconds() - t0;
      rec.report = evaluate(tr.test_predictions.logits, y_test, s_test);
      return tr;
    };

    std::optional<PredictionSet> original_preds;
    double original_disparity = 0.0;

    // Original runs first so the PostProcess arms can reuse its predictions.
    if (has_iv(Intervention::original) || wants_pp) {
      RunRecord rec = init_record(Intervention::original);
      const double t0 = detail::now_seconds();
      try {
        const TrainResult tr = train_cell(graph, rec);
        original_preds = tr.test_predictions;
        original_disparity = rec.report.disparity;
      } catch (const std::exception& e) {
        rec.failed = true;
        rec.error = e.what();
      }
      rec.timings.total = detail::now_seconds() - t0;
      rec.report.runtime_seconds = rec.timings.total;
      if (has_iv(Intervention::original))
        result.records[record_index(task.mi, iv_slot(Intervention::original), task.r)] = rec;
    }

    for (std::size_t ii = 0; ii < n_iv; ++ii) {
      const Intervention iv = config.interventions[ii];
      if (iv == Intervention::original) continue;  // handled above
      RunRecord rec = init_record(iv);
      const double t0 = detail::now_seconds();
      try {
        switch (iv) {
          case Intervention::unaware: {
            const double d0 = detail::now_seconds();
            const AttributedGraph data = unaware(graph);
            rec.timings.debias = detail::now_seconds() - d0;
            train_cell(data, rec);
            break;
          }
          case Intervention::pfr_x: {
            const double d0 = detail::now_seconds();
            const AttributedGraph data = pfr_x(graph, config.pfr);
            rec.timings.debias = detail::now_seconds() - d0;
            train_cell(data, rec);
            break;
          }
          case Intervention::pfr_a: {
            const double d0 = detail::now_seconds();
            const AttributedGraph data =
                pfr_a(graph, config.netembed, config.pfr, config.reverser_rounds);
            rec.timings.embed = detail::now_seconds() - d0;
            train_cell(data, rec);
            break;
          }
          case Intervention::pfr_ax: {
            const double d0 = detail::now_seconds();
            const AttributedGraph attrs = pfr_x(graph, config.pfr);
            rec.timings.debias = detail::now_seconds() - d0;
            const double e0 = detail::now_seconds();
            const AttributedGraph adj =
                pfr_a(graph, config.netembed, config.pfr, config.reverser_rounds);
            rec.timings.embed = detail::now_seconds() - e0;
            train_cell(attrs.with_edges(adj.edge_list()), rec);
            break;
          }
          case Intervention::postprocess_plus:
          case Intervention::postprocess_minus: {
            if (!original_preds.has_value())
              throw Error("original training failed; no predictions to post-process");
            const double p0 = detail::now_seconds();
            const GammaSweepResult sweep =
                gamma_sweep(*original_preds, s_test, y_test, config.gamma_grid,
                            config.gamma_trials, seed);
            const auto [gamma_plus, gamma_minus] =
                select_plus_minus(sweep, original_disparity);
            const double gamma =
                iv == Intervention::postprocess_plus ? gamma_plus : gamma_minus;
            rec.report = detail::averaged_postprocess_report(
                *original_preds, s_test, y_test, gamma, config.gamma_trials, seed);
            rec.timings.postprocess = detail::now_seconds() - p0;
            break;
          }
          case Intervention::original: break;
        }
      } catch (const std::exception& e) {
        rec.failed = true;
        rec.error = e.what();
      }
      rec.timings.total = detail::now_seconds() - t0;
      rec.report.runtime_seconds = rec.timings.total;
      result.records[record_index(task.mi, ii, task.r)] = std::move(rec);
    }
  };

  const int workers = std::min<int>(config.jobs, static_cast<int>(tasks.size()));
  if (workers <= 1) {
    for (const auto& task : tasks) run_task(task);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= tasks.size()) return;
          run_task(tasks[i]);
        }
      });
    for (auto& t : pool) t.join();
  }

  for (const auto& rec : result.records) result.failures += rec.failed ? 1 : 0;
  return result;
}

inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  return run_experiment(config, build_experiment_graph(config));
}

// ---------------------------------------------------------------------------
// Report emission. Every CSV/JSON/SVG below is a pure function of the
// records, so identical experiments serialize byte-identically; wall-clock
// durations are confined to the timings report.

inline std::string runs_csv_header() {
  return "dataset,model,intervention,seed,auc,f1,disparity,inequality,"
         "n_s1y1,n_s1y0,n_s0y1,n_s0y0";
}

inline std::string runs_csv(const std::vector<RunRecord>& records) {
  std::ostringstream os;
  os << runs_csv_header() << '\n';
  for (const auto& r : records) {
    if (r.failed) continue;
    os << r.dataset << ',' << r.model << ',' << r.intervention << ',' << r.seed << ','
       << detail::format_g(r.report.auc) << ',' << detail::format_g(r.report.f1) << ','
       << detail::format_g(r.report.disparity) << ',' << detail::format_g(r.report.inequality)
       << ',' << detail::format_g(r.report.n_s1y1) << ',' << detail::format_g(r.report.n_s1y0)
       << ',' << detail::format_g(r.report.n_s0y1) << ',' << detail::format_g(r.report.n_s0y0)
       << '\n';
  }
  return os.str();
}

inline std::vector<RunRecord> parse_runs_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("runs csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != runs_csv_header())
    throw ParseError("runs csv: unexpected header '" + line + "'");
  std::vector<RunRecord> out;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cells = detail::split_list(line);
    if (cells.size() != 12)
      throw ParseError("runs csv:" + std::to_string(lineno) + ": expected 12 fields");
    RunRecord r;
    r.dataset = cells[0];
    r.model = cells[1];
    r.intervention = cells[2];
    try {
      r.seed = std::stoull(cells[3]);
      r.report.auc = std::stod(cells[4]);
      r.report.f1 = std::stod(cells[5]);
      r.report.disparity = std::stod(cells[6]);
      r.report.inequality = std::stod(cells[7]);
      r.report.n_s1y1 = std::stod(cells[8]);
      r.report.n_s1y0 = std::stod(cells[9]);
      r.report.n_s0y1 = std::stod(cells[10]);
      r.report.n_s0y0 = std::stod(cells[11]);
    } catch (const std::exception&) {
      throw ParseError("runs csv:" + std::to_string(lineno) + ": malformed number");
    }
    out.push_back(std::move(r));
  }
  return out;
}

struct AggregateCell {
  std::string dataset, model, intervention;
  int samples = 0;
  double auc_mean = 0, auc_std = 0;
  double f1_mean = 0, f1_std = 0;
  double dsp_mean = 0, dsp_std = 0;
  double deo_mean = 0, deo_std = 0;
};

// Mean and population standard deviation per (dataset, model, intervention),
// in first-appearance order of the records. Failed records are skipped.
inline std::vector<AggregateCell> aggregate_records(const std::vector<RunRecord>& records) {
  std::vector<AggregateCell> cells;
  std::vector<std::vector<const RunRecord*>> members;
  for (const auto& r : records) {
    if (r.failed) continue;
    std::size_t ci = 0;
    for (; ci < cells.size(); ++ci)
      if (cells[ci].dataset == r.dataset && cells[ci].model == r.model &&
          cells[ci].intervention == r.intervention)
        break;
    if (ci == cells.size()) {
      AggregateCell c;
      c.dataset = r.dataset;
      c.model = r.model;
      c.intervention = r.intervention;
      cells.push_back(std::move(c));
      members.emplace_back();
    }
    members[ci].push_back(&r);
  }
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    auto& c = cells[ci];
    const auto& group = members[ci];
    c.samples = static_cast<int>(group.size());
    const auto stats = [&](auto metric, double* mean, double* stdev) {
      double sum = 0, sum_sq = 0;
      for (const RunRecord* r : group) {
        const double v = metric(r->report);
        sum += v;
        sum_sq += v * v;
      }
      *mean = sum / c.samples;
      *stdev = std::sqrt(std::max(0.0, sum_sq / c.samples - *mean * *mean));
    };
    stats([](const EvalReport& r) { return r.auc; }, &c.auc_mean, &c.auc_std);
    stats([](const EvalReport& r) { return r.f1; }, &c.f1_mean, &c.f1_std);
    stats([](const EvalReport& r) { return r.disparity; }, &c.dsp_mean, &c.dsp_std);
    stats([](const EvalReport& r) { return r.inequality; }, &c.deo_mean, &c.deo_std);
  }
  return cells;
}

inline std::string aggregate_csv(const std::vector<AggregateCell>& cells) {
  std::ostringstream os;
  os << "dataset,model,intervention,samples,auc_mean,auc_std,f1_mean,f1_std,"
        "dsp_mean,dsp_std,deo_mean,deo_std\n";
  for (const auto& c : cells)
    os << c.dataset << ',' << c.model << ',' << c.intervention << ',' << c.samples << ','
       << detail::format_g(c.auc_mean) << ',' << detail::format_g(c.auc_std) << ','
       << detail::format_g(c.f1_mean) << ',' << detail::format_g(c.f1_std) << ','
       << detail::format_g(c.dsp_mean) << ',' << detail::format_g(c.dsp_std) << ','
       << detail::format_g(c.deo_mean) << ',' << detail::format_g(c.deo_std) << '\n';
  return os.str();
}

// Wide table: one row per (dataset, model, metric), one column per
// intervention, cells formatted "mean±std" to three decimals.
inline std::string summary_table_csv(const std::vector<AggregateCell>& cells) {
  std::vector<std::string> interventions;
  std::vector<std::pair<std::string, std::string>> groups;  // (dataset, model)
  for (const auto& c : cells) {
    if (std::find(interventions.begin(), interventions.end(), c.intervention) ==
        interventions.end())
      interventions.push_back(c.intervention);
    const auto g = std::make_pair(c.dataset, c.model);
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
  }
  const auto find_cell = [&](const std::string& dataset, const std::string& model,
                             const std::string& iv) -> const AggregateCell* {
    for (const auto& c : cells)
      if (c.dataset == dataset && c.model == model && c.intervention == iv) return &c;
    return nullptr;
  };
  std::ostringstream os;
  os << "dataset,model,metric";
  for (const auto& iv : interventions) os << ',' << iv;
  os << '\n';
  const std::array<std::pair<const char*, double AggregateCell::*>, 4> metric_means = {
      std::make_pair("auc", &AggregateCell::auc_mean),
      std::make_pair("f1", &AggregateCell::f1_mean),
      std::make_pair("dsp", &AggregateCell::dsp_mean),
      std::make_pair("deo", &AggregateCell::deo_mean)};
  const std::array<double AggregateCell::*, 4> metric_stds = {
      &AggregateCell::auc_std, &AggregateCell::f1_std, &AggregateCell::dsp_std,
      &AggregateCell::deo_std};
  for (const auto& [dataset, model] : groups) {
    for (std::size_t m = 0; m < metric_means.size(); ++m) {
      os << dataset << ',' << model << ',' << metric_means[m].first;
      for (const auto& iv : interventions) {
        os << ',';
        if (const AggregateCell* c = find_cell(dataset, model, iv))
          os << detail::format_fixed(c->*(metric_means[m].second), 3) << "±"
             << detail::format_fixed(c->*(metric_stds[m]), 3);
      }
      os << '\n';
    }
  }
  return os.str();
}

inline std::string timings_json(const std::vector<RunRecord>& records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json row;
    row["dataset"] = r.dataset;
    row["model"] = r.model;
    row["intervention"] = r.intervention;
    row["seed"] = r.seed;
    row["failed"] = r.failed;
    if (r.failed) row["error"] = r.error;
    row["debias_seconds"] = r.timings.debias;
    row["embed_seconds"] = r.timings.embed;
    row["train_seconds"] = r.timings.train;
    row["postprocess_seconds"] = r.timings.postprocess;
    row["total_seconds"] = r.timings.total;
    arr.push_back(std::move(row));
  }
  return arr.dump(2) + "\n";
}

inline std::uint64_t fnv1a_hash(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string manifest_json(const ExperimentConfig& config,
                                 const ExperimentResult& result,
                                 const std::vector<std::string>& outputs) {
  std::string canonical;
  nlohmann::json cfg;
  for (const auto& [key, value] : config.to_key_values()) {
    canonical += key + " = " + value + "\n";
    cfg[key] = value;
  }
  char hash[24];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(fnv1a_hash(canonical)));
  nlohmann::json m;
  m["config"] = std::move(cfg);
  m["config_hash"] = hash;
  m["records"] = result.records.size();
  m["failures"] = result.failures;
  m["outputs"] = outputs;
  return m.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Minimal hand-rolled SVG plots.

enum class OmitRule { omit, mark };

namespace detail {

inline std::string model_color(const std::string& model) {
  if (model == "gcn") return "#E69F00";
  if (model == "sage") return "#009E73";
  if (model == "gin") return "#0072B2";
  return "#444444";
}

// One marker shape per intervention, drawn centered at (x, y).
inline std::string marker_svg(const std::string& intervention, double x, double y,
                              const std::string& color, double r = 5.0,
                              const std::string& extra = "") {
  char buf[512];
  const auto f = [&](const char* fmt, auto... args) {
    std::snprintf(buf, sizeof(buf), fmt, args...);
    return std::string(buf);
  };
  if (intervention == "Unaware")
    return f("<rect x='%.2f' y='%.2f' width='%.2f' height='%.2f' fill='%s'%s/>", x - r, y - r,
             2 * r, 2 * r, color.c_str(), extra.c_str());
  if (intervention == "PFR-X")
    return f("<polygon points='%.2f,%.2f %.2f,%.2f %.2f,%.2f' fill='%s'%s/>", x, y - r, x - r,
             y + r, x + r, y + r, color.c_str(), extra.c_str());
  if (intervention == "PFR-A")
    return f("<polygon points='%.2f,%.2f %.2f,%.2f %.2f,%.2f %.2f,%.2f' fill='%s'%s/>", x, y - r,
             x + r, y, x, y + r, x - r, y, color.c_str(), extra.c_str());
  if (intervention == "PFR-AX")
    return f("<polygon points='%.2f,%.2f %.2f,%.2f %.2f,%.2f' fill='%s'%s/>", x, y + r, x - r,
             y - r, x + r, y - r, color.c_str(), extra.c_str());
  if (intervention == "PostProcess+")
    return f("<path d='M %.2f %.2f H %.2f M %.2f %.2f V %.2f' stroke='%s' stroke-width='2.5' "
             "fill='none'%s/>",
             x - r, y, x + r, x, y - r, y + r, color.c_str(), extra.c_str());
  if (intervention == "PostProcess-")
    return f("<path d='M %.2f %.2f L %.2f %.2f M %.2f %.2f L %.2f %.2f' stroke='%s' "
             "stroke-width='2.5' fill='none'%s/>",
             x - r, y - r, x + r, y + r, x - r, y + r, x + r, y - r, color.c_str(),
             extra.c_str());
  return f("<circle cx='%.2f' cy='%.2f' r='%.2f' fill='%s'%s/>", x, y, r, color.c_str(),
           extra.c_str());
}

struct Axis {
  double lo = 0, hi = 1;     // data range
  double a = 0, b = 1;       // pixel range
  double map(double v) const { return a + (v - lo) / (hi - lo) * (b - a); }
};

inline Axis make_axis(double lo, double hi, double a, double b) {
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.06 * (hi - lo);
  return Axis{lo - pad, hi + pad, a, b};
}

inline void svg_axes(std::ostringstream& os, const Axis& xs, const Axis& ys,
                     const std::string& xlabel, const std::string& ylabel,
                     const std::string& title, double width, double height) {
  char buf[512];
  const auto line = [&](double x1, double y1, double x2, double y2) {
    std::snprintf(buf, sizeof(buf),
                  "<line x1='%.2f' y1='%.2f' x2='%.2f' y2='%.2f' stroke='#333'/>\n", x1, y1, x2,
                  y2);
    os << buf;
  };
  line(xs.a, ys.a, xs.b, ys.a);  // x axis (ys.a is the bottom pixel row)
  line(xs.a, ys.a, xs.a, ys.b);  // y axis
  for (int i = 0; i <= 4; ++i) {
    const double xv = xs.lo + (xs.hi - xs.lo) * i / 4.0;
    const double yv = ys.lo + (ys.hi - ys.lo) * i / 4.0;
    const double xp = xs.map(xv), yp = ys.map(yv);
    line(xp, ys.a, xp, ys.a + 4);
    line(xs.a - 4, yp, xs.a, yp);
    std::snprintf(buf, sizeof(buf),
                  "<text x='%.2f' y='%.2f' font-size='11' text-anchor='middle'>%.3g</text>\n",
                  xp, ys.a + 16, xv);
    os << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x='%.2f' y='%.2f' font-size='11' text-anchor='end'>%.3g</text>\n",
                  xs.a - 6, yp + 4, yv);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf),
                "<text x='%.2f' y='%.2f' font-size='13' text-anchor='middle'>%s</text>\n",
                (xs.a + xs.b) / 2, ys.a + 36, xlabel.c_str());
  os << buf;
  std::snprintf(buf, sizeof(buf),
                "<text x='%.2f' y='%.2f' font-size='13' text-anchor='middle' "
                "transform='rotate(-90 %.2f %.2f)'>%s</text>\n",
                xs.a - 44, (ys.a + ys.b) / 2, xs.a - 44, (ys.a + ys.b) / 2, ylabel.c_str());
  os << buf;
  std::snprintf(buf, sizeof(buf),
                "<text x='%.2f' y='20' font-size='14' font-weight='bold' "
                "text-anchor='middle'>%s</text>\n",
                width / 2, title.c_str());
  os << buf;
  (void)height;
}

}  // namespace detail

enum class FairnessMetric { dsp, deo };

// Accuracy/fairness tradeoff scatter over aggregated records: AUC on the x
// axis (larger is better), the chosen disparity metric on the y axis
// (smaller is better, so the optimum sits bottom-right). Interventions whose
// mean AUC falls more than 5% (multiplicative) below the same model's
// Original are omitted or visually marked per `rule`.
inline std::string emit_tradeoff_svg(const std::vector<RunRecord>& records,
                                     FairnessMetric metric, OmitRule rule = OmitRule::mark) {
  const std::vector<AggregateCell> cells = aggregate_records(records);
  if (cells.empty()) throw ConfigError("tradeoff plot: no usable records");
  const std::string metric_label = metric == FairnessMetric::dsp ? "ΔSP" : "ΔEO";
  const auto metric_mean = [&](const AggregateCell& c) {
    return metric == FairnessMetric::dsp ? c.dsp_mean : c.deo_mean;
  };

  // Original AUC per (dataset, model) for the omission rule.
  std::map<std::pair<std::string, std::string>, double> original_auc;
  for (const auto& c : cells)
    if (c.intervention == "Original") original_auc[{c.dataset, c.model}] = c.auc_mean;
  const auto dropped = [&](const AggregateCell& c) {
    const auto it = original_auc.find({c.dataset, c.model});
    return it != original_auc.end() && c.auc_mean < 0.95 * it->second;
  };

  std::vector<const AggregateCell*> shown;
  for (const auto& c : cells)
    if (!(rule == OmitRule::omit && dropped(c))) shown.push_back(&c);
  if (shown.empty()) throw ConfigError("tradeoff plot: every cell fell under the omission rule");

  double xlo = shown[0]->auc_mean, xhi = xlo, ylo = metric_mean(*shown[0]), yhi = ylo;
  for (const auto* c : shown) {
    xlo = std::min(xlo, c->auc_mean);
    xhi = std::max(xhi, c->auc_mean);
    ylo = std::min(ylo, metric_mean(*c));
    yhi = std::max(yhi, metric_mean(*c));
  }
  const double width = 720, height = 520;
  const detail::Axis xs = detail::make_axis(xlo, xhi, 70, width - 190);
  const detail::Axis ys = detail::make_axis(ylo, yhi, height - 60, 30);  // y grows downward

  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
     << "' viewBox='0 0 " << width << " " << height << "'>\n";
  os << "<rect x='0' y='0' width='" << width << "' height='" << height << "' fill='white'/>\n";
  detail::svg_axes(os, xs, ys, "AUC-ROC (larger is better)",
                   metric_label + " (smaller is better)",
                   "Accuracy vs " + metric_label + " tradeoff", width, height);
  for (const auto* c : shown) {
    const double x = xs.map(c->auc_mean);
    const double y = ys.map(metric_mean(*c));
    const bool flag = rule == OmitRule::mark && dropped(*c);
    os << detail::marker_svg(c->intervention, x, y, detail::model_color(c->model), 5.5,
                             flag ? " stroke='#D00000' stroke-width='2' stroke-dasharray='2,2'"
                                  : "");
    if (flag) {
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "<text x='%.2f' y='%.2f' font-size='11' fill='#D00000'>†</text>\n", x + 7,
                    y - 7);
      os << buf;
    }
    os << '\n';
  }
  // Legend: model colors, then intervention shapes.
  double ly = 40;
  const double lx = width - 170;
  std::vector<std::string> models, ivs;
  for (const auto& c : cells) {
    if (std::find(models.begin(), models.end(), c.model) == models.end())
      models.push_back(c.model);
    if (std::find(ivs.begin(), ivs.end(), c.intervention) == ivs.end())
      ivs.push_back(c.intervention);
  }
  char buf[256];
  for (const auto& m : models) {
    std::snprintf(buf, sizeof(buf),
                  "<rect x='%.2f' y='%.2f' width='10' height='10' fill='%s'/>"
                  "<text x='%.2f' y='%.2f' font-size='12'>%s</text>\n",
                  lx, ly - 9, detail::model_color(m).c_str(), lx + 16, ly, m.c_str());
    os << buf;
    ly += 18;
  }
  ly += 6;
  for (const auto& iv : ivs) {
    os << detail::marker_svg(iv, lx + 5, ly - 4, "#666", 5.0);
    std::snprintf(buf, sizeof(buf), "<text x='%.2f' y='%.2f' font-size='12'>%s</text>\n",
                  lx + 16, ly, iv.c_str());
    os << buf;
    ly += 18;
  }
  if (rule == OmitRule::mark) {
    std::snprintf(buf, sizeof(buf),
                  "<text x='%.2f' y='%.2f' font-size='11' fill='#D00000'>† AUC &gt;5%% below "
                  "Original</text>\n",
                  lx, ly + 6);
    os << buf;
  }
  os << "</svg>\n";
  return os.str();
}

// AUC as a function of the two fairness metrics across the gamma grid: one
// red series for disparity, one purple for inequality; markers grow and
// darken with gamma.
inline std::string emit_gamma_svg(const GammaSweepResult& sweep) {
  if (sweep.size() == 0) throw ConfigError("gamma plot: empty sweep");
  double xlo = sweep.dsp_mean[0], xhi = xlo;
  double ylo = sweep.auc_mean[0], yhi = ylo;
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    xlo = std::min({xlo, sweep.dsp_mean[i], sweep.deo_mean[i]});
    xhi = std::max({xhi, sweep.dsp_mean[i], sweep.deo_mean[i]});
    ylo = std::min(ylo, sweep.auc_mean[i]);
    yhi = std::max(yhi, sweep.auc_mean[i]);
  }
  const double width = 720, height = 520;
  const detail::Axis xs = detail::make_axis(xlo, xhi, 70, width - 170);
  const detail::Axis ys = detail::make_axis(ylo, yhi, height - 60, 30);

  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
     << "' viewBox='0 0 " << width << " " << height << "'>\n";
  os << "<rect x='0' y='0' width='" << width << "' height='" << height << "' fill='white'/>\n";
  detail::svg_axes(os, xs, ys, "fairness metric (smaller is better)", "AUC-ROC",
                   "AUC vs fairness across the gamma grid", width, height);
  char buf[256];
  const std::size_t n = sweep.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double frac = n > 1 ? static_cast<double>(i) / (n - 1) : 1.0;
    const double r = 3.0 + 4.0 * frac;       // marker size grows with gamma
    const double opacity = 0.45 + 0.55 * frac;  // and the color darkens
    std::snprintf(buf, sizeof(buf),
                  "<circle cx='%.2f' cy='%.2f' r='%.2f' fill='#D55E00' fill-opacity='%.2f'/>\n",
                  xs.map(sweep.dsp_mean[i]), ys.map(sweep.auc_mean[i]), r, opacity);
    os << buf;
    std::snprintf(buf, sizeof(buf),
                  "<circle cx='%.2f' cy='%.2f' r='%.2f' fill='#CC79A7' fill-opacity='%.2f'/>\n",
                  xs.map(sweep.deo_mean[i]), ys.map(sweep.auc_mean[i]), r, opacity);
    os << buf;
  }
  const double lx = width - 150;
  std::snprintf(buf, sizeof(buf),
                "<circle cx='%.2f' cy='36' r='5' fill='#D55E00'/>"
                "<text x='%.2f' y='40' font-size='12'>ΔSP</text>\n",
                lx, lx + 12);
  os << buf;
  std::snprintf(buf, sizeof(buf),
                "<circle cx='%.2f' cy='54' r='5' fill='#CC79A7'/>"
                "<text x='%.2f' y='58' font-size='12'>ΔEO</text>\n",
                lx, lx + 12);
  os << buf;
  os << "</svg>\n";
  return os.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot write " + path);
  os << content;
}

// Writes the full report set for an experiment into config.out_dir and
// returns the written paths.
inline std::vector<std::string> write_experiment_outputs(const ExperimentConfig& config,
                                                         const ExperimentResult& result,
                                                         OmitRule rule = OmitRule::mark) {
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);
  const auto path = [&](const std::string& name) {
    return (fs::path(config.out_dir) / name).string();
  };
  std::vector<std::string> outputs;
  const auto emit = [&](const std::string& name, const std::string& content) {
    write_text_file(path(name), content);
    outputs.push_back(name);
  };
  const auto cells = aggregate_records(result.records);
  emit("runs.csv", runs_csv(result.records));
  emit("aggregate.csv", aggregate_csv(cells));
  emit("summary_table.csv", summary_table_csv(cells));
  emit("tradeoff_dsp.svg", emit_tradeoff_svg(result.records, FairnessMetric::dsp, rule));
  emit("tradeoff_deo.svg", emit_tradeoff_svg(result.records, FairnessMetric::deo, rule));
  emit("timings.json", timings_json(result.records));
  emit("manifest.json", manifest_json(config, result, outputs));
  return outputs;
}

}  // namespace fairgraph
