// Copyright 2026 The desclip Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "desclip/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <optional>

#include "desclip/binary_io.hpp"
#include "desclip/bundle.hpp"
#include "desclip/config.hpp"
#include "desclip/evalharness.hpp"
#include "desclip/trainer.hpp"

namespace desclip {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration content (bad values in a config file).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_exists(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) {
    throw UsageError(what + " '" + path.string() + "' does not exist");
  }
}

unsigned resolve_threads(std::optional<unsigned> flag) {
  if (flag) {
    return std::max(1u, *flag);
  }
  if (const char* env = std::getenv("DESCLIP_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return static_cast<unsigned>(n);
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("DESCLIP_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

RunConfig effective_config(const std::optional<std::string>& profile,
                           const std::optional<std::string>& config_path,
                           const std::vector<std::string>& overrides) {
  RunConfig config;
  try {
    if (profile) {
      config = apply_profile(config, *profile);
    }
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (config_path) {
    require_exists(*config_path, "config file");
    try {
      config = merge_json(config, io::read_json(*config_path));
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
  for (const auto& assignment : overrides) {
    try {
      config = apply_override(config, assignment);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  try {
    config.check();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return config;
}

RunConfig run_config(const fs::path& run_dir) {
  require_exists(run_dir / "config.json", "run config");
  try {
    return merge_json(RunConfig{}, io::read_json(run_dir / "config.json"));
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

void print_bundle_summary(const EmbeddingBundle& b, std::ostream& out) {
  std::size_t candidates = 0;
  std::size_t flagged = 0;
  for (const auto& c : b.classes) {
    candidates += c.candidates.size();
    for (const auto& d : c.candidates) flagged += d.cls_noun ? 1 : 0;
  }
  out << "dim: " << b.dim << "\n"
      << "classes: " << b.num_classes() << "\n"
      << "tasks: " << b.num_tasks() << " (sizes";
  for (const auto& t : b.tasks) out << " " << t.size();
  out << ")\n"
      << "candidates: " << candidates << " (" << flagged << " name the class)\n"
      << "train samples: " << b.train.size() << "\n"
      << "test samples: " << b.test.size() << "\n"
      << "control: " << b.control.class_names.size() << " classes, " << b.control.samples.size()
      << " samples\n";
}

void print_report(const MetricsReport& r, std::ostream& out) {
  out << std::fixed << std::setprecision(2);
  out << "last: " << r.last << " (macro " << r.last_macro << ", zero-shot " << r.zero_shot_last << ")\n";
  out << "avg: " << r.avg << "\n";
  if (r.control) {
    out << "control: " << *r.control << " (zero-shot " << *r.control_zero_shot << ")\n";
  }
  out << "curve:";
  for (double a : r.per_task_curve) out << " " << a;
  out << "\n";
  if (r.delta_zero_shot) out << "delta vs zero-shot (first " << r.half_tasks << " tasks): " << mean_delta(*r.delta_zero_shot) << "\n";
  if (r.delta_transfer) out << "delta full vs half: " << mean_delta(*r.delta_transfer) << "\n";
  for (const auto& w : r.warnings) out << "warning: " << w << "\n";
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.last = j.at("last").get<double>();
  r.last_macro = j.at("last_macro").get<double>();
  r.avg = j.at("avg").get<double>();
  r.per_task_curve = j.at("per_task_curve").get<std::vector<double>>();
  r.zero_shot_last = j.at("zero_shot_last").get<double>();
  r.zero_shot_curve = j.at("zero_shot_curve").get<std::vector<double>>();
  if (!j.at("control").is_null()) {
    r.control = j.at("control").get<double>();
    r.control_zero_shot = j.at("control_zero_shot").get<double>();
  }
  r.half_tasks = j.at("half_tasks").get<std::size_t>();
  auto read_deltas = [](const nlohmann::json& d) {
    std::vector<ClassDelta> out;
    for (const auto& e : d.at("per_class")) {
      out.push_back({e.at("class").get<ClassId>(), e.at("before").get<double>(), e.at("after").get<double>(),
                     e.at("delta").get<double>()});
    }
    return out;
  };
  if (!j.at("delta_zero_shot").is_null()) r.delta_zero_shot = read_deltas(j.at("delta_zero_shot"));
  if (!j.at("delta_transfer").is_null()) r.delta_transfer = read_deltas(j.at("delta_transfer"));
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

MetricsReport evaluate_run(const fs::path& bundle_dir, const fs::path& run_dir, unsigned threads) {
  require_exists(bundle_dir, "bundle");
  require_exists(run_dir, "run directory");
  const auto config = run_config(run_dir);
  const auto bundle = load_bundle(bundle_dir);
  const auto checkpoints = load_run(run_dir);
  if (checkpoints.empty()) {
    throw UsageError("run directory '" + run_dir.string() + "' holds no task checkpoints");
  }
  for (const auto& cp : checkpoints) {
    if (cp.adapter.dim() != bundle.dim || cp.bank.num_classes() != bundle.num_classes()) {
      throw ConfigError("run checkpoints do not match the bundle's dim or class count");
    }
  }
  return compute_report(checkpoints, bundle, config, threads);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Continual adaptation of frozen vision-language embeddings with filtered attribute descriptions"};
  app.name(args.empty() ? "desclip" : fs::path(args[0]).filename().string());
  app.require_subcommand(1, 1);

  std::optional<unsigned> threads_flag;
  auto add_threads = [&](CLI::App* sub) {
    sub->add_option("--threads", threads_flag, "Worker threads for evaluation (default: $DESCLIP_THREADS or 1)");
  };

  // synth
  SynthSpec synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic benchmark bundle");
  synth_cmd->add_option("--tasks", synth.num_tasks, "Number of tasks")->capture_default_str();
  synth_cmd->add_option("--classes-per-task", synth.classes_per_task, "Classes per task")->capture_default_str();
  synth_cmd->add_option("--dim", synth.dim, "Embedding dimension")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  synth_cmd->add_option("--samples-per-class", synth.samples_per_class, "Training samples per class")->capture_default_str();
  synth_cmd->add_option("--test-per-class", synth.test_per_class, "Test samples per class")->capture_default_str();
  synth_cmd->add_option("--candidates-per-class", synth.candidates_per_class, "Description candidates per class")->capture_default_str();
  synth_cmd->add_option("--attribute-noise", synth.attribute_noise, "Attribute offset scale")->capture_default_str();
  synth_cmd->add_option("--attribute-share", synth.attribute_share, "Probability a sample carries an attribute")->capture_default_str();
  synth_cmd->add_option("--spread", synth.cluster_spread, "Per-sample isotropic noise")->capture_default_str();
  synth_cmd->add_option("--unfamiliarity", synth.unfamiliarity, "Text rotation away from class means (fraction of 90 degrees)")->capture_default_str();
  synth_cmd->add_option("--unfamiliarity-skew", synth.unfamiliarity_skew, "Linear unfamiliarity ramp across tasks")->capture_default_str();
  synth_cmd->add_option("--cls-noun-fraction", synth.cls_noun_fraction, "Fraction of candidates naming the class")->capture_default_str();
  synth_cmd->add_option("--control-classes", synth.control_classes, "Number of control classes")->capture_default_str();
  synth_cmd->add_option("--control-per-class", synth.control_per_class, "Control samples per class")->capture_default_str();
  synth_cmd->add_option("-o,--output", synth_out, "Output bundle directory")->required();

  // validate
  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "Check a bundle and print a summary");
  validate_cmd->add_option("bundle", validate_path, "Bundle directory")->required();

  // train
  std::string bundle_path;
  std::string output_path;
  std::string run_path;
  std::optional<std::string> profile;
  std::optional<std::string> config_path;
  std::vector<std::string> overrides;
  auto* train_cmd = app.add_subcommand("train", "Train every task of a bundle in sequence");
  train_cmd->add_option("--bundle", bundle_path, "Bundle directory")->required();
  train_cmd->add_option("--profile", profile, "Threshold preset: coarse, fine, finegrained");
  train_cmd->add_option("--config", config_path, "JSON file of RunConfig fields");
  train_cmd->add_option("--set", overrides, "Override a config field (key=value), repeatable");
  train_cmd->add_option("-o,--output", output_path, "Run directory")->required();
  add_threads(train_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a trained run and write report.json and curve.csv");
  eval_cmd->add_option("--bundle", bundle_path, "Bundle directory")->required();
  eval_cmd->add_option("--run", run_path, "Run directory")->required();
  eval_cmd->add_option("-o,--output", output_path, "Report directory (default: the run directory)");
  add_threads(eval_cmd);

  // report
  auto* report_cmd = app.add_subcommand("report", "Print the metrics of a run, evaluating it first if needed");
  report_cmd->add_option("--run", run_path, "Run directory")->required();
  report_cmd->add_option("--bundle", bundle_path, "Bundle directory (needed when report.json is absent)");
  add_threads(report_cmd);

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  if (args.empty()) argv.push_back("desclip");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth_cmd->parsed()) {
      const auto bundle = synth_bundle(synth);
      save_bundle(bundle, synth_out);
      out << "wrote " << bundle.num_classes() << " classes in " << bundle.num_tasks() << " tasks to "
          << synth_out << "\n";
    } else if (validate_cmd->parsed()) {
      require_exists(validate_path, "bundle");
      const auto bundle = load_bundle(validate_path);
      out << "ok: " << validate_path << "\n";
      print_bundle_summary(bundle, out);
    } else if (train_cmd->parsed()) {
      require_exists(bundle_path, "bundle");
      const unsigned threads = resolve_threads(threads_flag);
      const auto config = effective_config(profile, config_path, overrides);
      const auto bundle = load_bundle(bundle_path);
      const fs::path run_dir = output_path;
      fs::create_directories(run_dir);
      io::write_json(run_dir / "config.json", to_json(config));
      io::write_json(run_dir / "run.json", {{"dim", bundle.dim},
                                            {"num_classes", bundle.num_classes()},
                                            {"num_tasks", bundle.num_tasks()},
                                            {"profile", profile.value_or("coarse")}});
      train_sequence(bundle, config, threads, [&](const TaskCheckpoint& cp, double accuracy) {
        save_checkpoint(cp, run_dir / task_dir_name(cp.task_index));
        out << "task " << cp.task_index + 1 << "/" << bundle.num_tasks() << ": accuracy "
            << std::fixed << std::setprecision(2) << accuracy << "\n";
      });
    } else if (eval_cmd->parsed()) {
      const unsigned threads = resolve_threads(threads_flag);
      const auto report = evaluate_run(bundle_path, run_path, threads);
      const fs::path dest = output_path.empty() ? fs::path(run_path) : fs::path(output_path);
      write_report(report, dest);
      print_report(report, out);
    } else if (report_cmd->parsed()) {
      require_exists(run_path, "run directory");
      const fs::path report_path = fs::path(run_path) / "report.json";
      MetricsReport report;
      if (fs::exists(report_path)) {
        report = report_from_json(io::read_json(report_path));
      } else {
        if (bundle_path.empty()) {
          throw UsageError("report.json is missing; pass --bundle to evaluate the run");
        }
        report = evaluate_run(bundle_path, run_path, resolve_threads(threads_flag));
        write_report(report, run_path);
      }
      print_report(report, out);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const BundleError& e) {
    err << "invalid bundle [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace desclip
