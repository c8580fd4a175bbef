#include "osp/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "osp/config.hpp"
#include "osp/detector.hpp"
#include "osp/errors.hpp"
#include "osp/evaluation.hpp"
#include "osp/plot.hpp"
#include "osp/trainer.hpp"

namespace fs = std::filesystem;

namespace osp {

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key=value config file (defaults: desk blob protocol)");
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--out", c.out_dir, "output directory");
  cmd->add_option("--override", c.overrides, "key=value, repeatable")->take_all()->expected(1);
}

TrainConfig resolve_config(const Common& c) {
  TrainConfig config = TrainConfig::blob_protocol();
  if (!c.config_path.empty()) config = load_config_file(c.config_path, config);
  apply_overrides(config, c.overrides);
  if (c.seed) config.seed = *c.seed;
  config.validate();
  return config;
}

fs::path prepare_out(const Common& c) {
  fs::path p(c.out_dir);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream o(path);
  if (!o) throw DataError("cannot write " + path.string());
  o << text;
}

struct Loaded {
  TrainConfig config;
  Experiment experiment;
  Trainer trainer;
};

Loaded load_run(const std::string& checkpoint) {
  TrainConfig config = read_checkpoint_config_file(checkpoint);
  Experiment e = build_experiment(config);
  Trainer t = Trainer::load_checkpoint_file(checkpoint, e.training_data());
  return {std::move(config), std::move(e), std::move(t)};
}

std::string stage_log(Trainer& t, bool pretrain) {
  std::ostringstream log;
  write_loss_csv_header(log);
  if (pretrain) t.run_pretrain(&log); else t.run_finetune(&log);
  return log.str();
}

int cmd_synth(const Common& c, std::ostream& out) {
  const TrainConfig config = resolve_config(c);
  const fs::path dir = prepare_out(c);
  const Experiment e = build_experiment(config);
  std::ofstream manifest(dir / "manifest.csv");
  write_manifest_csv(manifest, e.split);
  std::size_t ood = 0;
  for (bool b : e.split.truth.ood_mask) ood += b ? 1 : 0;
  std::ostringstream summary;
  summary << "labeled=" << e.split.labeled.size() << '\n'
          << "unlabeled=" << e.split.unlabeled.size() << '\n'
          << "unlabeled_ood=" << ood << '\n'
          << "test_id=" << e.test.id_inputs.rows() << '\n'
          << "test_ood=" << e.test.ood_inputs.rows() << '\n';
  write_text(dir / "summary.txt", summary.str());
  out << summary.str();
  return kExitOk;
}

int cmd_pretrain(const Common& c, std::ostream& out) {
  const TrainConfig config = resolve_config(c);
  const fs::path dir = prepare_out(c);
  const Experiment e = build_experiment(config);
  Trainer t(config, e.training_data());
  t.set_snapshot_path((dir / "diverged.ckpt").string());
  write_text(dir / "pretrain_loss.csv", stage_log(t, true));
  t.save_checkpoint_file((dir / "pretrain.ckpt").string());
  write_text(dir / "config.txt", config.to_text());
  out << "checkpoint=" << (dir / "pretrain.ckpt").string() << '\n';
  return kExitOk;
}

MetricsRecord finish_finetune(Trainer& t, const Experiment& e, const fs::path& dir, std::ostream& out) {
  t.set_snapshot_path((dir / "diverged.ckpt").string());
  write_text(dir / "finetune_loss.csv", stage_log(t, false));
  t.save_checkpoint_file((dir / "model.ckpt").string());
  write_text(dir / "config.txt", t.config().to_text());
  const MetricsRecord m = evaluate(t.model(), e.test, t.config());
  write_text(dir / "metrics.txt", m.to_text());
  out << m.to_text();
  return m;
}

int cmd_finetune(const Common& c, const std::string& checkpoint, std::ostream& out) {
  const fs::path dir = prepare_out(c);
  if (!checkpoint.empty()) {
    if (!c.config_path.empty() || !c.overrides.empty() || c.seed) {
      throw ConfigError("--checkpoint carries its own configuration; drop --config/--override/--seed");
    }
    Loaded run = load_run(checkpoint);
    finish_finetune(run.trainer, run.experiment, dir, out);
    return kExitOk;
  }
  const TrainConfig config = resolve_config(c);
  const Experiment e = build_experiment(config);
  Trainer t(config, e.training_data());
  t.set_snapshot_path((dir / "diverged.ckpt").string());
  write_text(dir / "pretrain_loss.csv", stage_log(t, true));
  finish_finetune(t, e, dir, out);
  return kExitOk;
}

int cmd_eval(const Common& c, const std::string& checkpoint, std::ostream& out) {
  const Loaded run = load_run(checkpoint);
  const MetricsRecord m = evaluate(run.trainer.model(), run.experiment.test, run.config);
  if (c.out_dir != ".") write_text(prepare_out(c) / "metrics.txt", m.to_text());
  out << m.to_text();
  return kExitOk;
}

int cmd_analyze(const Common& c, const std::string& checkpoint, std::ostream& out) {
  const fs::path dir = prepare_out(c);
  const Loaded run = load_run(checkpoint);
  const Model& model = run.trainer.model();
  const HeldOutAnalysis a = analyze_held_out(model, run.experiment.test, run.config);

  std::ostringstream angles;
  angles << "bin_start_deg,bin_end_deg,count\n";
  std::ostringstream summary;
  if (!a.pairs.empty()) {
    const AngleSummary s = angle_analysis(a.pairs);
    for (int b = 0; b < kAngleBins; ++b) {
      angles << b * 180 / kAngleBins << ',' << (b + 1) * 180 / kAngleBins << ',' << s.histogram[static_cast<std::size_t>(b)] << '\n';
    }
    summary << "mean_id_ood_angle_deg=" << format_double(s.mean_deg) << '\n'
            << "mean_abs_cosine=" << format_double(s.mean_abs_cosine) << '\n'
            << "angle_pairs=" << s.count << '\n';
  } else {
    summary << "mean_id_ood_angle_deg=na\nmean_abs_cosine=na\nangle_pairs=0\n";
  }
  write_text(dir / "angles.csv", angles.str());
  summary << "interclass_variance=" << format_double(interclass_variance(a.id_features, run.experiment.test.id_labels)) << '\n';

  const Eigen::VectorXd scores = ood_score(model, run.experiment.split.unlabeled.inputs);
  const std::span<const double> s(scores.data(), static_cast<std::size_t>(scores.size()));
  SplitState split;
  try {
    split = split_unlabeled(s, otsu_threshold(s));
  } catch (const DegenerateDistributionError&) {
    split = split_unlabeled(s, scores.minCoeff());
  }
  std::ofstream split_csv(dir / "split.csv");
  write_split_csv(split_csv, split, s);
  summary << "split_threshold=" << format_double(split.threshold) << '\n'
          << "split_id=" << split.id_indices.size() << '\n'
          << "split_ood=" << split.ood_indices.size() << '\n';
  write_text(dir / "analysis.txt", summary.str());
  out << summary.str();
  return kExitOk;
}

int cmd_sweep(const Common& c, const std::string& grid_text, std::ostream& out) {
  const std::vector<double> grid = parse_grid(grid_text);
  const TrainConfig base = resolve_config(c);
  const fs::path dir = prepare_out(c);
  const Experiment e = build_experiment(base);
  std::ostringstream csv;
  csv << "alpha,id_accuracy,auroc,mean_id_ood_angle_deg,mean_abs_cosine,interclass_variance\n";
  for (double alpha : grid) {
    TrainConfig config = base;
    config.alpha = alpha;
    config.validate();
    const fs::path sub = dir / ("alpha_" + format_double(alpha));
    fs::create_directories(sub);
    Trainer t = train(config, e);
    const MetricsRecord m = evaluate(t.model(), e.test, config);
    write_text(sub / "metrics.txt", m.to_text());
    out << "alpha=" << format_double(alpha) << '\n' << m.to_text();
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("nan"); };
    csv << format_double(alpha) << ',' << format_double(m.id_accuracy) << ',' << opt(m.auroc) << ','
        << opt(m.mean_id_ood_angle_deg) << ',' << opt(m.mean_abs_cosine) << ',' << format_double(m.interclass_variance)
        << '\n';
  }
  write_text(dir / "sweep.csv", csv.str());
  return kExitOk;
}

int cmd_plot(const Common& c, const std::string& csv, std::string x, std::vector<std::string> ys,
             std::string title, std::ostream& out) {
  const fs::path dir = prepare_out(c);
  const CsvTable t = read_csv_file(csv);
  if (x.empty()) x = t.header.front();
  if (ys.empty()) {
    for (const auto& h : t.header) {
      if (h == x || h.rfind("n_", 0) == 0 || h == "lr" || h == "bank_size") continue;
      for (double v : t.column(h)) {
        if (std::isfinite(v)) { ys.push_back(h); break; }
      }
    }
  }
  if (title.empty()) title = fs::path(csv).stem().string();
  const fs::path svg = dir / (fs::path(csv).stem().string() + ".svg");
  plot_csv(csv, x, ys, svg.string(), title);
  out << "plot=" << svg.string() << '\n';
  return kExitOk;
}

} // namespace

std::vector<double> parse_grid(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string p;
  while (std::getline(ss, p, ',')) parts.push_back(p);
  std::vector<double> out;
  auto num = [](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw ConfigError("bad grid value '" + s + "'");
    return v;
  };
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i] != "...") {
      out.push_back(num(parts[i]));
      continue;
    }
    if (out.size() < 2 || i + 1 >= parts.size()) throw ConfigError("'...' needs two values before and one after");
    const double step = out[out.size() - 1] - out[out.size() - 2];
    const double last = num(parts[++i]);
    if (step <= 0.0 || last < out.back()) throw ConfigError("grid must increase");
    const double start = out[out.size() - 2];
    const long n = std::lround((last - start) / step);
    if (std::abs(start + static_cast<double>(n) * step - last) > 1e-9 * std::max(1.0, std::abs(last))) {
      throw ConfigError("grid end is not on the step");
    }
    for (long j = 2; j <= n; ++j) {
      // from the start, not by accumulation, to keep values like 0.6 exact
      out.push_back(std::round((start + static_cast<double>(j) * step) * 1e12) / 1e12);
    }
  }
  if (out.empty()) throw ConfigError("empty grid");
  return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Open-set semi-supervised training with orthogonal feature pruning", "osp"};
  app.require_subcommand(1);
  Common common;
  std::string checkpoint, grid, csv, x_column, title;
  std::vector<std::string> y_columns;

  auto* synth = app.add_subcommand("synth", "emit the labeled/unlabeled split manifest");
  auto* pretrain = app.add_subcommand("pretrain", "run the pre-training stage");
  auto* finetune = app.add_subcommand("finetune", "run fine-tuning (from --checkpoint or after pre-training)");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* analyze = app.add_subcommand("analyze", "feature angles, inter-class variance and split CSV");
  auto* sweep = app.add_subcommand("sweep-alpha", "train and evaluate over a grid of alpha values");
  auto* plot = app.add_subcommand("plot", "render a CSV log as an SVG line chart");
  for (auto* cmd : {synth, pretrain, finetune, eval, analyze, sweep, plot}) add_common(cmd, common);
  finetune->add_option("--checkpoint", checkpoint, "pre-training checkpoint");
  eval->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();
  analyze->add_option("--checkpoint", checkpoint, "checkpoint to analyze")->required();
  sweep->add_option("--grid", grid, "alpha values, e.g. 0,0.2,...,1.0")->required();
  plot->add_option("--csv", csv, "input CSV")->required();
  plot->add_option("--x", x_column, "x column (default: first)");
  plot->add_option("--y", y_columns, "y columns (default: all numeric)")->delimiter(',');
  plot->add_option("--title", title, "chart title");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(common, out);
    if (pretrain->parsed()) return cmd_pretrain(common, out);
    if (finetune->parsed()) return cmd_finetune(common, checkpoint, out);
    if (eval->parsed()) return cmd_eval(common, checkpoint, out);
    if (analyze->parsed()) return cmd_analyze(common, checkpoint, out);
    if (sweep->parsed()) return cmd_sweep(common, grid, out);
    if (plot->parsed()) return cmd_plot(common, csv, x_column, y_columns, title, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  err << app.help();
  return kExitUsage;
}

} // namespace osp
