#include "gbfl/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "gbfl/error.hpp"
#include "gbfl/pipeline.hpp"
#include "gbfl/random.hpp"

namespace gbfl {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct Globals {
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
  bool verbose = false;
};

struct DataArgs {
  std::string path;
  std::string label_column;
  std::vector<std::string> classes;

  void add(CLI::App* app, bool required = true) {
    auto* o = app->add_option("--data", path, "CSV file with a header row")->check(CLI::ExistingFile);
    if (required) o->required();
    app->add_option("--label-column", label_column, "label column name (omit for unlabeled data)");
    app->add_option("--classes", classes, "known class names in id order")->delimiter(',');
  }
  Dataset load() const { return load_csv(path, label_column, classes); }
};

// Bounds and base values come from a reference set (the training data) when given.
struct ReferenceArgs {
  std::string reference;
  std::string base = "median";
  std::vector<double> base_values;

  void add(CLI::App* app) {
    app->add_option("--reference", reference, "training CSV that fixes bounds and base values")
        ->check(CLI::ExistingFile);
    app->add_option("--base", base, "base-value strategy: median|zeros|explicit");
    app->add_option("--base-values", base_values, "explicit base values")->delimiter(',');
  }
  std::pair<FeatureBounds, BaseValues> derive(const Dataset& data, const DataArgs& d) const {
    const Dataset ref = reference.empty() ? data : load_csv(reference, d.label_column, d.classes);
    if (ref.n_features() != data.n_features()) throw UsageError("reference data has a different feature count");
    const auto bounds = derive_bounds(ref);
    return {bounds, derive_base_values(ref, bounds, parse_base_strategy(base), base_values)};
  }
};

std::string sidecar_path(const std::string& csv) {
  fs::path p(csv);
  p.replace_extension(".json");
  return p.string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Error("cannot write " + path);
}

json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path);
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw Error(path + ": " + e.what());
  }
}

std::string need_out(const Globals& g, const std::string& what) {
  if (g.out.empty()) throw UsageError("--out is required for " + what);
  return g.out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Global boolean feature learning from contrastive explanations"};
  app.name("gbfl");
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "seed for every random choice")->each([&](const std::string&) { g.seed_given = true; });
  app.add_option("--out", g.out, "output path or directory");
  app.add_flag("--verbose", g.verbose, "progress on stderr");

  std::function<void()> action;

  // run
  auto* run = app.add_subcommand("run", "full pipeline from a JSON config");
  std::string config_path;
  run->add_option("--config", config_path, "pipeline config (JSON)")->required();
  run->callback([&] {
    action = [&] {
      if (!fs::exists(config_path)) throw UsageError("config file not found: " + config_path);
      auto cfg = PipelineConfig::load(config_path);
      if (g.seed_given) cfg.seeds = {g.seed};
      if (!g.out.empty()) cfg.out_dir = g.out;
      ProgressFn progress;
      if (g.verbose) progress = [&](const std::string& m) { err << m << "\n"; };
      const auto output = run_pipeline(cfg, progress);
      emit_report(output, cfg, cfg.out_dir);
      out << render_markdown(output.report);
      out << "wrote " << cfg.out_dir << "\n";
      std::size_t failed = 0;
      for (const auto& s : output.report.seeds) {
        if (s.error) {
          err << "seed " << s.seed << " failed: " << *s.error << "\n";
          ++failed;
        }
      }
      if (failed) throw Error(std::to_string(failed) + " of " + std::to_string(output.report.seeds.size()) + " seeds failed");
    };
  });

  // train-blackbox
  auto* tb = app.add_subcommand("train-blackbox", "train or build a black-box model file");
  DataArgs tb_data;
  tb_data.add(tb);
  BlackBoxSpec spec;
  tb->add_option("--kind", spec.kind, "mlp|logistic|threshold")->check(CLI::IsMember({"mlp", "logistic", "threshold"}));
  tb->add_option("--widths", spec.mlp.hidden_widths, "hidden layer widths")->delimiter(',');
  tb->add_option("--dropout", spec.mlp.dropout_rates, "dropout per hidden layer")->delimiter(',');
  tb->add_option("--epochs", spec.mlp.epochs);
  tb->add_option("--batch-size", spec.mlp.batch_size);
  tb->add_option("--learning-rate", spec.mlp.learning_rate);
  tb->add_option("--feature", spec.feature, "threshold model feature index");
  tb->add_option("--threshold", spec.threshold);
  tb->add_option("--sharpness", spec.sharpness);
  tb->callback([&] {
    action = [&] {
      const auto path = need_out(g, "train-blackbox");
      const Dataset data = tb_data.load();
      if (spec.kind == "mlp" || spec.kind == "logistic") spec.mlp.validate();
      const auto model = make_blackbox(spec, data, derive_seed(g.seed, 1));
      save_model(*model, path);
      const double acc = data.n_classes > 0 ? accuracy(model->predict_batch(data.features), data.labels) : 0.0;
      out << model->kind() << " model written to " << path << " (training accuracy " << acc << ")\n";
    };
  });

  // explain
  auto* ex = app.add_subcommand("explain", "pertinent positives and negatives for every row");
  DataArgs ex_data;
  ex_data.add(ex);
  ReferenceArgs ex_ref;
  ex_ref.add(ex);
  std::string model_path, model_command;
  std::optional<int> command_classes;
  ExplainerConfig ecfg;
  ex->add_option("--model", model_path, "black-box model file")->check(CLI::ExistingFile);
  ex->add_option("--command", model_command, "external black-box command (CSV over stdin/stdout)");
  ex->add_option("--n-classes", command_classes, "class count of the external model");
  ex->add_option("--kappa", ecfg.kappa);
  ex->add_option("--l1", ecfg.l1_strength);
  ex->add_option("--l2", ecfg.l2_strength);
  ex->add_option("--max-iters", ecfg.max_iters);
  ex->add_option("--step-size", ecfg.step_size);
  ex->add_option("--fd-step", ecfg.fd_step);
  ex->add_option("--snap-epsilon", ecfg.snap_epsilon);
  ex->add_flag("--log-margin,!--raw-margin", ecfg.log_margin,
               "hinge on log-confidences (default) or on raw confidences");
  ex->callback([&] {
    action = [&] {
      const auto path = need_out(g, "explain");
      if (model_path.empty() == model_command.empty()) throw UsageError("give exactly one of --model or --command");
      const Dataset data = ex_data.load();
      const auto [bounds, base] = ex_ref.derive(data, ex_data);
      std::unique_ptr<BlackBoxModel> model;
      if (!model_path.empty()) model = load_model(model_path, data.n_features());
      else model = std::make_unique<ExternalModel>(model_command, data.n_features(), command_classes);
      const auto set = explain_dataset(*model, data, base, bounds, ecfg);
      save_explanations_csv(set, data.feature_names, path);
      save_explanations_sidecar(set, sidecar_path(path));
      out << set.triplets.size() << " samples explained, PN coverage " << set.pn_coverage << ", " << set.n_errors
          << " errors\n";
    };
  });

  // grid
  auto* gr = app.add_subcommand("grid", "KDE quantile grid points per feature");
  DataArgs gr_data;
  gr_data.add(gr);
  ReferenceArgs gr_ref;
  gr->add_option("--reference", gr_ref.reference, "CSV that fixes the feature bounds")->check(CLI::ExistingFile);
  int intervals = 0;
  std::vector<double> bandwidths;
  gr->add_option("-N,--intervals", intervals, "number of intervals (the grid has N + 1 points)")
      ->required()
      ->check(CLI::PositiveNumber);
  gr->add_option("--bandwidth", bandwidths, "KDE bandwidth, one shared or one per feature")->delimiter(',');
  gr->callback([&] {
    action = [&] {
      const auto path = need_out(g, "grid");
      const Dataset data = gr_data.load();
      const auto [bounds, base] = gr_ref.derive(data, gr_data);
      const auto grid = generate_grid(data, bounds, intervals, {bandwidths});
      save_grid_csv(grid, data.feature_names, path);
      out << "grid with " << intervals + 1 << " points per feature written to " << path << "\n";
    };
  });

  // gbfl
  auto* gb = app.add_subcommand("gbfl", "boolean clauses from explanations and a grid");
  DataArgs gb_data;
  gb_data.add(gb);
  ReferenceArgs gb_ref;
  gb_ref.add(gb);
  std::string gb_expl, gb_grid, gb_targets = "blackbox";
  int delta = 0;
  std::size_t min_support = 0;
  gb->add_option("--explanations", gb_expl, "explanations CSV of the same rows")->required()->check(CLI::ExistingFile);
  gb->add_option("--grid", gb_grid, "grid CSV")->required()->check(CLI::ExistingFile);
  gb->add_option("--delta", delta, "skip parameter")->required()->check(CLI::NonNegativeNumber);
  gb->add_option("--targets", gb_targets, "blackbox|true");
  gb->add_option("--min-support", min_support);
  gb->callback([&] {
    action = [&] {
      const auto path = need_out(g, "gbfl");
      const Dataset data = gb_data.load();
      const auto [bounds, base] = gb_ref.derive(data, gb_data);
      const auto set = load_explanations(gb_expl, sidecar_path(gb_expl), data, base);
      const auto grid = load_grid_csv(gb_grid);
      const auto bd = build_boolean_dataset(set.triplets, grid, base, data,
                                            {delta, parse_target_kind(gb_targets), min_support});
      write_text(path, clauses_to_json(bd.clauses, data.feature_names));
      out << bd.cols() << " clauses written to " << path << "\n";
    };
  });

  // fit
  auto* fit = app.add_subcommand("fit", "fit a transparent model (GBFL or a baseline)");
  DataArgs fit_data;
  fit_data.add(fit);
  ReferenceArgs fit_ref;
  fit_ref.add(fit);
  std::string method = "gbfl", fit_clauses, fit_expl, fit_model, learner = "tree", fit_targets = "blackbox";
  int height = 5, min_leaf = 1;
  LogisticConfig lcfg;
  fit->add_option("--method", method, "gbfl|standard|distillation|augmentation")
      ->check(CLI::IsMember({"gbfl", "standard", "distillation", "augmentation"}));
  fit->add_option("--clauses", fit_clauses, "clauses JSON (gbfl)")->check(CLI::ExistingFile);
  fit->add_option("--explanations", fit_expl, "explanations CSV (gbfl, augmentation)")->check(CLI::ExistingFile);
  fit->add_option("--model", fit_model, "black-box model file (distillation, augmentation)")->check(CLI::ExistingFile);
  fit->add_option("--learner", learner, "tree|logistic")->check(CLI::IsMember({"tree", "logistic"}));
  fit->add_option("--height", height, "tree height cap")->check(CLI::NonNegativeNumber);
  fit->add_option("--min-leaf", min_leaf)->check(CLI::PositiveNumber);
  fit->add_option("--l1", lcfg.l1);
  fit->add_option("--epochs", lcfg.epochs);
  fit->add_option("--targets", fit_targets, "blackbox|true");
  fit->callback([&] {
    action = [&] {
      const auto path = need_out(g, "fit");
      const Dataset data = fit_data.load();
      const TreeConfig tc{height, min_leaf, 0};
      TransparentModel m;
      auto blackbox = [&] {
        if (fit_model.empty()) throw UsageError("--model is required for --method " + method);
        return load_model(fit_model, data.n_features());
      };
      auto explanations = [&] {
        if (fit_expl.empty()) throw UsageError("--explanations is required for --method " + method);
        const auto [bounds, base] = fit_ref.derive(data, fit_data);
        return load_explanations(fit_expl, sidecar_path(fit_expl), data, base);
      };
      if (method == "standard") {
        m = train_standard(data, tc);
      } else if (method == "distillation") {
        m = train_distilled(data, *blackbox(), tc);
      } else if (method == "augmentation") {
        m = train_augmented(data, explanations().triplets, *blackbox(), tc);
      } else {
        if (fit_clauses.empty()) throw UsageError("--clauses is required for --method gbfl");
        std::ifstream f(fit_clauses);
        std::stringstream buf;
        buf << f.rdbuf();
        const auto clauses = clauses_from_json(buf.str());
        const auto set = explanations();
        BooleanDataset bd;
        bd.rows = data.n_samples();
        bd.clauses = clauses;
        bd.n_classes = data.n_classes;
        const auto target = parse_target_kind(fit_targets);
        for (std::size_t i = 0; i < data.n_samples(); ++i) {
          bd.targets.push_back(target == TargetKind::blackbox ? set.triplets[i].y_blackbox : data.labels[i]);
          for (const auto& c : clauses) bd.values.push_back(c.evaluate(data.features.row(i)) ? 1 : 0);
        }
        m.method = "GBFL";
        m.uses_clauses = true;
        m.clauses = clauses;
        if (learner == "logistic") m.learner = fit_logistic_l1(bd, lcfg.l1, lcfg.epochs, lcfg.learning_rate, g.seed);
        else m.learner = fit_tree(bd, height, min_leaf, 0);
      }
      write_text(path, m.to_json(data.feature_names).dump(2) + "\n");
      out << m.method << " model written to " << path << "\n";
    };
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "consistency and accuracy of a transparent model");
  DataArgs ev_data;
  ev_data.add(ev);
  ReferenceArgs ev_ref;
  ev_ref.add(ev);
  std::string ev_model, ev_expl;
  ev->add_option("--model", ev_model, "transparent model JSON")->required()->check(CLI::ExistingFile);
  ev->add_option("--explanations", ev_expl, "explanations CSV of the evaluation rows")->required()->check(CLI::ExistingFile);
  ev->callback([&] {
    action = [&] {
      const Dataset data = ev_data.load();
      const auto [bounds, base] = ev_ref.derive(data, ev_data);
      const auto set = load_explanations(ev_expl, sidecar_path(ev_expl), data, base);
      const auto m = TransparentModel::from_json(read_json(ev_model));
      const auto r = consistency(m, set.triplets, data.labels);
      const auto text = r.to_json().dump(2) + "\n";
      if (!g.out.empty()) write_text(g.out, text);
      out << text;
    };
  });

  // report
  auto* rp = app.add_subcommand("report", "re-render report.md and rules.txt from report.json");
  std::string run_dir;
  rp->add_option("--in", run_dir, "run output directory")->required()->check(CLI::ExistingDirectory);
  rp->callback([&] {
    action = [&] {
      const auto report = RunReport::from_json(read_json((fs::path(run_dir) / "report.json").string()));
      const fs::path dir = g.out.empty() ? fs::path(run_dir) : fs::path(g.out);
      fs::create_directories(dir);
      write_text((dir / "report.md").string(), render_markdown(report));
      write_text((dir / "rules.txt").string(), render_rules(report));
      out << render_markdown(report);
    };
  });

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (action) action();
    return 0;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace gbfl
