#include "gbfl/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "gbfl/error.hpp"
#include "gbfl/hash.hpp"
#include "gbfl/random.hpp"

namespace gbfl {

namespace {

using json = nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw UsageError(where + " must be a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) throw UsageError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string base_name(BaseStrategy s) {
  switch (s) {
    case BaseStrategy::median: return "median";
    case BaseStrategy::zeros: return "zeros";
    case BaseStrategy::explicit_values: return "explicit";
  }
  return "median";
}

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

constexpr double kScoreTie = 1e-12;

// Larger c_tb, then larger accuracy, then smaller delta, N, height.
bool better(const CvChoice& a, const CvChoice& b) {
  if (std::abs(a.c_tb - b.c_tb) > kScoreTie) return a.c_tb > b.c_tb;
  if (std::abs(a.accuracy - b.accuracy) > kScoreTie) return a.accuracy > b.accuracy;
  if (a.delta != b.delta) return a.delta < b.delta;
  if (a.grid_points != b.grid_points) return a.grid_points < b.grid_points;
  return a.height < b.height;
}

struct FoldData {
  Dataset train, valid;
  std::vector<ExplanationTriplet> train_triplets, valid_triplets;
};

std::vector<FoldData> make_folds(const Dataset& train, std::span<const ExplanationTriplet> triplets, int folds,
                                 std::uint64_t seed) {
  if (folds < 2) throw Error("cross-validation needs at least 2 folds");
  if (train.n_samples() < static_cast<std::size_t>(folds)) {
    throw Error("training split has " + std::to_string(train.n_samples()) + " rows, fewer than " +
                std::to_string(folds) + " folds");
  }
  if (triplets.size() != train.n_samples()) throw Error("triplets are not aligned with the training rows");
  const auto valid_sets = stratified_folds(train.labels, train.n_classes, folds, seed);
  std::vector<FoldData> out;
  for (const auto& valid : valid_sets) {
    std::vector<bool> in_valid(train.n_samples(), false);
    for (auto i : valid) in_valid[i] = true;
    std::vector<std::size_t> fit;
    for (std::size_t i = 0; i < train.n_samples(); ++i) {
      if (!in_valid[i]) fit.push_back(i);
    }
    FoldData f;
    f.train = train.subset(fit);
    f.valid = train.subset(valid);
    for (auto i : fit) f.train_triplets.push_back(triplets[i]);
    for (auto i : valid) f.valid_triplets.push_back(triplets[i]);
    out.push_back(std::move(f));
  }
  return out;
}

Learner fit_learner(const BooleanDataset& bd, LearnerKind kind, int height, int min_leaf, const LogisticConfig& lc,
                    std::uint64_t seed) {
  if (kind == LearnerKind::logistic) return fit_logistic_l1(bd, lc.l1, lc.epochs, lc.learning_rate, seed);
  return fit_tree(bd, height, min_leaf, seed);
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration

json BlackBoxSpec::to_json() const {
  json j{{"kind", kind}};
  if (kind == "mlp" || kind == "logistic") {
    j["hidden_widths"] = mlp.hidden_widths;
    j["dropout_rates"] = mlp.dropout_rates;
    j["epochs"] = mlp.epochs;
    j["batch_size"] = mlp.batch_size;
    j["learning_rate"] = mlp.learning_rate;
    j["momentum"] = mlp.momentum;
    j["l2"] = mlp.l2;
    j["standardize_inputs"] = mlp.standardize_inputs;
  } else if (kind == "threshold") {
    j["feature"] = feature;
    j["threshold"] = threshold;
    j["sharpness"] = sharpness;
  } else if (kind == "external") {
    j["command"] = command;
    if (n_classes) j["n_classes"] = *n_classes;
  } else if (kind == "file") {
    j["path"] = path;
  }
  return j;
}

PipelineConfig PipelineConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  PipelineConfig c;
  try {
    check_keys(j,
               {"schema_version", "data", "test_fraction", "seeds", "base", "blackbox", "explainer", "grid_points",
                "deltas", "max_height", "heights", "min_leaf", "cv_folds", "learner", "logistic", "targets",
                "min_support", "bandwidths", "evaluate_on", "top_k", "out"},
               "config");
    if (j.contains("schema_version") && j["schema_version"].get<int>() != kSchemaVersion) {
      throw UsageError("unsupported config schema_version " + j["schema_version"].dump());
    }
    auto resolve = [&](const std::string& p) {
      const std::filesystem::path path(p);
      return (path.is_absolute() || base_dir.empty() ? path : base_dir / path).string();
    };
    if (!j.contains("data")) throw UsageError("config is missing 'data'");
    const auto& d = j["data"];
    check_keys(d, {"path", "label_column", "classes"}, "data");
    c.data_path = resolve(d.at("path").get<std::string>());
    read(d, "label_column", c.label_column);
    read(d, "classes", c.classes);

    read(j, "test_fraction", c.test_fraction);
    read(j, "seeds", c.seeds);
    if (j.contains("base")) {
      const auto& b = j["base"];
      if (b.is_string()) {
        c.base = parse_base_strategy(b.get<std::string>());
      } else {
        check_keys(b, {"strategy", "values"}, "base");
        c.base = parse_base_strategy(b.value("strategy", std::string("median")));
        read(b, "values", c.base_values);
      }
    }
    if (j.contains("blackbox")) {
      const auto& b = j["blackbox"];
      check_keys(b,
                 {"kind", "hidden_widths", "dropout_rates", "epochs", "batch_size", "learning_rate", "momentum",
                  "l2", "standardize_inputs", "feature", "threshold", "sharpness", "command", "n_classes", "path"},
                 "blackbox");
      auto& s = c.blackbox;
      read(b, "kind", s.kind);
      if (s.kind == "logistic" && !b.contains("hidden_widths")) s.mlp.hidden_widths.clear();
      read(b, "hidden_widths", s.mlp.hidden_widths);
      read(b, "dropout_rates", s.mlp.dropout_rates);
      read(b, "epochs", s.mlp.epochs);
      read(b, "batch_size", s.mlp.batch_size);
      read(b, "learning_rate", s.mlp.learning_rate);
      read(b, "momentum", s.mlp.momentum);
      read(b, "l2", s.mlp.l2);
      read(b, "standardize_inputs", s.mlp.standardize_inputs);
      read(b, "feature", s.feature);
      read(b, "threshold", s.threshold);
      read(b, "sharpness", s.sharpness);
      read(b, "command", s.command);
      if (b.contains("n_classes")) s.n_classes = b["n_classes"].get<int>();
      if (b.contains("path")) s.path = resolve(b["path"].get<std::string>());
    }
    if (j.contains("explainer")) {
      const auto& e = j["explainer"];
      check_keys(e, {"kappa", "l1_strength", "l2_strength", "max_iters", "step_size", "fd_step", "snap_epsilon", "log_margin", "seed"},
                 "explainer");
      read(e, "kappa", c.explainer.kappa);
      read(e, "l1_strength", c.explainer.l1_strength);
      read(e, "l2_strength", c.explainer.l2_strength);
      read(e, "max_iters", c.explainer.max_iters);
      read(e, "step_size", c.explainer.step_size);
      read(e, "fd_step", c.explainer.fd_step);
      read(e, "snap_epsilon", c.explainer.snap_epsilon);
      read(e, "log_margin", c.explainer.log_margin);
      read(e, "seed", c.explainer.seed);
    }
    read(j, "grid_points", c.grid_points);
    read(j, "deltas", c.deltas);
    read(j, "max_height", c.max_height);
    read(j, "heights", c.heights);
    read(j, "min_leaf", c.min_leaf);
    read(j, "cv_folds", c.cv_folds);
    if (j.contains("learner")) {
      const auto name = j["learner"].get<std::string>();
      if (name == "tree") c.learner = LearnerKind::tree;
      else if (name == "logistic") c.learner = LearnerKind::logistic;
      else throw UsageError("learner must be 'tree' or 'logistic', got '" + name + "'");
    }
    if (j.contains("logistic")) {
      const auto& l = j["logistic"];
      check_keys(l, {"l1", "epochs", "learning_rate"}, "logistic");
      read(l, "l1", c.logistic.l1);
      read(l, "epochs", c.logistic.epochs);
      read(l, "learning_rate", c.logistic.learning_rate);
    }
    if (j.contains("targets")) c.targets = parse_target_kind(j["targets"].get<std::string>());
    read(j, "min_support", c.min_support);
    read(j, "bandwidths", c.bandwidths);
    if (j.contains("evaluate_on")) {
      const auto v = j["evaluate_on"].get<std::string>();
      if (v != "test" && v != "train") throw UsageError("evaluate_on must be 'test' or 'train'");
      c.evaluate_on_train = v == "train";
    }
    read(j, "top_k", c.top_k);
    if (j.contains("out")) c.out_dir = resolve(j["out"].get<std::string>());
  } catch (const json::exception& e) {
    throw UsageError(std::string("bad config value: ") + e.what());
  } catch (const UsageError&) {
    throw;
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j, path.parent_path());
}

json PipelineConfig::to_json() const {
  json e{{"kappa", explainer.kappa},         {"l1_strength", explainer.l1_strength},
         {"l2_strength", explainer.l2_strength}, {"max_iters", explainer.max_iters},
         {"step_size", explainer.step_size}, {"fd_step", explainer.fd_step},
         {"snap_epsilon", explainer.snap_epsilon}, {"log_margin", explainer.log_margin},
         {"seed", explainer.seed}};
  return {{"schema_version", kSchemaVersion},
          {"data", {{"path", data_path}, {"label_column", label_column}, {"classes", classes}}},
          {"test_fraction", test_fraction},
          {"seeds", seeds},
          {"base", {{"strategy", base_name(base)}, {"values", base_values}}},
          {"blackbox", blackbox.to_json()},
          {"explainer", e},
          {"grid_points", grid_points},
          {"deltas", deltas},
          {"max_height", max_height},
          {"heights", height_set()},
          {"min_leaf", min_leaf},
          {"cv_folds", cv_folds},
          {"learner", learner == LearnerKind::tree ? "tree" : "logistic"},
          {"logistic", {{"l1", logistic.l1}, {"epochs", logistic.epochs}, {"learning_rate", logistic.learning_rate}}},
          {"targets", targets == TargetKind::blackbox ? "blackbox" : "true"},
          {"min_support", min_support},
          {"bandwidths", bandwidths},
          {"evaluate_on", evaluate_on_train ? "train" : "test"},
          {"top_k", top_k},
          {"out", out_dir}};
}

std::vector<int> PipelineConfig::height_set() const {
  if (!heights.empty()) return heights;
  std::vector<int> h;
  for (int i = 1; i <= max_height; ++i) h.push_back(i);
  return h;
}

void PipelineConfig::validate() const {
  auto fail = [](const std::string& m) { throw UsageError("invalid config: " + m); };
  if (data_path.empty()) fail("data.path is empty");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail("test_fraction must be in (0, 1)");
  if (seeds.empty()) fail("seeds must not be empty");
  if (grid_points.empty()) fail("grid_points must not be empty");
  for (int g : grid_points) {
    if (g < 2) fail("every grid_points entry must be >= 2");
  }
  if (deltas.empty()) fail("deltas must not be empty");
  for (int d : deltas) {
    if (d < 0) fail("deltas must be >= 0");
  }
  if (max_height < 1) fail("max_height must be >= 1");
  if (height_set().empty()) fail("heights must not be empty");
  for (int h : height_set()) {
    if (h < 0 || h > max_height) fail("heights must lie in [0, max_height]");
  }
  if (min_leaf < 1) fail("min_leaf must be >= 1");
  if (cv_folds < 2) fail("cv_folds must be >= 2");
  if (top_k < 1) fail("top_k must be >= 1");
  const std::set<std::string> kinds{"mlp", "logistic", "threshold", "external", "file"};
  if (!kinds.count(blackbox.kind)) fail("blackbox.kind '" + blackbox.kind + "' is not one of mlp, logistic, threshold, external, file");
  if (blackbox.kind == "external" && blackbox.command.empty()) fail("blackbox.command is required for kind external");
  if (blackbox.kind == "file" && blackbox.path.empty()) fail("blackbox.path is required for kind file");
  if (blackbox.kind == "threshold" && !(blackbox.sharpness > 0.0)) fail("blackbox.sharpness must be > 0");
  if (base == BaseStrategy::explicit_values && base_values.empty()) fail("base.values is required for the explicit strategy");
  try {
    explainer.validate();
    if (blackbox.kind == "mlp" || blackbox.kind == "logistic") blackbox.mlp.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
}

std::unique_ptr<BlackBoxModel> make_blackbox(const BlackBoxSpec& spec, const Dataset& train, std::uint64_t seed) {
  if (spec.kind == "mlp" || spec.kind == "logistic") {
    MlpConfig cfg = spec.mlp;
    if (spec.kind == "logistic") cfg.hidden_widths.clear();
    return std::make_unique<MlpModel>(train_reference_model(cfg, train, seed));
  }
  if (spec.kind == "threshold") {
    if (spec.feature >= train.n_features()) throw Error("threshold feature index is out of range");
    return std::make_unique<ThresholdModel>(train.n_features(), spec.feature, spec.threshold, spec.sharpness);
  }
  if (spec.kind == "external") return std::make_unique<ExternalModel>(spec.command, train.n_features(), spec.n_classes);
  if (spec.kind == "file") return load_model(spec.path, train.n_features());
  throw Error("unknown black-box kind '" + spec.kind + "'");
}

// ---------------------------------------------------------------------------
// cross-validation

CvChoice cross_validate(const Dataset& train, std::span<const ExplanationTriplet> triplets,
                        const FeatureBounds& bounds, const BaseValues& base, const CvSearch& search,
                        std::uint64_t seed) {
  if (search.grid_points.empty() || search.deltas.empty() || search.heights.empty()) {
    throw Error("cross-validation search sets must not be empty");
  }
  std::vector<int> heights = search.heights;
  if (search.learner == LearnerKind::logistic) heights = {0};
  if (search.grid_points.size() == 1 && search.deltas.size() == 1 && heights.size() == 1) {
    CvChoice c;
    c.grid_points = search.grid_points[0];
    c.delta = search.deltas[0];
    c.height = heights[0];
    c.c_tb = c.accuracy = std::numeric_limits<double>::quiet_NaN();
    return c;
  }
  const auto folds = make_folds(train, triplets, search.folds, seed);
  const int max_h = *std::max_element(heights.begin(), heights.end());

  // sums[(g, d, h)] over folds; a cell that fails on any fold scores 0 there
  std::map<std::tuple<int, int, int>, std::pair<double, double>> sums;
  for (const auto& fold : folds) {
    for (int g : search.grid_points) {
      const GridMatrix grid = generate_grid(fold.train, bounds, g - 1, {search.bandwidths});
      for (int d : search.deltas) {
        std::optional<BooleanDataset> bd;
        try {
          bd = build_boolean_dataset(fold.train_triplets, grid, base, fold.train,
                                     {d, search.targets, search.min_support});
        } catch (const Error&) {
          bd.reset();
        }
        std::optional<Learner> full;
        if (bd) full = fit_learner(*bd, search.learner, max_h, search.min_leaf, search.logistic, seed);
        for (int h : heights) {
          auto& cell = sums[{g, d, h}];
          if (!bd) continue;
          TransparentModel m;
          m.uses_clauses = true;
          m.clauses = bd->clauses;
          if (search.learner == LearnerKind::tree) m.learner = std::get<DecisionTree>(*full).truncated(h);
          else m.learner = *full;
          const auto r = consistency(m, fold.valid_triplets, fold.valid.labels);
          cell.first += r.c_tb.value_or(0.0);
          cell.second += r.accuracy.value_or(0.0);
        }
      }
    }
  }
  CvChoice best;
  bool have = false;
  const double n = static_cast<double>(folds.size());
  for (const auto& [key, s] : sums) {
    CvChoice c;
    std::tie(c.grid_points, c.delta, c.height) = key;
    c.c_tb = s.first / n;
    c.accuracy = s.second / n;
    c.searched = true;
    if (!have || better(c, best)) {
      best = c;
      have = true;
    }
  }
  return best;
}

CvChoice cross_validate_baseline(Baseline which, const Dataset& train, std::span<const ExplanationTriplet> triplets,
                                 const BlackBoxModel& blackbox, const std::vector<int>& heights, int folds,
                                 int min_leaf, std::uint64_t seed) {
  if (heights.empty()) throw Error("height search set must not be empty");
  if (heights.size() == 1) {
    CvChoice c;
    c.height = heights[0];
    c.c_tb = c.accuracy = std::numeric_limits<double>::quiet_NaN();
    return c;
  }
  const auto fold_data = make_folds(train, triplets, folds, seed);
  const int max_h = *std::max_element(heights.begin(), heights.end());
  std::map<int, std::pair<double, double>> sums;
  for (const auto& fold : fold_data) {
    const TreeConfig tc{max_h, min_leaf, seed};
    TransparentModel full;
    switch (which) {
      case Baseline::standard: full = train_standard(fold.train, tc); break;
      case Baseline::distillation: full = train_distilled(fold.train, blackbox, tc); break;
      case Baseline::augmentation: full = train_augmented(fold.train, fold.train_triplets, blackbox, tc); break;
    }
    for (int h : heights) {
      TransparentModel m = full;
      m.learner = std::get<DecisionTree>(full.learner).truncated(h);
      const auto r = consistency(m, fold.valid_triplets, fold.valid.labels);
      sums[h].first += r.c_tb.value_or(0.0);
      sums[h].second += r.accuracy.value_or(0.0);
    }
  }
  CvChoice best;
  bool have = false;
  for (const auto& [h, s] : sums) {
    CvChoice c;
    c.height = h;
    c.c_tb = s.first / static_cast<double>(fold_data.size());
    c.accuracy = s.second / static_cast<double>(fold_data.size());
    c.searched = true;
    if (!have || better(c, best)) {
      best = c;
      have = true;
    }
  }
  return best;
}

TransparentModel fit_gbfl(const Dataset& train, std::span<const ExplanationTriplet> triplets, const GridMatrix& grid,
                          const BaseValues& base, int delta, int height, const PipelineConfig& config) {
  const auto bd = build_boolean_dataset(triplets, grid, base, train, {delta, config.targets, config.min_support});
  TransparentModel m;
  m.method = "GBFL";
  m.uses_clauses = true;
  m.clauses = bd.clauses;
  m.learner = fit_learner(bd, config.learner, height, config.min_leaf, config.logistic, 0);
  return m;
}

// ---------------------------------------------------------------------------
// run

namespace {

json choice_json(const CvChoice& c, bool with_grid) {
  json j{{"height", c.height}};
  if (with_grid) {
    j["grid_points"] = c.grid_points;
    j["delta"] = c.delta;
  }
  j["cross_validated"] = c.searched;
  if (c.searched) {
    j["cv_c_tb"] = c.c_tb;
    j["cv_accuracy"] = c.accuracy;
  }
  return j;
}

std::vector<std::string> top_rules(const TransparentModel& m, const std::vector<std::string>& names, std::size_t k) {
  std::vector<std::string> out;
  for (const auto& f : top_k_features(m.learner, k)) {
    char imp[32];
    std::snprintf(imp, sizeof imp, "%.4f", f.importance);
    out.push_back(std::string("importance ") + imp + "\n" + pretty_clause(m.clauses[f.column], names));
  }
  return out;
}

SeedResult run_seed(const PipelineConfig& cfg, const Dataset& data, std::uint64_t seed, SeedArtifacts& art,
                    const ProgressFn& progress) {
  SeedResult r;
  r.seed = seed;
  art.seed = seed;
  std::string stage = "split";
  auto note = [&](const std::string& s) {
    stage = s;
    if (progress) progress("seed " + std::to_string(seed) + ": " + s);
  };
  try {
    note("split");
    auto sp = split(data, cfg.test_fraction, seed);
    art.train = sp.train;
    art.test = sp.test;
    const auto bounds = derive_bounds(sp.train);
    const auto base = derive_base_values(sp.train, bounds, cfg.base, cfg.base_values);

    note("blackbox");
    art.blackbox = make_blackbox(cfg.blackbox, sp.train, derive_seed(seed, 1));
    const BlackBoxModel& bb = *art.blackbox;

    note("explain");
    art.train_explanations = explain_dataset(bb, sp.train, base, bounds, cfg.explainer, sp.train_indices);
    art.test_explanations = explain_dataset(bb, sp.test, base, bounds, cfg.explainer, sp.test_indices);
    r.pn_coverage_train = art.train_explanations.pn_coverage;
    r.pn_coverage_test = art.test_explanations.pn_coverage;
    const auto& train_t = art.train_explanations.triplets;

    const Dataset& eval_data = cfg.evaluate_on_train ? sp.train : sp.test;
    const auto& eval_t = cfg.evaluate_on_train ? art.train_explanations.triplets : art.test_explanations.triplets;
    r.blackbox_accuracy = accuracy(bb.predict_batch(eval_data.features), eval_data.labels);

    const auto heights = cfg.height_set();
    const std::uint64_t cv_seed = derive_seed(seed, 2);

    note("cross-validation (GBFL)");
    CvSearch search{cfg.grid_points, cfg.deltas, heights, cfg.cv_folds, cfg.min_leaf, cfg.learner,
                    cfg.logistic,    cfg.targets, cfg.min_support, cfg.bandwidths};
    const auto choice = cross_validate(sp.train, train_t, bounds, base, search, cv_seed);

    note("grid");
    art.grid = generate_grid(sp.train, bounds, choice.grid_points - 1, {cfg.bandwidths});

    note("gbfl");
    auto gbfl = fit_gbfl(sp.train, train_t, *art.grid, base, choice.delta, choice.height, cfg);
    r.n_clauses = gbfl.clauses.size();

    note("baselines");
    std::map<std::string, TransparentModel> models;
    std::map<std::string, json> hyper;
    hyper["GBFL"] = choice_json(choice, true);
    if (cfg.learner == LearnerKind::logistic) {
      hyper["GBFL"].erase("height");
      hyper["GBFL"]["l1"] = cfg.logistic.l1;
    }
    const std::pair<const char*, Baseline> baselines[] = {
        {"Standard", Baseline::standard}, {"Distillation", Baseline::distillation}, {"Augmentation", Baseline::augmentation}};
    for (const auto& [name, which] : baselines) {
      const auto c = cross_validate_baseline(which, sp.train, train_t, bb, heights, cfg.cv_folds, cfg.min_leaf, cv_seed);
      const TreeConfig tc{c.height, cfg.min_leaf, 0};
      switch (which) {
        case Baseline::standard: models[name] = train_standard(sp.train, tc); break;
        case Baseline::distillation: models[name] = train_distilled(sp.train, bb, tc); break;
        case Baseline::augmentation: models[name] = train_augmented(sp.train, train_t, bb, tc); break;
      }
      hyper[name] = choice_json(c, false);
    }
    models["GBFL"] = std::move(gbfl);

    note("evaluate");
    for (const auto& name : method_names()) {
      const auto& m = models.at(name);
      MethodResult mr;
      mr.method = name;
      mr.metrics = consistency(m, eval_t, eval_data.labels);
      mr.hyperparameters = hyper.at(name);
      if (name == "GBFL") mr.top_rules = top_rules(m, data.feature_names, cfg.top_k);
      r.methods.push_back(std::move(mr));
      art.models.push_back(m);
    }
  } catch (const std::exception& e) {
    r.error = stage + ": " + e.what();
    if (progress) progress("seed " + std::to_string(seed) + " failed at " + *r.error);
  }
  return r;
}

std::optional<double> mean_of(const std::vector<std::optional<double>>& v) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& x : v) {
    if (x) {
      s += *x;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

}  // namespace

PipelineOutput run_pipeline(const PipelineConfig& config, const ProgressFn& progress) {
  config.validate();
  PipelineOutput out;
  auto& rep = out.report;
  rep.started_at = now_iso();
  rep.config = config.to_json();
  {
    // the output location does not change the experiment
    auto hashed = rep.config;
    hashed.erase("out");
    rep.config_hash = to_hex(fnv1a64(hashed.dump()));
  }

  if (progress) progress("loading " + config.data_path);
  const Dataset data = load_csv(config.data_path, config.label_column, config.classes);
  data.validate();

  for (auto seed : config.seeds) {
    SeedArtifacts art;
    rep.seeds.push_back(run_seed(config, data, seed, art, progress));
    out.artifacts.push_back(std::move(art));
  }

  std::vector<std::optional<double>> bb;
  for (const auto& s : rep.seeds) {
    if (!s.error) bb.push_back(s.blackbox_accuracy);
  }
  rep.blackbox_accuracy_mean = mean_of(bb);
  for (const auto& name : method_names()) {
    std::vector<std::optional<double>> c, pp, pn, acc;
    for (const auto& s : rep.seeds) {
      for (const auto& m : s.methods) {
        if (m.method != name) continue;
        c.push_back(m.metrics.c_tb);
        pp.push_back(m.metrics.c_tb_pp);
        pn.push_back(m.metrics.c_tb_pn);
        acc.push_back(m.metrics.accuracy);
      }
    }
    rep.means[name] = {mean_of(c), mean_of(pp), mean_of(pn), mean_of(acc)};
  }
  rep.finished_at = now_iso();
  return out;
}

// ---------------------------------------------------------------------------
// report serialization

namespace {

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> opt_read(const json& j, const char* k) {
  if (!j.contains(k) || j[k].is_null()) return std::nullopt;
  return j[k].get<double>();
}

}  // namespace

json RunReport::to_json() const {
  json seeds_j = json::array();
  for (const auto& s : seeds) {
    json methods = json::array();
    for (const auto& m : s.methods) {
      methods.push_back({{"method", m.method},
                         {"metrics", m.metrics.to_json()},
                         {"hyperparameters", m.hyperparameters},
                         {"top_rules", m.top_rules}});
    }
    json sj{{"seed", s.seed},
            {"error", s.error ? json(*s.error) : json(nullptr)},
            {"blackbox_accuracy", s.blackbox_accuracy},
            {"pn_coverage_train", s.pn_coverage_train},
            {"pn_coverage_test", s.pn_coverage_test},
            {"n_clauses", s.n_clauses},
            {"methods", methods}};
    seeds_j.push_back(sj);
  }
  json means_j = json::object();
  for (const auto& [name, m] : means) {
    means_j[name] = {{"c_tb", opt_json(m.c_tb)},
                     {"c_tb_pp", opt_json(m.c_tb_pp)},
                     {"c_tb_pn", opt_json(m.c_tb_pn)},
                     {"accuracy", opt_json(m.accuracy)}};
  }
  return {{"schema_version", schema_version},
          {"version", version},
          {"config", config},
          {"config_hash", config_hash},
          {"started_at", started_at},
          {"finished_at", finished_at},
          {"blackbox_accuracy_mean", opt_json(blackbox_accuracy_mean)},
          {"means", means_j},
          {"seeds", seeds_j}};
}

RunReport RunReport::from_json(const json& j) {
  RunReport r;
  try {
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != kSchemaVersion) throw Error("unsupported report schema_version");
    r.version = j.at("version").get<std::string>();
    r.config = j.at("config");
    r.config_hash = j.at("config_hash").get<std::string>();
    r.started_at = j.value("started_at", std::string());
    r.finished_at = j.value("finished_at", std::string());
    r.blackbox_accuracy_mean = opt_read(j, "blackbox_accuracy_mean");
    for (const auto& [name, m] : j.at("means").items()) {
      r.means[name] = {opt_read(m, "c_tb"), opt_read(m, "c_tb_pp"), opt_read(m, "c_tb_pn"), opt_read(m, "accuracy")};
    }
    for (const auto& sj : j.at("seeds")) {
      SeedResult s;
      s.seed = sj.at("seed").get<std::uint64_t>();
      if (!sj.at("error").is_null()) s.error = sj["error"].get<std::string>();
      s.blackbox_accuracy = sj.at("blackbox_accuracy").get<double>();
      s.pn_coverage_train = sj.at("pn_coverage_train").get<double>();
      s.pn_coverage_test = sj.at("pn_coverage_test").get<double>();
      s.n_clauses = sj.at("n_clauses").get<std::size_t>();
      for (const auto& mj : sj.at("methods")) {
        MethodResult m;
        m.method = mj.at("method").get<std::string>();
        m.metrics = ConsistencyReport::from_json(mj.at("metrics"));
        m.hyperparameters = mj.at("hyperparameters");
        m.top_rules = mj.at("top_rules").get<std::vector<std::string>>();
        s.methods.push_back(std::move(m));
      }
      r.seeds.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw Error(std::string("bad report JSON: ") + e.what());
  }
  return r;
}

namespace {

std::string pct(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * *v);
  return buf;
}

}  // namespace

std::string render_markdown(const RunReport& report) {
  std::ostringstream out;
  out << "# Consistency and accuracy (%)\n\n";
  out << "Values are means over seeds; per-seed values follow in the seed columns.\n\n";
  struct Row {
    const char* title;
    std::optional<double> MetricSummary::*mean;
    std::optional<double> ConsistencyReport::*per_seed;
  };
  const Row rows[] = {{"C_TB", &MetricSummary::c_tb, &ConsistencyReport::c_tb},
                      {"C_TB^PN", &MetricSummary::c_tb_pn, &ConsistencyReport::c_tb_pn},
                      {"C_TB^PP", &MetricSummary::c_tb_pp, &ConsistencyReport::c_tb_pp},
                      {"Test Accuracy", &MetricSummary::accuracy, &ConsistencyReport::accuracy}};
  for (const auto& row : rows) {
    out << "## " << row.title << "\n\n| Method | Mean |";
    for (const auto& s : report.seeds) out << " seed " << s.seed << " |";
    out << "\n|---|---|";
    for (std::size_t i = 0; i < report.seeds.size(); ++i) out << "---|";
    out << "\n";
    for (const auto& name : method_names()) {
      const auto it = report.means.find(name);
      out << "| " << name << " | " << (it == report.means.end() ? "n/a" : pct(it->second.*row.mean)) << " |";
      for (const auto& s : report.seeds) {
        std::optional<double> v;
        for (const auto& m : s.methods) {
          if (m.method == name) v = m.metrics.*row.per_seed;
        }
        out << " " << pct(v) << " |";
      }
      out << "\n";
    }
    out << "\n";
  }
  out << "Black-box accuracy: " << pct(report.blackbox_accuracy_mean) << "\n\n";
  out << "## Chosen hyperparameters\n\n";
  for (const auto& s : report.seeds) {
    out << "- seed " << s.seed << ":";
    if (s.error) {
      out << " failed (" << *s.error << ")\n";
      continue;
    }
    for (const auto& m : s.methods) out << " " << m.method << " " << m.hyperparameters.dump() << ";";
    out << " clauses " << s.n_clauses << "\n";
  }
  return out.str();
}

std::string render_rules(const RunReport& report) {
  std::ostringstream out;
  for (const auto& s : report.seeds) {
    for (const auto& m : s.methods) {
      if (m.method != "GBFL") continue;
      out << "# seed " << s.seed << "\n\n";
      for (std::size_t i = 0; i < m.top_rules.size(); ++i) {
        out << "GBFL rank " << i + 1 << " feature\n" << m.top_rules[i] << "\n\n";
      }
    }
  }
  return out.str();
}

void emit_report(const PipelineOutput& output, const PipelineConfig& config, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
  auto write = [&](const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    f << text;
    if (!f) throw Error("cannot write " + p.string());
  };
  write(dir / "report.json", output.report.to_json().dump(2) + "\n");
  write(dir / "report.md", render_markdown(output.report));
  write(dir / "rules.txt", render_rules(output.report));

  bool wrote_top = false;
  for (const auto& art : output.artifacts) {
    if (art.train.n_classes > 0) {
      write(dir / "label_mapping.json", label_mapping_json(art.train, config.label_column) + "\n");
      break;
    }
  }
  for (const auto& art : output.artifacts) {
    if (!art.blackbox) continue;
    const fs::path sd = dir / ("seed_" + std::to_string(art.seed));
    fs::create_directories(sd, ec);
    const auto& names = art.train.feature_names;
    save_csv(art.train, sd / "train.csv", config.label_column);
    save_csv(art.test, sd / "test.csv", config.label_column);
    ExplanationSet all = art.train_explanations;
    all.triplets.insert(all.triplets.end(), art.test_explanations.triplets.begin(),
                        art.test_explanations.triplets.end());
    all.summarize();
    if (!art.train_explanations.triplets.empty()) {
      save_explanations_csv(art.train_explanations, names, (sd / "train_explanations.csv").string());
      save_explanations_sidecar(art.train_explanations, (sd / "train_explanations.json").string());
      save_explanations_csv(art.test_explanations, names, (sd / "test_explanations.csv").string());
      save_explanations_sidecar(art.test_explanations, (sd / "test_explanations.json").string());
      if (!wrote_top) {
        save_explanations_csv(all, names, (dir / "explanations.csv").string());
        wrote_top = true;
      }
    }
    if (art.blackbox->kind() != "external") save_model(*art.blackbox, sd / "blackbox.bin");
    if (art.grid) save_grid_csv(*art.grid, names, (sd / "grid.csv").string());
    for (const auto& m : art.models) {
      std::string file = m.method;
      std::transform(file.begin(), file.end(), file.begin(), [](unsigned char c) { return std::tolower(c); });
      write(sd / (file + ".json"), m.to_json(names).dump(2) + "\n");
    }
  }
}

}  // namespace gbfl
