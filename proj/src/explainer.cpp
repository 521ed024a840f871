#include "gbfl/explainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "gbfl/error.hpp"

namespace gbfl {

void ExplainerConfig::validate() const {
  if (!(kappa >= 0.0)) throw UsageError("kappa must be >= 0");
  if (!(l1_strength >= 0.0) || !(l2_strength >= 0.0)) throw UsageError("l1/l2 strengths must be >= 0");
  if (max_iters < 1) throw UsageError("max_iters must be >= 1");
  if (!(step_size > 0.0)) throw UsageError("step_size must be > 0");
  if (!(fd_step > 0.0)) throw UsageError("fd_step must be > 0");
  if (!(snap_epsilon >= 0.0)) throw UsageError("snap_epsilon must be >= 0");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

constexpr double kLogFloor = 1e-300;

// C(y) - max_{k != y} C(k), or the same gap between log-confidences.
double class_margin(std::span<const double> conf, int label, bool log_space) {
  double other = -kInf;
  for (std::size_t k = 0; k < conf.size(); ++k) {
    if (static_cast<int>(k) != label) other = std::max(other, conf[k]);
  }
  const double own = conf[static_cast<std::size_t>(label)];
  if (log_space) return std::log(std::max(own, kLogFloor)) - std::log(std::max(other, kLogFloor));
  return own - other;
}

void check_finite(std::span<const double> conf) {
  for (double c : conf) {
    if (!std::isfinite(c)) throw Error("black-box returned a non-finite confidence");
  }
}

enum class Goal { keep_class, flip_class };

// Box-constrained proximal gradient in normalized coordinates u = (v - anchor) / scale.
struct Problem {
  const BlackBoxModel& model;
  int label;
  Goal goal;
  std::vector<double> anchor;
  std::vector<double> scale;
  std::vector<double> lo_f, hi_f;  // feasible box in feature units
  std::vector<double> lo_u, hi_u;  // same box in normalized units
  const ExplainerConfig& cfg;

  double hinge(std::span<const double> conf) const {
    const double m = class_margin(conf, label, cfg.log_margin);
    return std::max(goal == Goal::keep_class ? -m : m, -cfg.kappa);
  }

  bool valid(std::span<const double> conf) const {
    return (argmax(conf) == label) == (goal == Goal::keep_class);
  }

  double penalty(std::span<const double> u) const {
    double l1 = 0.0, l2 = 0.0;
    for (double v : u) {
      l1 += std::abs(v);
      l2 += v * v;
    }
    return cfg.l1_strength * l1 + cfg.l2_strength * l2;
  }

  std::vector<double> to_point(std::span<const double> u) const {
    std::vector<double> p(u.size());
    for (std::size_t j = 0; j < u.size(); ++j) {
      if (u[j] == 0.0) p[j] = anchor[j];
      else if (u[j] <= lo_u[j]) p[j] = lo_f[j];
      else if (u[j] >= hi_u[j]) p[j] = hi_f[j];
      else p[j] = std::clamp(anchor[j] + u[j] * scale[j], lo_f[j], hi_f[j]);
    }
    return p;
  }

  std::vector<double> evaluate(std::span<const double> u) const {
    Matrix one(1, u.size());
    const auto p = to_point(u);
    std::copy(p.begin(), p.end(), one.row(0).begin());
    const Matrix conf = model.confidence_batch(one);
    check_finite(conf.row(0));
    return {conf.row(0).begin(), conf.row(0).end()};
  }
};

struct Outcome {
  std::optional<std::vector<double>> best_u;
  bool improved = false;  // best moved away from the start
  SearchDiagnostics diagnostics;
};

Outcome minimize(const Problem& pb, std::vector<double> u, bool start_is_valid_candidate) {
  const std::size_t d = u.size();
  const ExplainerConfig& cfg = pb.cfg;
  Outcome out;

  std::vector<double> conf = pb.evaluate(u);
  double best_obj = kInf;
  std::vector<double> best_u;
  if (start_is_valid_candidate && pb.valid(conf)) {
    best_obj = pb.hinge(conf) + pb.penalty(u);
    best_u = u;
  }

  std::vector<std::size_t> free;
  for (std::size_t j = 0; j < d; ++j) {
    if (pb.lo_u[j] < pb.hi_u[j]) free.push_back(j);
  }

  Matrix probes(2 * free.size(), d);
  std::vector<double> grad(d, 0.0), next(d, 0.0);
  int t = 0;
  while (t < cfg.max_iters && !free.empty()) {
    ++t;
    const double eta = cfg.step_size / std::sqrt(static_cast<double>(t));

    const auto base_point = [&] {
      std::vector<double> p(d);
      for (std::size_t j = 0; j < d; ++j) p[j] = pb.anchor[j] + u[j] * pb.scale[j];
      return p;
    }();
    for (std::size_t f = 0; f < free.size(); ++f) {
      const std::size_t j = free[f];
      auto plus = probes.row(2 * f);
      auto minus = probes.row(2 * f + 1);
      std::copy(base_point.begin(), base_point.end(), plus.begin());
      std::copy(base_point.begin(), base_point.end(), minus.begin());
      plus[j] += cfg.fd_step * pb.scale[j];
      minus[j] -= cfg.fd_step * pb.scale[j];
    }
    const Matrix probe_conf = pb.model.confidence_batch(probes);
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t f = 0; f < free.size(); ++f) {
      check_finite(probe_conf.row(2 * f));
      check_finite(probe_conf.row(2 * f + 1));
      grad[free[f]] = (pb.hinge(probe_conf.row(2 * f)) - pb.hinge(probe_conf.row(2 * f + 1))) /
                      (2.0 * cfg.fd_step);
    }

    double moved = 0.0;
    const double shrink = eta * cfg.l1_strength;
    for (std::size_t j = 0; j < d; ++j) {
      double v = u[j] - eta * (grad[j] + 2.0 * cfg.l2_strength * u[j]);
      v = std::copysign(std::max(std::abs(v) - shrink, 0.0), v);  // soft threshold toward the anchor
      v = std::clamp(v, pb.lo_u[j], pb.hi_u[j]);
      next[j] = v;
      moved = std::max(moved, std::abs(v - u[j]));
    }
    u.swap(next);

    conf = pb.evaluate(u);
    if (pb.valid(conf)) {
      const double obj = pb.hinge(conf) + pb.penalty(u);
      if (obj < best_obj) {
        best_obj = obj;
        best_u = u;
        out.improved = true;
      }
    }
    out.diagnostics.best_objective_history.push_back(best_obj);
    if (moved < 1e-12) break;  // proximal fixed point
  }
  out.diagnostics.iterations = t;
  if (!best_u.empty()) {
    out.best_u = best_u;
    out.diagnostics.objective = best_obj;
  }
  return out;
}

// Zeroes coordinates within epsilon of the anchor, restoring the largest ones
// first if that breaks validity.
std::vector<double> snap(const Problem& pb, std::vector<double> u) {
  std::vector<std::size_t> small;
  for (std::size_t j = 0; j < u.size(); ++j) {
    if (u[j] != 0.0 && std::abs(u[j]) < pb.cfg.snap_epsilon) small.push_back(j);
  }
  if (small.empty()) return u;
  std::stable_sort(small.begin(), small.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(u[a]) > std::abs(u[b]); });
  const std::vector<double> original = u;
  for (std::size_t j : small) u[j] = 0.0;
  for (std::size_t k = 0; !pb.valid(pb.evaluate(u)); ++k) {
    if (k == small.size()) return original;
    u[small[k]] = original[small[k]];
  }
  return u;
}

void check_inputs(const BlackBoxModel& model, std::span<const double> x, const BaseValues& base,
                  const FeatureBounds& bounds) {
  const std::size_t d = model.n_features();
  if (x.size() != d || base.values.size() != d || bounds.size() != d) {
    throw Error("dimension mismatch: model d=" + std::to_string(d) + ", x has " +
                std::to_string(x.size()) + ", base values " + std::to_string(base.values.size()) +
                ", bounds " + std::to_string(bounds.size()));
  }
}

}  // namespace

double pp_objective(std::span<const double> confidences, int label, std::span<const double> point,
                    const BaseValues& base, const FeatureBounds& bounds, const ExplainerConfig& config) {
  double l1 = 0.0, l2 = 0.0;
  for (std::size_t j = 0; j < point.size(); ++j) {
    const double u = (point[j] - base.values[j]) / bounds.scale(j);
    l1 += std::abs(u);
    l2 += u * u;
  }
  return std::max(-class_margin(confidences, label, config.log_margin), -config.kappa) + config.l1_strength * l1 +
         config.l2_strength * l2;
}

double pn_objective(std::span<const double> confidences, int label, std::span<const double> point,
                    std::span<const double> x, const FeatureBounds& bounds,
                    const ExplainerConfig& config) {
  double l1 = 0.0, l2 = 0.0;
  for (std::size_t j = 0; j < point.size(); ++j) {
    const double u = (point[j] - x[j]) / bounds.scale(j);
    l1 += std::abs(u);
    l2 += u * u;
  }
  return std::max(class_margin(confidences, label, config.log_margin), -config.kappa) + config.l1_strength * l1 +
         config.l2_strength * l2;
}

PpResult search_pp(const BlackBoxModel& model, std::span<const double> x, const BaseValues& base,
                   const FeatureBounds& bounds, const ExplainerConfig& config) {
  config.validate();
  check_inputs(model, x, base, bounds);
  const std::size_t d = x.size();
  const auto x_conf = model.confidence(x);
  check_finite(x_conf);
  const int label = argmax(x_conf);

  Problem pb{model, label, Goal::keep_class, base.values, {}, {}, {}, {}, {}, config};
  std::vector<double> start(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double s = bounds.scale(j);
    pb.scale.push_back(s);
    pb.lo_f.push_back(std::min(base.values[j], x[j]));
    pb.hi_f.push_back(std::max(base.values[j], x[j]));
    pb.lo_u.push_back((pb.lo_f[j] - base.values[j]) / s);
    pb.hi_u.push_back((pb.hi_f[j] - base.values[j]) / s);
    start[j] = x[j] >= base.values[j] ? pb.hi_u[j] : pb.lo_u[j];
    if (x[j] == base.values[j]) start[j] = 0.0;
  }

  Outcome run = minimize(pb, start, true);
  PpResult result;
  result.diagnostics = run.diagnostics;
  std::vector<double> u = run.best_u ? *run.best_u : start;
  u = snap(pb, u);
  result.point = pb.to_point(u);
  if (!pb.valid(pb.evaluate(u))) {
    // x itself always keeps its class
    result.point.assign(x.begin(), x.end());
  }
  result.fell_back = !run.improved && result.point == std::vector<double>(x.begin(), x.end()) &&
                     result.point != base.values;
  result.diagnostics.margin = class_margin(model.confidence(result.point), label, config.log_margin);
  return result;
}

PnResult search_pn(const BlackBoxModel& model, std::span<const double> x, const BaseValues& base,
                   const FeatureBounds& bounds, const ExplainerConfig& config) {
  config.validate();
  check_inputs(model, x, base, bounds);
  const std::size_t d = x.size();
  const auto x_conf = model.confidence(x);
  check_finite(x_conf);
  const int label = argmax(x_conf);

  Problem pb{model, label, Goal::flip_class, {x.begin(), x.end()}, {}, {}, {}, {}, {}, config};
  for (std::size_t j = 0; j < d; ++j) {
    const double s = bounds.scale(j);
    const double lower = std::min(bounds.lower[j], x[j]);
    const double upper = std::max(bounds.upper[j], x[j]);
    pb.scale.push_back(s);
    if (x[j] > base.values[j]) {
      pb.lo_f.push_back(x[j]);
      pb.hi_f.push_back(upper);
    } else if (x[j] < base.values[j]) {
      pb.lo_f.push_back(lower);
      pb.hi_f.push_back(x[j]);
    } else {
      pb.lo_f.push_back(x[j]);
      pb.hi_f.push_back(x[j]);
    }
    pb.lo_u.push_back((pb.lo_f[j] - x[j]) / s);
    pb.hi_u.push_back((pb.hi_f[j] - x[j]) / s);
  }

  Outcome run = minimize(pb, std::vector<double>(d, 0.0), false);
  PnResult result;
  result.diagnostics = run.diagnostics;
  if (run.best_u) {
    const auto u = snap(pb, *run.best_u);
    result.point = pb.to_point(u);
    result.diagnostics.margin = class_margin(model.confidence(*result.point), label, config.log_margin);
  } else {
    result.diagnostics.margin = class_margin(x_conf, label, config.log_margin);
  }
  return result;
}

std::vector<double> find_pp(const BlackBoxModel& model, std::span<const double> x,
                            const BaseValues& base, const FeatureBounds& bounds,
                            const ExplainerConfig& config) {
  return search_pp(model, x, base, bounds, config).point;
}

std::optional<std::vector<double>> find_pn(const BlackBoxModel& model, std::span<const double> x,
                                           const BaseValues& base, const FeatureBounds& bounds,
                                           const ExplainerConfig& config) {
  return search_pn(model, x, base, bounds, config).point;
}

void ExplanationSet::summarize() {
  std::size_t with_pn = 0;
  double pp_sum = 0.0, pn_sum = 0.0;
  n_fallback = n_errors = 0;
  for (const auto& t : triplets) {
    pp_sum += static_cast<double>(t.pp_sparsity);
    if (t.pn) {
      ++with_pn;
      pn_sum += static_cast<double>(t.pn_sparsity);
    }
    if (t.pp_fallback) ++n_fallback;
    if (t.error) ++n_errors;
  }
  const double n = static_cast<double>(triplets.size());
  pn_coverage = triplets.empty() ? 0.0 : static_cast<double>(with_pn) / n;
  mean_pp_sparsity = triplets.empty() ? 0.0 : pp_sum / n;
  mean_pn_sparsity = with_pn == 0 ? 0.0 : pn_sum / static_cast<double>(with_pn);
}

namespace {

std::size_t count_diff(std::span<const double> a, std::span<const double> b) {
  std::size_t n = 0;
  for (std::size_t j = 0; j < a.size(); ++j) n += a[j] != b[j];
  return n;
}

}  // namespace

ExplanationSet explain_dataset(const BlackBoxModel& model, const Dataset& data, const BaseValues& base,
                               const FeatureBounds& bounds, const ExplainerConfig& config,
                               std::span<const std::size_t> sample_indices) {
  config.validate();
  if (!sample_indices.empty() && sample_indices.size() != data.n_samples()) {
    throw Error("sample index list does not match the dataset size");
  }
  ExplanationSet set;
  set.triplets.resize(data.n_samples());
  for (std::size_t i = 0; i < data.n_samples(); ++i) {
    auto& t = set.triplets[i];
    t.sample_index = sample_indices.empty() ? i : sample_indices[i];
    const auto x = data.features.row(i);
    t.x.assign(x.begin(), x.end());
    try {
      t.y_blackbox = model.predict(x);
      const PpResult pp = search_pp(model, x, base, bounds, config);
      t.pp = pp.point;
      t.pp_fallback = pp.fell_back;
      t.pp_iterations = pp.diagnostics.iterations;
      t.pp_margin = pp.diagnostics.margin;
      const PnResult pn = search_pn(model, x, base, bounds, config);
      t.pn = pn.point;
      t.pn_iterations = pn.diagnostics.iterations;
      t.pn_margin = pn.diagnostics.margin;
    } catch (const Error& e) {
      t.error = e.what();
      t.pp = t.x;
      t.pp_fallback = true;
      t.pn.reset();
    }
    t.pp_sparsity = count_diff(t.pp, base.values);
    t.pn_sparsity = t.pn ? count_diff(*t.pn, t.x) : 0;
  }
  set.summarize();
  return set;
}

void save_explanations_csv(const ExplanationSet& set, const std::vector<std::string>& feature_names,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "sample_index,kind";
  for (const auto& name : feature_names) out << ',' << name;
  out << '\n';
  char buf[32];
  auto write_row = [&](std::size_t index, const char* kind, const std::vector<double>& v) {
    out << index << ',' << kind;
    for (double value : v) {
      std::snprintf(buf, sizeof buf, "%.17g", value);
      out << ',' << buf;
    }
    out << '\n';
  };
  for (const auto& t : set.triplets) {
    write_row(t.sample_index, "PP", t.pp);
    if (t.pn) write_row(t.sample_index, "PN", *t.pn);
  }
}

void save_explanations_sidecar(const ExplanationSet& set, const std::string& path) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["summary"] = {{"n_samples", set.triplets.size()},
                  {"pn_coverage", set.pn_coverage},
                  {"mean_pp_sparsity", set.mean_pp_sparsity},
                  {"mean_pn_sparsity", set.mean_pn_sparsity},
                  {"n_fallback", set.n_fallback},
                  {"n_errors", set.n_errors}};
  auto& samples = j["samples"] = nlohmann::json::array();
  for (const auto& t : set.triplets) {
    nlohmann::json s = {{"sample_index", t.sample_index},
                        {"y_blackbox", t.y_blackbox},
                        {"pp_sparsity", t.pp_sparsity},
                        {"pn_sparsity", t.pn_sparsity},
                        {"has_pn", t.pn.has_value()},
                        {"pp_fallback", t.pp_fallback},
                        {"pp_iterations", t.pp_iterations},
                        {"pn_iterations", t.pn_iterations},
                        {"pp_margin", t.pp_margin},
                        {"pn_margin", t.pn_margin}};
    if (t.error) s["error"] = *t.error;
    samples.push_back(std::move(s));
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << '\n';
}

ExplanationSet load_explanations(const std::string& csv_path, const std::string& sidecar_path,
                                 const Dataset& data, const BaseValues& base) {
  std::ifstream side(sidecar_path);
  if (!side) throw Error("cannot open " + sidecar_path);
  nlohmann::json j;
  try {
    side >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(sidecar_path + ": " + e.what());
  }
  const auto& samples = j.at("samples");
  if (samples.size() != data.n_samples()) {
    throw Error(sidecar_path + " describes " + std::to_string(samples.size()) + " samples, data has " +
                std::to_string(data.n_samples()));
  }
  ExplanationSet set;
  std::map<std::size_t, std::size_t> position;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ExplanationTriplet t;
    const auto& s = samples[i];
    t.sample_index = s.at("sample_index").get<std::size_t>();
    t.y_blackbox = s.at("y_blackbox").get<int>();
    t.pp_fallback = s.value("pp_fallback", false);
    t.pp_iterations = s.value("pp_iterations", 0);
    t.pn_iterations = s.value("pn_iterations", 0);
    t.pp_margin = s.value("pp_margin", 0.0);
    t.pn_margin = s.value("pn_margin", 0.0);
    if (s.contains("error")) t.error = s["error"].get<std::string>();
    const auto x = data.features.row(i);
    t.x.assign(x.begin(), x.end());
    position[t.sample_index] = i;
    set.triplets.push_back(std::move(t));
  }

  std::ifstream in(csv_path);
  if (!in) throw Error("cannot open " + csv_path);
  std::string line;
  std::getline(in, line);
  const std::size_t d = data.n_features();
  if (split_csv_record(line).size() != d + 2) throw Error(csv_path + ": header width does not match d + 2");
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto fields = split_csv_record(line);
    if (fields.size() != d + 2) throw Error(csv_path + ": row " + std::to_string(row) + " has the wrong width");
    const auto it = position.find(std::stoull(fields[0]));
    if (it == position.end()) throw Error(csv_path + ": unknown sample_index " + fields[0]);
    std::vector<double> v(d);
    for (std::size_t k = 0; k < d; ++k) v[k] = std::stod(fields[k + 2]);
    auto& t = set.triplets[it->second];
    if (fields[1] == "PP") t.pp = std::move(v);
    else if (fields[1] == "PN") t.pn = std::move(v);
    else throw Error(csv_path + ": row " + std::to_string(row) + " has unknown kind '" + fields[1] + "'");
  }
  for (auto& t : set.triplets) {
    if (t.pp.empty()) throw Error(csv_path + ": sample " + std::to_string(t.sample_index) + " has no PP row");
    t.pp_sparsity = count_diff(t.pp, base.values);
    t.pn_sparsity = t.pn ? count_diff(*t.pn, t.x) : 0;
  }
  set.summarize();
  return set;
}

}  // namespace gbfl
