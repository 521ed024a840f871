#include "gbfl/clauses.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "json.hpp"

#include "gbfl/error.hpp"
#include "gbfl/hash.hpp"

namespace gbfl {

bool Literal::contains(double v) const {
  if (lower && (lower->inclusive ? v < lower->value : v <= lower->value)) return false;
  if (upper && (upper->inclusive ? v > upper->value : v >= upper->value)) return false;
  return true;
}

bool Literal::intersect(const Literal& other) {
  if (other.lower) {
    if (!lower || other.lower->value > lower->value ||
        (other.lower->value == lower->value && !other.lower->inclusive)) {
      lower = other.lower;
    }
  }
  if (other.upper) {
    if (!upper || other.upper->value < upper->value ||
        (other.upper->value == upper->value && !other.upper->inclusive)) {
      upper = other.upper;
    }
  }
  if (lower && upper) {
    if (lower->value > upper->value) return false;
    if (lower->value == upper->value && !(lower->inclusive && upper->inclusive)) return false;
  }
  return true;
}

bool Clause::evaluate(std::span<const double> x) const {
  for (const auto& lit : literals) {
    if (!lit.contains(x[lit.feature])) return false;
  }
  return true;
}

std::string Clause::canonical() const {
  std::string s;
  char buf[64];
  for (const auto& lit : literals) {
    s += std::to_string(lit.feature) + ":";
    if (lit.lower) {
      std::snprintf(buf, sizeof buf, "%a", lit.lower->value);
      s += (lit.lower->inclusive ? "[" : "(") + std::string(buf);
    } else {
      s += "-";
    }
    s += ",";
    if (lit.upper) {
      std::snprintf(buf, sizeof buf, "%a", lit.upper->value);
      s += std::string(buf) + (lit.upper->inclusive ? "]" : ")");
    } else {
      s += "-";
    }
    s += ";";
  }
  return s;
}

void Clause::assign_id() { id = to_hex(fnv1a64(canonical())); }

TargetKind parse_target_kind(const std::string& name) {
  if (name == "blackbox") return TargetKind::blackbox;
  if (name == "true") return TargetKind::true_labels;
  throw UsageError("unknown target kind '" + name + "' (blackbox|true)");
}

namespace {

std::size_t step_index(std::size_t s, int delta, bool up, std::size_t n) {
  const auto d = static_cast<std::size_t>(delta);
  if (up) return std::min(s + d, n);
  return s >= d ? s - d : 0;
}

}  // namespace

std::optional<Clause> clause_from_triplet(const ExplanationTriplet& t, const GridMatrix& grid,
                                          const BaseValues& base, int delta) {
  const std::size_t d = grid.n_features();
  if (t.x.size() != d || t.pp.size() != d || base.values.size() != d || (t.pn && t.pn->size() != d)) {
    throw Error("grid/feature dimension mismatch in clause generation");
  }
  if (delta < 0) throw Error("skip parameter delta must be >= 0");
  const std::size_t top = static_cast<std::size_t>(grid.intervals);

  Clause clause;
  for (std::size_t j = 0; j < d; ++j) {
    const double x = t.x[j], b = base.values[j], p = t.pp[j];
    std::optional<Literal> merged;
    bool pn_bound = false;
    auto add = [&](Literal lit) {
      if (!lit.lower && !lit.upper) return true;
      if (!merged) {
        merged = lit;
        return true;
      }
      return merged->intersect(lit);
    };

    if (p != b) {
      Literal lit{j, {}, {}};
      if (p > b) {
        if (auto g = closest_grid_index_between(grid, j, b, p, p)) lit.lower = Bound{grid.at(*g, j), true};
        if (auto s = nearest_grid_index(grid, j, x, Side::above, true)) {
          lit.upper = Bound{grid.at(step_index(*s, delta, true, top), j), false};
        }
      } else {
        if (auto g = closest_grid_index_between(grid, j, p, b, p)) lit.upper = Bound{grid.at(*g, j), false};
        if (auto s = nearest_grid_index(grid, j, x, Side::below, true)) {
          lit.lower = Bound{grid.at(step_index(*s, delta, false, top), j), true};
        }
      }
      add(lit);
    }

    if (t.pn && (*t.pn)[j] != x) {
      const double n = (*t.pn)[j];
      Literal lit{j, {}, {}};
      if (x > b) {
        if (auto g = closest_grid_index_between(grid, j, x, n, n)) {
          lit.upper = Bound{grid.at(*g, j), false};
          pn_bound = true;
        }
        if (auto s = nearest_grid_index(grid, j, x, Side::below, true)) {
          lit.lower = Bound{grid.at(step_index(*s, delta, false, top), j), true};
        }
      } else {
        if (auto g = closest_grid_index_between(grid, j, n, x, n)) {
          lit.lower = Bound{grid.at(*g, j), false};
          pn_bound = true;
        }
        if (auto s = nearest_grid_index(grid, j, x, Side::above, false)) {
          lit.upper = Bound{grid.at(step_index(*s, delta, true, top), j), false};
        }
      }
      if (!add(lit)) return std::nullopt;
    }

    if (merged) {
      clause.literals.push_back(*merged);
      clause.has_pn_literal = clause.has_pn_literal || pn_bound;
    }
  }
  if (clause.literals.empty()) return std::nullopt;
  clause.provenance.push_back(t.sample_index);
  clause.assign_id();
  return clause;
}

int evaluate_clause(const Clause& clause, std::span<const double> x) {
  for (const auto& lit : clause.literals) {
    if (lit.feature >= x.size()) throw Error("clause references a feature beyond the input width");
  }
  return clause.evaluate(x) ? 1 : 0;
}

Matrix BooleanDataset::as_matrix() const {
  Matrix m(rows, cols());
  for (std::size_t i = 0; i < values.size(); ++i) m.data()[i] = values[i];
  return m;
}

std::vector<double> clause_features(std::span<const Clause> clauses, std::span<const double> x) {
  std::vector<double> out(clauses.size());
  for (std::size_t c = 0; c < clauses.size(); ++c) out[c] = evaluate_clause(clauses[c], x);
  return out;
}

Matrix clause_feature_matrix(std::span<const Clause> clauses, const Matrix& raw) {
  Matrix out(raw.rows(), clauses.size());
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    for (std::size_t c = 0; c < clauses.size(); ++c) out(i, c) = clauses[c].evaluate(raw.row(i)) ? 1.0 : 0.0;
  }
  return out;
}

BooleanDataset build_boolean_dataset(std::span<const ExplanationTriplet> triplets, const GridMatrix& grid,
                                     const BaseValues& base, const Dataset& data,
                                     const BooleanBuildOptions& options) {
  if (triplets.size() != data.n_samples()) throw Error("triplets are not aligned with the dataset");
  std::vector<Clause> clauses;
  std::map<std::string, std::size_t> seen;
  for (const auto& t : triplets) {
    auto clause = clause_from_triplet(t, grid, base, options.delta);
    if (!clause) continue;
    const auto key = clause->canonical();
    if (auto it = seen.find(key); it != seen.end()) {
      clauses[it->second].provenance.push_back(t.sample_index);
      clauses[it->second].has_pn_literal = clauses[it->second].has_pn_literal || clause->has_pn_literal;
      continue;
    }
    seen.emplace(key, clauses.size());
    clauses.push_back(std::move(*clause));
  }

  BooleanDataset out;
  out.rows = data.n_samples();
  out.n_classes = data.n_classes;
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    out.targets.push_back(options.targets == TargetKind::blackbox ? triplets[i].y_blackbox : data.labels[i]);
  }
  if (options.min_support > 0) {
    std::erase_if(clauses, [&](const Clause& c) {
      std::size_t support = 0;
      for (std::size_t i = 0; i < data.n_samples(); ++i) support += c.evaluate(data.features.row(i));
      return support < options.min_support;
    });
  }
  if (clauses.empty()) {
    throw Error("no boolean clauses survived; try a larger delta or more grid points");
  }
  out.clauses = std::move(clauses);
  out.values.resize(out.rows * out.cols());
  for (std::size_t i = 0; i < out.rows; ++i) {
    for (std::size_t c = 0; c < out.cols(); ++c) {
      out.values[i * out.cols() + c] = out.clauses[c].evaluate(data.features.row(i)) ? 1 : 0;
    }
  }
  return out;
}

namespace {

std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string pretty_clause(const Clause& clause, const std::vector<std::string>& feature_names) {
  std::string out;
  for (const auto& lit : clause.literals) {
    if (!out.empty()) out += " & ";
    const std::string name = lit.feature < feature_names.size() ? feature_names[lit.feature]
                                                                : "x" + std::to_string(lit.feature);
    if (lit.upper) out += fmt2(lit.upper->value) + (lit.upper->inclusive ? ">=" : ">");
    out += name;
    if (lit.lower) out += (lit.lower->inclusive ? ">=" : ">") + fmt2(lit.lower->value);
  }
  return out;
}

std::string clauses_to_json(std::span<const Clause> clauses, const std::vector<std::string>& feature_names) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : clauses) {
    nlohmann::json lits = nlohmann::json::array();
    for (const auto& lit : c.literals) {
      nlohmann::json l = {{"feature", lit.feature}};
      if (lit.feature < feature_names.size()) l["name"] = feature_names[lit.feature];
      if (lit.lower) l["lower"] = {{"value", lit.lower->value}, {"inclusive", lit.lower->inclusive}};
      if (lit.upper) l["upper"] = {{"value", lit.upper->value}, {"inclusive", lit.upper->inclusive}};
      lits.push_back(std::move(l));
    }
    arr.push_back({{"id", c.id},
                   {"literals", std::move(lits)},
                   {"provenance", c.provenance},
                   {"has_pn_literal", c.has_pn_literal},
                   {"text", pretty_clause(c, feature_names)}});
  }
  return nlohmann::json({{"schema_version", 1}, {"clauses", arr}}).dump(2);
}

std::vector<Clause> clauses_from_json(const std::string& text) {
  std::vector<Clause> out;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& c : j.at("clauses")) {
      Clause clause;
      for (const auto& l : c.at("literals")) {
        Literal lit{l.at("feature").get<std::size_t>(), {}, {}};
        if (l.contains("lower")) lit.lower = Bound{l["lower"].at("value").get<double>(), l["lower"].at("inclusive").get<bool>()};
        if (l.contains("upper")) lit.upper = Bound{l["upper"].at("value").get<double>(), l["upper"].at("inclusive").get<bool>()};
        clause.literals.push_back(lit);
      }
      clause.provenance = c.at("provenance").get<std::vector<std::size_t>>();
      clause.has_pn_literal = c.value("has_pn_literal", false);
      clause.assign_id();
      if (c.contains("id") && c["id"].get<std::string>() != clause.id) {
        throw Error("clause id does not match its literals");
      }
      out.push_back(std::move(clause));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad clause JSON: ") + e.what());
  }
  return out;
}

}  // namespace gbfl
