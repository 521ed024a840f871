#include "gbfl/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "gbfl/error.hpp"
#include "gbfl/random.hpp"

namespace gbfl {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string quote_if_needed(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

std::optional<double> parse_real(const std::string& field) {
  const std::string t = trim(field);
  if (t.empty()) return std::nullopt;
  double value = 0.0;
  const char* begin = t.data();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
  return value;
}

// Splits text into records; quoted fields may contain newlines.
std::vector<std::string> split_records(const std::string& text) {
  std::vector<std::string> records;
  std::string current;
  bool in_quotes = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '"') in_quotes = !in_quotes;
    if (!in_quotes && (c == '\n' || c == '\r')) {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      records.push_back(std::move(current));
      current.clear();
      continue;
    }
    current += c;
  }
  if (!current.empty()) records.push_back(std::move(current));
  return records;
}

}  // namespace

void Dataset::validate() const {
  if (n_samples() == 0) throw Error("dataset has no samples");
  if (n_features() == 0) throw Error("dataset has no features");
  if (labels.size() != n_samples()) throw Error("label count does not match sample count");
  if (feature_names.size() != n_features()) throw Error("feature name count does not match d");
  for (double v : features.data()) {
    if (!std::isfinite(v)) throw Error("dataset contains a non-finite value");
  }
  for (int y : labels) {
    if (y < 0 || y >= n_classes) throw Error("label out of range [0, K)");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.features = Matrix(indices.size(), n_features());
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = features.row(indices[i]);
    std::copy(src.begin(), src.end(), out.features.row(i).begin());
    out.labels.push_back(labels[indices[i]]);
  }
  out.feature_names = feature_names;
  out.class_names = class_names;
  out.n_classes = n_classes;
  return out;
}

std::vector<std::string> split_csv_record(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  if (in_quotes) throw Error("unterminated quoted field");
  fields.push_back(std::move(field));
  return fields;
}

Dataset parse_csv(const std::string& text, const std::string& label_column,
                  const std::vector<std::string>& known_classes, const std::string& source) {
  std::string body = text;
  if (body.rfind("\xEF\xBB\xBF", 0) == 0) body.erase(0, 3);
  std::vector<std::string> records = split_records(body);
  std::erase_if(records, [](const std::string& r) { return trim(r).empty(); });
  if (records.empty()) throw Error(source + ": empty file");

  const std::vector<std::string> header = split_csv_record(records.front());
  std::optional<std::size_t> label_index;
  if (!label_column.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (trim(header[c]) == label_column) label_index = c;
    }
    if (!label_index) throw Error(source + ": missing label column '" + label_column + "'");
  }

  Dataset data;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != label_index) data.feature_names.push_back(trim(header[c]));
  }
  data.class_names = known_classes;
  std::map<std::string, int> class_ids;
  for (std::size_t k = 0; k < known_classes.size(); ++k) class_ids[known_classes[k]] = static_cast<int>(k);

  std::vector<double> row(data.feature_names.size());
  for (std::size_t r = 1; r < records.size(); ++r) {
    const std::vector<std::string> fields = split_csv_record(records[r]);
    if (fields.size() != header.size()) {
      throw Error(source + ": row " + std::to_string(r) + " has " + std::to_string(fields.size()) +
                  " fields, header has " + std::to_string(header.size()));
    }
    std::size_t f = 0;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (c == label_index) continue;
      const auto value = parse_real(fields[c]);
      if (!value || !std::isfinite(*value)) {
        throw Error(source + ": row " + std::to_string(r) + ", column '" + trim(header[c]) +
                    "': non-numeric value '" + fields[c] + "'");
      }
      row[f++] = *value;
    }
    data.features.append_row(row);
    if (label_index) {
      const std::string name = trim(fields[*label_index]);
      auto [it, inserted] = class_ids.try_emplace(name, static_cast<int>(data.class_names.size()));
      if (inserted) data.class_names.push_back(name);
      data.labels.push_back(it->second);
    } else {
      data.labels.push_back(0);
    }
  }
  if (!label_index) data.class_names = {"0"};
  data.n_classes = static_cast<int>(data.class_names.size());
  if (data.features.cols() == 0) data.features = Matrix(0, data.feature_names.size());
  if (data.n_samples() == 0) throw Error(source + ": no data rows");
  data.validate();
  return data;
}

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column,
                 const std::vector<std::string>& known_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), label_column, known_classes, path.string());
}

void save_csv(const Dataset& data, const std::filesystem::path& path,
              const std::string& label_column) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& name : data.feature_names) out << quote_if_needed(name) << ',';
  out << quote_if_needed(label_column) << '\n';
  for (std::size_t i = 0; i < data.n_samples(); ++i) {
    for (double v : data.features.row(i)) out << format_double(v) << ',';
    out << quote_if_needed(data.class_names.at(static_cast<std::size_t>(data.labels[i]))) << '\n';
  }
}

std::string label_mapping_json(const Dataset& data, const std::string& label_column) {
  nlohmann::json j;
  j["label_column"] = label_column;
  j["classes"] = data.class_names;
  return j.dump(2);
}

double FeatureBounds::scale(std::size_t j) const {
  const double range = upper[j] - lower[j];
  return range > 0.0 ? range : 1.0;
}

FeatureBounds derive_bounds(const Dataset& data) {
  if (data.n_samples() == 0) throw Error("cannot derive bounds of an empty dataset");
  const std::size_t d = data.n_features();
  FeatureBounds b;
  b.lower.assign(d, 0.0);
  b.upper.assign(d, 0.0);
  b.degenerate.assign(d, false);
  for (std::size_t j = 0; j < d; ++j) {
    const auto col = data.features.column(j);
    const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
    b.lower[j] = *lo;
    b.upper[j] = *hi;
    b.degenerate[j] = *lo == *hi;
  }
  return b;
}

BaseStrategy parse_base_strategy(const std::string& name) {
  if (name == "median") return BaseStrategy::median;
  if (name == "zeros") return BaseStrategy::zeros;
  if (name == "explicit") return BaseStrategy::explicit_values;
  throw UsageError("unknown base-value strategy '" + name + "' (median|zeros|explicit)");
}

double lower_median(std::vector<double> values) {
  if (values.empty()) throw Error("median of an empty column");
  const std::size_t mid = (values.size() - 1) / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  return values[mid];
}

BaseValues derive_base_values(const Dataset& data, const FeatureBounds& bounds,
                              BaseStrategy strategy, const std::vector<double>& explicit_values) {
  const std::size_t d = bounds.size();
  BaseValues base;
  switch (strategy) {
    case BaseStrategy::median:
      if (data.n_features() != d) throw Error("bounds and dataset disagree on d");
      for (std::size_t j = 0; j < d; ++j) base.values.push_back(lower_median(data.features.column(j)));
      break;
    case BaseStrategy::zeros:
      for (std::size_t j = 0; j < d; ++j) base.values.push_back(std::clamp(0.0, bounds.lower[j], bounds.upper[j]));
      break;
    case BaseStrategy::explicit_values:
      if (explicit_values.size() != d) {
        throw Error("explicit base values have length " + std::to_string(explicit_values.size()) +
                    ", expected " + std::to_string(d));
      }
      for (std::size_t j = 0; j < d; ++j) {
        if (explicit_values[j] < bounds.lower[j] || explicit_values[j] > bounds.upper[j]) {
          throw Error("explicit base value for feature " + std::to_string(j) + " lies outside its bounds");
        }
      }
      base.values = explicit_values;
      break;
  }
  return base;
}

SplitResult split(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw Error("test_fraction must lie in (0, 1)");
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(data.n_classes));
  for (std::size_t i = 0; i < data.n_samples(); ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);

  Rng rng(seed);
  SplitResult result;
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    auto& members = by_class[k];
    if (members.empty()) continue;
    if (members.size() < 2) {
      const std::string name = k < data.class_names.size() ? data.class_names[k] : std::to_string(k);
      throw Error("class '" + name + "' has " + std::to_string(members.size()) +
                  " sample; stratified split needs at least 2 per class");
    }
    rng.shuffle(members);
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(members.size())));
    n_test = std::clamp<std::size_t>(n_test, 1, members.size() - 1);
    result.test_indices.insert(result.test_indices.end(), members.begin(),
                               members.begin() + static_cast<std::ptrdiff_t>(n_test));
    result.train_indices.insert(result.train_indices.end(),
                                members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
  }
  std::sort(result.train_indices.begin(), result.train_indices.end());
  std::sort(result.test_indices.begin(), result.test_indices.end());
  result.train = data.subset(result.train_indices);
  result.test = data.subset(result.test_indices);
  return result;
}

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> labels, int n_classes,
                                                       int folds, std::uint64_t seed) {
  if (folds < 2) throw Error("cross-validation needs at least 2 folds");
  if (labels.size() < static_cast<std::size_t>(folds)) {
    throw Error("training set of " + std::to_string(labels.size()) + " samples is too small for " +
                std::to_string(folds) + " folds");
  }
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(folds));
  std::size_t next = 0;  // round-robin continues across classes to balance fold sizes
  for (auto& members : by_class) {
    rng.shuffle(members);
    for (std::size_t i : members) {
      out[next].push_back(i);
      next = (next + 1) % out.size();
    }
  }
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

Standardization Standardization::fit(const Dataset& data) {
  Standardization s;
  const auto n = static_cast<double>(data.n_samples());
  for (std::size_t j = 0; j < data.n_features(); ++j) {
    const auto col = data.features.column(j);
    double mean = 0.0;
    for (double v : col) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : col) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / n);
    s.mean.push_back(mean);
    s.scale.push_back(sd > 0.0 ? sd : 1.0);
  }
  return s;
}

Dataset Standardization::apply(const Dataset& data) const {
  Dataset out = data;
  for (std::size_t i = 0; i < out.n_samples(); ++i) {
    auto row = out.features.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean[j]) / scale[j];
  }
  return out;
}

}  // namespace gbfl
