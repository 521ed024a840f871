#include "gbfl/metrics.hpp"

#include "gbfl/error.hpp"

namespace gbfl {

int lambda_tb(int pred_b_x, int pred_t_x, int pred_t_pp, std::optional<int> pred_t_pn) {
  const bool ok = pred_b_x == pred_t_x && pred_b_x == pred_t_pp && (!pred_t_pn || *pred_t_pn != pred_b_x);
  return ok ? 0 : 1;
}

ConsistencyReport consistency(const ConsistencyInputs& in, std::span<const int> true_labels) {
  const std::size_t n = in.blackbox_x.size();
  if (in.transparent_x.size() != n || in.transparent_pp.size() != n || in.transparent_pn.size() != n) {
    throw Error("consistency inputs have mismatched lengths");
  }
  if (!true_labels.empty() && true_labels.size() != n) throw Error("true labels do not align with the samples");
  ConsistencyReport r;
  r.n_samples = n;
  if (n == 0) return r;
  std::size_t lambda_sum = 0, pp_hits = 0, pn_hits = 0;
  r.per_sample_loss.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int loss = lambda_tb(in.blackbox_x[i], in.transparent_x[i], in.transparent_pp[i], in.transparent_pn[i]);
    r.per_sample_loss.push_back(loss);
    lambda_sum += static_cast<std::size_t>(loss);
    if (in.transparent_pp[i] == in.blackbox_x[i]) ++pp_hits;
    if (in.transparent_pn[i]) {
      ++r.n_with_pn;
      if (*in.transparent_pn[i] != in.blackbox_x[i]) ++pn_hits;
    }
  }
  const auto dn = static_cast<double>(n);
  r.c_tb = 1.0 - static_cast<double>(lambda_sum) / dn;
  r.c_tb_pp = static_cast<double>(pp_hits) / dn;
  if (r.n_with_pn > 0) r.c_tb_pn = static_cast<double>(pn_hits) / static_cast<double>(r.n_with_pn);
  if (!true_labels.empty()) r.accuracy = accuracy(in.transparent_x, true_labels);
  return r;
}

ConsistencyReport consistency(const TransparentModel& model, std::span<const ExplanationTriplet> triplets,
                              std::span<const int> true_labels) {
  ConsistencyInputs in;
  for (const auto& t : triplets) {
    in.blackbox_x.push_back(t.y_blackbox);
    in.transparent_x.push_back(model.predict(t.x));
    in.transparent_pp.push_back(model.predict(t.pp));
    in.transparent_pn.push_back(t.pn ? std::optional<int>(model.predict(*t.pn)) : std::nullopt);
  }
  return consistency(in, true_labels);
}

double accuracy(std::span<const int> predictions, std::span<const int> true_labels) {
  if (predictions.size() != true_labels.size()) throw Error("predictions and labels have different lengths");
  if (predictions.empty()) throw Error("accuracy of an empty set is undefined");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == true_labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> read_opt(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

nlohmann::json ConsistencyReport::to_json() const {
  return {{"c_tb", opt(c_tb)},
          {"c_tb_pp", opt(c_tb_pp)},
          {"c_tb_pn", opt(c_tb_pn)},
          {"n_samples", n_samples},
          {"n_with_pn", n_with_pn},
          {"accuracy", opt(accuracy)},
          {"per_sample_loss", per_sample_loss}};
}

ConsistencyReport ConsistencyReport::from_json(const nlohmann::json& j) {
  ConsistencyReport r;
  r.c_tb = read_opt(j, "c_tb");
  r.c_tb_pp = read_opt(j, "c_tb_pp");
  r.c_tb_pn = read_opt(j, "c_tb_pn");
  r.n_samples = j.at("n_samples").get<std::size_t>();
  r.n_with_pn = j.at("n_with_pn").get<std::size_t>();
  r.accuracy = read_opt(j, "accuracy");
  r.per_sample_loss = j.value("per_sample_loss", std::vector<int>{});
  return r;
}

}  // namespace gbfl
