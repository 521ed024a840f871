#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gbfl/blackbox.hpp"
#include "gbfl/error.hpp"
#include "gbfl/random.hpp"

using namespace gbfl;
namespace fs = std::filesystem;

namespace {

Dataset random_dataset(std::size_t n, std::size_t d, int k, std::uint64_t seed) {
  Rng rng(seed);
  Dataset data;
  data.n_classes = k;
  for (std::size_t j = 0; j < d; ++j) data.feature_names.push_back("f" + std::to_string(j));
  for (int c = 0; c < k; ++c) data.class_names.push_back(std::to_string(c));
  std::vector<double> row(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : row) v = rng.normal() * 3.0 + 1.0;
    data.features.append_row(row);
    data.labels.push_back(static_cast<int>(i % static_cast<std::size_t>(k)));
  }
  return data;
}

// Classic perceptron; returns true once an epoch makes no mistake.
bool perceptron_separable(const Dataset& d, int max_epochs) {
  std::vector<double> w(d.n_features() + 1, 0.0);
  for (int e = 0; e < max_epochs; ++e) {
    bool clean = true;
    for (std::size_t i = 0; i < d.n_samples(); ++i) {
      const double y = d.labels[i] == 1 ? 1.0 : -1.0;
      double s = w.back();
      for (std::size_t j = 0; j < d.n_features(); ++j) s += w[j] * d.features(i, j);
      if (y * s <= 0.0) {
        clean = false;
        for (std::size_t j = 0; j < d.n_features(); ++j) w[j] += y * d.features(i, j);
        w.back() += y;
      }
    }
    if (clean) return true;
  }
  return false;
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("gbfl_bb_" + name); }

}  // namespace

TEST_CASE("argmax breaks ties toward the lowest index") {
  const double a[] = {0.2, 0.4, 0.4};
  CHECK(argmax(a) == 1);
  const double b[] = {0.5, 0.5};
  CHECK(argmax(b) == 0);
}

TEST_CASE("mlp gradient matches central finite differences") {
  const Dataset data = random_dataset(12, 3, 3, 5);
  MlpConfig cfg;
  cfg.hidden_widths = {5};
  const MlpModel net = initialize_mlp(cfg, data, 9);
  std::vector<double> grad;
  net.loss_and_gradient(data.features, data.labels, grad);
  const auto params = net.parameters();
  REQUIRE(grad.size() == params.size());
  MlpModel probe = net;
  const double h = 1e-6;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params;
    std::vector<double> unused;
    p[i] = params[i] + h;
    probe.set_parameters(p);
    const double up = probe.loss_and_gradient(data.features, data.labels, unused);
    p[i] = params[i] - h;
    probe.set_parameters(p);
    const double down = probe.loss_and_gradient(data.features, data.labels, unused);
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(numeric), std::abs(grad[i]), 1e-3});
    CHECK(std::abs(numeric - grad[i]) / scale < 1e-4);
  }
}

TEST_CASE("confidence rows are on the simplex and deterministic") {
  const Dataset data = random_dataset(40, 4, 3, 1);
  MlpConfig cfg;
  cfg.hidden_widths = {6, 4};
  cfg.epochs = 5;
  const auto net = train_reference_model(cfg, data, 3);
  const auto conf = net.confidence_batch(data.features);
  for (std::size_t i = 0; i < conf.rows(); ++i) {
    double s = 0.0;
    for (double p : conf.row(i)) {
      CHECK(p >= 0.0);
      s += p;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(net.confidence_batch(data.features) == conf);
  CHECK(train_reference_model(cfg, data, 3).parameters() == net.parameters());
  CHECK(net.kind() == "mlp");
  CHECK_THROWS_AS(net.confidence(std::vector<double>{1.0}), Error);
}

TEST_CASE("logistic reference model fits a linearly separable set") {
  Rng rng(17);
  Dataset data;
  data.n_classes = 2;
  data.feature_names = {"a", "b"};
  data.class_names = {"0", "1"};
  for (int i = 0; i < 80; ++i) {
    const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
    const double s = a + 2.0 * b;
    if (std::abs(s) < 0.2) continue;  // keep a visible margin
    const double row[] = {a, b};
    data.features.append_row(row);
    data.labels.push_back(s > 0 ? 1 : 0);
  }
  REQUIRE(perceptron_separable(data, 1000));
  MlpConfig cfg;  // no hidden layers
  cfg.epochs = 300;
  const auto model = train_reference_model(cfg, data, 0);
  CHECK(model.kind() == "logistic");
  const auto pred = model.predict_batch(data.features);
  CHECK(pred == data.labels);
}

TEST_CASE("training rejects a diverging learning rate") {
  Dataset data = random_dataset(30, 2, 2, 4);
  for (auto& v : data.features.data()) v *= 1e150;
  MlpConfig cfg;
  cfg.standardize_inputs = false;
  cfg.learning_rate = 1e10;
  cfg.epochs = 20;
  CHECK_THROWS_AS(train_reference_model(cfg, data, 0), Error);
}

TEST_CASE("mlp config validation") {
  MlpConfig cfg;
  cfg.hidden_widths = {3};
  cfg.dropout_rates = {0.5, 0.5};
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg.dropout_rates = {1.0};
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg.dropout_rates = {0.3};
  CHECK_NOTHROW(cfg.validate());
  MlpConfig other = cfg;
  other.epochs += 1;
  CHECK(other.hash() != cfg.hash());
}

TEST_CASE("threshold model applies the strict rule") {
  const ThresholdModel m(2, 0, 5.0, 2.0);
  CHECK(m.predict(std::vector<double>{5.0, 0.0}) == 0);
  CHECK(m.predict(std::vector<double>{std::nextafter(5.0, 6.0), 0.0}) == 1);
  CHECK(m.predict(std::vector<double>{4.0, 9.0}) == 0);
  CHECK(m.predict(std::vector<double>{8.0, -9.0}) == 1);
  const auto c = m.confidence(std::vector<double>{6.0, 0.0});
  CHECK(c[1] == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
  CHECK_THROWS_AS(ThresholdModel(2, 2, 0.0, 1.0), Error);
}

TEST_CASE("model files round trip and reject damage") {
  const Dataset data = random_dataset(30, 3, 2, 8);
  MlpConfig cfg;
  cfg.hidden_widths = {4};
  cfg.epochs = 3;
  const auto net = train_reference_model(cfg, data, 1);
  const auto path = temp_file("mlp.bin");
  save_model(net, path);
  const auto back = load_model(path, 3);
  CHECK(back->kind() == "mlp");
  CHECK(back->confidence_batch(data.features) == net.confidence_batch(data.features));
  CHECK_THROWS_AS(load_model(path, 4), Error);

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary);
    out << b;
  };
  auto damaged = bytes;
  damaged[damaged.size() - 3] ^= 0x5a;
  write(damaged);
  CHECK_THROWS_AS(load_model(path), Error);
  write(bytes.substr(0, bytes.size() - 8));
  CHECK_THROWS_AS(load_model(path), Error);
  write("NOTAMODEL" + bytes);
  CHECK_THROWS_AS(load_model(path), Error);
  fs::remove(path);

  const ThresholdModel stump(2, 1, -0.5, 3.0);
  const auto tpath = temp_file("stump.bin");
  save_model(stump, tpath);
  const auto t = load_model(tpath);
  CHECK(t->kind() == "threshold");
  CHECK(t->predict(std::vector<double>{0.0, -0.4}) == 1);
  fs::remove(tpath);
}

TEST_CASE("external model over stdio") {
  // class 1 iff the first column exceeds 5; perl reads line by line, unlike mawk
  const std::string script =
      R"(perl -ne 'BEGIN { $| = 1 } @f = split /,/; $p = $f[0] > 5 ? 0.9 : 0.1; printf "%.3f,%.3f\n", 1 - $p, $p')";
  ExternalModel m(script, 2, 2);
  Matrix x = Matrix::from_rows({{1.0, 0.0}, {7.0, 0.0}, {5.0, 3.0}});
  CHECK(m.predict_batch(x) == std::vector<int>{0, 1, 0});
  CHECK(m.n_classes() == 2);
  CHECK(m.predict(std::vector<double>{6.0, 1.0}) == 1);

  ExternalModel bad(R"(perl -ne 'BEGIN { $| = 1 } print "0.7,0.7\n"')", 1, 2);
  CHECK_THROWS_AS(bad.predict(std::vector<double>{1.0}), Error);
  ExternalModel garbage(R"(perl -ne 'BEGIN { $| = 1 } print "yes\n"')", 1, 2);
  CHECK_THROWS_AS(garbage.predict(std::vector<double>{1.0}), Error);
  ExternalModel dies("exit 3", 1, 2);
  CHECK_THROWS_AS(dies.predict(std::vector<double>{1.0}), Error);
}
