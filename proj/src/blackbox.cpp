#include "gbfl/blackbox.hpp"

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"

#include "gbfl/error.hpp"
#include "gbfl/hash.hpp"
#include "gbfl/random.hpp"

namespace gbfl {

int argmax(std::span<const double> values) {
  int best = 0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
  }
  return best;
}

void BlackBoxModel::check_width(const Matrix& inputs) const {
  if (inputs.cols() != n_features()) {
    throw Error("input has " + std::to_string(inputs.cols()) + " features, model expects " +
                std::to_string(n_features()));
  }
}

std::vector<double> BlackBoxModel::confidence(std::span<const double> x) const {
  Matrix one(1, x.size());
  std::copy(x.begin(), x.end(), one.row(0).begin());
  const Matrix out = confidence_batch(one);
  return {out.row(0).begin(), out.row(0).end()};
}

int BlackBoxModel::predict(std::span<const double> x) const { return argmax(confidence(x)); }

std::vector<int> BlackBoxModel::predict_batch(const Matrix& inputs) const {
  const Matrix conf = confidence_batch(inputs);
  std::vector<int> out(conf.rows());
  for (std::size_t i = 0; i < conf.rows(); ++i) out[i] = argmax(conf.row(i));
  return out;
}

// ---------------------------------------------------------------------------
// MLP

void MlpConfig::validate() const {
  for (int w : hidden_widths) {
    if (w < 1) throw UsageError("hidden layer widths must be >= 1");
  }
  if (!dropout_rates.empty() && dropout_rates.size() != hidden_widths.size()) {
    throw UsageError("dropout_rates must have one entry per hidden layer");
  }
  for (double r : dropout_rates) {
    if (!(r >= 0.0 && r < 1.0)) throw UsageError("dropout rates must lie in [0, 1)");
  }
  if (!(learning_rate >= 0.0)) throw UsageError("learning_rate must be non-negative");
  if (epochs < 0 || batch_size < 1) throw UsageError("epochs must be >= 0 and batch_size >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw UsageError("momentum must lie in [0, 1)");
}

std::string MlpConfig::hash() const {
  nlohmann::json j = {{"hidden", hidden_widths}, {"dropout", dropout_rates}, {"epochs", epochs},
                      {"batch_size", batch_size}, {"lr", learning_rate}, {"momentum", momentum},
                      {"l2", l2}, {"standardize", standardize_inputs}};
  return to_hex(fnv1a64(j.dump()));
}

MlpModel::MlpModel(std::vector<double> input_shift, std::vector<double> input_scale,
                   std::vector<Layer> layers, std::string config_hash)
    : input_shift_(std::move(input_shift)),
      input_scale_(std::move(input_scale)),
      layers_(std::move(layers)),
      config_hash_(std::move(config_hash)) {
  if (layers_.empty()) throw Error("network needs at least an output layer");
  if (input_shift_.size() != input_scale_.size()) throw Error("input normalization size mismatch");
  std::size_t width = input_shift_.size();
  for (const auto& layer : layers_) {
    if (layer.weights.cols() != width || layer.weights.rows() != layer.bias.size()) {
      throw Error("inconsistent layer shapes");
    }
    width = layer.bias.size();
  }
}

std::vector<int> MlpModel::widths() const {
  std::vector<int> w{static_cast<int>(n_features())};
  for (const auto& layer : layers_) w.push_back(static_cast<int>(layer.bias.size()));
  return w;
}

namespace {

void softmax_inplace(std::span<double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    total += v;
  }
  for (double& v : z) v /= total;
}

// Activations of one forward pass, kept for backprop.
struct Trace {
  std::vector<std::vector<double>> act;  // act[0] = normalized input, act[L] = softmax
  std::vector<std::vector<double>> mask; // dropout multipliers per hidden layer (empty = none)
};

void forward(const MlpModel& net, std::span<const double> x, Trace& t,
             const std::vector<double>* dropout, Rng* rng) {
  const auto& layers = net.layers();
  t.act.resize(layers.size() + 1);
  t.mask.assign(layers.size(), {});
  auto& in = t.act[0];
  in.resize(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) in[j] = (x[j] - net.input_shift()[j]) / net.input_scale()[j];
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const auto& prev = t.act[l];
    auto& out = t.act[l + 1];
    out.assign(layer.bias.begin(), layer.bias.end());
    for (std::size_t o = 0; o < out.size(); ++o) {
      const auto w = layer.weights.row(o);
      double s = out[o];
      for (std::size_t i = 0; i < prev.size(); ++i) s += w[i] * prev[i];
      out[o] = s;
    }
    if (l + 1 == layers.size()) {
      softmax_inplace(out);
    } else {
      for (double& v : out) v = std::max(v, 0.0);
      if (dropout && rng && (*dropout)[l] > 0.0) {
        const double keep = 1.0 - (*dropout)[l];
        auto& m = t.mask[l];
        m.resize(out.size());
        for (std::size_t o = 0; o < out.size(); ++o) {
          m[o] = rng->uniform() < keep ? 1.0 / keep : 0.0;
          out[o] *= m[o];
        }
      }
    }
  }
}

// Accumulates d(cross-entropy)/d(params) for one sample into grad; returns the loss.
double backward(const MlpModel& net, const Trace& t, int label, std::vector<double>& grad,
                std::vector<double>& delta, std::vector<double>& next_delta) {
  const auto& layers = net.layers();
  const std::size_t L = layers.size();
  const auto& probs = t.act[L];
  const double loss = -std::log(std::max(probs[static_cast<std::size_t>(label)], 1e-300));
  delta.assign(probs.begin(), probs.end());
  delta[static_cast<std::size_t>(label)] -= 1.0;

  // parameter offsets per layer
  std::vector<std::size_t> offset(L);
  std::size_t acc = 0;
  for (std::size_t l = 0; l < L; ++l) {
    offset[l] = acc;
    acc += layers[l].weights.rows() * layers[l].weights.cols() + layers[l].bias.size();
  }
  for (std::size_t l = L; l-- > 0;) {
    const auto& layer = layers[l];
    const auto& prev = t.act[l];
    const std::size_t n_out = layer.bias.size();
    const std::size_t n_in = prev.size();
    double* gw = grad.data() + offset[l];
    double* gb = gw + n_out * n_in;
    for (std::size_t o = 0; o < n_out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      for (std::size_t i = 0; i < n_in; ++i) gw[o * n_in + i] += d * prev[i];
      gb[o] += d;
    }
    if (l == 0) break;
    next_delta.assign(n_in, 0.0);
    for (std::size_t o = 0; o < n_out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const auto w = layer.weights.row(o);
      for (std::size_t i = 0; i < n_in; ++i) next_delta[i] += d * w[i];
    }
    // through dropout and ReLU of hidden layer l-1 (whose output is prev)
    const auto& mask = t.mask[l - 1];
    for (std::size_t i = 0; i < n_in; ++i) {
      if (prev[i] <= 0.0) {
        next_delta[i] = 0.0;
      } else if (!mask.empty()) {
        next_delta[i] *= mask[i];
      }
    }
    delta.swap(next_delta);
  }
  return loss;
}

}  // namespace

Matrix MlpModel::confidence_batch(const Matrix& inputs) const {
  check_width(inputs);
  Matrix out(inputs.rows(), static_cast<std::size_t>(n_classes()));
  Trace t;
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    forward(*this, inputs.row(i), t, nullptr, nullptr);
    std::copy(t.act.back().begin(), t.act.back().end(), out.row(i).begin());
  }
  return out;
}

std::vector<double> MlpModel::parameters() const {
  std::vector<double> flat;
  for (const auto& layer : layers_) {
    flat.insert(flat.end(), layer.weights.data().begin(), layer.weights.data().end());
    flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
  }
  return flat;
}

void MlpModel::set_parameters(std::span<const double> flat) {
  std::size_t pos = 0;
  for (auto& layer : layers_) {
    const std::size_t nw = layer.weights.data().size();
    const std::size_t need = nw + layer.bias.size();
    if (pos + need > flat.size()) throw Error("parameter vector too short");
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), nw, layer.weights.data().begin());
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos + nw), layer.bias.size(), layer.bias.begin());
    pos += need;
  }
  if (pos != flat.size()) throw Error("parameter vector too long");
}

double MlpModel::loss_and_gradient(const Matrix& inputs, std::span<const int> labels,
                                   std::vector<double>& gradient) const {
  check_width(inputs);
  gradient.assign(parameters().size(), 0.0);
  Trace t;
  std::vector<double> delta, next;
  double loss = 0.0;
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    forward(*this, inputs.row(i), t, nullptr, nullptr);
    loss += backward(*this, t, labels[i], gradient, delta, next);
  }
  const double n = static_cast<double>(inputs.rows());
  for (double& g : gradient) g /= n;
  return loss / n;
}

MlpModel initialize_mlp(const MlpConfig& config, const Dataset& train, std::uint64_t seed) {
  config.validate();
  const std::size_t d = train.n_features();
  std::vector<double> shift(d, 0.0), scale(d, 1.0);
  if (config.standardize_inputs) {
    const auto s = Standardization::fit(train);
    shift = s.mean;
    scale = s.scale;
  }
  Rng rng(seed);
  std::vector<MlpModel::Layer> layers;
  std::size_t fan_in = d;
  std::vector<std::size_t> widths(config.hidden_widths.begin(), config.hidden_widths.end());
  widths.push_back(static_cast<std::size_t>(train.n_classes));
  for (std::size_t fan_out : widths) {
    MlpModel::Layer layer{Matrix(fan_out, fan_in), std::vector<double>(fan_out, 0.0)};
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    for (double& w : layer.weights.data()) w = sd * rng.normal();
    layers.push_back(std::move(layer));
    fan_in = fan_out;
  }
  return MlpModel(std::move(shift), std::move(scale), std::move(layers), config.hash());
}

MlpModel train_reference_model(const MlpConfig& config, const Dataset& train, std::uint64_t seed) {
  train.validate();
  MlpModel net = initialize_mlp(config, train, seed);
  Rng rng(derive_seed(seed, 1));
  std::vector<double> params = net.parameters();
  std::vector<double> velocity(params.size(), 0.0);
  std::vector<double> grad(params.size(), 0.0);
  std::vector<double> dropout = config.dropout_rates;
  dropout.resize(config.hidden_widths.size(), 0.0);

  std::vector<std::size_t> order(train.n_samples());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Trace t;
  std::vector<double> delta, next;
  const auto batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t i = order[b];
        forward(net, train.features.row(i), t, &dropout, &rng);
        epoch_loss += backward(net, t, train.labels[i], grad, delta, next);
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (std::size_t p = 0; p < params.size(); ++p) {
        const double g = grad[p] * inv + config.l2 * params[p];
        velocity[p] = config.momentum * velocity[p] - config.learning_rate * g;
        params[p] += velocity[p];
      }
      net.set_parameters(params);
    }
    if (!std::isfinite(epoch_loss)) {
      throw Error("black-box training diverged at epoch " + std::to_string(epoch) +
                  " (non-finite loss); try a smaller learning_rate");
    }
  }
  for (double p : params) {
    if (!std::isfinite(p)) throw Error("black-box training diverged; try a smaller learning_rate");
  }
  return net;
}

// ---------------------------------------------------------------------------
// Threshold rule

ThresholdModel::ThresholdModel(std::size_t n_features, std::size_t feature, double threshold,
                               double sharpness)
    : n_features_(n_features), feature_(feature), threshold_(threshold), sharpness_(sharpness) {
  if (feature >= n_features) throw Error("threshold feature index out of range");
  if (!(sharpness > 0.0)) throw Error("threshold sharpness must be positive");
}

Matrix ThresholdModel::confidence_batch(const Matrix& inputs) const {
  check_width(inputs);
  Matrix out(inputs.rows(), 2);
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    const double z = sharpness_ * (inputs(i, feature_) - threshold_);
    double p1 = 1.0 / (1.0 + std::exp(-z));
    if (z > 0.0 && p1 <= 0.5) p1 = std::nextafter(0.5, 1.0);  // rule stays strict near the threshold
    out(i, 0) = 1.0 - p1;
    out(i, 1) = p1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// External process adapter

ExternalModel::ExternalModel(std::string command, std::size_t n_features, std::optional<int> n_classes)
    : command_(std::move(command)), n_features_(n_features), n_classes_(n_classes) {
  if (command_.empty()) throw UsageError("external model command is empty");
}

ExternalModel::~ExternalModel() { stop(); }

int ExternalModel::n_classes() const {
  if (!n_classes_) {
    Matrix probe(1, n_features_, 0.0);
    (void)confidence_batch(probe);
  }
  return *n_classes_;
}

void ExternalModel::start() const {
  int in_pipe[2], out_pipe[2];
  // close-on-exec keeps sibling children from holding each other's pipes open
  if (pipe2(in_pipe, O_CLOEXEC) != 0 || pipe2(out_pipe, O_CLOEXEC) != 0) throw Error("pipe() failed");
  const pid_t pid = fork();
  if (pid < 0) throw Error("fork() failed");
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  pending_.clear();
  std::signal(SIGPIPE, SIG_IGN);
}

void ExternalModel::stop() const {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_, &status, 0);
  }
  pid_ = -1;
}

void ExternalModel::fail(const std::string& what) const {
  std::string detail;
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    kill(pid_, SIGTERM);
    waitpid(pid_, &status, 0);
    if (WIFEXITED(status) && WEXITSTATUS(status) != 0) {
      detail = " (process exited with status " + std::to_string(WEXITSTATUS(status)) + ")";
    }
  }
  pid_ = -1;
  throw Error("external model '" + command_ + "': " + what + detail);
}

Matrix ExternalModel::confidence_batch(const Matrix& inputs) const {
  check_width(inputs);
  std::lock_guard lock(mutex_);
  if (inputs.rows() == 0) return Matrix(0, static_cast<std::size_t>(n_classes_.value_or(0)));
  if (pid_ < 0) start();

  std::string request;
  char buf[32];
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    const auto row = inputs.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", row[j]);
      if (j) request += ',';
      request += buf;
    }
    request += '\n';
  }

  // Interleave writing and reading so a child that answers line by line cannot
  // fill its stdout pipe while we are still blocked writing its stdin.
  std::vector<std::string> lines;
  std::size_t written = 0;
  while (lines.size() < inputs.rows()) {
    pollfd fds[2];
    nfds_t nfds = 0;
    fds[nfds++] = {from_child_, POLLIN, 0};
    if (written < request.size()) fds[nfds++] = {to_child_, POLLOUT, 0};
    if (poll(fds, nfds, -1) < 0) {
      if (errno == EINTR) continue;
      fail("poll() failed");
    }
    if (nfds == 2 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
      const ssize_t n = write(to_child_, request.data() + written, request.size() - written);
      if (n < 0 && errno != EAGAIN && errno != EINTR) fail("process closed its input");
      if (n > 0) written += static_cast<std::size_t>(n);
    }
    if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
      char chunk[65536];
      const ssize_t n = read(from_child_, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) {
        fail("output ended after " + std::to_string(lines.size()) + " of " +
             std::to_string(inputs.rows()) + " probability rows");
      }
      pending_.append(chunk, static_cast<std::size_t>(n));
      std::size_t pos;
      while ((pos = pending_.find('\n')) != std::string::npos) {
        std::string line = pending_.substr(0, pos);
        pending_.erase(0, pos + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        lines.push_back(std::move(line));
      }
    }
  }

  Matrix out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::vector<double> probs;
    for (const auto& field : split_csv_record(lines[i])) {
      char* end = nullptr;
      const double v = std::strtod(field.c_str(), &end);
      if (field.empty() || end != field.c_str() + field.size() || !std::isfinite(v)) {
        fail("malformed probability row '" + lines[i] + "'");
      }
      probs.push_back(v);
    }
    if (!n_classes_) n_classes_ = static_cast<int>(probs.size());
    if (probs.size() != static_cast<std::size_t>(*n_classes_)) {
      fail("row has " + std::to_string(probs.size()) + " probabilities, expected " +
           std::to_string(*n_classes_));
    }
    double total = 0.0;
    for (double p : probs) {
      if (p < 0.0) fail("negative probability in row '" + lines[i] + "'");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-6) fail("row '" + lines[i] + "' is not a simplex (sums to " + std::to_string(total) + ")");
    out.append_row(probs);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model files

namespace {

constexpr char kMagic[] = "GBFLBB1";
constexpr int kFormatVersion = 1;

void put_f64(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out += static_cast<char>((bits >> (8 * b)) & 0xFF);
}

double get_f64(const std::string& in, std::size_t pos) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + static_cast<std::size_t>(b)])) << (8 * b);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_model(const BlackBoxModel& model, const std::filesystem::path& path) {
  nlohmann::json header;
  header["format_version"] = kFormatVersion;
  header["kind"] = model.kind();
  header["d"] = model.n_features();
  header["K"] = model.n_classes();
  std::string blob;
  if (const auto* mlp = dynamic_cast<const MlpModel*>(&model)) {
    header["widths"] = mlp->widths();
    header["config_hash"] = mlp->config_hash();
    for (double v : mlp->input_shift()) put_f64(blob, v);
    for (double v : mlp->input_scale()) put_f64(blob, v);
    for (double v : mlp->parameters()) put_f64(blob, v);
  } else if (const auto* rule = dynamic_cast<const ThresholdModel*>(&model)) {
    header["widths"] = nlohmann::json::array();
    header["feature"] = rule->feature();
    put_f64(blob, rule->threshold());
    put_f64(blob, rule->sharpness());
  } else {
    throw Error("models of kind '" + model.kind() + "' cannot be saved");
  }
  header["n_values"] = blob.size() / 8;
  header["checksum"] = to_hex(fnv1a64(blob));
  const std::string text = header.dump();

  std::string file(kMagic, 7);
  const auto len = static_cast<std::uint32_t>(text.size());
  for (int b = 0; b < 4; ++b) file += static_cast<char>((len >> (8 * b)) & 0xFF);
  file += text;
  file += blob;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(file.data(), static_cast<std::streamsize>(file.size()));
}

std::unique_ptr<BlackBoxModel> load_model(const std::filesystem::path& path,
                                          std::optional<std::size_t> expected_features) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string file = ss.str();
  const std::string where = path.string() + ": ";
  if (file.size() < 11 || file.compare(0, 7, kMagic) != 0) throw Error(where + "not a GBFLBB1 model file");
  std::uint32_t len = 0;
  for (int b = 0; b < 4; ++b) len |= static_cast<std::uint32_t>(static_cast<unsigned char>(file[7 + static_cast<std::size_t>(b)])) << (8 * b);
  if (11 + static_cast<std::size_t>(len) > file.size()) throw Error(where + "truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(file.substr(11, len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(where + "corrupt header: " + e.what());
  }
  if (header.value("format_version", -1) != kFormatVersion) {
    throw Error(where + "unsupported format version " + header.value("format_version", nlohmann::json(-1)).dump());
  }
  const std::string blob = file.substr(11 + len);
  const auto n_values = header.at("n_values").get<std::size_t>();
  if (blob.size() != n_values * 8 || to_hex(fnv1a64(blob)) != header.at("checksum").get<std::string>()) {
    throw Error(where + "checksum mismatch (file truncated or corrupt)");
  }
  const auto d = header.at("d").get<std::size_t>();
  if (expected_features && *expected_features != d) {
    throw Error(where + "model expects " + std::to_string(d) + " features, data has " +
                std::to_string(*expected_features));
  }
  std::vector<double> values(n_values);
  for (std::size_t i = 0; i < n_values; ++i) values[i] = get_f64(blob, 8 * i);

  const auto kind = header.at("kind").get<std::string>();
  if (kind == "threshold") {
    if (values.size() != 2) throw Error(where + "bad threshold payload");
    return std::make_unique<ThresholdModel>(d, header.at("feature").get<std::size_t>(), values[0], values[1]);
  }
  if (kind == "mlp" || kind == "logistic") {
    const auto widths = header.at("widths").get<std::vector<std::size_t>>();
    if (widths.size() < 2 || widths.front() != d || static_cast<int>(widths.back()) != header.at("K").get<int>()) {
      throw Error(where + "inconsistent layer widths");
    }
    std::size_t pos = 0;
    auto take = [&](std::size_t n) {
      if (pos + n > values.size()) throw Error(where + "weight blob too short");
      std::vector<double> out(values.begin() + static_cast<std::ptrdiff_t>(pos),
                              values.begin() + static_cast<std::ptrdiff_t>(pos + n));
      pos += n;
      return out;
    };
    auto shift = take(d);
    auto scale = take(d);
    std::vector<MlpModel::Layer> layers;
    for (std::size_t l = 1; l < widths.size(); ++l) {
      MlpModel::Layer layer{Matrix(widths[l], widths[l - 1]), {}};
      layer.weights.data() = take(widths[l] * widths[l - 1]);
      layer.bias = take(widths[l]);
      layers.push_back(std::move(layer));
    }
    if (pos != values.size()) throw Error(where + "weight blob has trailing values");
    return std::make_unique<MlpModel>(std::move(shift), std::move(scale), std::move(layers),
                                      header.value("config_hash", std::string{}));
  }
  throw Error(where + "unknown model kind '" + kind + "'");
}

}  // namespace gbfl
