#include "hbnn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "hbnn/error.hpp"
#include "hbnn/sampling.hpp"
#include "hbnn/vecmath.hpp"

namespace hbnn {

using nlohmann::ordered_json;

Vec clip_features(ConstSpan x, double r) {
  const double n = norm(x);
  return scaled(x, n > r ? r / n : 1.0);
}

ad::Tensor embed(const ad::Tensor& features, const EmbedConfig& cfg) {
  if (!(cfg.clip_r > 0.0)) throw UsageError("clip_r must be positive");
  if (features.rank() != 2) throw UsageError("embed expects a [B, n] feature matrix");
  const std::size_t rows = features.dim(0);
  const std::size_t n = features.dim(1);
  const Space space(cfg.model, cfg.k, n);
  const Vec origin = space.origin();
  std::vector<Vec> out;
  out.reserve(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const Vec row = features.row(i);
    if (!all_finite(row)) throw UsageError("feature row " + std::to_string(i) + " is not finite");
    Vec tangent = clip_features(row, cfg.clip_r);
    if (cfg.model == Model::lorentz) tangent.insert(tangent.begin(), 0.0);
    out.push_back(space.exp(origin, tangent));
  }
  std::vector<double> flat;
  flat.reserve(rows * space.ambient_dim());
  for (const Vec& r : out) flat.insert(flat.end(), r.begin(), r.end());
  return ad::Tensor({rows, space.ambient_dim()}, std::move(flat));
}

namespace {

constexpr const char* kPrefix[] = {"hidden.", "head."};

void check_network(const NetworkSpec& spec) {
  if (!is_head(spec.head.kind)) throw UsageError(std::string(to_string(spec.head.kind)) + " is not a classification head");
  if (!(spec.clip_r > 0.0)) throw UsageError("clip_r must be positive");
  if (!spec.hidden) return;
  if (is_head(spec.hidden->kind)) {
    throw UsageError(std::string(to_string(spec.hidden->kind)) + " cannot be used as a hidden layer");
  }
}

void check_chain(const Layer& hidden, const Layer& head) {
  const auto out = hidden.output_space();
  const auto in = head.input_space();
  if (!in) {
    if (head.spec().in_dim != hidden.output_width()) {
      throw UsageError("head in_dim " + std::to_string(head.spec().in_dim) + " does not match hidden output width " +
                       std::to_string(hidden.output_width()));
    }
    return;
  }
  if (!(*in == *out)) {
    throw UsageError("head input space (" + std::string(to_string(in->model())) + ", dim " + std::to_string(in->dim()) +
                     ") does not match hidden output space (" + std::string(to_string(out->model())) + ", dim " +
                     std::to_string(out->dim()) + ")");
  }
}

std::size_t argmax_row(const ad::Tensor& logits, std::size_t i) {
  const std::size_t c = logits.dim(1);
  std::size_t best = 0;
  for (std::size_t j = 1; j < c; ++j) {
    if (logits.at(i, j) > logits.at(i, best)) best = j;
  }
  return best;
}

ad::Tensor gather_rows(const ad::Tensor& t, std::span<const std::size_t> rows) {
  const std::size_t w = t.dim(1);
  std::vector<double> flat;
  flat.reserve(rows.size() * w);
  for (std::size_t r : rows) {
    const Vec row = t.row(r);
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return ad::Tensor({rows.size(), w}, std::move(flat));
}

ad::Tensor logits_of_inputs(const Network& net, const ad::Tensor& inputs) {
  ad::Tape tape;
  std::vector<ad::Var> p;
  for (const ad::Tensor& t : net.param_values()) p.push_back(tape.constant(t));
  return net.logits(tape, p, tape.constant(inputs)).value();
}

}  // namespace

Network::Network(const NetworkSpec& spec, std::uint64_t seed) : spec_(spec) {
  check_network(spec_);
  if (spec_.hidden) layers_.emplace_back(*spec_.hidden, seed);
  layers_.emplace_back(spec_.head, seed + 1);
  if (spec_.hidden) check_chain(layers_[0], layers_[1]);
}

Network::Network(const NetworkSpec& spec, const std::vector<NamedTensor>& tensors) : spec_(spec) {
  check_network(spec_);
  std::vector<LayerSpec> specs;
  if (spec_.hidden) specs.push_back(*spec_.hidden);
  specs.push_back(spec_.head);
  std::size_t used = 0;
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const std::string prefix = kPrefix[specs.size() == 2 ? l : 1];
    const Layer fresh(specs[l], 0);
    ParamSet set;
    for (const Param& slot : fresh.params()) {
      const auto it = std::find_if(tensors.begin(), tensors.end(),
                                   [&](const NamedTensor& t) { return t.name == prefix + slot.name; });
      if (it == tensors.end()) throw UsageError("model file lacks tensor '" + prefix + slot.name + "'");
      set.add(slot.name, it->value, slot.decay);
      ++used;
    }
    layers_.emplace_back(specs[l], std::move(set));
  }
  if (used != tensors.size()) throw UsageError("model file has tensors the network does not use");
  if (spec_.hidden) check_chain(layers_[0], layers_[1]);
}

std::size_t Network::feature_dim() const { return layers_.front().spec().in_dim; }

std::optional<EmbedConfig> Network::embedding() const {
  const auto space = layers_.front().input_space();
  if (!space) return std::nullopt;
  return EmbedConfig{space->model(), space->curvature(), spec_.clip_r};
}

ad::Tensor Network::embed(const ad::Tensor& features) const {
  if (features.rank() != 2 || features.dim(1) != feature_dim()) {
    throw UsageError("network expects " + std::to_string(feature_dim()) + " features, got " +
                     (features.rank() == 2 ? std::to_string(features.dim(1)) : ad::shape_string(features.shape())));
  }
  const auto cfg = embedding();
  return cfg ? hbnn::embed(features, *cfg) : features;
}

ad::Var Network::logits(ad::Tape& tape, std::span<const ad::Var> p, const ad::Var& inputs) const {
  if (p.size() != param_tensor_count()) throw UsageError("network parameter count mismatch");
  ad::Var h = inputs;
  std::size_t offset = 0;
  for (const Layer& layer : layers_) {
    const std::size_t count = layer.params().size();
    h = layer.forward(tape, p.subspan(offset, count), h);
    offset += count;
  }
  return h;
}

ad::Tensor Network::logits(const ad::Tensor& features) const { return logits_of_inputs(*this, embed(features)); }

std::size_t Network::param_tensor_count() const {
  std::size_t n = 0;
  for (const Layer& layer : layers_) n += layer.params().size();
  return n;
}

std::vector<ad::Tensor> Network::param_values() const {
  std::vector<ad::Tensor> out;
  for (const Layer& layer : layers_) {
    for (const Param& p : layer.params()) out.push_back(p.value);
  }
  return out;
}

std::vector<bool> Network::decay_mask() const {
  std::vector<bool> out;
  for (const Layer& layer : layers_) {
    for (const Param& p : layer.params()) out.push_back(p.decay);
  }
  return out;
}

void Network::set_param_values(const std::vector<ad::Tensor>& values) {
  if (values.size() != param_tensor_count()) throw UsageError("network parameter count mismatch");
  std::size_t i = 0;
  for (Layer& layer : layers_) {
    for (Param& p : layer.params()) {
      if (values[i].shape() != p.value.shape()) throw UsageError("shape mismatch for parameter '" + p.name + "'");
      p.value = values[i++];
    }
  }
}

std::vector<NamedTensor> Network::named_tensors() const {
  std::vector<NamedTensor> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string prefix = kPrefix[layers_.size() == 2 ? l : 1];
    for (const Param& p : layers_[l].params()) out.push_back({prefix + p.name, p.value});
  }
  return out;
}

std::size_t Network::saturation_count() const {
  std::size_t n = 0;
  for (const Layer& layer : layers_) n += layer.saturation_count();
  return n;
}

void Network::reset_saturation() {
  for (Layer& layer : layers_) layer.reset_saturation();
}

void Network::check_constraints() const {
  for (const Layer& layer : layers_) {
    for (const Param& p : layer.params()) {
      if (!all_finite(p.value.data())) throw NumericError("parameter '" + p.name + "' is not finite");
    }
    bool has_alpha = false;
    for (const Param& p : layer.params()) has_alpha = has_alpha || p.name == "raw_alpha";
    if (has_alpha) {
      for (const Horosphere& h : horospheres(layer)) {
        if (!(h.alpha > 0.0) || !std::isfinite(h.alpha)) throw NumericError("alpha left (0, inf)");
        if (std::abs(norm(h.v.vec()) - 1.0) > 1e-12) throw NumericError("v is not a unit vector");
      }
    }
    if (layer.spec().gyro_bias) {
      const Space out = *layer.output_space();
      Vec t = layer.params().get("gyro_bias").values();
      if (out.model() == Model::lorentz) t.insert(t.begin(), 0.0);
      if (!out.contains(out.exp(out.origin(), t))) throw NumericError("gyro bias left the manifold");
    }
  }
}

std::string network_spec_json(const NetworkSpec& spec) {
  ordered_json j;
  j["clip_r"] = spec.clip_r;
  j["hidden"] = spec.hidden ? ordered_json::parse(layer_spec_json(*spec.hidden)) : ordered_json(nullptr);
  j["head"] = ordered_json::parse(layer_spec_json(spec.head));
  return j.dump(2);
}

NetworkSpec network_spec_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    NetworkSpec spec;
    spec.clip_r = j.value("clip_r", 1.0);
    if (j.contains("hidden") && !j.at("hidden").is_null()) spec.hidden = layer_spec_from_json(j.at("hidden").dump());
    spec.head = layer_spec_from_json(j.at("head").dump());
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("bad model description: ") + e.what());
  }
}

namespace {

std::filesystem::path sidecar(const std::filesystem::path& path) {
  std::filesystem::path s = path;
  s += ".json";
  return s;
}

}  // namespace

void save_network(const std::filesystem::path& path, const Network& net) {
  write_tensors(path, net.named_tensors());
  std::ofstream out(sidecar(path), std::ios::binary);
  if (!out) throw UsageError("cannot write " + sidecar(path).string());
  out << network_spec_json(net.spec()) << "\n";
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(sidecar(path), std::ios::binary);
  if (!in) throw UsageError("cannot open model description " + sidecar(path).string());
  std::ostringstream text;
  text << in.rdbuf();
  return Network(network_spec_from_json(text.str()), read_tensors(path));
}

Algorithm parse_algorithm(std::string_view name) {
  if (name == "sgd") return Algorithm::sgd;
  if (name == "adam") return Algorithm::adam;
  throw UsageError("unknown optimizer '" + std::string(name) + "' (expected sgd or adam)");
}

std::string_view to_string(Algorithm algo) { return algo == Algorithm::sgd ? "sgd" : "adam"; }

void OptimConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw UsageError("lr must be positive");
  if (!(weight_decay >= 0.0)) throw UsageError("weight_decay must be nonnegative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw UsageError("momentum must lie in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw UsageError("betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw UsageError("eps must be positive");
  if (epochs == 0) throw UsageError("epochs must be >= 1");
  if (batch_size == 0) throw UsageError("batch_size must be >= 1");
  if (!(gamma > 0.0)) throw UsageError("gamma must be positive");
  for (std::size_t i = 1; i < milestones.size(); ++i) {
    if (milestones[i] <= milestones[i - 1]) throw UsageError("milestones must be strictly increasing");
  }
}

double OptimConfig::lr_at(std::size_t epoch) const {
  double rate = lr;
  for (std::size_t m : milestones) {
    if (epoch >= m) rate *= gamma;
  }
  return rate;
}

Optimizer::Optimizer(const OptimConfig& cfg, const std::vector<ad::Tensor>& params, std::vector<bool> decay)
    : cfg_(cfg), decay_(std::move(decay)) {
  cfg_.validate();
  if (decay_.size() != params.size()) throw UsageError("decay mask size mismatch");
  for (const ad::Tensor& p : params) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void Optimizer::step(std::vector<ad::Tensor>& params, const std::vector<ad::Tensor>& grads, double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size()) throw UsageError("optimizer parameter count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params[i].shape() || params[i].shape() != m_[i].shape()) {
      throw UsageError("optimizer shape mismatch at parameter " + std::to_string(i));
    }
    for (std::size_t j = 0; j < grads[i].size(); ++j) {
      if (!std::isfinite(grads[i][j])) {
        throw NumericError("non-finite gradient in parameter " + std::to_string(i) + " at index " + std::to_string(j));
      }
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].data();
    const auto g0 = grads[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    const double wd = decay_[i] ? cfg_.weight_decay : 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double g = g0[j] + wd * w[j];
      if (cfg_.algorithm == Algorithm::sgd) {
        m[j] = cfg_.momentum * m[j] + g;
        w[j] -= lr * m[j];
      } else {
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
        w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
      }
    }
  }
}

std::string epoch_json(const EpochRecord& rec) {
  ordered_json j;
  j["epoch"] = rec.epoch;
  j["lr"] = rec.lr;
  j["loss"] = rec.loss;
  j["accuracy"] = rec.accuracy;
  j["saturated"] = rec.saturated;
  return j.dump();
}

std::vector<EpochRecord> train(Network& net, const Dataset& data, const OptimConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  if (data.size() == 0) throw UsageError("training set is empty");
  if (data.dim() != net.feature_dim()) {
    throw UsageError("dataset has " + std::to_string(data.dim()) + " features, network expects " +
                     std::to_string(net.feature_dim()));
  }
  if (data.classes > net.classes()) {
    throw UsageError("dataset has " + std::to_string(data.classes) + " classes, network head has " +
                     std::to_string(net.classes()));
  }
  const ad::Tensor inputs = net.embed(data.features);
  std::vector<ad::Tensor> params = net.param_values();
  Optimizer optim(cfg, params, net.decay_mask());
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochRecord> history;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    net.reset_saturation();
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = cfg.lr_at(epoch);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    bool capped = false;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      std::vector<int> labels;
      for (std::size_t r : rows) labels.push_back(data.labels[r]);

      ad::Tape tape;
      std::vector<ad::Var> p;
      for (const ad::Tensor& t : params) p.push_back(tape.leaf(t));
      const ad::Var loss = ad::softmax_cross_entropy(net.logits(tape, p, tape.constant(gather_rows(inputs, rows))), labels);
      const double value = loss.value().item();
      if (!std::isfinite(value)) throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
      tape.backward(loss);
      std::vector<ad::Tensor> grads;
      for (const ad::Var& v : p) grads.push_back(v.grad());
      try {
        optim.step(params, grads, rec.lr);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " aborted: " + e.what());
      }
      net.set_param_values(params);
      if (opts.on_batch) opts.on_batch(value);
      loss_sum += value * static_cast<double>(rows.size());
      seen += rows.size();
      if (opts.max_steps != 0 && optim.steps() >= opts.max_steps) {
        capped = true;
        break;
      }
    }
    rec.loss = loss_sum / static_cast<double>(seen);
    rec.saturated = net.saturation_count();
    net.check_constraints();

    const ad::Tensor logits = logits_of_inputs(net, inputs);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (static_cast<int>(argmax_row(logits, i)) == data.labels[i]) ++correct;
    }
    rec.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.push_back(rec);
    if (opts.on_epoch) opts.on_epoch(rec);
    if (capped) break;
  }
  return history;
}

double mcc_from_confusion(const std::vector<std::vector<std::size_t>>& confusion) {
  const std::size_t k = confusion.size();
  double s = 0.0;
  double c = 0.0;
  std::vector<double> t(k, 0.0);
  std::vector<double> p(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double n = static_cast<double>(confusion[i][j]);
      s += n;
      t[i] += n;
      p[j] += n;
      if (i == j) c += n;
    }
  }
  double tp = 0.0;
  double tt = 0.0;
  double pp = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    tp += t[i] * p[i];
    tt += t[i] * t[i];
    pp += p[i] * p[i];
  }
  const double denom = std::sqrt(s * s - pp) * std::sqrt(s * s - tt);
  if (!(denom > 0.0)) return 0.0;
  return std::clamp((c * s - tp) / denom, -1.0, 1.0);
}

double macro_f1_from_confusion(const std::vector<std::vector<std::size_t>>& confusion) {
  const std::size_t k = confusion.size();
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < k; ++c) {
    double tp = static_cast<double>(confusion[c][c]);
    double fp = 0.0;
    double fn = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == c) continue;
      fp += static_cast<double>(confusion[j][c]);
      fn += static_cast<double>(confusion[c][j]);
    }
    if (tp + fp + fn == 0.0) continue;
    total += 2.0 * tp / (2.0 * tp + fp + fn);
    ++counted;
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

std::optional<double> binary_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw UsageError("auc: scores and labels differ in length");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  double pos = 0.0;
  double neg = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t r = i; r < j; ++r) {
      const int y = labels[idx[r]];
      if (y == 1) {
        pos_rank_sum += rank;
        pos += 1.0;
      } else if (y == 0) {
        neg += 1.0;
      } else {
        throw UsageError("auc needs binary labels");
      }
    }
    i = j;
  }
  if (pos == 0.0 || neg == 0.0) return std::nullopt;
  return (pos_rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

Metrics classification_metrics(std::span<const int> labels, std::span<const int> predicted, std::size_t classes,
                               std::span<const double> positive_scores) {
  if (labels.size() != predicted.size()) throw UsageError("labels and predictions differ in length");
  Metrics m;
  m.count = labels.size();
  m.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto t = static_cast<std::size_t>(labels[i]);
    const auto p = static_cast<std::size_t>(predicted[i]);
    if (labels[i] < 0 || predicted[i] < 0 || t >= classes || p >= classes) throw UsageError("label out of range");
    ++m.confusion[t][p];
    if (t == p) ++correct;
  }
  m.accuracy = m.count == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(m.count);
  m.mcc = mcc_from_confusion(m.confusion);
  m.macro_f1 = macro_f1_from_confusion(m.confusion);
  if (classes == 2 && !positive_scores.empty()) m.auc = binary_auc(positive_scores, labels);
  return m;
}

Metrics evaluate(const Network& net, const Dataset& data) {
  if (data.classes > net.classes()) {
    throw UsageError("dataset has " + std::to_string(data.classes) + " classes, network head has " +
                     std::to_string(net.classes()));
  }
  const std::size_t before = net.saturation_count();
  const ad::Tensor logits = net.logits(data.features);
  const ad::Tensor probs = ad::softmax_rows(logits);
  std::vector<int> predicted;
  std::vector<double> scores;
  double loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    predicted.push_back(static_cast<int>(argmax_row(logits, i)));
    if (net.classes() == 2) scores.push_back(probs.at(i, 1));
    const auto y = static_cast<std::size_t>(data.labels[i]);
    double mx = logits.at(i, 0);
    for (std::size_t j = 1; j < net.classes(); ++j) mx = std::max(mx, logits.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < net.classes(); ++j) z += std::exp(logits.at(i, j) - mx);
    loss += mx + std::log(z) - logits.at(i, y);
  }
  Metrics m = classification_metrics(data.labels, predicted, net.classes(), scores);
  m.loss = data.size() == 0 ? 0.0 : loss / static_cast<double>(data.size());
  m.saturated = net.saturation_count() - before;
  return m;
}

std::string metrics_json(const Metrics& m) {
  ordered_json j;
  j["count"] = m.count;
  j["loss"] = m.loss;
  j["accuracy"] = m.accuracy;
  j["mcc"] = m.mcc;
  j["macro_f1"] = m.macro_f1;
  j["auc"] = m.auc ? ordered_json(*m.auc) : ordered_json(nullptr);
  j["confusion"] = m.confusion;
  j["saturated"] = m.saturated;
  return j.dump();
}

}  // namespace hbnn
