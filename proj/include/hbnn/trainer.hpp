#pragma once

// End-to-end training of an optional hyperbolic FC layer followed by a
// classification head: feature embedding, optimizers over the raw
// parameters, the training loop and evaluation metrics.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hbnn/autodiff.hpp"
#include "hbnn/dataset.hpp"
#include "hbnn/layers.hpp"

namespace hbnn {

/// min(1, r / ||x||) x
Vec clip_features(ConstSpan x, double r);

struct EmbedConfig {
  Model model = Model::poincare;
  Curvature k{-1.0};
  double clip_r = 1.0;
};

/// exp at the origin of each clipped row. The Lorentz path lifts x to (0, x)
/// first, so rows grow by one coordinate.
ad::Tensor embed(const ad::Tensor& features, const EmbedConfig& cfg);

struct NetworkSpec {
  std::optional<LayerSpec> hidden;
  LayerSpec head;
  double clip_r = 1.0;
};

/// Features -> [embed] -> [hidden FC] -> head logits. Embedding happens only
/// when the first layer consumes manifold points.
class Network {
 public:
  Network(const NetworkSpec& spec, std::uint64_t seed);
  /// Parameters from a model file, names prefixed "hidden." / "head.".
  Network(const NetworkSpec& spec, const std::vector<NamedTensor>& tensors);

  const NetworkSpec& spec() const { return spec_; }
  std::size_t feature_dim() const;
  std::size_t classes() const { return spec_.head.out_dim; }
  std::optional<EmbedConfig> embedding() const;

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  /// Features [B, n] to first-layer inputs.
  ad::Tensor embed(const ad::Tensor& features) const;
  /// Logits from already embedded inputs; `p` lists every parameter in order.
  ad::Var logits(ad::Tape& tape, std::span<const ad::Var> p, const ad::Var& inputs) const;
  ad::Tensor logits(const ad::Tensor& features) const;

  std::size_t param_tensor_count() const;
  std::vector<ad::Tensor> param_values() const;
  std::vector<bool> decay_mask() const;
  void set_param_values(const std::vector<ad::Tensor>& values);
  std::vector<NamedTensor> named_tensors() const;

  std::size_t saturation_count() const;
  void reset_saturation();

  /// Throws NumericError if a derived constraint is broken: alpha_k <= 0 or
  /// non-finite, a non-unit v_k, or an off-manifold gyro bias.
  void check_constraints() const;

 private:
  NetworkSpec spec_;
  std::vector<Layer> layers_;
};

std::string network_spec_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const std::string& text);

/// Writes `<path>` (tensors) and `<path>.json` (layer-description sidecar).
void save_network(const std::filesystem::path& path, const Network& net);
Network load_network(const std::filesystem::path& path);

enum class Algorithm { sgd, adam };
Algorithm parse_algorithm(std::string_view name);
std::string_view to_string(Algorithm algo);

struct OptimConfig {
  Algorithm algorithm = Algorithm::adam;
  double lr = 1e-2;
  double weight_decay = 0.0;
  double momentum = 0.0;  ///< SGD
  double beta1 = 0.9;     ///< Adam
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::vector<std::size_t> milestones;  ///< epochs (0-based) at which lr is multiplied by gamma
  double gamma = 0.1;
  std::uint64_t seed = 0;

  /// Throws UsageError on lr <= 0, negative decay, unsorted milestones, ...
  void validate() const;
  /// Learning rate used during `epoch`.
  double lr_at(std::size_t epoch) const;
};

/// SGD with momentum, or Adam with bias correction, over plain tensors.
/// Weight decay is added to the gradient of parameters whose mask bit is set.
class Optimizer {
 public:
  Optimizer(const OptimConfig& cfg, const std::vector<ad::Tensor>& params, std::vector<bool> decay);

  /// Throws NumericError if any gradient entry is non-finite; params are
  /// left untouched in that case.
  void step(std::vector<ad::Tensor>& params, const std::vector<ad::Tensor>& grads, double lr);
  std::size_t steps() const { return t_; }

 private:
  OptimConfig cfg_;
  std::vector<bool> decay_;
  std::vector<ad::Tensor> m_;
  std::vector<ad::Tensor> v_;
  std::size_t t_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;      ///< mean training cross-entropy over the epoch's batches
  double accuracy = 0.0;  ///< training accuracy after the epoch
  std::size_t saturated = 0;
  double seconds = 0.0;   ///< wall clock; kept out of the deterministic metrics line
};

/// One JSON object (no wall clock) per epoch; identical runs give identical lines.
std::string epoch_json(const EpochRecord& rec);

struct TrainOptions {
  std::function<void(const EpochRecord&)> on_epoch;
  /// Stop after this many optimizer steps (0 = no cap); for smoke tests.
  std::size_t max_steps = 0;
  /// Called with the loss of every batch, in order.
  std::function<void(double)> on_batch;
};

/// Minibatch cross-entropy training. Shuffling is seeded by cfg.seed.
/// Throws UsageError on a feature/class mismatch and NumericError on a
/// non-finite loss or gradient.
std::vector<EpochRecord> train(Network& net, const Dataset& data, const OptimConfig& cfg,
                               const TrainOptions& opts = {});

struct Metrics {
  std::size_t count = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double mcc = 0.0;
  double macro_f1 = 0.0;
  std::optional<double> auc;  ///< binary tasks with both classes present
  std::vector<std::vector<std::size_t>> confusion;  ///< [true][predicted]
  std::size_t saturated = 0;
};

/// Multiclass MCC from a confusion matrix; 0 when undefined.
double mcc_from_confusion(const std::vector<std::vector<std::size_t>>& confusion);
/// Mean per-class F1 over the classes that occur as a label or a prediction.
double macro_f1_from_confusion(const std::vector<std::vector<std::size_t>>& confusion);
/// Probability that a random positive outranks a random negative, ties
/// counted half; nullopt unless both labels 0 and 1 occur.
std::optional<double> binary_auc(std::span<const double> scores, std::span<const int> labels);
/// Metrics of predicted labels and, for binary tasks, positive-class scores.
Metrics classification_metrics(std::span<const int> labels, std::span<const int> predicted, std::size_t classes,
                               std::span<const double> positive_scores = {});

Metrics evaluate(const Network& net, const Dataset& data);
std::string metrics_json(const Metrics& m);

}  // namespace hbnn
