#pragma once

// Classification heads (MLR) and fully connected layers on hyperbolic space:
// the Busemann heads/layers for both models, the hyperplane-based baselines,
// and their analytic FLOP/parameter accounting.
//
// A Layer owns named raw (unconstrained) parameter tensors. Constrained
// quantities are derived on read: alpha = softplus(raw_alpha),
// v = raw_v / ||raw_v||, manifold points and gyro biases = exp at the origin
// of a raw tangent vector. Every layer has a batched forward on an autodiff
// tape and a per-sample reference implementation built on the scalar
// geometry routines.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hbnn/autodiff.hpp"
#include "hbnn/busemann.hpp"
#include "hbnn/manifold.hpp"

namespace hbnn {

enum class LayerKind {
  euclidean_mlr,
  ganea_mlr,
  shimizu_mlr,
  pbmlr,
  bdeir_mlr,
  bmlr_p,
  bmlr_l,
  mobius_fc,
  poincare_fc,
  lorentz_fc,
  ltfc,
  bfc_p,
  bfc_l,
};

LayerKind parse_layer_kind(std::string_view name);
std::string_view to_string(LayerKind kind);
const std::vector<LayerKind>& all_layer_kinds();

/// True for classification heads (output = logits), false for FC layers.
bool is_head(LayerKind kind);
/// Model of the input (and, for FC layers, the output); nullopt for the Euclidean head.
std::optional<Model> layer_model(LayerKind kind);

/// Analytic FLOPs per sample. Throws UsageError for kinds without a published
/// polynomial (ltfc) and for zero dimensions.
std::int64_t flop_count(LayerKind kind, std::int64_t n, std::int64_t m);
/// Number of trainable scalars. `gyro_bias` adds the m raw bias coordinates of an FC layer.
std::int64_t param_count(LayerKind kind, std::int64_t n, std::int64_t m, bool gyro_bias = false);

enum class Activation { identity, tanh, relu };
Activation parse_activation(std::string_view name);
std::string_view to_string(Activation act);

struct LayerSpec {
  LayerKind kind = LayerKind::bmlr_p;
  double k = -1.0;
  std::size_t in_dim = 0;   ///< intrinsic input dimension n
  std::size_t out_dim = 0;  ///< classes C or output dimension m
  Activation activation = Activation::identity;  ///< BFC response activation
  bool gyro_bias = false;                        ///< FC layers: trailing gyroaddition of exp_e(t)
};

struct Param {
  std::string name;
  ad::Tensor value;
  bool decay = true;  ///< weight decay applies (false for offsets b_k and gyro biases)
};

class ParamSet {
 public:
  void add(std::string name, ad::Tensor value, bool decay);
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  Param& operator[](std::size_t i) { return params_.at(i); }
  const Param& operator[](std::size_t i) const { return params_.at(i); }
  const ad::Tensor& get(std::string_view name) const;
  std::vector<ad::Tensor> tensors() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Param> params_;
};

/// How the per-class hyperplane baselines (Ganea, Pseudo-Busemann) evaluate a batch.
enum class MlrPath {
  loop,       ///< one pass per class; transient memory O(B n)
  broadcast,  ///< one [B, C, n] tensor for all classes; transient memory O(B C n)
};

class Layer {
 public:
  /// Fresh parameters with the documented initialization, seeded.
  Layer(const LayerSpec& spec, std::uint64_t seed);
  /// Existing parameters; names and shapes must match `spec`.
  Layer(const LayerSpec& spec, ParamSet params);

  const LayerSpec& spec() const { return spec_; }
  LayerKind kind() const { return spec_.kind; }
  const Curvature& curvature() const { return k_; }
  /// Input manifold; nullopt for the Euclidean head.
  std::optional<Space> input_space() const;
  /// Output manifold of an FC layer; nullopt for heads.
  std::optional<Space> output_space() const;
  std::size_t input_width() const;
  std::size_t output_width() const;

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  /// Batched forward. `p` holds one Var per parameter, in ParamSet order;
  /// `x` is [B, input_width]. Returns logits [B, C] or points [B, output_width].
  ad::Var forward(ad::Tape& tape, std::span<const ad::Var> p, const ad::Var& x,
                  MlrPath path = MlrPath::loop) const;
  /// Gradient-free convenience wrapper.
  ad::Tensor forward(const ad::Tensor& x, MlrPath path = MlrPath::loop) const;

  /// Single-sample evaluation through the scalar geometry routines.
  Vec reference(ConstSpan x) const;

  /// Number of responses clamped to |sqrt(-K) u| <= 700 since the last reset.
  std::size_t saturation_count() const { return saturated_; }
  void reset_saturation() { saturated_ = 0; }

 private:
  void validate() const;

  LayerSpec spec_;
  Curvature k_;
  ParamSet params_;
  mutable std::size_t saturated_ = 0;
};

/// Derived Busemann parameters (alpha_k, v_k, b_k) of a BMLR/BFC/Shimizu layer.
std::vector<Horosphere> horospheres(const Layer& layer);

/// BMLR logits of one point, each computed as the signed, alpha-scaled
/// geodesic distance from x to the foot point of its class horosphere.
Vec bmlr_logits_via_distance(const Layer& layer, ConstSpan x);

/// Transient doubles held by the broadcast path of a per-class baseline.
std::size_t broadcast_transient_floats(std::size_t batch, std::size_t classes, std::size_t n);

/// Sidecar description of a layer (kind, model, K, dims, options).
std::string layer_spec_json(const LayerSpec& spec);
LayerSpec layer_spec_from_json(const std::string& text);

/// Flat binary container: "HBNN1", version, then name/shape/float64 data per tensor.
struct NamedTensor {
  std::string name;
  ad::Tensor value;
};
void write_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(const std::filesystem::path& path);

}  // namespace hbnn
