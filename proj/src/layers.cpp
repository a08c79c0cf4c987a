#include "hbnn/layers.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "hbnn/error.hpp"
#include "json.hpp"

namespace hbnn {

namespace {

struct KindInfo {
  LayerKind kind;
  std::string_view name;
  bool head;
  std::optional<Model> model;
};

constexpr std::array<KindInfo, 13> kKinds{{
    {LayerKind::euclidean_mlr, "euclidean-mlr", true, std::nullopt},
    {LayerKind::ganea_mlr, "ganea-mlr", true, Model::poincare},
    {LayerKind::shimizu_mlr, "shimizu-mlr", true, Model::poincare},
    {LayerKind::pbmlr, "pbmlr", true, Model::poincare},
    {LayerKind::bdeir_mlr, "bdeir-mlr", true, Model::lorentz},
    {LayerKind::bmlr_p, "bmlr-p", true, Model::poincare},
    {LayerKind::bmlr_l, "bmlr-l", true, Model::lorentz},
    {LayerKind::mobius_fc, "mobius-fc", false, Model::poincare},
    {LayerKind::poincare_fc, "poincare-fc", false, Model::poincare},
    {LayerKind::lorentz_fc, "lorentz-fc", false, Model::lorentz},
    {LayerKind::ltfc, "ltfc", false, Model::lorentz},
    {LayerKind::bfc_p, "bfc-p", false, Model::poincare},
    {LayerKind::bfc_l, "bfc-l", false, Model::lorentz},
}};

const KindInfo& info(LayerKind kind) {
  for (const auto& k : kKinds) {
    if (k.kind == kind) return k;
  }
  throw UsageError("unknown layer kind");
}

// Softplus inverse of 1: the raw value giving alpha = 1 at initialization.
constexpr double kRawAlphaInit = 0.5413;

struct Slot {
  std::string name;
  ad::Shape shape;
  bool decay;
  enum class Init { zero, alpha, gaussian, scaled_gaussian } init;
};

std::vector<Slot> layout(const LayerSpec& s) {
  const std::size_t n = s.in_dim;
  const std::size_t m = s.out_dim;
  using I = Slot::Init;
  std::vector<Slot> out;
  switch (s.kind) {
    case LayerKind::euclidean_mlr:
      out = {{"A", {m, n}, true, I::scaled_gaussian}, {"b", {m}, false, I::zero}};
      break;
    case LayerKind::ganea_mlr:
      out = {{"p", {m, n}, true, I::zero}, {"a", {m, n}, true, I::scaled_gaussian}};
      break;
    case LayerKind::pbmlr:
      out = {{"p", {m, n}, true, I::zero}, {"raw_v", {m, n}, true, I::gaussian}};
      break;
    case LayerKind::bdeir_mlr:
      out = {{"z", {m, n}, true, I::scaled_gaussian}, {"b", {m}, false, I::zero}};
      break;
    case LayerKind::shimizu_mlr:
    case LayerKind::bmlr_p:
    case LayerKind::bmlr_l:
    case LayerKind::poincare_fc:
    case LayerKind::bfc_p:
    case LayerKind::bfc_l:
      out = {{"raw_alpha", {m}, true, I::alpha}, {"raw_v", {m, n}, true, I::gaussian}, {"b", {m}, false, I::zero}};
      break;
    case LayerKind::mobius_fc:
      out = {{"W", {m, n}, true, I::scaled_gaussian}};
      break;
    case LayerKind::ltfc:
      out = {{"M", {m, n}, true, I::scaled_gaussian}};
      break;
    case LayerKind::lorentz_fc:
      out = {{"W", {m, n + 1}, true, I::scaled_gaussian},
             {"b", {m}, false, I::zero},
             {"v", {n + 1}, true, I::scaled_gaussian},
             {"b_prime", {1}, false, I::zero},
             {"raw_lambda", {1}, true, I::alpha}};
      break;
  }
  if (s.gyro_bias) out.push_back({"gyro_bias", {m}, false, I::zero});
  return out;
}

void check_spec(const LayerSpec& s) {
  if (s.in_dim == 0 || s.out_dim == 0) throw UsageError("layer dimensions must be at least 1");
  if (s.gyro_bias && is_head(s.kind)) throw UsageError("gyro bias applies to FC layers only");
  if (s.activation != Activation::identity && s.kind != LayerKind::bfc_p && s.kind != LayerKind::bfc_l) {
    throw UsageError("activation applies to BFC layers only");
  }
}

}  // namespace

LayerKind parse_layer_kind(std::string_view name) {
  for (const auto& k : kKinds) {
    if (k.name == name) return k.kind;
  }
  throw UsageError("unknown layer kind '" + std::string(name) + "'");
}

std::string_view to_string(LayerKind kind) { return info(kind).name; }

const std::vector<LayerKind>& all_layer_kinds() {
  static const std::vector<LayerKind> kinds = [] {
    std::vector<LayerKind> v;
    for (const auto& k : kKinds) v.push_back(k.kind);
    return v;
  }();
  return kinds;
}

bool is_head(LayerKind kind) { return info(kind).head; }
std::optional<Model> layer_model(LayerKind kind) { return info(kind).model; }

std::int64_t flop_count(LayerKind kind, std::int64_t n, std::int64_t m) {
  if (n < 1 || m < 1) throw UsageError("flop_count needs n, m >= 1");
  switch (kind) {
    case LayerKind::euclidean_mlr: return m * (2 * n);
    case LayerKind::ganea_mlr: return m * (19 * n + 29);
    case LayerKind::shimizu_mlr: return m * (4 * n + 52);
    case LayerKind::pbmlr: return m * (19 * n + 34);
    case LayerKind::bdeir_mlr: return m * (4 * n + 52);
    case LayerKind::bmlr_p: return m * (6 * n + 12);
    case LayerKind::bmlr_l: return m * (2 * n + 12);
    case LayerKind::mobius_fc: return 2 * n * m + 2 * n + 2 * m + 24;
    case LayerKind::poincare_fc: return 4 * n * m + 71 * m + 4;
    case LayerKind::lorentz_fc: return 2 * n * m + 8 * m + 2 * n + 10;
    case LayerKind::bfc_p: return 6 * n * m + 29 * m + 4;
    case LayerKind::bfc_l: return 2 * n * m + 30 * m + 2;
    case LayerKind::ltfc: break;
  }
  throw UsageError("no FLOP polynomial is published for " + std::string(to_string(kind)));
}

std::int64_t param_count(LayerKind kind, std::int64_t n, std::int64_t m, bool gyro_bias) {
  if (n < 1 || m < 1) throw UsageError("param_count needs n, m >= 1");
  if (gyro_bias && is_head(kind)) throw UsageError("gyro bias applies to FC layers only");
  std::int64_t count = 0;
  switch (kind) {
    case LayerKind::euclidean_mlr:
    case LayerKind::bdeir_mlr: count = m * (n + 1); break;
    case LayerKind::ganea_mlr:
    case LayerKind::pbmlr: count = m * (2 * n); break;
    case LayerKind::shimizu_mlr:
    case LayerKind::bmlr_p:
    case LayerKind::bmlr_l:
    case LayerKind::poincare_fc:
    case LayerKind::bfc_p:
    case LayerKind::bfc_l: count = m * (n + 2); break;
    case LayerKind::mobius_fc:
    case LayerKind::ltfc: count = m * n; break;
    case LayerKind::lorentz_fc: count = m * (n + 1) + m + (n + 1) + 2; break;
  }
  return count + (gyro_bias ? m : 0);
}

Activation parse_activation(std::string_view name) {
  if (name == "identity") return Activation::identity;
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw UsageError("unknown activation '" + std::string(name) + "' (identity|tanh|relu)");
}

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
  }
  return "identity";
}

void ParamSet::add(std::string name, ad::Tensor value, bool decay) {
  params_.push_back({std::move(name), std::move(value), decay});
}

std::size_t ParamSet::scalar_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.value.size();
  return total;
}

const ad::Tensor& ParamSet::get(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw UsageError("no parameter named '" + std::string(name) + "'");
}

std::vector<ad::Tensor> ParamSet::tensors() const {
  std::vector<ad::Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

Layer::Layer(const LayerSpec& spec, std::uint64_t seed) : spec_(spec), k_(spec.k) {
  check_spec(spec_);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (const Slot& slot : layout(spec_)) {
    ad::Tensor t(slot.shape);
    const double fan_in = static_cast<double>(slot.shape.back());
    for (double& x : t.data()) {
      switch (slot.init) {
        case Slot::Init::zero: x = 0.0; break;
        case Slot::Init::alpha: x = kRawAlphaInit; break;
        case Slot::Init::gaussian: x = gauss(rng); break;
        case Slot::Init::scaled_gaussian: x = gauss(rng) / std::sqrt(fan_in); break;
      }
    }
    params_.add(slot.name, std::move(t), slot.decay);
  }
}

Layer::Layer(const LayerSpec& spec, ParamSet params) : spec_(spec), k_(spec.k), params_(std::move(params)) {
  check_spec(spec_);
  validate();
}

void Layer::validate() const {
  const auto slots = layout(spec_);
  if (slots.size() != params_.size()) {
    throw UsageError(std::string(to_string(spec_.kind)) + " expects " + std::to_string(slots.size()) +
                     " parameter tensors, got " + std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (params_[i].name != slots[i].name || params_[i].value.shape() != slots[i].shape) {
      throw UsageError("parameter " + std::to_string(i) + " should be '" + slots[i].name + "' " +
                       ad::shape_string(slots[i].shape) + ", got '" + params_[i].name + "' " +
                       ad::shape_string(params_[i].value.shape()));
    }
    if (!all_finite(params_[i].value.data())) throw NumericError("parameter '" + params_[i].name + "' is not finite");
  }
}

std::optional<Space> Layer::input_space() const {
  const auto model = layer_model(spec_.kind);
  if (!model) return std::nullopt;
  return Space(*model, k_, spec_.in_dim);
}

std::optional<Space> Layer::output_space() const {
  if (is_head(spec_.kind)) return std::nullopt;
  return Space(*layer_model(spec_.kind), k_, spec_.out_dim);
}

std::size_t Layer::input_width() const {
  return layer_model(spec_.kind) == Model::lorentz ? spec_.in_dim + 1 : spec_.in_dim;
}

std::size_t Layer::output_width() const {
  if (is_head(spec_.kind)) return spec_.out_dim;
  return layer_model(spec_.kind) == Model::lorentz ? spec_.out_dim + 1 : spec_.out_dim;
}

ad::Tensor Layer::forward(const ad::Tensor& x, MlrPath path) const {
  ad::Tape tape;
  std::vector<ad::Var> p;
  p.reserve(params_.size());
  for (const auto& param : params_) p.push_back(tape.constant(param.value));
  return forward(tape, p, tape.constant(x), path).value();
}

std::vector<Horosphere> horospheres(const Layer& layer) {
  switch (layer.kind()) {
    case LayerKind::shimizu_mlr:
    case LayerKind::bmlr_p:
    case LayerKind::bmlr_l:
    case LayerKind::poincare_fc:
    case LayerKind::bfc_p:
    case LayerKind::bfc_l: break;
    default: throw UsageError(std::string(to_string(layer.kind())) + " has no (alpha, v, b) parameters");
  }
  const ad::Tensor& raw_alpha = layer.params().get("raw_alpha");
  const ad::Tensor& raw_v = layer.params().get("raw_v");
  const ad::Tensor& b = layer.params().get("b");
  std::vector<Horosphere> out;
  out.reserve(raw_alpha.size());
  for (std::size_t k = 0; k < raw_alpha.size(); ++k) {
    const double r = raw_alpha[k];
    const double alpha = r > 0 ? r + std::log1p(std::exp(-r)) : std::log1p(std::exp(r));
    const Vec row = raw_v.row(k);
    if (!(norm(row) >= 1e-12)) throw NumericError("raw_v row " + std::to_string(k) + " has norm below 1e-12");
    out.emplace_back(Direction::normalized(row), alpha, b[k]);
  }
  return out;
}

Vec bmlr_logits_via_distance(const Layer& layer, ConstSpan x) {
  if (layer.kind() != LayerKind::bmlr_p && layer.kind() != LayerKind::bmlr_l) {
    throw UsageError("bmlr_logits_via_distance needs a BMLR head");
  }
  const Space space = *layer.input_space();
  space.check_point(x);
  Vec out;
  for (const Horosphere& h : horospheres(layer)) {
    const double bx = busemann(space, h.v, x);
    const double gap = h.level() - bx;
    // The gradient flow of B is a unit-speed geodesic orthogonal to every
    // horosphere, so following it for |gap| reaches the closest point.
    const Vec foot = space.exp(x, scaled(busemann_gradient(space, h.v, x), gap));
    const double dist = space.distance(x, foot);
    const double sign = -h.alpha * bx + h.b >= 0.0 ? 1.0 : -1.0;
    out.push_back(sign * h.alpha * dist);
  }
  return out;
}

std::size_t broadcast_transient_floats(std::size_t batch, std::size_t classes, std::size_t n) {
  return batch * classes * n;
}

std::string layer_spec_json(const LayerSpec& spec) {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(spec.kind));
  const auto model = layer_model(spec.kind);
  j["model"] = model ? std::string(to_string(*model)) : std::string("euclidean");
  j["K"] = spec.k;
  j["in_dim"] = spec.in_dim;
  j["out_dim"] = spec.out_dim;
  j["activation"] = std::string(to_string(spec.activation));
  j["gyro_bias"] = spec.gyro_bias;
  return j.dump();
}

LayerSpec layer_spec_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    LayerSpec s;
    s.kind = parse_layer_kind(j.at("kind").get<std::string>());
    s.k = j.at("K").get<double>();
    s.in_dim = j.at("in_dim").get<std::size_t>();
    s.out_dim = j.at("out_dim").get<std::size_t>();
    s.activation = parse_activation(j.value("activation", std::string("identity")));
    s.gyro_bias = j.value("gyro_bias", false);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("bad layer description: ") + e.what());
  }
}

namespace {

static_assert(std::endian::native == std::endian::little, "model files are written in host order");

constexpr char kMagic[5] = {'H', 'B', 'N', 'N', '1'};
constexpr std::uint32_t kFormatVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw UsageError("truncated model file");
  return v;
}

}  // namespace

void write_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw UsageError("cannot write " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kFormatVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t d : t.value.shape()) put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.value.data().data()),
             static_cast<std::streamsize>(t.value.size() * sizeof(double)));
  }
  if (!os) throw UsageError("failed writing " + path.string());
}

std::vector<NamedTensor> read_tensors(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("cannot open " + path.string());
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw UsageError(path.string() + " is not a model file");
  }
  const auto version = take<std::uint32_t>(is);
  if (version != kFormatVersion) throw UsageError("unsupported model file version " + std::to_string(version));
  const auto count = take<std::uint32_t>(is);
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name.resize(take<std::uint32_t>(is));
    if (!is.read(t.name.data(), static_cast<std::streamsize>(t.name.size()))) throw UsageError("truncated model file");
    ad::Shape shape(take<std::uint32_t>(is));
    for (auto& d : shape) d = take<std::uint64_t>(is);
    std::vector<double> data(ad::shape_size(shape));
    if (!is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)))) {
      throw UsageError("truncated model file");
    }
    t.value = ad::Tensor(std::move(shape), std::move(data));
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace hbnn
