#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hbnn/busemann.hpp"
#include "hbnn/dataset.hpp"
#include "hbnn/error.hpp"
#include "hbnn/gyrovector.hpp"
#include "hbnn/layers.hpp"
#include "hbnn/manifold.hpp"
#include "hbnn/trainer.hpp"
#include "hbnn/verify.hpp"

namespace py = pybind11;
using namespace hbnn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Vec to_vec(const Array& a) {
  if (a.ndim() != 1) throw UsageError("expected a 1-d array, got " + std::to_string(a.ndim()) + " dims");
  return Vec(a.data(), a.data() + a.size());
}

Array from_vec(const Vec& v) { return Array(static_cast<py::ssize_t>(v.size()), v.data()); }

ad::Tensor to_matrix(const Array& a) {
  if (a.ndim() != 2) throw UsageError("expected a 2-d array, got " + std::to_string(a.ndim()) + " dims");
  return ad::Tensor({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))},
                    std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_tensor(const ad::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Model parse_model(const std::string& name) {
  if (name == "poincare") return Model::poincare;
  if (name == "lorentz") return Model::lorentz;
  throw UsageError("unknown model '" + name + "' (expected poincare or lorentz)");
}

std::string model_name(Model m) { return m == Model::poincare ? "poincare" : "lorentz"; }

Dataset to_dataset(const Array& features, const std::vector<int>& labels) {
  Dataset d;
  d.features = to_matrix(features);
  if (labels.size() != d.features.dim(0)) throw UsageError("features and labels differ in length");
  d.labels = labels;
  int top = -1;
  for (int y : labels) {
    if (y < 0) throw UsageError("labels must be nonnegative");
    top = std::max(top, y);
  }
  d.classes = static_cast<std::size_t>(top + 1);
  for (std::size_t j = 0; j < d.dim(); ++j) d.feature_names.push_back("x" + std::to_string(j));
  return d;
}

py::tuple dataset_tuple(const Dataset& d) { return py::make_tuple(from_tensor(d.features), d.labels); }

py::dict metrics_dict(const Metrics& m) {
  py::dict out;
  out["count"] = m.count;
  out["loss"] = m.loss;
  out["accuracy"] = m.accuracy;
  out["mcc"] = m.mcc;
  out["macro_f1"] = m.macro_f1;
  out["auc"] = m.auc ? py::object(py::float_(*m.auc)) : py::object(py::none());
  out["confusion"] = m.confusion;
  out["saturated"] = m.saturated;
  return out;
}

}  // namespace

PYBIND11_MODULE(_hbnn, m) {
  m.doc() = "Busemann heads and FC layers on the Poincare ball and the Lorentz hyperboloid.";

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<Space>(m, "Space")
      .def(py::init([](const std::string& model, double k, std::size_t n) {
             return Space(parse_model(model), Curvature(k), n);
           }),
           py::arg("model"), py::arg("k") = -1.0, py::arg("n") = 2)
      .def_property_readonly("model", [](const Space& s) { return model_name(s.model()); })
      .def_property_readonly("k", &Space::k)
      .def_property_readonly("dim", &Space::dim)
      .def_property_readonly("ambient_dim", &Space::ambient_dim)
      .def("origin", [](const Space& s) { return from_vec(s.origin()); })
      .def("contains", [](const Space& s, const Array& x) { return s.contains(to_vec(x)); })
      .def("project", [](const Space& s, const Array& x) { return from_vec(s.project(to_vec(x))); })
      .def("distance", [](const Space& s, const Array& x, const Array& y) { return s.distance(to_vec(x), to_vec(y)); })
      .def("exp", [](const Space& s, const Array& x, const Array& v) { return from_vec(s.exp(to_vec(x), to_vec(v))); })
      .def("log", [](const Space& s, const Array& x, const Array& y) { return from_vec(s.log(to_vec(x), to_vec(y))); })
      .def("transport",
           [](const Space& s, const Array& x, const Array& y, const Array& v) {
             return from_vec(s.transport(to_vec(x), to_vec(y), to_vec(v)));
           })
      .def("__repr__", [](const Space& s) {
        return "Space('" + model_name(s.model()) + "', k=" + std::to_string(s.k()) + ", n=" + std::to_string(s.dim()) +
               ")";
      });

  m.def("to_lorentz", [](double k, const Array& p) { return from_vec(to_lorentz(Curvature(k), to_vec(p))); },
        py::arg("k"), py::arg("p"));
  m.def("to_poincare", [](double k, const Array& x) { return from_vec(to_poincare(Curvature(k), to_vec(x))); },
        py::arg("k"), py::arg("x"));

  m.def("gyro_add", [](const Space& s, const Array& x, const Array& y) {
    return from_vec(gyro_add(s, to_vec(x), to_vec(y)));
  });
  m.def("gyro_scalar", [](const Space& s, double t, const Array& x) { return from_vec(gyro_scalar(s, t, to_vec(x))); });
  m.def("gyration", [](const Space& s, const Array& x, const Array& y, const Array& z) {
    return from_vec(gyration(s, to_vec(x), to_vec(y), to_vec(z)));
  });

  m.def(
      "busemann",
      [](const Space& s, const Array& v, const Array& x) { return busemann(s, Direction::normalized(to_vec(v)), to_vec(x)); },
      py::arg("space"), py::arg("v"), py::arg("x"), "Busemann function of the ideal point in direction v.");
  m.def(
      "busemann_ray_oracle",
      [](const Space& s, const Array& v, const Array& x, double t) {
        return busemann_ray_oracle(s, Direction::normalized(to_vec(v)), to_vec(x), t);
      },
      py::arg("space"), py::arg("v"), py::arg("x"), py::arg("t") = 20.0);
  m.def("busemann_gradient", [](const Space& s, const Array& v, const Array& x) {
    return from_vec(busemann_gradient(s, Direction::normalized(to_vec(v)), to_vec(x)));
  });
  m.def(
      "bfc_horosphere_feasibility",
      [](const Array& u, double k, const std::string& model) {
        const Feasibility f = bfc_horosphere_feasibility(to_vec(u), Curvature(k), parse_model(model));
        py::dict out;
        out["discriminant"] = f.discriminant;
        out["feasible"] = f.feasible;
        out["roots"] = f.roots;
        return out;
      },
      py::arg("u"), py::arg("k") = -1.0, py::arg("model") = "poincare");

  m.def("flop_count", [](const std::string& kind, std::int64_t n, std::int64_t c) {
    return flop_count(parse_layer_kind(kind), n, c);
  });
  m.def(
      "param_count",
      [](const std::string& kind, std::int64_t n, std::int64_t c, bool gyro_bias) {
        return param_count(parse_layer_kind(kind), n, c, gyro_bias);
      },
      py::arg("kind"), py::arg("n"), py::arg("m"), py::arg("gyro_bias") = false);
  m.def("layer_kinds", [] {
    std::vector<std::string> names;
    for (LayerKind k : all_layer_kinds()) names.emplace_back(to_string(k));
    return names;
  });

  py::class_<Layer>(m, "Layer")
      .def(py::init([](const std::string& kind, std::size_t in_dim, std::size_t out_dim, double k,
                       const std::string& activation, bool gyro_bias, std::uint64_t seed) {
             return Layer(LayerSpec{parse_layer_kind(kind), k, in_dim, out_dim, parse_activation(activation), gyro_bias},
                          seed);
           }),
           py::arg("kind"), py::arg("in_dim"), py::arg("out_dim"), py::arg("k") = -1.0,
           py::arg("activation") = "identity", py::arg("gyro_bias") = false, py::arg("seed") = 0)
      .def_property_readonly("kind", [](const Layer& l) { return std::string(to_string(l.kind())); })
      .def_property_readonly("input_width", &Layer::input_width)
      .def_property_readonly("output_width", &Layer::output_width)
      .def("forward", [](const Layer& l, const Array& x) { return from_tensor(l.forward(to_matrix(x))); })
      .def("reference", [](const Layer& l, const Array& x) { return from_vec(l.reference(to_vec(x))); })
      .def("params",
           [](const Layer& l) {
             py::dict out;
             for (const Param& p : l.params()) out[py::str(p.name)] = from_tensor(p.value);
             return out;
           })
      .def("set_param", [](Layer& l, const std::string& name, const Array& value) {
        for (Param& p : l.params()) {
          if (p.name != name) continue;
          const std::vector<double> data(value.data(), value.data() + value.size());
          if (data.size() != p.value.size()) throw UsageError("parameter " + name + " has a different size");
          p.value = ad::Tensor(p.value.shape(), data);
          return;
        }
        throw UsageError("no parameter named " + name);
      });

  m.def(
      "make_blobs",
      [](std::size_t classes, std::size_t points, std::size_t dim, double radius, double noise, std::uint64_t seed) {
        return dataset_tuple(make_blobs({classes, points, dim, radius, noise, seed}));
      },
      py::arg("classes") = 2, py::arg("points") = 200, py::arg("dim") = 2, py::arg("radius") = 1.0,
      py::arg("noise") = 0.25, py::arg("seed") = 0);
  m.def(
      "make_tree",
      [](std::size_t classes, std::size_t depth, std::size_t points, std::size_t dim, std::uint64_t seed) {
        TreeConfig cfg;
        cfg.classes = classes;
        cfg.depth = depth;
        cfg.points = points;
        cfg.dim = dim;
        cfg.seed = seed;
        return dataset_tuple(make_tree(cfg));
      },
      py::arg("classes") = 5, py::arg("depth") = 4, py::arg("points") = 500, py::arg("dim") = 2, py::arg("seed") = 0);

  py::class_<Network>(m, "Network")
      .def(py::init([](const std::string& head, std::size_t features, std::size_t classes, double k,
                       std::optional<std::string> hidden, std::size_t hidden_dim, const std::string& activation,
                       bool gyro_bias, double clip_r, std::uint64_t seed) {
             NetworkSpec spec;
             spec.clip_r = clip_r;
             const LayerKind head_kind = parse_layer_kind(head);
             std::size_t head_in = features;
             if (hidden) {
               const LayerKind hk = parse_layer_kind(*hidden);
               const std::size_t width = hidden_dim == 0 ? features : hidden_dim;
               spec.hidden = LayerSpec{hk, k, features, width, parse_activation(activation), gyro_bias};
               head_in = !layer_model(head_kind) && layer_model(hk) == Model::lorentz ? width + 1 : width;
             }
             spec.head = LayerSpec{head_kind, k, head_in, classes};
             return Network(spec, seed);
           }),
           py::arg("head"), py::arg("features"), py::arg("classes"), py::arg("k") = -1.0, py::arg("hidden") = py::none(),
           py::arg("hidden_dim") = 0, py::arg("activation") = "identity", py::arg("gyro_bias") = false,
           py::arg("clip_r") = 1.0, py::arg("seed") = 0)
      .def_property_readonly("feature_dim", &Network::feature_dim)
      .def_property_readonly("classes", &Network::classes)
      .def("logits", [](const Network& n, const Array& x) { return from_tensor(n.logits(to_matrix(x))); })
      .def(
          "fit",
          [](Network& net, const Array& x, const std::vector<int>& y, const std::string& optimizer, double lr,
             std::size_t epochs, std::size_t batch_size, double weight_decay, double momentum, std::uint64_t seed) {
            OptimConfig cfg;
            cfg.algorithm = parse_algorithm(optimizer);
            cfg.lr = lr;
            cfg.epochs = epochs;
            cfg.batch_size = batch_size;
            cfg.weight_decay = weight_decay;
            cfg.momentum = momentum;
            cfg.seed = seed;
            cfg.validate();
            Dataset d = to_dataset(x, y);
            d.classes = std::max(d.classes, net.classes());
            py::list history;
            for (const EpochRecord& r : train(net, d, cfg)) {
              py::dict e;
              e["epoch"] = r.epoch;
              e["lr"] = r.lr;
              e["loss"] = r.loss;
              e["accuracy"] = r.accuracy;
              e["saturated"] = r.saturated;
              history.append(e);
            }
            return history;
          },
          py::arg("x"), py::arg("y"), py::arg("optimizer") = "adam", py::arg("lr") = 1e-2, py::arg("epochs") = 100,
          py::arg("batch_size") = 32, py::arg("weight_decay") = 0.0, py::arg("momentum") = 0.0, py::arg("seed") = 0)
      .def("evaluate",
           [](const Network& net, const Array& x, const std::vector<int>& y) {
             Dataset d = to_dataset(x, y);
             d.classes = std::max(d.classes, net.classes());
             return metrics_dict(evaluate(net, d));
           })
      .def("save", [](const Network& net, const std::string& path) { save_network(path, net); })
      .def_static("load", [](const std::string& path) { return load_network(path); });

  m.def(
      "verify",
      [](const std::string& selector, std::uint64_t seed) {
        py::list out;
        for (const PropertyResult& r : run_verify(selector, seed)) {
          py::dict d;
          d["suite"] = r.suite;
          d["name"] = r.name;
          d["statement"] = r.anchor;
          d["error"] = r.error;
          d["tolerance"] = r.tolerance;
          d["passed"] = r.pass();
          out.append(d);
        }
        return out;
      },
      py::arg("selector") = "all", py::arg("seed") = 0);
}
