#include "hbnn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "hbnn/error.hpp"
#include "hbnn/sampling.hpp"

namespace hbnn {

namespace {

// Keeps the optimizer from discarding a timed result.
volatile double g_sink = 0.0;

std::pair<double, double> time_forward(const Layer& layer, const ad::Tensor& x, MlrPath path, std::size_t warmup,
                                       std::size_t repeats) {
  for (std::size_t i = 0; i < warmup; ++i) g_sink = g_sink + layer.forward(x, path)[0];
  std::vector<double> times;
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto start = std::chrono::steady_clock::now();
    const ad::Tensor y = layer.forward(x, path);
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    g_sink = g_sink + y[0];
  }
  return {median(times), *std::min_element(times.begin(), times.end())};
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) throw UsageError("median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

std::vector<BenchRow> run_bench(const BenchConfig& cfg) {
  if (cfg.n == 0 || cfg.batch == 0 || cfg.classes.empty()) throw UsageError("bench needs n, batch and classes >= 1");
  if (cfg.repeats == 0) throw UsageError("bench needs repeats >= 1");
  for (std::size_t c : cfg.classes) {
    if (c == 0) throw UsageError("bench class counts must be >= 1");
  }
  std::vector<LayerKind> heads = cfg.heads;
  if (heads.empty()) {
    for (LayerKind k : all_layer_kinds()) {
      if (is_head(k)) heads.push_back(k);
    }
  }
  std::vector<BenchRow> rows;
  Rng rng(cfg.seed);
  for (std::size_t classes : cfg.classes) {
    for (LayerKind kind : heads) {
      if (!is_head(kind)) throw UsageError(std::string(to_string(kind)) + " is not a classification head");
      Layer layer(LayerSpec{kind, cfg.k, cfg.n, classes}, cfg.seed);
      randomize_params(layer, rng);
      const ad::Tensor x = random_input(layer, cfg.batch, rng);
      const bool per_class = kind == LayerKind::ganea_mlr || kind == LayerKind::pbmlr;
      BenchRow row;
      row.kind = kind;
      row.n = cfg.n;
      row.classes = classes;
      row.batch = cfg.batch;
      row.flops_per_sample = flop_count(kind, static_cast<std::int64_t>(cfg.n), static_cast<std::int64_t>(classes));
      row.path = per_class ? "loop" : "matmul";
      std::tie(row.median_seconds, row.min_seconds) = time_forward(layer, x, MlrPath::loop, cfg.warmup, cfg.repeats);
      rows.push_back(row);
      if (per_class) {
        BenchRow wide = row;
        wide.path = "broadcast";
        wide.transient_floats = broadcast_transient_floats(cfg.batch, classes, cfg.n);
        wide.median_seconds.reset();
        wide.min_seconds.reset();
        if (*wide.transient_floats <= cfg.broadcast_limit) {
          std::tie(wide.median_seconds, wide.min_seconds) =
              time_forward(layer, x, MlrPath::broadcast, cfg.warmup, cfg.repeats);
        }
        rows.push_back(wide);
      }
    }
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::string out = "head,path,n,classes,batch,median_s,min_s,flops_per_sample,transient_floats\n";
  char buf[64];
  auto opt = [&](const auto& v, const char* fmt) -> std::string {
    if (!v) return "";
    std::snprintf(buf, sizeof buf, fmt, *v);
    return buf;
  };
  for (const BenchRow& r : rows) {
    out += std::string(to_string(r.kind)) + "," + r.path + "," + std::to_string(r.n) + "," +
           std::to_string(r.classes) + "," + std::to_string(r.batch) + "," + opt(r.median_seconds, "%.9g") + "," +
           opt(r.min_seconds, "%.9g") + "," + (r.flops_per_sample ? std::to_string(*r.flops_per_sample) : "") + "," +
           (r.transient_floats ? std::to_string(*r.transient_floats) : "") +
           "\n";
  }
  return out;
}

}  // namespace hbnn
