#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hbnn/bench.hpp"
#include "hbnn/dataset.hpp"
#include "hbnn/error.hpp"
#include "hbnn/layers.hpp"
#include "hbnn/trainer.hpp"
#include "hbnn/verify.hpp"

namespace hbnn::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::size_t> parse_size_list(const std::string& text, const std::string& key) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    const std::string item = trim(text.substr(start, comma - start));
    if (!item.empty()) {
      std::size_t v = 0;
      const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc() || ptr != item.data() + item.size()) {
        throw UsageError(key + ": '" + item + "' is not a nonnegative integer");
      }
      out.push_back(v);
    }
    start = comma + 1;
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << text;
  if (!out) throw UsageError("failed writing " + path.string());
}

struct GenArgs {
  std::string kind = "blobs";
  std::size_t classes = 2;
  std::size_t points = 200;
  std::size_t dim = 2;
  std::size_t depth = 4;
  std::size_t branching = 3;
  double radius = 1.0;
  double noise = -1.0;
  double step = 0.25;
  double angle_noise = 0.2;
  std::uint64_t seed = 0;
  std::string out;
};

struct TrainArgs {
  std::string data;
  std::string head = "bmlr-p";
  std::string hidden = "none";
  std::size_t hidden_dim = 0;
  std::string activation = "identity";
  bool gyro_bias = false;
  double k = -1.0;
  double clip_r = 1.0;
  std::string optimizer = "adam";
  double lr = 1e-2;
  double weight_decay = 0.0;
  double momentum = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::string milestones;
  double gamma = 0.1;
  std::uint64_t seed = 0;
  std::string out_dir = "run";
};

struct EvalArgs {
  std::string data;
  std::string model;
  std::string out;
};

struct BenchArgs {
  std::size_t n = 512;
  std::string classes = "100,1000";
  std::size_t batch = 128;
  std::size_t repeats = 11;
  std::size_t warmup = 3;
  double k = -1.0;
  std::size_t broadcast_limit = std::size_t{1} << 24;
  std::string heads;
  std::uint64_t seed = 0;
  std::string out;
};

struct FlopsArgs {
  std::size_t n = 512;
  std::string classes = "10,100,200,1000";
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  if (a.out.empty()) throw UsageError("gen needs --out");
  Dataset data;
  if (a.kind == "blobs") {
    BlobsConfig cfg{a.classes, a.points, a.dim, a.radius, a.noise < 0.0 ? 0.25 : a.noise, a.seed};
    data = make_blobs(cfg);
  } else if (a.kind == "tree") {
    TreeConfig cfg;
    cfg.classes = a.classes;
    cfg.depth = a.depth;
    cfg.points = a.points;
    cfg.dim = a.dim;
    cfg.max_branching = a.branching;
    cfg.step = a.step;
    cfg.angle_noise = a.angle_noise;
    cfg.noise = a.noise < 0.0 ? 0.02 : a.noise;
    cfg.seed = a.seed;
    data = make_tree(cfg);
  } else {
    throw UsageError("unknown dataset kind '" + a.kind + "' (expected blobs or tree)");
  }
  write_csv(a.out, data);
  out << "wrote " << data.size() << " rows, " << data.dim() << " features, " << data.classes << " classes to "
      << a.out << "\n";
  return ok;
}

NetworkSpec network_from_args(const TrainArgs& a, const Dataset& data) {
  NetworkSpec spec;
  spec.clip_r = a.clip_r;
  const LayerKind head = parse_layer_kind(a.head);
  std::size_t head_in = data.dim();
  if (a.hidden != "none") {
    const LayerKind hidden = parse_layer_kind(a.hidden);
    const std::size_t m = a.hidden_dim == 0 ? data.dim() : a.hidden_dim;
    spec.hidden = LayerSpec{hidden, a.k, data.dim(), m, parse_activation(a.activation), a.gyro_bias};
    head_in = m;
    if (!layer_model(head) && layer_model(hidden) == Model::lorentz) head_in = m + 1;
  } else if (a.activation != "identity" || a.gyro_bias) {
    throw UsageError("activation and gyro_bias apply to the hidden layer; set --hidden");
  }
  spec.head = LayerSpec{head, a.k, head_in, data.classes};
  return spec;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  if (a.data.empty()) throw UsageError("train needs --data");
  const Dataset data = read_csv(a.data);
  OptimConfig opt;
  opt.algorithm = parse_algorithm(a.optimizer);
  opt.lr = a.lr;
  opt.weight_decay = a.weight_decay;
  opt.momentum = a.momentum;
  opt.beta1 = a.beta1;
  opt.beta2 = a.beta2;
  opt.epochs = a.epochs;
  opt.batch_size = a.batch_size;
  opt.milestones = parse_size_list(a.milestones, "milestones");
  opt.gamma = a.gamma;
  opt.seed = a.seed;
  opt.validate();

  Network net(network_from_args(a, data), a.seed);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  std::string metrics;
  std::string timing;
  TrainOptions opts;
  opts.on_epoch = [&](const EpochRecord& r) {
    metrics += epoch_json(r) + "\n";
    char line[96];
    std::snprintf(line, sizeof line, "{\"epoch\":%zu,\"seconds\":%.6f}\n", r.epoch, r.seconds);
    timing += line;
  };
  train(net, data, opt, opts);
  write_text(dir / "metrics.jsonl", metrics);
  write_text(dir / "timing.jsonl", timing);
  save_network(dir / "model.hbnn", net);
  const Metrics final_metrics = evaluate(net, data);
  write_text(dir / "train_eval.json", metrics_json(final_metrics) + "\n");
  out << metrics_json(final_metrics) << "\n";
  return ok;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (a.data.empty() || a.model.empty()) throw UsageError("eval needs --data and --model");
  const Network net = load_network(a.model);
  const Dataset data = read_csv(a.data);
  if (data.dim() != net.feature_dim()) {
    throw UsageError("dataset has " + std::to_string(data.dim()) + " features, model expects " +
                     std::to_string(net.feature_dim()));
  }
  const std::string json = metrics_json(evaluate(net, data));
  if (!a.out.empty()) write_text(a.out, json + "\n");
  out << json << "\n";
  return ok;
}

int cmd_verify(const std::string& selector, std::uint64_t seed, std::ostream& out) {
  const auto results = run_verify(selector, seed);
  out << format_verify_report(results);
  const bool all_pass = std::all_of(results.begin(), results.end(), [](const PropertyResult& r) { return r.pass(); });
  return all_pass ? ok : property_failure;
}

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  BenchConfig cfg;
  cfg.n = a.n;
  cfg.classes = parse_size_list(a.classes, "classes");
  cfg.batch = a.batch;
  cfg.repeats = a.repeats;
  cfg.warmup = a.warmup;
  cfg.k = a.k;
  cfg.broadcast_limit = a.broadcast_limit;
  cfg.seed = a.seed;
  std::string heads = a.heads;
  std::replace(heads.begin(), heads.end(), ',', ' ');
  std::istringstream names(heads);
  for (std::string name; names >> name;) cfg.heads.push_back(parse_layer_kind(name));
  const std::string csv = bench_csv(run_bench(cfg));
  if (!a.out.empty()) write_text(a.out, csv);
  out << csv;
  return ok;
}

int cmd_flops(const FlopsArgs& a, std::ostream& out) {
  const auto ms = parse_size_list(a.classes, "classes");
  if (a.n == 0 || ms.empty()) throw UsageError("flops needs n >= 1 and at least one class count");
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %6s %6s %14s %12s\n", "layer", "n", "C/m", "flops", "params");
  out << line;
  for (std::size_t m : ms) {
    if (m == 0) throw UsageError("class counts must be >= 1");
    for (LayerKind kind : all_layer_kinds()) {
      const auto n = static_cast<std::int64_t>(a.n);
      const auto mm = static_cast<std::int64_t>(m);
      const std::string flops = kind == LayerKind::ltfc ? "-" : std::to_string(flop_count(kind, n, mm));
      std::snprintf(line, sizeof line, "%-14s %6zu %6zu %14s %12lld\n", std::string(to_string(kind)).c_str(), a.n, m,
                    flops.c_str(), static_cast<long long>(param_count(kind, n, mm)));
      out << line;
    }
  }
  return ok;
}

// Splices the flags of `--config FILE` in front of the remaining flags so
// explicit flags override file values.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  if (args.empty()) return args;
  std::vector<std::string> rest;
  std::vector<std::string> from_file;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file");
      from_file = read_config_flags(args[++i]);
    } else if (a.rfind("--config=", 0) == 0) {
      from_file = read_config_flags(a.substr(9));
    } else {
      rest.push_back(a);
    }
  }
  std::vector<std::string> out{args[0]};
  out.insert(out.end(), from_file.begin(), from_file.end());
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

}  // namespace

std::vector<std::string> read_config_flags(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  std::vector<std::string> flags;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
      throw UsageError(path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    flags.push_back("--" + trim(line.substr(0, eq)) + "=" + trim(line.substr(eq + 1)));
  }
  return flags;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app("Busemann and hyperplane heads on hyperbolic space: data, training, verification, benchmarks",
               "hbnn");
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.footer("Every command also reads key=value lines from --config FILE; flags override the file.\n"
             "Exit codes: 0 ok, 1 property failure, 2 config error, 3 numeric error.");

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic CSV dataset");
  g->add_option("kind,--kind", gen.kind, "blobs or tree")->capture_default_str();
  g->add_option("--classes", gen.classes, "Number of classes (>= 2)")->capture_default_str();
  g->add_option("--points", gen.points, "Rows (>= 20 per class)")->capture_default_str();
  g->add_option("--dim", gen.dim, "Feature dimension")->capture_default_str();
  g->add_option("--depth", gen.depth, "tree: levels below the root")->capture_default_str();
  g->add_option("--branching", gen.branching, "tree: max children per node")->capture_default_str();
  g->add_option("--radius", gen.radius, "blobs: center distance from the origin")->capture_default_str();
  g->add_option("--noise", gen.noise, "Per-coordinate jitter (default 0.25 blobs, 0.02 tree)");
  g->add_option("--step", gen.step, "tree: radial length of one edge")->capture_default_str();
  g->add_option("--angle_noise", gen.angle_noise, "tree: child direction perturbation")->capture_default_str();
  g->add_option("--seed", gen.seed, "RNG seed")->capture_default_str();
  g->add_option("--out", gen.out, "Output CSV path");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a head (optionally after one FC layer) on a CSV dataset");
  t->add_option("--data", tr.data, "Training CSV");
  t->add_option("--head", tr.head, "Head kind (bmlr-p, bmlr-l, euclidean-mlr, ganea-mlr, ...)")->capture_default_str();
  t->add_option("--hidden", tr.hidden, "FC layer before the head, or none")->capture_default_str();
  t->add_option("--hidden_dim", tr.hidden_dim, "FC output dimension (default: feature dimension)");
  t->add_option("--activation", tr.activation, "BFC response activation: identity, tanh, relu")->capture_default_str();
  t->add_option("--gyro_bias", tr.gyro_bias, "Gyro bias on the FC layer")->capture_default_str();
  t->add_option("--K", tr.k, "Curvature (< 0)")->capture_default_str();
  t->add_option("--clip_r", tr.clip_r, "Feature clipping radius before exp at the origin")->capture_default_str();
  t->add_option("--optimizer", tr.optimizer, "sgd or adam")->capture_default_str();
  t->add_option("--lr", tr.lr, "Learning rate")->capture_default_str();
  t->add_option("--weight_decay", tr.weight_decay, "L2 decay on scale/direction parameters")->capture_default_str();
  t->add_option("--momentum", tr.momentum, "SGD momentum")->capture_default_str();
  t->add_option("--beta1", tr.beta1, "Adam beta1")->capture_default_str();
  t->add_option("--beta2", tr.beta2, "Adam beta2")->capture_default_str();
  t->add_option("--epochs", tr.epochs, "Epochs")->capture_default_str();
  t->add_option("--batch_size", tr.batch_size, "Minibatch size")->capture_default_str();
  t->add_option("--milestones", tr.milestones, "Comma-separated epochs where lr *= gamma");
  t->add_option("--gamma", tr.gamma, "Learning-rate decay factor")->capture_default_str();
  t->add_option("--seed", tr.seed, "Initialization and shuffling seed")->capture_default_str();
  t->add_option("--out_dir", tr.out_dir, "Directory for metrics.jsonl, timing.jsonl, model.hbnn")->capture_default_str();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a saved model on a CSV dataset");
  e->add_option("--data", ev.data, "Evaluation CSV");
  e->add_option("--model", ev.model, "Model file written by train (model.hbnn)");
  e->add_option("--out", ev.out, "Also write the metrics JSON here");

  std::string selector = "all";
  std::uint64_t verify_seed = 0;
  auto* v = app.add_subcommand("verify", "Run the property suites and print max errors vs tolerances");
  v->add_option("selector,--selector", selector, "manifold, gyro, busemann, layers, grads, limits or all")
      ->capture_default_str();
  v->add_option("--seed", verify_seed, "RNG seed")->capture_default_str();

  BenchArgs be;
  auto* b = app.add_subcommand("bench", "Time head forward passes on a random batch (CSV)");
  b->add_option("--n", be.n, "Input dimension")->capture_default_str();
  b->add_option("--classes", be.classes, "Comma-separated class counts")->capture_default_str();
  b->add_option("--batch", be.batch, "Batch size")->capture_default_str();
  b->add_option("--repeats", be.repeats, "Timed repeats (median reported)")->capture_default_str();
  b->add_option("--warmup", be.warmup, "Untimed warmup runs")->capture_default_str();
  b->add_option("--K", be.k, "Curvature")->capture_default_str();
  b->add_option("--broadcast_limit", be.broadcast_limit, "Largest [B, C, n] tensor (doubles) actually run")
      ->capture_default_str();
  b->add_option("--heads", be.heads, "Comma-separated head kinds (default: all)");
  b->add_option("--seed", be.seed, "RNG seed")->capture_default_str();
  b->add_option("--out", be.out, "Also write the CSV here");

  FlopsArgs fl;
  auto* f = app.add_subcommand("flops", "Print FLOP and parameter counts of every layer");
  f->add_option("--n", fl.n, "Input dimension")->capture_default_str();
  f->add_option("--classes", fl.classes, "Comma-separated C (heads) / m (FC layers)")->capture_default_str();

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n";
    return config_error;
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << "\n";
    return config_error;
  }

  try {
    if (g->parsed()) return cmd_gen(gen, out);
    if (t->parsed()) return cmd_train(tr, out);
    if (e->parsed()) return cmd_eval(ev, out);
    if (v->parsed()) return cmd_verify(selector, verify_seed, out);
    if (b->parsed()) return cmd_bench(be, out);
    if (f->parsed()) return cmd_flops(fl, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << "\n";
    return config_error;
  } catch (const NumericError& ex) {
    err << "numeric error: " << ex.what() << "\n";
    return numeric_error;
  } catch (const fs::filesystem_error& ex) {
    err << "error: " << ex.what() << "\n";
    return config_error;
  }
  return config_error;
}

}  // namespace hbnn::cli
