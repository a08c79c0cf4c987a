#include "hbnn/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "hbnn/error.hpp"
#include "hbnn/sampling.hpp"
#include "hbnn/vecmath.hpp"

namespace hbnn {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string where(std::size_t line, std::string_view column) {
  return "line " + std::to_string(line) + ", column '" + std::string(column) + "'";
}

double parse_double(std::string_view s, std::size_t line, std::string_view column) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw UsageError(where(line, column) + ": expected a finite number, got '" + std::string(s) + "'");
  }
  return v;
}

int parse_label(std::string_view s, std::size_t line) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v < 0) {
    throw UsageError(where(line, "label") + ": expected a nonnegative integer, got '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string> default_names(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < n; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

void check_generator(std::size_t classes, std::size_t points, std::size_t dim) {
  if (classes < 2) throw UsageError("generator needs at least 2 classes");
  if (points < classes * 20) {
    throw UsageError("generator needs at least 20 points per class (" + std::to_string(classes * 20) + " total)");
  }
  if (dim < 1) throw UsageError("generator needs dim >= 1");
}

}  // namespace

Dataset parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    for (std::string_view f : split(line)) header.emplace_back(f);
  }
  if (header.empty()) throw UsageError("dataset is empty: missing header row");
  const auto label_it = std::find(header.begin(), header.end(), "label");
  if (label_it == header.end()) throw UsageError("dataset has no 'label' column");
  const std::size_t label_col = static_cast<std::size_t>(label_it - header.begin());
  if (std::count(header.begin(), header.end(), "label") > 1) throw UsageError("dataset has more than one 'label' column");

  Dataset data;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j != label_col) data.feature_names.push_back(header[j]);
  }
  if (data.feature_names.empty()) throw UsageError("dataset has no feature columns");

  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    if (fields.size() != header.size()) {
      throw UsageError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                       " fields, got " + std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (j == label_col) {
        data.labels.push_back(parse_label(fields[j], line_no));
      } else {
        values.push_back(parse_double(fields[j], line_no, header[j]));
      }
    }
  }
  if (data.labels.empty()) throw UsageError("dataset has no rows");

  const std::set<int> seen(data.labels.begin(), data.labels.end());
  data.classes = static_cast<std::size_t>(*seen.rbegin()) + 1;
  if (seen.size() != data.classes) {
    throw UsageError("labels must be contiguous from 0; " + std::to_string(data.classes - seen.size()) +
                     " class id(s) below " + std::to_string(data.classes) + " never occur");
  }
  data.features = ad::Tensor({data.labels.size(), data.feature_names.size()}, std::move(values));
  return data;
}

Dataset read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open dataset " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_csv(text.str());
}

std::string format_csv(const Dataset& data) {
  std::string out;
  for (const std::string& name : data.feature_names) out += name + ",";
  out += "label\n";
  char buf[32];
  const std::size_t n = data.dim();
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g,", data.features.at(i, j));
      out += buf;
    }
    out += std::to_string(data.labels[i]) + "\n";
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << format_csv(data);
  if (!out) throw UsageError("failed writing " + path.string());
}

Dataset make_blobs(const BlobsConfig& cfg) {
  check_generator(cfg.classes, cfg.points, cfg.dim);
  if (!(cfg.radius > 0.0) || !(cfg.noise >= 0.0)) throw UsageError("blobs: radius must be > 0 and noise >= 0");
  Rng rng(cfg.seed);
  std::vector<Vec> centers;
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    if (cfg.classes <= 2 * cfg.dim) {
      Vec center(cfg.dim, 0.0);
      center[c / 2] = c % 2 == 0 ? cfg.radius : -cfg.radius;
      centers.push_back(center);
    } else {
      centers.push_back(scaled(random_direction(rng, cfg.dim).vec(), cfg.radius));
    }
  }
  Dataset data;
  data.classes = cfg.classes;
  data.feature_names = default_names(cfg.dim);
  std::vector<double> values;
  for (std::size_t i = 0; i < cfg.points; ++i) {
    const std::size_t c = i % cfg.classes;
    const Vec jitter = gaussian(rng, cfg.dim, cfg.noise);
    for (std::size_t j = 0; j < cfg.dim; ++j) values.push_back(centers[c][j] + jitter[j]);
    data.labels.push_back(static_cast<int>(c));
  }
  data.features = ad::Tensor({cfg.points, cfg.dim}, std::move(values));
  return data;
}

Dataset make_tree(const TreeConfig& cfg) {
  check_generator(cfg.classes, cfg.points, cfg.dim);
  if (cfg.depth < 1 || cfg.max_branching < 1) throw UsageError("tree: depth and max_branching must be >= 1");
  if (!(cfg.step > 0.0) || !(cfg.noise >= 0.0) || !(cfg.angle_noise >= 0.0)) {
    throw UsageError("tree: step must be > 0, noise and angle_noise >= 0");
  }
  Rng rng(cfg.seed);

  struct Node {
    Vec dir;
    std::size_t depth;
    int label;
  };
  std::vector<Node> nodes;
  std::vector<std::size_t> frontier;
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    Vec dir;
    if (cfg.dim == 2) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(cfg.classes);
      dir = {std::cos(angle), std::sin(angle)};
    } else {
      dir = random_direction(rng, cfg.dim).vec();
    }
    nodes.push_back({dir, 1, static_cast<int>(c)});
    frontier.push_back(nodes.size() - 1);
  }
  std::uniform_int_distribution<std::size_t> branching(1, cfg.max_branching);
  while (!frontier.empty()) {
    std::vector<std::size_t> next;
    for (std::size_t parent : frontier) {
      if (nodes[parent].depth >= cfg.depth) continue;
      const std::size_t kids = branching(rng);
      for (std::size_t k = 0; k < kids; ++k) {
        const Vec bent = lincomb(1.0, nodes[parent].dir, 1.0, gaussian(rng, cfg.dim, cfg.angle_noise));
        nodes.push_back({Direction::normalized(bent).vec(), nodes[parent].depth + 1, nodes[parent].label});
        next.push_back(nodes.size() - 1);
      }
    }
    frontier = std::move(next);
  }

  std::vector<std::vector<std::size_t>> by_label(cfg.classes);
  for (std::size_t u = 0; u < nodes.size(); ++u) by_label[static_cast<std::size_t>(nodes[u].label)].push_back(u);

  Dataset data;
  data.classes = cfg.classes;
  data.feature_names = default_names(cfg.dim);
  std::vector<double> values;
  for (std::size_t i = 0; i < cfg.points; ++i) {
    const std::size_t c = i % cfg.classes;
    const auto& pool = by_label[c];
    const Node& node = nodes[pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]];
    const Vec jitter = gaussian(rng, cfg.dim, cfg.noise);
    const double r = static_cast<double>(node.depth) * cfg.step;
    for (std::size_t j = 0; j < cfg.dim; ++j) values.push_back(r * node.dir[j] + jitter[j]);
    data.labels.push_back(static_cast<int>(c));
  }
  data.features = ad::Tensor({cfg.points, cfg.dim}, std::move(values));
  return data;
}

Dataset subset(const Dataset& data, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.classes = data.classes;
  out.feature_names = data.feature_names;
  std::vector<double> values;
  values.reserve(rows.size() * data.dim());
  for (std::size_t r : rows) {
    if (r >= data.size()) throw UsageError("subset row out of range");
    const Vec row = data.features.row(r);
    values.insert(values.end(), row.begin(), row.end());
    out.labels.push_back(data.labels[r]);
  }
  out.features = ad::Tensor({rows.size(), data.dim()}, std::move(values));
  return out;
}

}  // namespace hbnn
