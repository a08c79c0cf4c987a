#include "hbnn/sampling.hpp"

#include "hbnn/error.hpp"

namespace hbnn {

Vec gaussian(Rng& rng, std::size_t n, double sigma) {
  std::normal_distribution<double> g(0.0, sigma);
  Vec v(n);
  for (double& x : v) x = g(rng);
  return v;
}

Direction random_direction(Rng& rng, std::size_t n) { return Direction::normalized(gaussian(rng, n)); }

Vec random_tangent(const Space& space, Rng& rng, ConstSpan x, double speed) {
  Vec v = space.to_tangent(x, gaussian(rng, space.ambient_dim()));
  const double n = space.tangent_norm(x, v);
  for (double& c : v) c *= speed / n;
  return v;
}

Vec random_point(const Space& space, Rng& rng, double max_dist) {
  std::uniform_real_distribution<double> r(0.0, max_dist);
  const Vec o = space.origin();
  return space.exp(o, random_tangent(space, rng, o, r(rng)));
}

ad::Tensor stack_rows(const std::vector<Vec>& rows) { return ad::Tensor::from_rows(rows); }

ad::Tensor random_batch(const Space& space, std::size_t batch, Rng& rng, double max_dist) {
  std::vector<Vec> rows;
  rows.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) rows.push_back(random_point(space, rng, max_dist));
  return stack_rows(rows);
}

ad::Tensor random_input(const Layer& layer, std::size_t batch, Rng& rng, double max_dist) {
  if (const auto space = layer.input_space()) return random_batch(*space, batch, rng, max_dist);
  std::vector<Vec> rows;
  for (std::size_t i = 0; i < batch; ++i) rows.push_back(gaussian(rng, layer.input_width()));
  return stack_rows(rows);
}

void randomize_params(Layer& layer, Rng& rng, double scale) {
  for (Param& p : layer.params()) {
    double sigma = scale;
    if (p.name == "p" || p.name == "gyro_bias") sigma = scale / 2.0;
    // Unit-scale rows keep normalized directions and hyperplane normals well conditioned.
    if (p.name == "raw_v" || p.name == "a" || p.name == "z" || p.name == "W" || p.name == "M") sigma = 1.0;
    std::normal_distribution<double> g(0.0, sigma);
    for (double& x : p.value.data()) x = g(rng);
  }
}

}  // namespace hbnn
