#include "hbnn/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "hbnn/error.hpp"
#include "test_support.hpp"

namespace hbnn {
namespace {

NetworkSpec head_only(LayerKind kind, std::size_t n, std::size_t classes, double k = -1.0) {
  return NetworkSpec{std::nullopt, LayerSpec{kind, k, n, classes}, 1.0};
}

// Plain batch-gradient logistic regression on raw features, written without
// the library: the separability oracle for the blob dataset.
double logistic_regression_accuracy(const Dataset& d) {
  const std::size_t n = d.dim();
  std::vector<double> w(n, 0.0);
  double b = 0.0;
  for (int it = 0; it < 2000; ++it) {
    std::vector<double> gw(n, 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      double z = b;
      for (std::size_t j = 0; j < n; ++j) z += w[j] * d.features.at(i, j);
      const double err = 1.0 / (1.0 + std::exp(-z)) - d.labels[i];
      for (std::size_t j = 0; j < n; ++j) gw[j] += err * d.features.at(i, j);
      gb += err;
    }
    for (std::size_t j = 0; j < n; ++j) w[j] -= 0.5 * gw[j] / static_cast<double>(d.size());
    b -= 0.5 * gb / static_cast<double>(d.size());
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    double z = b;
    for (std::size_t j = 0; j < n; ++j) z += w[j] * d.features.at(i, j);
    if ((z > 0) == (d.labels[i] == 1)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(d.size());
}

TEST(Embed, ClipIsIdentityInsideTheRadius) {
  const Vec x{0.3, -0.4};
  EXPECT_EQ(clip_features(x, 1.0), x);
  EXPECT_EQ(clip_features(x, 0.5), x);
}

TEST(Embed, ClipHalvesATwiceTooLongVector) {
  const Vec x{1.2, -1.6};  // norm 2
  const Vec c = clip_features(x, 1.0);
  EXPECT_NEAR(norm(c), 1.0, 1e-15);
  EXPECT_NEAR(c[0], 0.6, 1e-15);
}

TEST(Embed, ZeroMapsToTheOrigin) {
  for (Model model : {Model::poincare, Model::lorentz}) {
    const ad::Tensor y = embed(ad::Tensor({1, 3}), EmbedConfig{model, Curvature(-2.0), 1.0});
    EXPECT_EQ(y.values(), hbnn::origin(model, Curvature(-2.0), 3));
  }
}

TEST(Embed, OutputsAreOnTheManifoldAtTheClippedDistance) {
  Rng rng(1);
  for (Model model : {Model::poincare, Model::lorentz}) {
    const Curvature k(-0.7);
    const Space space(model, k, 3);
    std::vector<Vec> rows;
    for (int i = 0; i < 30; ++i) rows.push_back(gaussian(rng, 3, 2.0));
    const ad::Tensor y = embed(stack_rows(rows), EmbedConfig{model, k, 1.5});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Vec p = y.row(i);
      EXPECT_TRUE(space.contains(p));
      // d(o, exp_o(v)) is the Riemannian norm of v: lambda_0 = 2 on the ball, 1 on the hyperboloid.
      const double scale = model == Model::poincare ? 2.0 : 1.0;
      EXPECT_NEAR(space.distance(space.origin(), p), scale * std::min(1.5, norm(rows[i])), 1e-9);
    }
  }
}

TEST(Optimizer, ZeroGradientLeavesParamsUnchanged) {
  for (Algorithm algo : {Algorithm::sgd, Algorithm::adam}) {
    OptimConfig cfg;
    cfg.algorithm = algo;
    std::vector<ad::Tensor> p{ad::Tensor::vector({1.0, -2.0})};
    Optimizer opt(cfg, p, {false});
    opt.step(p, {ad::Tensor({2})}, 0.1);
    EXPECT_EQ(p[0].values(), (Vec{1.0, -2.0}));
  }
}

TEST(Optimizer, SgdStepOnSquare) {
  OptimConfig cfg;
  cfg.algorithm = Algorithm::sgd;
  std::vector<ad::Tensor> w{ad::Tensor::scalar(1.0)};
  Optimizer opt(cfg, w, {true});
  opt.step(w, {ad::Tensor::scalar(2.0 * w[0].item())}, 0.1);
  EXPECT_DOUBLE_EQ(w[0].item(), 0.8);
}

TEST(Optimizer, AdamMatchesScalarSimulationAndShrinks) {
  OptimConfig cfg;
  std::vector<ad::Tensor> w{ad::Tensor::scalar(1.0)};
  Optimizer opt(cfg, w, {true});
  double x = 1.0;
  double m = 0.0;
  double v = 0.0;
  double prev = 1.0;
  for (int t = 1; t <= 10; ++t) {
    const double g = 2.0 * x;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 0.1 * (m / (1.0 - std::pow(0.9, t))) / (std::sqrt(v / (1.0 - std::pow(0.999, t))) + 1e-8);
    opt.step(w, {ad::Tensor::scalar(2.0 * w[0].item())}, 0.1);
    EXPECT_NEAR(w[0].item(), x, 1e-14);
    EXPECT_LT(std::abs(w[0].item()), prev);
    prev = std::abs(w[0].item());
  }
}

TEST(Optimizer, WeightDecayOnlyOnFlaggedParams) {
  OptimConfig cfg;
  cfg.algorithm = Algorithm::sgd;
  cfg.weight_decay = 0.5;
  std::vector<ad::Tensor> p{ad::Tensor::scalar(2.0), ad::Tensor::scalar(2.0)};
  Optimizer opt(cfg, p, {true, false});
  opt.step(p, {ad::Tensor::scalar(0.0), ad::Tensor::scalar(0.0)}, 0.1);
  EXPECT_DOUBLE_EQ(p[0].item(), 1.9);
  EXPECT_DOUBLE_EQ(p[1].item(), 2.0);
}

TEST(Optimizer, MomentumAccumulates) {
  OptimConfig cfg;
  cfg.algorithm = Algorithm::sgd;
  cfg.momentum = 0.5;
  std::vector<ad::Tensor> p{ad::Tensor::scalar(0.0)};
  Optimizer opt(cfg, p, {false});
  opt.step(p, {ad::Tensor::scalar(1.0)}, 1.0);
  opt.step(p, {ad::Tensor::scalar(1.0)}, 1.0);
  EXPECT_DOUBLE_EQ(p[0].item(), -2.5);
}

TEST(Optimizer, NonFiniteGradientIsRejectedBeforeAnyUpdate) {
  OptimConfig cfg;
  std::vector<ad::Tensor> p{ad::Tensor::scalar(1.0), ad::Tensor::scalar(1.0)};
  Optimizer opt(cfg, p, {true, true});
  EXPECT_THROW(opt.step(p, {ad::Tensor::scalar(1.0), ad::Tensor::scalar(NAN)}, 0.1), NumericError);
  EXPECT_EQ(p[0].item(), 1.0);
}

TEST(OptimConfig, Validation) {
  OptimConfig cfg;
  cfg.milestones = {5, 5};
  EXPECT_THROW(cfg.validate(), UsageError);
  cfg.milestones = {5, 10};
  cfg.gamma = 0.5;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_DOUBLE_EQ(cfg.lr_at(4), 1e-2);
  EXPECT_DOUBLE_EQ(cfg.lr_at(5), 5e-3);
  EXPECT_DOUBLE_EQ(cfg.lr_at(12), 2.5e-3);
  cfg.lr = 0.0;
  EXPECT_THROW(cfg.validate(), UsageError);
}

TEST(Metrics, PerfectPredictor) {
  const std::vector<int> y{0, 1, 2, 1, 0, 2};
  const Metrics m = classification_metrics(y, y, 3);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(m.mcc, 1.0);
  EXPECT_DOUBLE_EQ(m.macro_f1, 1.0);
  EXPECT_FALSE(m.auc.has_value());
}

TEST(Metrics, ConstantPredictorHasZeroMcc) {
  const std::vector<int> y{0, 1, 0, 1, 0, 1};
  const std::vector<int> p(6, 1);
  const Metrics m = classification_metrics(y, p, 2);
  EXPECT_EQ(m.accuracy, 0.5);
  EXPECT_EQ(m.mcc, 0.0);
  // Class 1: tp 3, fp 3 -> F1 2/3; class 0: tp 0 -> F1 0.
  EXPECT_DOUBLE_EQ(m.macro_f1, 1.0 / 3.0);
}

TEST(Metrics, BinaryMccMatchesHandFormula) {
  // tp 3, tn 2, fp 1, fn 1
  const std::vector<int> y{1, 1, 1, 1, 0, 0, 0};
  const std::vector<int> p{1, 1, 1, 0, 0, 0, 1};
  const double expected = (3.0 * 2.0 - 1.0 * 1.0) / std::sqrt(4.0 * 4.0 * 3.0 * 3.0);
  EXPECT_NEAR(classification_metrics(y, p, 2).mcc, expected, 1e-15);
}

TEST(Metrics, AucRankStatistic) {
  EXPECT_DOUBLE_EQ(*binary_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}), 0.75);
  EXPECT_DOUBLE_EQ(*binary_auc(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 1}), 0.5);
  EXPECT_FALSE(binary_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}).has_value());
}

TEST(Metrics, RandomScoresGiveChanceAuc) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s;
  std::vector<int> y;
  for (int i = 0; i < 1000; ++i) {
    s.push_back(u(rng));
    y.push_back(i % 2);
  }
  EXPECT_NEAR(*binary_auc(s, y), 0.5, 0.05);
}

TEST(Network, RejectsBadChains) {
  EXPECT_THROW(Network(head_only(LayerKind::bfc_p, 2, 3), 0), UsageError);
  NetworkSpec spec{LayerSpec{LayerKind::bfc_l, -1.0, 2, 4}, LayerSpec{LayerKind::bmlr_p, -1.0, 4, 2}, 1.0};
  EXPECT_THROW(Network(spec, 0), UsageError);
  spec.head = LayerSpec{LayerKind::bmlr_l, -0.5, 4, 2};
  EXPECT_THROW(Network(spec, 0), UsageError);
  spec.head = LayerSpec{LayerKind::bmlr_l, -1.0, 4, 2};
  EXPECT_NO_THROW(Network(spec, 0));
  spec.head = LayerSpec{LayerKind::euclidean_mlr, -1.0, 5, 2};
  EXPECT_NO_THROW(Network(spec, 0));
}

TEST(Network, SaveLoadRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "hbnn_net_test.hbnn";
  Rng rng(3);
  NetworkSpec spec{LayerSpec{LayerKind::bfc_l, -0.5, 3, 4, Activation::tanh, true},
                   LayerSpec{LayerKind::bmlr_l, -0.5, 4, 3}, 0.8};
  Network net(spec, 5);
  for (Layer& l : net.layers()) randomize_params(l, rng);
  save_network(path, net);
  const Network back = load_network(path);
  EXPECT_EQ(back.spec().clip_r, 0.8);
  ASSERT_EQ(back.param_values().size(), net.param_values().size());
  for (std::size_t i = 0; i < net.param_values().size(); ++i) EXPECT_EQ(back.param_values()[i], net.param_values()[i]);
  const ad::Tensor x = stack_rows({{0.1, 0.2, 0.3}, {-1.0, 2.0, 0.5}});
  EXPECT_EQ(back.logits(x), net.logits(x));
  EXPECT_EQ(net.named_tensors().front().name, "hidden.raw_alpha");
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".json");
}

TEST(Network, FeatureWidthChecked) {
  const Network net(head_only(LayerKind::bmlr_p, 3, 2), 0);
  EXPECT_THROW(net.logits(ad::Tensor({2, 4})), UsageError);
}

TEST(Train, FirstBatchLossDropsWithinTenSteps) {
  const Dataset d = make_blobs({.seed = 7});
  Network net(head_only(LayerKind::bmlr_l, 2, 2), 1);
  OptimConfig cfg;
  cfg.epochs = 50;
  TrainOptions opts;
  opts.max_steps = 10;
  std::vector<double> losses;
  opts.on_batch = [&](double l) { losses.push_back(l); };
  train(net, d, cfg, opts);
  ASSERT_EQ(losses.size(), 10u);
  EXPECT_LT(*std::min_element(losses.begin() + 1, losses.end()), losses.front());
}

TEST(Train, BlobsReachFullAccuracyWithBmlrOnBothModels) {
  const Dataset d = make_blobs({.seed = 7});
  ASSERT_GE(logistic_regression_accuracy(d), 0.99);
  for (LayerKind kind : {LayerKind::bmlr_p, LayerKind::bmlr_l}) {
    Network net(head_only(kind, 2, 2), 1);
    OptimConfig cfg;
    cfg.epochs = 200;
    const auto hist = train(net, d, cfg);
    EXPECT_GE(hist.back().accuracy, 0.99) << to_string(kind);
    EXPECT_GE(evaluate(net, d).accuracy, 0.99);
  }
}

TEST(Train, DeterministicHistories) {
  const Dataset d = make_tree({.classes = 3, .depth = 3, .points = 120, .seed = 2});
  std::vector<std::string> runs[2];
  for (auto& lines : runs) {
    NetworkSpec spec{LayerSpec{LayerKind::bfc_p, -1.0, 2, 3, Activation::tanh, true},
                     LayerSpec{LayerKind::bmlr_p, -1.0, 3, 3}, 1.0};
    Network net(spec, 4);
    OptimConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 11;
    cfg.batch_size = 16;
    TrainOptions opts;
    opts.on_epoch = [&](const EpochRecord& r) { lines.push_back(epoch_json(r)); };
    train(net, d, cfg, opts);
  }
  EXPECT_EQ(runs[0], runs[1]);
  EXPECT_EQ(runs[0].size(), 5u);
}

TEST(Train, TreeBmlrKeepsUpWithEuclideanHead) {
  const Dataset d = make_tree({.classes = 5, .depth = 4, .points = 500, .seed = 13});
  double acc[2];
  int i = 0;
  for (LayerKind kind : {LayerKind::bmlr_p, LayerKind::euclidean_mlr}) {
    Network net(head_only(kind, 2, 5), 21);
    OptimConfig cfg;
    cfg.epochs = 60;
    cfg.seed = 21;
    train(net, d, cfg);
    acc[i++] = evaluate(net, d).accuracy;
  }
  EXPECT_GE(acc[0], acc[1] - 0.02) << "bmlr-p " << acc[0] << " euclidean " << acc[1];
}

TEST(Train, ConstraintsHoldDuringTrainingWithHiddenLayer) {
  const Dataset d = make_blobs({.classes = 3, .points = 90, .dim = 3, .seed = 1});
  NetworkSpec spec{LayerSpec{LayerKind::bfc_l, -1.0, 3, 4, Activation::identity, true},
                   LayerSpec{LayerKind::bmlr_l, -1.0, 4, 3}, 1.0};
  Network net(spec, 8);
  OptimConfig cfg;
  cfg.epochs = 20;
  cfg.weight_decay = 1e-3;
  const auto hist = train(net, d, cfg);
  EXPECT_NO_THROW(net.check_constraints());
  EXPECT_GT(hist.back().accuracy, 0.9);
  EXPECT_LT(hist.back().loss, hist.front().loss);
}

TEST(Train, RejectsMismatchedData) {
  const Dataset d = make_blobs({.classes = 3, .points = 60, .dim = 2});
  Network wrong_dim(head_only(LayerKind::bmlr_p, 3, 3), 0);
  Network too_few(head_only(LayerKind::bmlr_p, 2, 2), 0);
  EXPECT_THROW(train(wrong_dim, d, OptimConfig{}), UsageError);
  EXPECT_THROW(train(too_few, d, OptimConfig{}), UsageError);
}

TEST(Evaluate, ReportsConfusionAndAuc) {
  const Dataset d = make_blobs({.seed = 3});
  Network net(head_only(LayerKind::bmlr_p, 2, 2), 0);
  OptimConfig cfg;
  cfg.epochs = 30;
  train(net, d, cfg);
  const Metrics m = evaluate(net, d);
  ASSERT_EQ(m.confusion.size(), 2u);
  std::size_t total = 0;
  for (const auto& row : m.confusion)
    for (std::size_t c : row) total += c;
  EXPECT_EQ(total, d.size());
  ASSERT_TRUE(m.auc.has_value());
  EXPECT_GT(*m.auc, 0.99);
  EXPECT_GE(m.mcc, -1.0);
  EXPECT_LE(m.mcc, 1.0);
  EXPECT_NE(metrics_json(m).find("\"confusion\""), std::string::npos);
}

TEST(Dataset, CsvRoundTripIsExact) {
  const Dataset d = make_tree({.classes = 3, .depth = 2, .points = 60, .dim = 3, .seed = 4});
  const Dataset back = parse_csv(format_csv(d));
  EXPECT_EQ(back.features, d.features);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.classes, 3u);
  EXPECT_EQ(format_csv(back), format_csv(d));
}

TEST(Dataset, CsvErrorsNameTheProblem) {
  try {
    parse_csv("a,b\n1,2\n");
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("label"), std::string::npos);
  }
  EXPECT_THROW(parse_csv("x,label\n1,0\n2\n"), UsageError);
  EXPECT_THROW(parse_csv("x,label\nfoo,0\n"), UsageError);
  EXPECT_THROW(parse_csv("x,label\n1,0\n2,2\n"), UsageError);
  EXPECT_THROW(parse_csv("x,label\n1,-1\n"), UsageError);
  const Dataset d = parse_csv("label, f1 ,f2\n1, 0.5,1e-3\n0,2,3\n");
  EXPECT_EQ(d.feature_names, (std::vector<std::string>{"f1", "f2"}));
  EXPECT_EQ(d.features.at(0, 1), 1e-3);
  EXPECT_EQ(d.labels, (std::vector<int>{1, 0}));
}

TEST(Dataset, GeneratorContracts) {
  const Dataset blobs = make_blobs({.classes = 2, .points = 200, .seed = 7});
  EXPECT_EQ(blobs.size(), 200u);
  EXPECT_EQ(blobs.classes, 2u);
  EXPECT_EQ(format_csv(blobs), format_csv(make_blobs({.classes = 2, .points = 200, .seed = 7})));
  const Dataset tree = make_tree({.classes = 5, .depth = 4, .points = 200, .seed = 1});
  std::vector<int> seen(5, 0);
  for (int y : tree.labels) seen[static_cast<std::size_t>(y)] = 1;
  EXPECT_EQ(seen, std::vector<int>(5, 1));
  EXPECT_THROW(make_blobs({.classes = 3, .points = 40}), UsageError);
  EXPECT_THROW(make_tree({.classes = 1}), UsageError);
}

}  // namespace
}  // namespace hbnn
