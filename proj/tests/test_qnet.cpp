#include "persearch/qnet.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "test_support.hpp"

using namespace persearch;
using test_support::batch_loss;
using test_support::manual_forward;
using test_support::random_batch;

namespace {

TEST(Forward, AllZeroParametersGiveNineZeros) {
  Rng rng(1);
  QNetwork net = QNetwork::init({4, 3, 9}, rng);
  for (QNetwork::Layer& l : net.layers) {
    std::fill(l.w.begin(), l.w.end(), 0.0);
    std::fill(l.b.begin(), l.b.end(), 0.0);
  }
  const std::vector<double> q = net.forward(std::vector<double>{1, 2, 3, 4});
  ASSERT_EQ(q.size(), 9u);
  for (double v : q) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Forward, SingleHiddenUnitMatchesHandArithmetic) {
  Rng rng(1);
  QNetwork net = QNetwork::init({1, 1, 9}, rng);
  net.layers[0].w = {2.0};
  net.layers[0].b = {0.5};
  for (int j = 0; j < 9; ++j) {
    net.layers[1].w[static_cast<std::size_t>(j)] = 0.1 * j;
    net.layers[1].b[static_cast<std::size_t>(j)] = static_cast<double>(j);
  }
  // h = relu(2 * 1.5 + 0.5) = 3.5; q_j = 0.1 j * 3.5 + j = 1.35 j
  const std::vector<double> q = net.forward(std::vector<double>{1.5});
  for (int j = 0; j < 9; ++j) EXPECT_NEAR(q[j], 1.35 * j, 1e-12);
  // Negative pre-activation rectifies to zero: q_j = b_j.
  const std::vector<double> q2 = net.forward(std::vector<double>{-1.0});
  for (int j = 0; j < 9; ++j) EXPECT_DOUBLE_EQ(q2[j], static_cast<double>(j));
}

TEST(Forward, PureAndConsistentWithTheManualPath) {
  Rng rng(7);
  QNetwork net = QNetwork::init({12, 10, 6, 9}, rng);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(12);
    for (double& v : x) v = rng.uniform(-2.0, 2.0);
    const std::vector<double> a = net.forward(x);
    const std::vector<double> b = net.forward(x);
    EXPECT_EQ(a, b);
    const std::vector<double> m = manual_forward(net, x);
    for (int j = 0; j < 9; ++j) EXPECT_NEAR(a[j], m[j], 1e-12);
  }
}

TEST(Forward, BatchOfIdenticalEncodingsGivesIdenticalRows) {
  Rng rng(8);
  const QNetwork net = QNetwork::init({6, 5, 9}, rng);
  std::vector<double> x(6);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  std::vector<double> batch;
  for (int i = 0; i < 4; ++i) batch.insert(batch.end(), x.begin(), x.end());
  std::vector<double> q(4 * kNumActions);
  net.forward_batch(batch.data(), 4, q.data());
  for (int i = 1; i < 4; ++i)
    for (int a = 0; a < kNumActions; ++a)
      EXPECT_EQ(q[static_cast<std::size_t>(i) * kNumActions + a],
                q[static_cast<std::size_t>(a)]);
}

TEST(Forward, DimensionMismatchIsRejected) {
  Rng rng(3);
  const QNetwork net = QNetwork::init({4, 3, 9}, rng);
  EXPECT_THROW(net.forward(std::vector<double>{1, 2, 3}), std::invalid_argument);
}

TEST(Init, RespectsTheGlorotRangeAndSeed) {
  Rng a(42), b(42), c(43);
  const QNetwork n1 = QNetwork::init({20, 10, 9}, a);
  const QNetwork n2 = QNetwork::init({20, 10, 9}, b);
  const QNetwork n3 = QNetwork::init({20, 10, 9}, c);
  EXPECT_EQ(n1.layers[0].w, n2.layers[0].w);
  EXPECT_NE(n1.layers[0].w, n3.layers[0].w);
  const double limit0 = std::sqrt(6.0 / (20 + 10));
  for (double v : n1.layers[0].w) {
    EXPECT_GE(v, -limit0);
    EXPECT_LE(v, limit0);
  }
  for (double v : n1.layers[0].b) EXPECT_DOUBLE_EQ(v, 0.0);
  EXPECT_THROW(QNetwork::init({4, 5}, a), std::invalid_argument);
  EXPECT_THROW(QNetwork::init({9}, a), std::invalid_argument);
  EXPECT_THROW(QNetwork::init({4, 0, 9}, a), std::invalid_argument);
}

TEST(BellmanTargets, FormulaArithmetic) {
  Rng rng(5);
  QNetwork net = QNetwork::init({2, 9}, rng);
  std::fill(net.layers[0].w.begin(), net.layers[0].w.end(), 0.0);
  for (int j = 0; j < 9; ++j)
    net.layers[0].b[static_cast<std::size_t>(j)] = 0.25 * j;  // max next-Q 2.0

  std::vector<Transition> batch(3);
  for (Transition& t : batch) {
    t.state = {0.0, 0.0};
    t.next_state = {1.0, 1.0};
  }
  batch[0].reward = 1.0;
  batch[0].done = false;
  batch[1].reward = 4.0;
  batch[1].done = true;
  batch[2].reward = -1.0;
  batch[2].done = false;

  std::vector<double> targets = bellman_targets(batch, net, 0.9);
  EXPECT_NEAR(targets[0], 1.0 + 0.9 * 2.0, 1e-12);  // 2.8
  EXPECT_DOUBLE_EQ(targets[1], 4.0);                // terminal masks bootstrap

  // With max next-Q forced to -0.5: r + gamma * max = -1.45.
  for (int j = 0; j < 9; ++j)
    net.layers[0].b[static_cast<std::size_t>(j)] = -0.5 - 0.1 * j;
  targets = bellman_targets(batch, net, 0.9);
  EXPECT_NEAR(targets[2], -1.0 + 0.9 * -0.5, 1e-12);  // -1.45

  EXPECT_THROW(bellman_targets(batch, net, 1.0), std::invalid_argument);
  EXPECT_THROW(bellman_targets(batch, net, -0.1), std::invalid_argument);
}

TEST(Update, ZeroResidualLeavesParametersUntouched) {
  Rng rng(9);
  QNetwork net = QNetwork::init({3, 4, 9}, rng);
  OptimState opt;
  std::vector<Transition> batch = random_batch(4, 3, rng);
  std::vector<double> targets(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    targets[i] = net.forward(batch[i].state)[static_cast<std::size_t>(
        action_index(batch[i].action))];
  const QNetwork before = net;
  const double loss = update(net, opt, batch, targets);
  EXPECT_DOUBLE_EQ(loss, 0.0);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    EXPECT_EQ(net.layers[l].w, before.layers[l].w);
    EXPECT_EQ(net.layers[l].b, before.layers[l].b);
  }
  EXPECT_EQ(opt.updates, 1);
}

TEST(Update, SingleTransitionMatchesHandDerivedGradient) {
  Rng rng(1);
  QNetwork net = QNetwork::init({1, 1, 9}, rng);
  net.layers[0].w = {2.0};
  net.layers[0].b = {0.5};
  std::fill(net.layers[1].w.begin(), net.layers[1].w.end(), 0.0);
  std::fill(net.layers[1].b.begin(), net.layers[1].b.end(), 0.0);
  net.layers[1].w[2] = 0.2;
  net.layers[1].b[2] = 2.0;

  Transition t;
  t.state = {1.5};
  t.next_state = {0.0};
  t.action = action_from_index(2);
  t.reward = 0.0;
  t.done = true;
  OptimState opt;
  opt.learning_rate = 0.1;
  opt.momentum = 0.0;

  // h = 3.5, q_2 = 2.7, target 1.0, diff 1.7: loss 2.89, dq = 3.4,
  // dw3_2 = 11.9, db3_2 = 3.4, dh = 0.68, dw1 = 1.02, db1 = 0.68.
  const double loss = update(net, opt, {t}, std::vector<double>{1.0});
  EXPECT_NEAR(loss, 2.89, 1e-12);
  EXPECT_NEAR(net.layers[1].w[2], 0.2 - 0.1 * 11.9, 1e-12);
  EXPECT_NEAR(net.layers[1].b[2], 2.0 - 0.1 * 3.4, 1e-12);
  EXPECT_NEAR(net.layers[0].w[0], 2.0 - 0.1 * 1.02, 1e-12);
  EXPECT_NEAR(net.layers[0].b[0], 0.5 - 0.1 * 0.68, 1e-12);
  // Gradients flow only through the taken action's output.
  EXPECT_DOUBLE_EQ(net.layers[1].w[5], 0.0);
  EXPECT_DOUBLE_EQ(net.layers[1].b[5], 0.0);
}

TEST(Update, GradientsMatchCentralFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const double rel = test_support::max_gradient_rel_error(
        seed, {6, 8, 5, 9}, 1 + static_cast<int>(seed % 5));
    EXPECT_LT(rel, 1e-5) << "seed " << seed;
  }
}

TEST(Update, LossNonIncreasingUnderSmallLearningRate) {
  Rng rng(77);
  int monotone = 0;
  const int trials = 20;
  for (int trial = 0; trial < trials; ++trial) {
    QNetwork net = QNetwork::init({6, 8, 5, 9}, rng);
    std::vector<Transition> batch = random_batch(6, 6, rng);
    std::vector<double> targets;
    for (std::size_t i = 0; i < batch.size(); ++i)
      targets.push_back(rng.uniform(-2.0, 4.0));
    OptimState opt;
    opt.learning_rate = 1e-4;
    double prev = batch_loss(net, batch, targets);
    bool ok = true;
    for (int step = 0; step < 50; ++step) {
      update(net, opt, batch, targets);
      const double cur = batch_loss(net, batch, targets);
      if (cur > prev + 1e-12) {
        ok = false;
        break;
      }
      prev = cur;
    }
    monotone += ok ? 1 : 0;
  }
  EXPECT_GE(monotone, 19) << "non-increasing in " << monotone << "/" << trials;
}

TEST(Update, NonFiniteLossIsReportedNotApplied) {
  Rng rng(15);
  QNetwork net = QNetwork::init({3, 4, 9}, rng);
  net.layers[0].w[0] = std::numeric_limits<double>::infinity();
  OptimState opt;
  std::vector<Transition> batch = random_batch(2, 3, rng);
  batch[0].state = {1.0, 0.5, 0.5};
  EXPECT_THROW(update(net, opt, batch, std::vector<double>{0.0, 0.0}),
               std::runtime_error);
  EXPECT_EQ(opt.updates, 0);
}

TEST(Update, InputValidation) {
  Rng rng(16);
  QNetwork net = QNetwork::init({3, 9}, rng);
  OptimState opt;
  EXPECT_THROW(update(net, opt, {}, std::vector<double>{}), std::invalid_argument);
  std::vector<Transition> batch = random_batch(2, 3, rng);
  EXPECT_THROW(update(net, opt, batch, std::vector<double>{0.0}),
               std::invalid_argument);
}

TEST(Checkpoint, RoundTripReproducesForwardBitExactly) {
  test_support::TempDir dir("persearch-ckpt");
  Rng rng(21);
  QNetwork net = QNetwork::init({10, 7, 9}, rng);
  OptimState opt;
  opt.learning_rate = 5e-3;
  opt.momentum = 0.8;
  std::vector<Transition> batch = random_batch(4, 10, rng);
  update(net, opt, batch, bellman_targets(batch, net, 0.9));

  const auto path = dir.path() / "net.qnet";
  save_checkpoint(net, opt, path);
  const auto [loaded, loaded_opt] = load_checkpoint(path);

  EXPECT_EQ(loaded.dims, net.dims);
  EXPECT_EQ(loaded_opt.learning_rate, opt.learning_rate);
  EXPECT_EQ(loaded_opt.momentum, opt.momentum);
  EXPECT_EQ(loaded_opt.updates, opt.updates);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    EXPECT_EQ(loaded.layers[l].w, net.layers[l].w);
    EXPECT_EQ(loaded.layers[l].b, net.layers[l].b);
    EXPECT_EQ(loaded_opt.vel_w[l], opt.vel_w[l]);
  }
  for (int i = 0; i < 100; ++i) {
    std::vector<double> x(10);
    for (double& v : x) v = rng.uniform(-3.0, 3.0);
    EXPECT_EQ(net.forward(x), loaded.forward(x));
  }
}

TEST(Checkpoint, FreshInitializationRoundTripsExactly) {
  test_support::TempDir dir("persearch-ckpt-fresh");
  Rng rng(31);
  const QNetwork net = QNetwork::init({5, 4, 9}, rng);
  save_checkpoint(net, OptimState{}, dir.path() / "fresh.qnet");
  const auto [loaded, opt] = load_checkpoint(dir.path() / "fresh.qnet");
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    EXPECT_EQ(loaded.layers[l].w, net.layers[l].w);
    EXPECT_EQ(loaded.layers[l].b, net.layers[l].b);
  }
  EXPECT_EQ(opt.updates, 0);
}

TEST(Checkpoint, MalformedFilesAreRejected) {
  test_support::TempDir dir("persearch-ckpt-bad");
  const auto write = [&](const char* name, const std::string& content) {
    std::ofstream(dir.path() / name) << content;
    return dir.path() / name;
  };
  EXPECT_THROW(load_checkpoint(dir.path() / "missing.qnet"), std::runtime_error);
  EXPECT_THROW(load_checkpoint(write("bad_magic", "QNET v2\n3 9\n")),
               std::runtime_error);
  // Declared dims disagree with the stored parameter count.
  EXPECT_THROW(load_checkpoint(write("truncated", "QNET v1\n3 9\n0.5\n0.5\n")),
               std::runtime_error);
  // Output layer must have one unit per action.
  EXPECT_THROW(load_checkpoint(write("bad_dims", "QNET v1\n3 5\n")),
               std::invalid_argument);
  // Missing optimizer section.
  std::string no_opt = "QNET v1\n1 9\n";
  for (int i = 0; i < 18; ++i) no_opt += "0.25\n";
  EXPECT_THROW(load_checkpoint(write("no_opt", no_opt)), std::runtime_error);
}

}  // namespace
