#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "t2g/diffusion.hpp"
#include "t2g/error.hpp"

using namespace t2g;

namespace {

Eigen::VectorXd normal_vector(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Eigen::VectorXd v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

DenoiserConfig tiny_denoiser() {
  DenoiserConfig c;
  c.feature = 16;
  c.point_hidden = 8;
  c.points = 32;
  c.text.embedding = 8;
  c.text.feature = 16;
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("t2g_test_" + name);
}

}  // namespace

TEST_CASE("schedule tables") {
  const auto s1 = make_schedule(1, 1e-4, 0.02);
  CHECK(s1.alpha_bar[1] == 1.0 - 1e-4);
  const auto s = make_schedule(100, 1e-4, 0.02);
  // Independent direct product.
  double prod = 1.0;
  for (int t = 1; t <= 100; ++t) prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * (t - 1) / 99.0);
  CHECK(std::abs(s.alpha_bar[100] - prod) < 1e-12);
  // The often-quoted 0.366 is exp(-sum beta), the first-order form of the
  // product; the product itself is 0.3636.
  double beta_sum = 0.0;
  for (int t = 1; t <= 100; ++t) beta_sum += s.beta[t];
  CHECK(std::abs(std::exp(-beta_sum) - 0.366) < 1e-3);
  CHECK(std::abs(s.alpha_bar[100] - 0.3636) < 1e-4);
  CHECK(s.beta_tilde[1] == 0.0);
  for (int t = 1; t <= 100; ++t) {
    CHECK(s.alpha_bar[t] == s.alpha[t] * s.alpha_bar[t - 1]);
    CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
  }
  CHECK_THROWS_AS(make_schedule(0, 1e-4, 0.02), Error);
  CHECK_THROWS_AS(make_schedule(10, 0.02, 1e-4), Error);
  CHECK_THROWS_AS(make_schedule(10, 0.0, 0.02), Error);
  CHECK_THROWS_AS(make_schedule(10, 1e-4, 1.0), Error);
}

TEST_CASE("q_sample") {
  const auto s = make_schedule(100);
  std::mt19937_64 rng(1);
  const Eigen::VectorXd g0 = normal_vector(kGraspDim, rng);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(kGraspDim);
  CHECK(q_sample(g0, 40, zero, s) == std::sqrt(s.alpha_bar[40]) * g0);
  const Eigen::VectorXd eps = normal_vector(kGraspDim, rng);
  CHECK((q_sample(g0, 1, eps, s) - g0).norm() <= std::sqrt(1e-4) * eps.norm() + 1e-4 * g0.norm());
  CHECK_THROWS_AS(q_sample(g0, 0, eps, s), Error);
  CHECK_THROWS_AS(q_sample(g0, 101, eps, s), Error);
}

TEST_CASE("q_sample Monte-Carlo statistics at t = T") {
  const auto s = make_schedule(100);
  Eigen::VectorXd g0(3);
  g0 << 1.5, -0.7, 0.0;
  std::mt19937_64 rng(2);
  const int n = 100000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(3), sq = Eigen::VectorXd::Zero(3);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = q_sample(g0, 100, normal_vector(3, rng), s);
    sum += x;
    sq += x.cwiseAbs2();
  }
  const Eigen::VectorXd mean = sum / n;
  const Eigen::VectorXd var = sq / n - mean.cwiseAbs2();
  const double expected_var = 1.0 - s.alpha_bar[100];
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(mean[k] - std::sqrt(s.alpha_bar[100]) * g0[k]) < 3.0 * std::sqrt(expected_var / n));
    CHECK(std::abs(var[k] - expected_var) < 0.05 * expected_var);
  }
}

TEST_CASE("posterior step") {
  const auto s = make_schedule(100);
  std::mt19937_64 rng(3);
  const Eigen::VectorXd g0 = normal_vector(kGraspDim, rng);
  const Eigen::VectorXd gt = normal_vector(kGraspDim, rng);
  CHECK(posterior_step(g0, gt, 1, s, normal_vector(kGraspDim, rng)) == g0);
  for (int t = 1; t <= 100; ++t) {
    // Scalar recomputation straight from beta.
    double abar = 1.0, abar_prev = 1.0;
    for (int k = 1; k <= t; ++k) {
      abar_prev = abar;
      abar *= 1.0 - (1e-4 + (0.02 - 1e-4) * (k - 1) / 99.0);
    }
    const double beta = 1e-4 + (0.02 - 1e-4) * (t - 1) / 99.0;
    const double a = std::sqrt(abar_prev) * beta / (1.0 - abar);
    const double b = std::sqrt(1.0 - beta) * (1.0 - abar_prev) / (1.0 - abar);
    const auto c = posterior_coefficients(t, s);
    CHECK(c.predicted == doctest::Approx(a).epsilon(1e-9));
    CHECK(c.current == doctest::Approx(b).epsilon(1e-9));
    CHECK(c.predicted > 0.0);
    CHECK(c.predicted <= 1.0);
    CHECK(c.current >= 0.0);
    CHECK(c.current <= 1.0);
    CHECK(c.predicted + c.current <= 1.0 + 1e-9);
    const Eigen::VectorXd v = Eigen::VectorXd::Constant(kGraspDim, 0.7);
    const Eigen::VectorXd mu = posterior_step(v, v, t, s, Eigen::VectorXd::Zero(kGraspDim));
    CHECK(mu[0] == doctest::Approx(0.7 * (a + b)).epsilon(1e-9));
  }
  CHECK_THROWS_AS(posterior_step(g0, gt, 0, s, gt), Error);
}

TEST_CASE("reverse process with an oracle predictor reconstructs g0 at the last step") {
  const auto s = make_schedule(100);
  std::mt19937_64 rng(4);
  const Eigen::VectorXd g0 = normal_vector(kGraspDim, rng);
  std::mt19937_64 noise(5);
  const Eigen::VectorXd out =
      reverse_process(s, normal_vector(kGraspDim, rng), [&](const Eigen::VectorXd&, int) { return g0; }, noise);
  CHECK(out == g0);
  std::mt19937_64 bad(6);
  CHECK_THROWS_AS(reverse_process(
                      s, g0,
                      [](const Eigen::VectorXd& g, int t) {
                        return t == 50 ? Eigen::VectorXd::Constant(g.size(), NAN) : g;
                      },
                      bad),
                  Error);
}

TEST_CASE("sampling from a zero network shrinks the initial noise") {
  auto m = init_model(tiny_denoiser(), 100, 1e-4, 0.02, 1);
  for (auto& v : m.params.values) v.setZero();
  const auto obj = generate_object("mug", 2, 256);
  const Eigen::VectorXd x = sample_network(m, obj, "grasp the handle of the mug", 9);
  std::mt19937_64 rng(9);
  const Eigen::VectorXd g_T = normal_vector(kGraspDim, rng);
  CHECK(x.norm() < g_T.norm());
  CHECK(x == sample_network(m, obj, "grasp the handle of the mug", 9));
}

namespace {

std::vector<DatasetRecord> small_dataset(int objects, int grasps) {
  GenDataConfig c;
  c.categories = {"mug"};
  c.objects_per_category = objects;
  c.grasps_per_object = grasps;
  c.paraphrases = 2;
  c.seed = 5;
  return generate_dataset(c);
}

}  // namespace

TEST_CASE("training overfits a single record and is deterministic") {
  auto data = small_dataset(1, 1);
  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.learning_rate = 1e-3;
  cfg.denoiser = tiny_denoiser();
  cfg.seed = 3;
  const auto a = train(data, cfg);
  CHECK(a.epoch_loss.size() == 500);
  // Mean of the first and last 20 epochs: per-epoch t and noise make single
  // epochs noisy.
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 20; ++i) {
    first += a.epoch_loss[static_cast<std::size_t>(i)];
    last += a.epoch_loss[a.epoch_loss.size() - 1 - static_cast<std::size_t>(i)];
  }
  CHECK(last <= 0.1 * first);
  cfg.epochs = 20;
  const auto b = train(data, cfg);
  const auto c = train(data, cfg);
  CHECK(b.epoch_loss == c.epoch_loss);
  CHECK(b.model == c.model);
  CHECK_THROWS_AS(train({}, cfg), Error);
}

TEST_CASE("identical targets pull the head bias toward the common target") {
  auto data = small_dataset(1, 1);
  data.push_back(data.front());
  data.push_back(data.front());
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.learning_rate = 1e-3;
  cfg.denoiser = tiny_denoiser();
  const auto r = train(data, cfg);
  // Zero-variance coordinates standardize to 0, so the network target is 0.
  const auto& m = r.model;
  CHECK(m.scale.maxCoeff() == 1e-3);
  const auto obj = data.front().object;
  const Eigen::VectorXd x = sample_network(m, obj, data.front().samples.front().template_text, 1);
  const GraspVector g = m.from_network(x);
  const auto& target = data.front().samples.front().grasp;
  for (int i = 0; i < kGraspDim; ++i) CHECK(std::abs(g.values[i] - target.values[i]) < 0.01);
}

TEST_CASE("text ablation freezes the value projection at zero") {
  auto data = small_dataset(2, 2);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.denoiser = tiny_denoiser();
  cfg.ablate_text = true;
  const auto r = train(data, cfg);
  CHECK(r.model.text_ablated);
  CHECK(r.model.params.at("den.fuse.v.w").isZero());
  CHECK(r.model.params.at("den.fuse.v.b").isZero());
  const auto& obj = data.front().object;
  CHECK(sample_network(r.model, obj, "grasp the body of the mug", 4) ==
        sample_network(r.model, obj, "hold the mug by its handle", 4));
}

TEST_CASE("loss is reproducible for fixed draws") {
  auto data = small_dataset(1, 2);
  const auto m = init_model(tiny_denoiser(), 100, 1e-4, 0.02, 7);
  std::mt19937_64 rng(8);
  std::vector<LossItem> items;
  for (const auto& s : data.front().samples) {
    items.push_back({&data.front().object, s.grasp, s.template_text, 1 + static_cast<int>(rng() % 100),
                     normal_vector(kGraspDim, rng)});
  }
  const double a = diffusion_loss(m, items);
  CHECK(std::isfinite(a));
  CHECK(a == diffusion_loss(m, items));
}

TEST_CASE("checkpoint round trip") {
  auto m = init_model(tiny_denoiser(), 50, 2e-4, 0.03, 11);
  std::mt19937_64 rng(12);
  m.mean = normal_vector(kGraspDim, rng);
  m.scale = normal_vector(kGraspDim, rng).cwiseAbs();
  m.text_ablated = true;
  SegNetConfig sc;
  sc.hidden = 8;
  m.segnet = init_segnet(sc);
  const auto path = temp_path("ckpt.bin");
  save_checkpoint(m, path);
  const auto back = load_checkpoint(path);
  CHECK(back == m);
  const auto obj = generate_object("bottle", 3, 128);
  CHECK(sample(back, obj, "grasp the cap of the bottle", 5).values == sample(m, obj, "grasp the cap of the bottle", 5).values);

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('x');
  }
  try {
    load_checkpoint(path);
    FAIL("expected a version error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kCheckpointVersion);
  }
  std::filesystem::remove(path);
  try {
    load_checkpoint(path);
    FAIL("expected a missing-checkpoint error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kCheckpointMissing);
  }
}
