#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "t2g/denoiser.hpp"
#include "t2g/language.hpp"
#include "t2g/synth_data.hpp"

namespace t2g {

inline constexpr const char* kCheckpointMagic = "t2g-ckpt/1";

// Tables indexed by t = 0..T; entry 0 holds alpha_bar_0 = 1 and zeros.
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta, alpha, alpha_bar, beta_tilde;
  // 1 - alpha_bar_t accumulated as (1 - abar_{t-1}) + abar_{t-1} beta_t, which
  // is exactly beta_1 at t = 1.
  std::vector<double> one_minus_alpha_bar;
};

NoiseSchedule make_schedule(int steps, double beta_start = 1e-4, double beta_end = 0.02);

// sqrt(abar_t) g0 + sqrt(1 - abar_t) eps
Eigen::VectorXd q_sample(const Eigen::VectorXd& g0, int t, const Eigen::VectorXd& eps, const NoiseSchedule& s);

struct PosteriorCoefficients {
  double predicted = 0.0;  // multiplies the predicted clean grasp
  double current = 0.0;    // multiplies g_t
  double variance = 0.0;
};
PosteriorCoefficients posterior_coefficients(int t, const NoiseSchedule& s);
// Mean plus sqrt(variance) z.
Eigen::VectorXd posterior_step(const Eigen::VectorXd& g0_hat, const Eigen::VectorXd& g_t, int t,
                               const NoiseSchedule& s, const Eigen::VectorXd& z);

// Runs t = T..1 from g_T with a caller-supplied clean-grasp predictor and
// standard-normal z drawn from rng. Throws kNumerical with the step on
// non-finite values.
using Predictor = std::function<Eigen::VectorXd(const Eigen::VectorXd& g_t, int t)>;
Eigen::VectorXd reverse_process(const NoiseSchedule& s, Eigen::VectorXd g_T, const Predictor& predict,
                                std::mt19937_64& rng);

struct DiffusionModel {
  DenoiserConfig denoiser;
  int steps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  Vocabulary vocab;
  // Network space is (g - mean) / scale per coordinate.
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(kGraspDim);
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(kGraspDim);
  nn::ParamSet params;  // text.* and den.*
  nn::ParamSet segnet;  // seg.*, empty when untrained
  bool text_ablated = false;

  NoiseSchedule schedule() const { return make_schedule(steps, beta_start, beta_end); }
  Eigen::VectorXd to_network(const GraspVector& g) const;
  GraspVector from_network(const Eigen::VectorXd& x) const;
  bool operator==(const DiffusionModel& o) const;
};

// Untrained model with identity normalization.
DiffusionModel init_model(const DenoiserConfig& cfg, int steps, double beta_start, double beta_end,
                          std::uint64_t seed, const Vocabulary& vocab = Vocabulary::standard());

struct TrainConfig {
  int epochs = 1000;
  int batch_size = 64;
  double learning_rate = 1e-4;
  int steps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::uint64_t seed = 0;
  DenoiserConfig denoiser;
  // Value projection of the multi-modal attention held at zero.
  bool ablate_text = false;
  std::function<void(int epoch, double loss)> on_epoch;
};

struct TrainResult {
  DiffusionModel model;
  std::vector<double> epoch_loss;
};

// One training example with its fixed draw of t, noise and text.
struct LossItem {
  const PartLabeledObject* object = nullptr;
  GraspVector grasp;
  std::string text;
  int t = 1;
  Eigen::VectorXd eps;
};

// Mean over items of ||g0 - G(g_t, t, o, l)||^2 in network space.
double diffusion_loss(const DiffusionModel& model, const std::vector<LossItem>& items);

TrainResult train(const std::vector<DatasetRecord>& data, const TrainConfig& cfg);

// Denoised grasp in network space starting from seeded noise; finger usage
// not yet thresholded.
Eigen::VectorXd sample_network(const DiffusionModel& model, const PartLabeledObject& object, const std::string& text,
                               std::uint64_t seed);
GraspVector sample(const DiffusionModel& model, const PartLabeledObject& object, const std::string& text,
                   std::uint64_t seed);

void save_checkpoint(const DiffusionModel& model, const std::filesystem::path& path);
// Throws kCheckpointMissing when absent and kCheckpointVersion on a bad header.
DiffusionModel load_checkpoint(const std::filesystem::path& path);

}  // namespace t2g
