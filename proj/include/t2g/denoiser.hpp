#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "t2g/autodiff.hpp"
#include "t2g/grasp_vector.hpp"
#include "t2g/language.hpp"
#include "t2g/nn.hpp"
#include "t2g/objects.hpp"

namespace t2g {

struct DenoiserConfig {
  int feature = 64;
  int heads = 2;
  int point_hidden = 64;
  // Points kept per object by farthest-point sampling.
  int points = 256;
  int timestep_embedding = 64;
  TextEncoderConfig text;
  bool operator==(const DenoiserConfig&) const = default;
};

using PointFeature = Eigen::VectorXd;

// Denoiser parameters ("den.*") together with the text encoder ("text.*").
// Dense layers uniform in +-1/sqrt(fan_in); attention outputs start at zero.
nn::ParamSet init_denoiser(const DenoiserConfig& cfg, int vocab_size, std::uint64_t seed);

// Farthest-point subsample starting from the point farthest from the
// centroid; short clouds are padded by cycling, which max pooling ignores.
std::vector<int> farthest_point_indices(const PointCloud& cloud, int count);
// Subsampled object points relative to the centroid, in 10 cm units.
Eigen::MatrixXd normalized_points(const PartLabeledObject& object, int count);

// Sinusoidal embedding, one row per step.
Eigen::MatrixXd timestep_embedding(const std::vector<int>& t, int width);

// Batched forms; `points` stacks equal-size clouds.
ad::Var encode_points(const nn::Bound& p, ad::Var points, int batch);
ad::Var fuse_conditions(const nn::Bound& p, ad::Var f_p, ad::Var f_l, const DenoiserConfig& cfg);
ad::Var denoise(const nn::Bound& p, ad::Var g_t, const std::vector<int>& t, ad::Var c, const DenoiserConfig& cfg,
                int steps);

// Single-example forms. Rows of `points` are already normalized.
PointFeature encode_points(const Eigen::MatrixXd& points, const nn::ParamSet& params);
Eigen::VectorXd fuse_conditions(const PointFeature& f_p, const TextFeature& f_l, const nn::ParamSet& params,
                                const DenoiserConfig& cfg);
// Throws kInvalidInput unless 1 <= t <= steps.
Eigen::VectorXd denoise(const Eigen::VectorXd& g_t, int t, const Eigen::VectorXd& c, const nn::ParamSet& params,
                        const DenoiserConfig& cfg, int steps);

}  // namespace t2g
