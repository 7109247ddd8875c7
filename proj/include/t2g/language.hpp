#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "t2g/autodiff.hpp"
#include "t2g/nn.hpp"
#include "t2g/objects.hpp"

namespace t2g {

inline constexpr int kTextFeatureWidth = 64;
inline constexpr const char* kUnknownToken = "<unk>";

// Dense token ids; id 0 is the unknown token.
struct Vocabulary {
  std::vector<std::string> words;
  std::unordered_map<std::string, int> ids;

  // Grammar-bank words plus every category and part name.
  static Vocabulary build();
  static const Vocabulary& standard();
  static Vocabulary from_words(std::vector<std::string> words);

  int id(const std::string& word) const;  // unknown id when absent
  int unknown_id() const { return 0; }
  int size() const { return static_cast<int>(words.size()); }
  bool operator==(const Vocabulary& o) const { return words == o.words; }
};

// Lowercased words split on anything not a letter or digit.
std::vector<std::string> split_words(const std::string& text);
std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab = Vocabulary::standard());

using TextFeature = Eigen::VectorXd;

struct TextEncoderConfig {
  int embedding = 32;
  int feature = kTextFeatureWidth;
  bool operator==(const TextEncoderConfig&) const = default;
};

// "<prefix>.embed" (vocab x embedding) and dense "<prefix>.proj".
void add_text_encoder(nn::ParamSet& params, const std::string& prefix, int vocab_size,
                      const TextEncoderConfig& cfg, std::mt19937_64& rng);
// One row per token sequence; empty sequences encode the unknown token.
ad::Var encode_text(const nn::Bound& p, const std::string& prefix, const std::vector<std::vector<int>>& batch);
TextFeature encode_text(const std::vector<int>& tokens, const nn::ParamSet& params,
                        const std::string& prefix = "text");

enum class SegMode { kOracle, kLearned };
// 1 marks the targeted part.
using SegLabels = std::vector<std::uint8_t>;

struct SegNetConfig {
  int hidden = 64;
  int steps = 1500;
  int examples_per_batch = 8;
  int points_per_example = 256;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  TextEncoderConfig text;
};

struct SegExample {
  PartLabeledObject object;
  std::string text;
  SegLabels labels;
};

struct SegTrainResult {
  nn::ParamSet params;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> step_losses;
};

nn::ParamSet init_segnet(const SegNetConfig& cfg, const Vocabulary& vocab = Vocabulary::standard());
SegTrainResult train_segnet(const std::vector<SegExample>& data, const SegNetConfig& cfg,
                            const Vocabulary& vocab = Vocabulary::standard());
// Mean negative log-likelihood over a fixed subset of every example's points.
double segnet_loss(const nn::ParamSet& params, const std::vector<SegExample>& data,
                   const Vocabulary& vocab = Vocabulary::standard());
// Per-point probability of belonging to the part named in text.
std::vector<double> segnet_probabilities(const PartLabeledObject& object, const std::string& text,
                                         const nn::ParamSet& params,
                                         const Vocabulary& vocab = Vocabulary::standard());

// Oracle mode labels a point 1 when its part name is a word of text and
// throws kUnresolvablePrompt when no part name is. Learned mode needs params.
SegLabels segment_by_text(const PartLabeledObject& object, const std::string& text, SegMode mode,
                          const nn::ParamSet* params = nullptr,
                          const Vocabulary& vocab = Vocabulary::standard());

// One example per part, text drawn from the paraphrase bank with the seed.
std::vector<SegExample> segmentation_examples(const std::vector<PartLabeledObject>& objects, std::uint64_t seed);

}  // namespace t2g
