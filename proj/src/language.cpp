#include "t2g/language.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "t2g/error.hpp"
#include "t2g/synth_data.hpp"

namespace t2g {

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary Vocabulary::from_words(std::vector<std::string> words) {
  Vocabulary v;
  v.words.push_back(kUnknownToken);
  for (auto& w : words) {
    if (w != kUnknownToken) v.words.push_back(std::move(w));
  }
  for (std::size_t i = 0; i < v.words.size(); ++i) {
    if (!v.ids.emplace(v.words[i], static_cast<int>(i)).second) {
      throw Error(ErrorKind::kInvalidInput, fmt::format("duplicate vocabulary word '{}'", v.words[i]));
    }
  }
  return v;
}

Vocabulary Vocabulary::build() {
  std::set<std::string> words;
  for (const auto& category : object_categories()) {
    const auto object = generate_object(category, 0, 16);
    words.insert(category);
    for (const auto& part : object.part_names) {
      words.insert(part);
      for (const auto& s : paraphrase_bank(category, part)) {
        for (auto& w : split_words(s)) words.insert(std::move(w));
      }
    }
  }
  return from_words({words.begin(), words.end()});
}

const Vocabulary& Vocabulary::standard() {
  static const Vocabulary v = build();
  return v;
}

int Vocabulary::id(const std::string& word) const {
  const auto it = ids.find(word);
  return it == ids.end() ? unknown_id() : it->second;
}

std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab) {
  std::vector<int> out;
  for (const auto& w : split_words(text)) out.push_back(vocab.id(w));
  return out;
}

void add_text_encoder(nn::ParamSet& params, const std::string& prefix, int vocab_size,
                      const TextEncoderConfig& cfg, std::mt19937_64& rng) {
  // Embedding rows behave like inputs of unit fan-in.
  params.add_uniform(prefix + ".embed", vocab_size, cfg.embedding, 1, rng);
  nn::add_dense(params, prefix + ".proj", cfg.embedding, cfg.feature, rng);
}

ad::Var encode_text(const nn::Bound& p, const std::string& prefix, const std::vector<std::vector<int>>& batch) {
  std::vector<int> ids;
  std::vector<int> offsets{0};
  for (const auto& tokens : batch) {
    if (tokens.empty()) {
      ids.push_back(0);
    } else {
      // Sorted so pooling sums in the same order for any word order.
      const auto begin = ids.insert(ids.end(), tokens.begin(), tokens.end());
      std::sort(begin, ids.end());
    }
    offsets.push_back(static_cast<int>(ids.size()));
  }
  const ad::Var emb = ad::gather_rows(p[prefix + ".embed"], ids);
  return nn::dense(p, prefix + ".proj", ad::segment_mean(emb, offsets));
}

TextFeature encode_text(const std::vector<int>& tokens, const nn::ParamSet& params, const std::string& prefix) {
  ad::Tape tape;
  const nn::Bound p = nn::bind(tape, params, false);
  return encode_text(p, prefix, {tokens}).value().row(0).transpose();
}

namespace {

constexpr double kUnit = 10.0;  // cm per network unit

// Rows: (x, y, z, distance) relative to the centroid, in network units.
ad::Matrix point_inputs(const PartLabeledObject& object, const std::vector<int>& index) {
  ad::Matrix x(static_cast<Eigen::Index>(index.size()), 4);
  for (std::size_t i = 0; i < index.size(); ++i) {
    const Vec3 d = (object.cloud.points[static_cast<std::size_t>(index[i])] - object.centroid) / kUnit;
    x.row(static_cast<Eigen::Index>(i)) << d.x(), d.y(), d.z(), d.norm();
  }
  return x;
}

// Logits for `points` rows of each of the texts.
ad::Var segnet_forward(const nn::Bound& p, ad::Var inputs, const std::vector<std::vector<int>>& texts,
                       int points) {
  const ad::Var fl = ad::repeat_rows(encode_text(p, "seg.text", texts), points);
  ad::Var h = ad::relu(nn::dense(p, "seg.l1", ad::concat_cols(inputs, fl)));
  h = ad::relu(nn::dense(p, "seg.l2", h));
  return nn::dense(p, "seg.out", h);
}

std::vector<int> all_points(const PartLabeledObject& object) {
  std::vector<int> idx(object.cloud.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  return idx;
}

std::vector<int> strided_points(std::size_t n, std::size_t cap) {
  std::vector<int> idx;
  const std::size_t stride = std::max<std::size_t>(1, (n + cap - 1) / cap);
  for (std::size_t i = 0; i < n; i += stride) idx.push_back(static_cast<int>(i));
  return idx;
}

void check_example(const SegExample& e) {
  if (e.labels.size() != e.object.cloud.size()) {
    throw Error(ErrorKind::kInvalidInput, "segmentation labels must match the point count");
  }
}

}  // namespace

nn::ParamSet init_segnet(const SegNetConfig& cfg, const Vocabulary& vocab) {
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x7365676e6574));
  nn::ParamSet p;
  add_text_encoder(p, "seg.text", vocab.size(), cfg.text, rng);
  nn::add_dense(p, "seg.l1", 4 + cfg.text.feature, cfg.hidden, rng);
  nn::add_dense(p, "seg.l2", cfg.hidden, cfg.hidden, rng);
  nn::add_dense(p, "seg.out", cfg.hidden, 1, rng);
  return p;
}

double segnet_loss(const nn::ParamSet& params, const std::vector<SegExample>& data, const Vocabulary& vocab) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& e : data) {
    check_example(e);
    const auto idx = strided_points(e.object.cloud.size(), 512);
    ad::Matrix y(static_cast<Eigen::Index>(idx.size()), 1);
    for (std::size_t i = 0; i < idx.size(); ++i) y(static_cast<Eigen::Index>(i)) = e.labels[static_cast<std::size_t>(idx[i])];
    ad::Tape tape;
    const nn::Bound p = nn::bind(tape, params, false);
    const ad::Var logits = segnet_forward(p, tape.constant(point_inputs(e.object, idx)), {tokenize(e.text, vocab)},
                                          static_cast<int>(idx.size()));
    total += ad::bce_with_logits(logits, y).value()(0, 0) * static_cast<double>(idx.size());
    count += idx.size();
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

SegTrainResult train_segnet(const std::vector<SegExample>& data, const SegNetConfig& cfg, const Vocabulary& vocab) {
  if (data.empty()) throw Error(ErrorKind::kInvalidInput, "segmentation dataset is empty");
  if (cfg.steps < 0 || cfg.examples_per_batch <= 0 || cfg.points_per_example <= 0 || cfg.learning_rate <= 0.0) {
    throw Error(ErrorKind::kInvalidInput, "segmentation training config must be positive");
  }
  for (const auto& e : data) {
    check_example(e);
    if (e.object.cloud.empty()) throw Error(ErrorKind::kInvalidInput, "segmentation example has no points");
  }
  SegTrainResult out;
  out.params = init_segnet(cfg, vocab);
  out.initial_loss = segnet_loss(out.params, data, vocab);
  std::vector<std::vector<int>> tokens;
  for (const auto& e : data) tokens.push_back(tokenize(e.text, vocab));

  std::mt19937_64 rng(derive_seed(cfg.seed, 0x7365677472));
  nn::Adam opt(cfg.learning_rate);
  const int n = cfg.points_per_example;
  for (int step = 0; step < cfg.steps; ++step) {
    ad::Matrix x(static_cast<Eigen::Index>(cfg.examples_per_batch) * n, 4);
    ad::Matrix y(x.rows(), 1);
    std::vector<std::vector<int>> texts;
    for (int b = 0; b < cfg.examples_per_batch; ++b) {
      const std::size_t k = rng() % data.size();
      const auto& e = data[k];
      std::vector<int> idx(static_cast<std::size_t>(n));
      for (auto& i : idx) i = static_cast<int>(rng() % e.object.cloud.size());
      x.middleRows(static_cast<Eigen::Index>(b) * n, n) = point_inputs(e.object, idx);
      for (int i = 0; i < n; ++i) y(static_cast<Eigen::Index>(b) * n + i) = e.labels[static_cast<std::size_t>(idx[i])];
      texts.push_back(tokens[k]);
    }
    ad::Tape tape;
    const nn::Bound p = nn::bind(tape, out.params);
    const ad::Var loss = ad::bce_with_logits(segnet_forward(p, tape.constant(std::move(x)), texts, n), y);
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value)) {
      throw Error(ErrorKind::kNumerical, fmt::format("segmentation training diverged at step {}", step));
    }
    out.step_losses.push_back(value);
    tape.backward(loss);
    opt.step(out.params, nn::gradients(tape, p));
  }
  out.final_loss = segnet_loss(out.params, data, vocab);
  return out;
}

std::vector<double> segnet_probabilities(const PartLabeledObject& object, const std::string& text,
                                         const nn::ParamSet& params, const Vocabulary& vocab) {
  object.cloud.validate();
  const auto idx = all_points(object);
  ad::Tape tape;
  const nn::Bound p = nn::bind(tape, params, false);
  const ad::Var logits =
      segnet_forward(p, tape.constant(point_inputs(object, idx)), {tokenize(text, vocab)}, static_cast<int>(idx.size()));
  std::vector<double> prob(idx.size());
  for (std::size_t i = 0; i < prob.size(); ++i) {
    prob[i] = 1.0 / (1.0 + std::exp(-logits.value()(static_cast<Eigen::Index>(i))));
  }
  return prob;
}

SegLabels segment_by_text(const PartLabeledObject& object, const std::string& text, SegMode mode,
                          const nn::ParamSet* params, const Vocabulary& vocab) {
  SegLabels labels(object.cloud.size(), 0);
  if (mode == SegMode::kLearned) {
    if (params == nullptr) throw Error(ErrorKind::kInvalidInput, "learned segmentation needs trained parameters");
    const auto prob = segnet_probabilities(object, text, *params, vocab);
    for (std::size_t i = 0; i < prob.size(); ++i) labels[i] = prob[i] >= 0.5 ? 1 : 0;
    return labels;
  }
  if (!object.cloud.has_labels()) throw Error(ErrorKind::kInvalidInput, "oracle segmentation needs part labels");
  const auto words = split_words(text);
  std::vector<bool> named(object.part_names.size(), false);
  bool any = false;
  for (std::size_t k = 0; k < object.part_names.size(); ++k) {
    named[k] = std::find(words.begin(), words.end(), object.part_names[k]) != words.end();
    any = any || named[k];
  }
  if (!any) {
    throw Error(ErrorKind::kUnresolvablePrompt,
                fmt::format("unresolvable prompt '{}': it names no part of the {}", text, object.category));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = named[static_cast<std::size_t>(object.cloud.labels[i])] ? 1 : 0;
  return labels;
}

std::vector<SegExample> segmentation_examples(const std::vector<PartLabeledObject>& objects, std::uint64_t seed) {
  std::vector<SegExample> out;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    for (std::size_t k = 0; k < o.part_names.size(); ++k) {
      const auto bank = paraphrase_bank(o.category, o.part_names[k]);
      std::mt19937_64 rng(derive_seed(seed, i, k));
      std::string text = bank[rng() % bank.size()];
      SegLabels labels = segment_by_text(o, text, SegMode::kOracle);
      out.push_back({o, std::move(text), std::move(labels)});
    }
  }
  return out;
}

}  // namespace t2g
