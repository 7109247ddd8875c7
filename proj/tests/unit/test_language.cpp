#include <doctest.h>

#include <algorithm>
#include <random>

#include "t2g/error.hpp"
#include "t2g/language.hpp"
#include "t2g/synth_data.hpp"

using namespace t2g;

TEST_CASE("tokenize") {
  CHECK(tokenize("").empty());
  const auto ids = tokenize("Grasp the handle of the mug");
  CHECK(ids.size() == 6);
  CHECK(std::count(ids.begin(), ids.end(), Vocabulary::standard().unknown_id()) == 0);
  const auto z = tokenize("grasp the zorp");
  CHECK(std::count(z.begin(), z.end(), Vocabulary::standard().unknown_id()) == 1);
  CHECK(split_words("Pick up, the MUG!") == std::vector<std::string>{"pick", "up", "the", "mug"});
}

TEST_CASE("vocabulary covers every bank sentence and has dense ids") {
  const auto& v = Vocabulary::standard();
  CHECK(v.words[0] == kUnknownToken);
  for (std::size_t i = 0; i < v.words.size(); ++i) CHECK(v.ids.at(v.words[i]) == static_cast<int>(i));
  for (const auto& category : object_categories()) {
    const auto o = generate_object(category, 1, 64);
    for (const auto& part : o.part_names) {
      for (const auto& s : paraphrase_bank(category, part)) {
        const auto ids = tokenize(s);
        CHECK(std::count(ids.begin(), ids.end(), 0) == 0);
      }
    }
  }
}

namespace {

nn::ParamSet encoder_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  nn::ParamSet p;
  add_text_encoder(p, "text", Vocabulary::standard().size(), {}, rng);
  return p;
}

}  // namespace

TEST_CASE("encode_text is deterministic, order-free and maps empty input to the unknown token") {
  const auto p = encoder_params(1);
  const auto a = encode_text(tokenize("hold the mug by its handle"), p);
  CHECK(a.size() == kTextFeatureWidth);
  CHECK(a == encode_text(tokenize("hold the mug by its handle"), p));
  CHECK(a == encode_text(tokenize("handle its by mug the hold"), p));
  CHECK(encode_text({}, p) == encode_text({0}, p));
  CHECK(a.allFinite());
}

TEST_CASE("encode_text embedding gradient matches central differences") {
  auto p = encoder_params(2);
  const std::vector<std::vector<int>> batch{tokenize("grab the knife at the blade"), tokenize("take the pan")};
  Eigen::MatrixXd w(2, kTextFeatureWidth);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n;
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = n(rng);
  auto objective = [&](const nn::ParamSet& params, nn::Bound* keep, ad::Tape& tape) {
    const nn::Bound b = nn::bind(tape, params);
    if (keep) *keep = b;
    return ad::sum(ad::mul(encode_text(b, "text", batch), tape.constant(w)));
  };
  ad::Tape tape;
  nn::Bound b;
  tape.backward(objective(p, &b, tape));
  const auto g = tape.grad(b["text.embed"]);
  const double h = 1e-5;
  auto& table = p.at("text.embed");
  int checked = 0;
  for (int id : batch[0]) {
    for (int c = 0; c < 4; ++c) {
      const double saved = table(id, c);
      table(id, c) = saved + h;
      ad::Tape t1;
      const double up = objective(p, nullptr, t1).value()(0, 0);
      table(id, c) = saved - h;
      ad::Tape t2;
      const double down = objective(p, nullptr, t2).value()(0, 0);
      table(id, c) = saved;
      const double fd = (up - down) / (2 * h);
      CHECK(std::abs(g(id, c) - fd) <= 1e-3 * std::max(std::abs(fd), 1e-8));
      ++checked;
    }
  }
  CHECK(checked == 24);
}

TEST_CASE("oracle segmentation") {
  const auto knife = generate_object("knife", 5);
  const auto labels = segment_by_text(knife, "grasp the blade of the knife", SegMode::kOracle);
  const int blade = knife.part_index("blade");
  std::size_t ones = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    CHECK(labels[i] == (knife.cloud.labels[i] == blade ? 1 : 0));
    ones += labels[i];
  }
  CHECK(ones > 0);
  CHECK(ones < labels.size());
  try {
    segment_by_text(knife, "hold the knife", SegMode::kOracle);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kUnresolvablePrompt);
  }
  CHECK_THROWS_AS(segment_by_text(knife, "hold the knife by its blade", SegMode::kLearned), Error);
}

TEST_CASE("segnet training on an all-targeted dataset drives the loss toward zero") {
  auto o = generate_object("mug", 3, 256);
  SegExample e{o, "grasp the body of the mug", SegLabels(o.cloud.size(), 1)};
  SegNetConfig cfg;
  cfg.steps = 300;
  cfg.examples_per_batch = 1;
  const auto r = train_segnet({e}, cfg);
  CHECK(r.final_loss < 0.01);
  const auto l = segment_by_text(o, e.text, SegMode::kLearned, &r.params);
  CHECK(std::count(l.begin(), l.end(), 1) == static_cast<long>(l.size()));
}

TEST_CASE("segnet overfits one object and is deterministic") {
  const auto objects = std::vector<PartLabeledObject>{generate_object("hammer", 8, 512)};
  auto data = segmentation_examples(objects, 4);
  data.resize(1);
  SegNetConfig cfg;
  cfg.steps = 500;
  cfg.examples_per_batch = 1;
  const auto a = train_segnet(data, cfg);
  CHECK(a.final_loss < a.initial_loss);
  CHECK(a.final_loss <= 0.1 * a.initial_loss);
  const auto b = train_segnet(data, cfg);
  CHECK(a.params == b.params);
  CHECK_THROWS_AS(train_segnet({}, cfg), Error);
}

TEST_CASE("learned segmentation generalizes to held-out objects") {
  std::vector<PartLabeledObject> train, test;
  const auto& cats = object_categories();
  for (int i = 0; i < 400; ++i) train.push_back(generate_object(cats[i % cats.size()], derive_seed(1, i)));
  for (int i = 0; i < 100; ++i) test.push_back(generate_object(cats[i % cats.size()], derive_seed(2, i)));
  SegNetConfig cfg;
  cfg.steps = 800;
  const auto r = train_segnet(segmentation_examples(train, 11), cfg);
  std::size_t ok = 0, n = 0;
  for (const auto& e : segmentation_examples(test, 12)) {
    const auto l = segment_by_text(e.object, e.text, SegMode::kLearned, &r.params);
    for (std::size_t i = 0; i < l.size(); ++i) ok += l[i] == e.labels[i];
    n += l.size();
  }
  const double acc = static_cast<double>(ok) / static_cast<double>(n);
  MESSAGE("held-out per-point accuracy " << acc);
  CHECK(acc >= 0.95);
}
