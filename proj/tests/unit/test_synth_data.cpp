#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "t2g/error.hpp"
#include "t2g/metrics.hpp"
#include "t2g/synth_data.hpp"

using namespace t2g;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("t2g_test_" + name);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Single thin rod lying along y.
PartLabeledObject rod_object() {
  Solid s;
  Mat3 along_y;
  along_y.col(0) = Vec3::UnitZ();
  along_y.col(1) = Vec3::UnitX();
  along_y.col(2) = Vec3::UnitY();
  s.primitives.push_back({PrimitiveKind::kCylinder, 0, along_y, Vec3::Zero(), Vec3(0.8, 3.0, 0.0)});
  return make_object("rod", {"shaft"}, s, 5);
}

int brute_force_label(const PartLabeledObject& obj, const HandSurface& surface, double threshold) {
  std::vector<int> counts(obj.part_names.size(), 0);
  for (std::size_t i = 0; i < obj.cloud.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& v : surface.vertices) best = std::min(best, (obj.cloud.points[i] - v).norm());
    if (best <= threshold) ++counts[obj.cloud.labels[i]];
  }
  int label = kNoContact;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] > 0 && (label == kNoContact || counts[k] > counts[label])) label = static_cast<int>(k);
  }
  return label;
}

}  // namespace

TEST_CASE("generate_object is deterministic and well formed") {
  const auto a = generate_object("mug", 7);
  const auto b = generate_object("mug", 7);
  CHECK(a.cloud.points == b.cloud.points);
  CHECK(a.cloud.labels == b.cloud.labels);
  CHECK(a.cloud.size() == 2048);

  const auto knife = generate_object("knife", 11);
  CHECK(knife.part_names == std::vector<std::string>{"handle", "blade"});
  const std::set<int> labels(knife.cloud.labels.begin(), knife.cloud.labels.end());
  CHECK(labels == std::set<int>{0, 1});

  const auto mug = generate_object("mug", 3);
  Vec3 mean = Vec3::Zero();
  for (const auto& p : mug.cloud.points) mean += p;
  mean /= static_cast<double>(mug.cloud.size());
  CHECK((mug.centroid - mean).norm() < 1e-9);
}

TEST_CASE("every category samples its own surface") {
  for (const auto& cat : object_categories()) {
    const auto obj = generate_object(cat, 21);
    REQUIRE(obj.solid);
    CHECK(obj.part_names.size() == 2);
    double worst = 0.0;
    for (const auto& p : obj.cloud.points) worst = std::max(worst, std::abs(obj.solid->signed_distance(p)));
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("unknown category lists the valid ones") {
  try {
    generate_object("teapot", 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kInvalidInput);
    const std::string msg = e.what();
    for (const auto& cat : object_categories()) CHECK(msg.find(cat) != std::string::npos);
  }
}

TEST_CASE("primitive signed distance agrees with dense surface samples") {
  std::vector<Primitive> prims = {
      {PrimitiveKind::kCylinder, 0, Eigen::AngleAxisd(0.4, Vec3(1, 1, 0).normalized()).toRotationMatrix(),
       Vec3(1, 0, 0), Vec3(1.5, 2.0, 0)},
      {PrimitiveKind::kBox, 0, Eigen::AngleAxisd(0.7, Vec3::UnitZ()).toRotationMatrix(), Vec3(0, 1, 0),
       Vec3(2.0, 1.0, 0.5)},
      {PrimitiveKind::kTorusArc, 0, Mat3::Identity(), Vec3::Zero(), Vec3(3.0, 0.6, 1.2)},
  };
  std::mt19937_64 rng(8);
  for (const auto& prim : prims) {
    std::vector<Vec3> surface;
    for (int i = 0; i < 60000; ++i) surface.push_back(prim.sample_surface(rng));
    for (const auto& s : surface) REQUIRE(std::abs(prim.signed_distance(s)) < 1e-9);
    std::uniform_real_distribution<double> coord(-5, 5);
    for (int trial = 0; trial < 100; ++trial) {
      const Vec3 p(coord(rng), coord(rng), coord(rng));
      double best = std::numeric_limits<double>::infinity();
      for (const auto& s : surface) best = std::min(best, (p - s).norm());
      CHECK(std::abs(std::abs(prim.signed_distance(p)) - best) < 0.12);
    }
  }
  // Closed forms.
  const Primitive cyl{PrimitiveKind::kCylinder, 0, Mat3::Identity(), Vec3::Zero(), Vec3(1, 2, 0)};
  CHECK(cyl.signed_distance(Vec3::Zero()) == doctest::Approx(-1.0));
  CHECK(cyl.signed_distance(Vec3(0, 0, 5)) == doctest::Approx(3.0));
  const Primitive box{PrimitiveKind::kBox, 0, Mat3::Identity(), Vec3::Zero(), Vec3(1, 2, 3)};
  CHECK(box.signed_distance(Vec3::Zero()) == doctest::Approx(-1.0));
  CHECK(box.surface_area() == doctest::Approx(2 * (2 * 4 + 4 * 6 + 2 * 6)));
  const Primitive arc{PrimitiveKind::kTorusArc, 0, Mat3::Identity(), Vec3::Zero(), Vec3(3, 0.5, kPi / 2)};
  CHECK(arc.signed_distance(Vec3(3, 0, 0)) == doctest::Approx(-0.5));
  CHECK(arc.signed_distance(Vec3(-3, 0, 0)) == doctest::Approx(std::sqrt(18.0) - 0.5));
}

TEST_CASE("pinch on a thin rod touches with thumb and index") {
  const auto rod = rod_object();
  const FingerVector pinch = {true, true, false, false, false};
  const auto g = generate_grasp(rod, 0, pinch, 3);
  const auto surface = hand_surface(g, rod.centroid, HandTemplate::standard());
  for (int f : {0, 1}) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < surface.vertices.size(); ++v) {
      if (surface.vertex_finger[v] != f || !surface.vertex_distal[v]) continue;
      for (const auto& p : rod.cloud.points) best = std::min(best, (surface.vertices[v] - p).norm());
    }
    CHECK(best <= kContactThreshold);
  }
  CHECK(penetration_depth(rod, surface).depth <= 0.3);
  CHECK(g.fingers() == pinch);
}

TEST_CASE("generated grasps land on the requested part") {
  const auto hand = HandTemplate::standard();
  int trials = 0;
  int hits = 0;
  for (int i = 0; i < 200; ++i) {
    const auto& cat = object_categories()[i % 6];
    const auto obj = generate_object(cat, 1000 + i / 6);
    const int part = (i / 6) % 2;
    ++trials;
    try {
      const auto g = generate_grasp(obj, part, default_fingers(obj, part), 50 + i, hand);
      const auto surface = hand_surface(g, obj.centroid, hand);
      if (label_grasp_part(obj, surface) == part) ++hits;
      CHECK(penetration_depth(obj, surface).depth <= 0.3);
      const auto tips = contact_vertex_set(surface, g.fingers());
      for (int f = 0; f < kNumFingers; ++f) {
        if (!g.fingers()[f]) continue;
        bool touching = false;
        for (auto v : tips) {
          if (surface.vertex_finger[v] != f) continue;
          for (std::size_t k = 0; k < obj.cloud.size() && !touching; ++k) {
            touching = obj.cloud.labels[k] == part && (obj.cloud.points[k] - surface.vertices[v]).norm() <= 0.25;
          }
        }
        CHECK(touching);
      }
    } catch (const GenerationFailure&) {
    }
  }
  MESSAGE("requested part hit in ", hits, " of ", trials);
  CHECK(hits >= 0.95 * trials);
}

TEST_CASE("generate_grasp is deterministic and validates input") {
  const auto obj = generate_object("bottle", 4);
  const auto f = default_fingers(obj, 0);
  CHECK(generate_grasp(obj, 0, f, 9) == generate_grasp(obj, 0, f, 9));
  CHECK_THROWS_AS(generate_grasp(obj, 2, f, 9), Error);
  CHECK_THROWS_AS(generate_grasp(obj, 0, FingerVector{false, true, true, false, false}, 9), Error);
  CHECK_THROWS_AS(generate_grasp(obj, 0, FingerVector{true, false, false, false, false}, 9), Error);
}

TEST_CASE("default finger vectors follow part length") {
  CHECK(default_fingers(generate_object("bottle", 2), 1) == FingerVector{true, true, false, false, false});
  CHECK(default_fingers(generate_object("mug", 2), 1) == FingerVector{true, true, true, false, false});
  CHECK(default_fingers(generate_object("hammer", 2), 0) == FingerVector{true, true, true, true, true});
}

TEST_CASE("label_grasp_part basic cases") {
  const auto obj = generate_object("mug", 1);
  GraspVector g;
  g.offset()[0] = 100.0;
  const auto far = hand_surface(g, obj.centroid, HandTemplate::standard());
  CHECK(label_grasp_part(obj, far) == kNoContact);

  // 30 handle contacts against 12 body contacts.
  PartLabeledObject fixture;
  fixture.part_names = {"body", "handle"};
  HandSurface surface;
  for (int i = 0; i < 42; ++i) {
    const Vec3 v(i * 5.0, 0, 0);
    surface.vertices.push_back(v);
    fixture.cloud.points.push_back(v + Vec3(0, 0.2, 0));
    fixture.cloud.labels.push_back(i < 30 ? 1 : 0);
  }
  for (int i = 0; i < 100; ++i) {
    fixture.cloud.points.push_back(Vec3(i * 5.0, 10, 0));
    fixture.cloud.labels.push_back(0);
  }
  CHECK(label_grasp_part(fixture, surface) == 1);
  CHECK(brute_force_label(fixture, surface, kContactThreshold) == 1);

  // Equal counts resolve to the lower label.
  fixture.cloud.labels.assign(fixture.cloud.labels.size(), 0);
  for (int i = 0; i < 21; ++i) fixture.cloud.labels[i] = 1;
  CHECK(label_grasp_part(fixture, surface) == 0);
}

TEST_CASE("label_grasp_part matches the exhaustive oracle") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto hand = HandTemplate::standard();
  int with_contact = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto obj = generate_object(object_categories()[trial % 6], trial, 400);
    GraspVector g;
    for (int i = 0; i < kPoseDim; ++i) g.pose()[i] = 0.5 * n(rng);
    for (int i = 0; i < 3; ++i) g.offset()[i] = 4.0 * n(rng);
    const auto surface = hand_surface(g, obj.centroid, hand);
    const int got = label_grasp_part(obj, surface);
    CHECK(got == brute_force_label(obj, surface, kContactThreshold));
    with_contact += got != kNoContact;
  }
  CHECK(with_contact > 20);
}

TEST_CASE("template text and its inverse") {
  CHECK(template_text("mug", "handle") == "grasp the handle of the mug");
  CHECK(template_text("knife", "blade") == "grasp the blade of the knife");
  for (const auto& cat : object_categories()) {
    const auto obj = generate_object(cat, 1, 64);
    for (const auto& part : obj.part_names) {
      CHECK(parse_template(template_text(cat, part)) == std::make_pair(cat, part));
    }
  }
  CHECK_THROWS_AS(parse_template("hold the mug"), Error);
  CHECK_THROWS_AS(parse_template("grasp the handle of the  mug"), Error);
}

TEST_CASE("paraphrase bank and selection") {
  const auto three = paraphrase("grasp the handle of the mug", 3, 1);
  CHECK(three.size() == 3);
  CHECK(std::set<std::string>(three.begin(), three.end()).size() == 3);
  for (const auto& s : three) {
    CHECK(s.find("handle") != std::string::npos);
    CHECK(s.find("mug") != std::string::npos);
    CHECK(s != "grasp the handle of the mug");
  }
  const auto one = paraphrase("grasp the blade of the knife", 1, 4);
  CHECK(one.size() == 1);
  CHECK(one[0].find("blade") != std::string::npos);

  const auto bank = paraphrase_bank("mug", "handle");
  CHECK(bank.size() == 15);
  CHECK(std::set<std::string>(bank.begin(), bank.end()).size() == bank.size());
  CHECK(paraphrase_capacity() == 14);
  CHECK(paraphrase("grasp the handle of the mug", 14, 2).size() == 14);
  CHECK_THROWS_AS(paraphrase("grasp the handle of the mug", 15, 2), Error);
  CHECK(paraphrase("grasp the cap of the bottle", 5, 77) == paraphrase("grasp the cap of the bottle", 5, 77));

  GraspSample s;
  s.template_text = "grasp the cap of the bottle";
  s.paraphrases = paraphrase(s.template_text, 6, 3);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    CHECK(choose_description(s, seed).find("cap") != std::string::npos);
  }
}

TEST_CASE("dataset round trip") {
  const auto empty_path = temp_path("empty.jsonl");
  write_dataset({}, empty_path);
  CHECK(std::filesystem::file_size(empty_path) == 0);
  CHECK(read_dataset(empty_path).empty());

  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<DatasetRecord> records;
  for (int i = 0; i < 10; ++i) {
    DatasetRecord r;
    r.seed = rng();
    r.object = generate_object(object_categories()[i % 6], r.seed, 100);
    for (int k = 0; k < 1 + i % 3; ++k) {
      GraspSample s;
      for (auto& v : s.grasp.values) v = n(rng) * std::pow(10.0, static_cast<int>(rng() % 9) - 4);
      s.part_label = k % 2;
      s.template_text = template_text(r.object.category, r.object.part_names[s.part_label]);
      s.paraphrases = paraphrase(s.template_text, k, rng());
      r.samples.push_back(s);
    }
    records.push_back(r);
  }
  const auto path = temp_path("records.jsonl");
  write_dataset(records, path);
  const auto back = read_dataset(path);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i] == records[i]);
    for (std::size_t k = 0; k < records[i].samples.size(); ++k) {
      CHECK(std::memcmp(back[i].samples[k].grasp.values.data(), records[i].samples[k].grasp.values.data(),
                        sizeof(double) * kGraspDim) == 0);
    }
  }

  // Chop the last line in half.
  std::string text = slurp(path);
  text.resize(text.size() - 200);
  {
    std::ofstream out(path, std::ios::binary);
    out << text;
  }
  try {
    read_dataset(path);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(":10:") != std::string::npos);
  }
}

TEST_CASE("dataset generation is reproducible byte for byte") {
  GenDataConfig cfg;
  cfg.categories = {"mug", "knife"};
  cfg.objects_per_category = 2;
  cfg.grasps_per_object = 2;
  cfg.seed = 12;
  const auto a = generate_dataset(cfg);
  const auto b = generate_dataset(cfg);
  CHECK(a.size() == 4);
  write_dataset(a, temp_path("a.jsonl"));
  write_dataset(b, temp_path("b.jsonl"));
  CHECK(slurp(temp_path("a.jsonl")) == slurp(temp_path("b.jsonl")));
  for (const auto& r : a) {
    for (const auto& s : r.samples) {
      CHECK(s.template_text.find(r.object.part_names[s.part_label]) != std::string::npos);
    }
  }
}
