#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "t2g/grasp_vector.hpp"
#include "t2g/hand_model.hpp"
#include "t2g/objects.hpp"

namespace t2g {

// Object point within this distance of a hand vertex counts as a contact.
inline constexpr double kContactThreshold = 0.25;
inline constexpr int kNoContact = -1;

struct GraspSample {
  GraspVector grasp;
  int part_label = 0;
  std::string template_text;
  std::vector<std::string> paraphrases;

  bool operator==(const GraspSample&) const = default;
};

struct DatasetRecord {
  PartLabeledObject object;
  std::vector<GraspSample> samples;
  std::uint64_t seed = 0;
};

bool operator==(const PartLabeledObject& a, const PartLabeledObject& b);
bool operator==(const DatasetRecord& a, const DatasetRecord& b);

struct GraspGenConfig {
  double contact_threshold = kContactThreshold;
  double max_penetration = 0.3;
  int max_attempts = 16;
};

// Heuristic ground-truth grasp on one part. Thumb plus at least one other
// finger must be flagged. Throws GenerationFailure when every jittered attempt
// fails to close.
GraspVector generate_grasp(const PartLabeledObject& object, int part_label, const FingerVector& fingers,
                           std::uint64_t seed, const HandTemplate& hand = HandTemplate::standard(),
                           const GraspGenConfig& cfg = {});

// Finger vector a human would use for a part of this object, by part length.
FingerVector default_fingers(const PartLabeledObject& object, int part_label);

// Part with the most object points within the contact threshold of a hand
// vertex; ties go to the lower label; kNoContact when nothing touches.
int label_grasp_part(const PartLabeledObject& object, const HandSurface& surface,
                     double threshold = kContactThreshold);

// "grasp the {part} of the {category}"
std::string template_text(const std::string& category, const std::string& part);
// Inverse of template_text; throws kInvalidInput on anything else.
std::pair<std::string, std::string> parse_template(const std::string& text);

// Every sentence the paraphrase grammar can produce, template frame included.
std::vector<std::string> paraphrase_bank(const std::string& category, const std::string& part);
// Largest n that paraphrase accepts.
int paraphrase_capacity();
// n distinct rewordings of a template sentence, never the template itself.
std::vector<std::string> paraphrase(const std::string& template_sentence, int n, std::uint64_t seed);

// Seeded pick from paraphrases plus the template.
const std::string& choose_description(const GraspSample& sample, std::uint64_t seed);

void write_dataset(const std::vector<DatasetRecord>& records, const std::filesystem::path& path);
std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path);

struct GenDataConfig {
  std::vector<std::string> categories;
  int objects_per_category = 5;
  int grasps_per_object = 4;
  int paraphrases = 4;
  std::uint64_t seed = 0;
};

// Deterministic dataset; parts alternate across the grasps of each object.
std::vector<DatasetRecord> generate_dataset(const GenDataConfig& cfg,
                                            const HandTemplate& hand = HandTemplate::standard());

// Stable 64-bit mix of a seed with further integers.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace t2g
