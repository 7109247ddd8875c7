#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "t2g/hand_model.hpp"
#include "t2g/objects.hpp"

namespace t2g {

inline constexpr const char* kMetricsSchema = "t2g-metrics/1";

struct Penetration {
  double depth = 0.0;
  // Set when the object had no solid and inside-ness was guessed from the cloud.
  bool approximate = false;
};

// Deepest hand vertex inside the object, measured to the object surface.
Penetration penetration_depth(const PartLabeledObject& object, const HandSurface& surface);

// Volume of solid voxels whose centers lie inside any hand capsule. The grid
// is anchored at the solid's lower bound.
double intersection_volume(const Solid& solid, const HandSurface& surface, double voxel_size = 0.2);
// Raw clouds use their surface occupancy instead of a solid.
double intersection_volume(const PartLabeledObject& object, const HandSurface& surface, double voxel_size = 0.2);

struct SimConfig {
  double horizon = 1.0;  // s
  double dt = 1.0 / 240.0;
  double gravity = 980.0;  // cm/s^2 along -z
  double stiffness = 1e5;  // dyn/cm per contact
  double friction = 0.8;
  // Springs engage this far outside the capsule surface.
  double margin = 0.25;  // cm
  double mass = 100.0;  // g
  double max_speed = 1e4;  // cm/s
};

// Rigid object under gravity against the static hand capsules. Penalty
// spring-damper normal forces at surface samples within the margin, viscous
// tangential friction capped at the Coulomb limit, semi-implicit Euler.
// Returns |center(T) - center(0)|; throws kNumerical on blow-up.
double simulate_displacement(const PointCloud& surface_samples, const HandSurface& hand, const SimConfig& cfg = {});

// -sum p ln p over the cluster occupancy of assignments in [0, k).
double assignment_entropy(const std::vector<int>& assignments, int k);

struct KMeansResult {
  std::vector<int> assignment;
  Eigen::MatrixXd centers;  // k x d
  double inertia = 0.0;     // sum of squared distances to assigned centers
};

// Best of `restarts` seeded k-means++ runs. Ties go to the lowest cluster
// index; an emptied cluster is re-seeded from the point farthest from its
// center when that distance is positive.
KMeansResult kmeans(const Eigen::MatrixXd& features, int k, int restarts, std::uint64_t seed);

struct Diversity {
  double entropy = 0.0;
  double mean_cluster_size = 0.0;
  int clusters = 0;
  bool reduced_k = false;  // fewer grasps than requested clusters
};

// Posed joint positions in the object frame, one row per grasp.
Eigen::MatrixXd diversity_features(const std::vector<GraspVector>& grasps,
                                   const HandTemplate& hand = HandTemplate::standard());
Diversity diversity(const Eigen::MatrixXd& features, int k = 20, int restarts = 50, std::uint64_t seed = 0);
Diversity diversity(const std::vector<GraspVector>& grasps, int k = 20, int restarts = 50, std::uint64_t seed = 0);

// Part named in text: the object's part whose name appears as a word; -1 when
// none or more than one does.
int part_named_in_text(const PartLabeledObject& object, const std::string& text);

struct PartAccuracy {
  double percent = 0.0;
  std::vector<int> predicted;  // label_grasp_part per grasp
  std::vector<int> requested;  // part_named_in_text per grasp
  std::vector<bool> unresolved;
};

struct GraspQuery {
  GraspVector grasp;
  std::string text;
  int object = 0;  // index into the object list
};

PartAccuracy part_accuracy(const std::vector<GraspQuery>& queries, const std::vector<PartLabeledObject>& objects,
                           const HandTemplate& hand = HandTemplate::standard());

struct MetricsConfig {
  double voxel_size = 0.2;
  SimConfig sim;
  int clusters = 20;
  int restarts = 50;
  std::uint64_t seed = 0;
};

struct GraspMetrics {
  int index = 0;
  int object = 0;
  std::string text;
  double penetration_depth_cm = 0.0;
  double intersection_volume_cm3 = 0.0;
  double displacement_cm = 0.0;
  int requested_part = -1;
  int contacted_part = -1;
  bool correct = false;
};

struct MetricsReport {
  double penetration_depth_cm = 0.0;
  double intersection_volume_cm3 = 0.0;
  double displacement_mean_cm = 0.0;
  double displacement_var = 0.0;
  double diversity_entropy = 0.0;
  double mean_cluster_size = 0.0;
  double part_accuracy_percent = 0.0;
  int grasp_count = 0;
  std::vector<std::string> flags;
  std::vector<GraspMetrics> grasps;
};

MetricsReport evaluate(const std::vector<GraspQuery>& queries, const std::vector<PartLabeledObject>& objects,
                       const MetricsConfig& cfg = {}, const HandTemplate& hand = HandTemplate::standard());

std::string report_json(const MetricsReport& report);
// One row per grasp followed by a summary row with index "all".
std::string report_csv(const MetricsReport& report);
void write_report(const MetricsReport& report, const std::filesystem::path& json_path);

}  // namespace t2g
