#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <vector>

#include "t2g/hand_model.hpp"
#include "t2g/language.hpp"
#include "t2g/objects.hpp"

namespace t2g {

struct OptConfig {
  double lambda_target = 1.0;  // targeted part
  double lambda_other = 0.05;  // non-targeted part
  double lambda_contact = 1.0;
  double lambda_penetration = 5.0;
  double lambda_angle = 1.0;
  double lambda_self = 1.0;
  double lr_pose = 1e-2;
  double lr_shape = 1e-5;
  // cm per step.
  double lr_offset = 1e-2;
  int epochs = 200;

  // Throws kInvalidInput on negative weights, non-positive rates or epochs < 0.
  void validate() const;
};

// Mean over hc of the distance to the nearest point of o; 0 when hc is empty.
// Throws kInvalidInput when o is empty.
double loss_hc(const std::vector<Vec3>& hc, const PointCloud& o);

// lambda_target * loss_hc(hc, target) + lambda_other * loss_hc(hc, other).
// An empty target drops its term and sets *target_skipped. Throws when both
// clouds are empty.
double loss_contact(const std::vector<Vec3>& hc, const PointCloud& target, const PointCloud& other,
                    double lambda_target, double lambda_other, bool* target_skipped = nullptr);

// Sum over object points inside the hand of their depth below the nearest
// capsule surface.
double loss_penetration(const PointCloud& o, const HandSurface& surface);

// Nearest-neighbor matches and inside sets at one evaluation point. Holding
// these fixed makes the objective smooth in the grasp.
struct Correspondences {
  std::vector<int> hc_vertices;
  std::vector<std::size_t> target_match;  // per hc vertex, empty without target points
  std::vector<std::size_t> other_match;
  std::vector<std::size_t> inside_points;
  std::vector<int> inside_capsule;  // deepest capsule per inside point
  bool target_skipped = false;
};

Correspondences find_correspondences(const GraspVector& g, const PartLabeledObject& object, const SegLabels& seg,
                                     const HandTemplate& hand = HandTemplate::standard());

using OptGradient = Eigen::Matrix<double, kOptimizedDim, 1>;

struct ObjectiveValue {
  double contact = 0.0;      // L_c before lambda_contact
  double penetration = 0.0;  // L_ptr
  double angle = 0.0;        // L_angle
  double self = 0.0;         // L_self
  double total = 0.0;
  OptGradient gradient = OptGradient::Zero();  // pose | shape | offset
  bool target_skipped = false;
};

// Objective and gradient with correspondences held fixed. Throws kNumerical
// on non-finite values.
ObjectiveValue evaluate_objective(const GraspVector& g, const PartLabeledObject& object, const SegLabels& seg,
                                  const OptConfig& cfg, const Correspondences& corr,
                                  const HandTemplate& hand = HandTemplate::standard());

// Correspondences taken at g itself.
ObjectiveValue total_objective(const GraspVector& g, const PartLabeledObject& object, const SegLabels& seg,
                               const OptConfig& cfg, const HandTemplate& hand = HandTemplate::standard());

struct EpochTrace {
  int epoch = 0;
  double contact = 0.0;
  double penetration = 0.0;
  double angle = 0.0;
  double self = 0.0;
  double total = 0.0;
};

struct RefineResult {
  GraspVector grasp;
  std::vector<EpochTrace> trace;  // epoch 0 is the input
  int best_epoch = 0;
  double initial_objective = 0.0;
  double best_objective = 0.0;
  bool aborted = false;  // non-finite objective; grasp is the best so far
  bool target_skipped = false;
  std::vector<std::string> warnings;
};

RefineResult refine(const GraspVector& g, const PartLabeledObject& object, const SegLabels& seg,
                    const OptConfig& cfg, const HandTemplate& hand = HandTemplate::standard());
// Segments the object by text first; throws kUnresolvablePrompt when oracle
// mode finds no part name.
RefineResult refine(const GraspVector& g, const PartLabeledObject& object, const std::string& text,
                    const OptConfig& cfg, SegMode mode, const nn::ParamSet* segnet = nullptr,
                    const HandTemplate& hand = HandTemplate::standard());

// epoch,L_c,L_ptr,L_angle,L_self,total
void write_trace_csv(const std::vector<EpochTrace>& trace, const std::filesystem::path& path);

}  // namespace t2g
