#include "t2g/grasp_vector.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "t2g/error.hpp"

namespace t2g {

GraspVector::GraspVector(std::span<const double> v) {
  if (v.size() != static_cast<std::size_t>(kGraspDim)) {
    throw Error(ErrorKind::kInvalidInput, fmt::format("grasp vector needs {} values, got {}", kGraspDim, v.size()));
  }
  std::copy(v.begin(), v.end(), values.begin());
}

FingerVector GraspVector::fingers() const {
  FingerVector f{};
  for (int i = 0; i < kFingerDim; ++i) f[i] = finger_usage()[i] >= 0.5;
  return f;
}

void GraspVector::set_fingers(const FingerVector& f) {
  for (int i = 0; i < kFingerDim; ++i) finger_usage()[i] = f[i] ? 1.0 : 0.0;
}

void GraspVector::threshold_fingers() { set_fingers(fingers()); }

void GraspVector::validate() const {
  for (int i = 0; i < kGraspDim; ++i) {
    if (!std::isfinite(values[i])) {
      throw Error(ErrorKind::kInvalidInput, fmt::format("grasp vector entry {} is not finite", i));
    }
  }
}

}  // namespace t2g
