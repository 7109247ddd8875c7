#pragma once

#include <unsupported/Eigen/AutoDiff>

#include "t2g/grasp_vector.hpp"

namespace t2g {

// Forward-mode scalar carrying derivatives w.r.t. the 61 refinement coordinates.
using Jet = Eigen::AutoDiffScalar<Eigen::Matrix<double, kOptimizedDim, 1>>;

inline Jet make_jet(double value, int index) {
  Jet j(value);
  j.derivatives()[index] = 1.0;
  return j;
}

}  // namespace t2g
