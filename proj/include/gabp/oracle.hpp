#pragma once

#include "gabp/model.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace gabp {

/// Exact posterior marginals by dense solve.
struct ExactMarginals {
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  Matrix info;       // global posterior information matrix
  Vector potential;  // global potential vector
};

class ImproperModel : public std::runtime_error {
 public:
  explicit ImproperModel(const std::string& what) : std::runtime_error(what) {}
};

/// Throws ImproperModel when J is not positive definite.
ExactMarginals exact_gmrf(const GmrfModel& model);
ExactMarginals exact_linear(const LinearGaussianModel& model);
ExactMarginals exact(const FactorGraphModel& model);

/// Posterior of a scalar linear model rewritten as a unit-diagonal GMRF in
/// scaled coordinates x' = D^{1/2} x, where D = diag(J_post). Means of the
/// original model are scale.cwiseProduct(mean').
struct ScaledGmrf {
  GmrfModel model;
  Vector scale;  // D^{-1/2}
};

ScaledGmrf posterior_as_gmrf(const LinearGaussianModel& model);

}  // namespace gabp
