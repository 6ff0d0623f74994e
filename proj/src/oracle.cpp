#include "gabp/oracle.hpp"

#include <cmath>

namespace gabp {

namespace {

ExactMarginals solve_posterior(const Matrix& info, const Vector& potential, const std::vector<int>& dims) {
  Eigen::LLT<Matrix> llt(info);
  if (llt.info() != Eigen::Success || !is_pd(info)) {
    throw ImproperModel("improper model: information matrix is not positive definite");
  }
  ExactMarginals out;
  out.info = info;
  out.potential = potential;
  const Vector mean = llt.solve(potential);
  const Matrix cov = llt.solve(Matrix::Identity(info.rows(), info.cols()));
  int offset = 0;
  for (int d : dims) {
    out.means.push_back(mean.segment(offset, d));
    const Matrix block = cov.block(offset, offset, d, d);
    out.covs.push_back(0.5 * (block + block.transpose()));
    offset += d;
  }
  return out;
}

}  // namespace

ExactMarginals exact_gmrf(const GmrfModel& model) {
  return solve_posterior(model.dense_J(), model.h, std::vector<int>(static_cast<std::size_t>(model.n), 1));
}

ExactMarginals exact_linear(const LinearGaussianModel& model) {
  std::vector<int> dims;
  std::vector<int> offsets;
  int total = 0;
  for (const auto& node : model.nodes) {
    offsets.push_back(total);
    dims.push_back(node.dim);
    total += node.dim;
  }
  Matrix info = Matrix::Zero(total, total);
  Vector potential = Vector::Zero(total);
  for (std::size_t k = 0; k < model.nodes.size(); ++k) {
    info.block(offsets[k], offsets[k], dims[k], dims[k]) = invert_spd(model.nodes[k].prior_cov);
  }
  for (const auto& e : model.edges) {
    const int m = e.obs_dim();
    const auto oi = offsets[static_cast<std::size_t>(e.i - 1)];
    const auto oj = offsets[static_cast<std::size_t>(e.j - 1)];
    Matrix E = Matrix::Zero(m, total);
    E.middleCols(oi, e.A_ji.cols()) = e.A_ji;
    E.middleCols(oj, e.A_ij.cols()) = e.A_ij;
    const Matrix Rinv = invert_spd(e.noise_cov);
    info += E.transpose() * Rinv * E;
    potential += E.transpose() * Rinv * e.y;
  }
  return solve_posterior(0.5 * (info + info.transpose()), potential, dims);
}

ExactMarginals exact(const FactorGraphModel& model) {
  return model.is_gmrf() ? exact_gmrf(model.gmrf()) : exact_linear(model.linear());
}

ScaledGmrf posterior_as_gmrf(const LinearGaussianModel& model) {
  for (const auto& node : model.nodes) {
    if (node.dim != 1) throw ModelError("posterior_as_gmrf needs scalar nodes");
  }
  const ExactMarginals post = exact_linear(model);
  const int n = static_cast<int>(model.nodes.size());
  ScaledGmrf out;
  out.scale = post.info.diagonal().cwiseSqrt().cwiseInverse();
  const Matrix J = out.scale.asDiagonal() * post.info * out.scale.asDiagonal();
  Matrix Jn = 0.5 * (J + J.transpose());
  Jn.diagonal().setOnes();
  out.model.n = n;
  out.model.J = Jn.sparseView(0.0, 0.0);
  out.model.J.makeCompressed();
  out.model.h = out.scale.cwiseProduct(post.potential);
  return out;
}

}  // namespace gabp
