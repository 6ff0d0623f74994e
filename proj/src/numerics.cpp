#include "gabp/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace gabp {

namespace {

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

bool symmetric_within(const Matrix& m, double tolerance) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, max_abs(m));
  return max_abs(m - m.transpose()) <= tolerance * scale;
}

void require_square(const Matrix& m, const char* op) {
  if (m.rows() != m.cols()) {
    throw NumericalError(std::string(op) + ": matrix is " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + ", expected square");
  }
}

Eigen::LLT<Matrix> factor_spd(const Matrix& m, const char* op) {
  require_square(m, op);
  Eigen::LLT<Matrix> llt(symmetrized(m));
  if (llt.info() != Eigen::Success) {
    throw NumericalError(std::string(op) + ": matrix is not PD (Cholesky failed)");
  }
  const Vector diag = llt.matrixLLT().diagonal();
  const double floor = tol::kPivotFloor * std::max(1.0, max_abs(m));
  if (diag.size() > 0 && diag.cwiseAbs2().minCoeff() < floor) {
    throw NumericalError(std::string(op) + ": matrix is not PD (pivot below floor)");
  }
  return llt;
}

}  // namespace

double inf_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

Matrix symmetrized(const Matrix& m) {
  require_square(m, "symmetrized");
  if (!symmetric_within(m, tol::kSymmetry)) {
    throw NumericalError("matrix is not symmetric within tolerance");
  }
  return 0.5 * (m + m.transpose());
}

double spectral_radius(const Matrix& m, double tolerance) {
  require_square(m, "spectral_radius");
  if (!(tolerance > 0.0)) throw NumericalError("spectral_radius: tolerance must be positive");
  if (m.size() == 0) return 0.0;
  if (!m.allFinite()) throw NumericalError("spectral_radius: non-finite entries");
  if (m.isZero(0.0)) return 0.0;
  if (symmetric_within(m, tolerance * 1e-2)) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("spectral_radius: eigensolve failed");
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
  Eigen::EigenSolver<Matrix> es(m, false);
  if (es.info() != Eigen::Success) throw NumericalError("spectral_radius: eigensolve failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

bool is_psd(const Matrix& m) {
  const Matrix s = symmetrized(m);
  if (s.size() == 0) return true;
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol::kPsdFloor * std::max(1.0, inf_norm(s));
}

bool is_pd(const Matrix& m) {
  const Matrix s = symmetrized(m);
  if (s.size() == 0) return true;
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success) return false;
  const Vector diag = llt.matrixLLT().diagonal();
  return diag.cwiseAbs2().minCoeff() >= tol::kPivotFloor * std::max(1.0, max_abs(s));
}

Vector solve_spd(const Matrix& m, const Vector& rhs) {
  if (rhs.size() != m.rows()) throw NumericalError("solve_spd: rhs dimension mismatch");
  return factor_spd(m, "solve_spd").solve(rhs);
}

Matrix solve_spd(const Matrix& m, const Matrix& rhs) {
  if (rhs.rows() != m.rows()) throw NumericalError("solve_spd: rhs dimension mismatch");
  return factor_spd(m, "solve_spd").solve(rhs);
}

Matrix invert_spd(const Matrix& m) {
  const Matrix inv = factor_spd(m, "invert_spd").solve(Matrix::Identity(m.rows(), m.cols()));
  return 0.5 * (inv + inv.transpose());
}

}  // namespace gabp
