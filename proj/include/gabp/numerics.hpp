#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace gabp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Shared numerical tolerances. Every module reads its defaults from here.
namespace tol {
inline constexpr double kPivotFloor = 1e-12;
inline constexpr double kEigen = 1e-10;
inline constexpr double kSymmetry = 1e-12;
inline constexpr double kPsdFloor = 1e-10;
inline constexpr double kSolveResidual = 1e-10;
}  // namespace tol

/// Raised when a factorization fails or an input violates a numerical precondition.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Largest absolute eigenvalue. Symmetric inputs go through a self-adjoint
/// eigensolve, general inputs through a dense complex eigensolve.
double spectral_radius(const Matrix& m, double tolerance = tol::kEigen);

/// Throws NumericalError when m is not symmetric within kSymmetry (scaled by max|m|).
Matrix symmetrized(const Matrix& m);

bool is_psd(const Matrix& m);
bool is_pd(const Matrix& m);

Vector solve_spd(const Matrix& m, const Vector& rhs);
Matrix solve_spd(const Matrix& m, const Matrix& rhs);
Matrix invert_spd(const Matrix& m);

/// Max absolute row sum.
double inf_norm(const Matrix& m);

}  // namespace gabp
