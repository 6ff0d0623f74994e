#pragma once

#include "gabp/bp_engine.hpp"
#include "gabp/local_view.hpp"
#include "gabp/model.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gabp {

/// Limits of the information recursion started from zero information.
/// All vectors follow the global message order. On the GMRF path every
/// matrix is the 1x1 Delta-J* and v2f_cov is left empty.
struct FixedPointInfo {
  ModelKind kind = ModelKind::LinearGaussian;
  std::vector<Matrix> v2f_info;  // [C*_{j->f_{i,j}}]^{-1}
  std::vector<Matrix> v2f_cov;   // C*_{j->f_{i,j}}
  std::vector<Matrix> f2v_info;  // [C*_{f_{k,j}->j}]^{-1}
  double residual = 0.0;
  int iterations = 0;
};

class FixedPointNotCertified : public std::runtime_error {
 public:
  FixedPointNotCertified(const std::string& why, int iterations, double residual);
  int iterations;
  double residual;
};

inline constexpr double kFixedPointTol = 1e-12;
inline constexpr int kFixedPointMaxIter = 10000;

/// Iterates only the information part of the updates until the largest
/// inf-norm change over all messages falls below `tolerance`.
FixedPointInfo fixed_point_information(const FactorGraphModel& model,
                                       double tolerance = kFixedPointTol,
                                       int max_iter = kFixedPointMaxIter);

/// One synchronous round of the information recursion. `f2v_info` is the
/// previous round's factor->variable information in global order; the new
/// values are written to the outputs. Shared by the fixed-point solver and
/// its tests.
void information_round(const FactorGraphModel& model, const std::vector<LocalSlice>& slices,
                       const std::vector<Matrix>& f2v_info, std::vector<Matrix>& v2f_out,
                       std::vector<Matrix>& f2v_out);

/// The part of the fixed point node j holds after the information phase,
/// indexed like its LocalSlice::edges.
struct LocalFixedPoint {
  NodeId node = 0;
  std::vector<Matrix> outgoing_info;  // [C*_{j->f_{i,j}}]^{-1}, computed at j
  std::vector<Matrix> outgoing_cov;   // C*_{j->f_{i,j}}
  std::vector<Matrix> incoming_info;  // [C*_{k->f_{k,j}}]^{-1}, received from k
};

LocalFixedPoint local_fixed_point(const FactorGraphModel& model, const FixedPointInfo& fp, NodeId node);

/// Row block of the mean recursion v(l) = b - Q v(l-1) owned by one node.
/// Rows are the node's outgoing variable->factor messages (j, i), columns
/// the messages (k, j) destined to it; every other column of Q_j is zero
/// and is not stored.
struct LocalQBlock {
  NodeId node = 0;
  std::vector<DirectedPair> rows;
  std::vector<DirectedPair> cols;
  std::vector<int> row_offsets;
  std::vector<int> col_offsets;
  Matrix block;
  Vector offset;  // b_j
};

LocalQBlock build_local_q(const LocalView& view, const LocalFixedPoint& fp);
LocalQBlock build_local_q(const FactorGraphModel& model, const FixedPointInfo& fp, NodeId node);

struct LocalVerdict {
  double rho_local = 0.0;  // rho(Q_j Q_jᵀ)
  bool verdict = true;
};

LocalVerdict local_condition(const LocalQBlock& block);

/// Offsets of each directed message inside the stacked vector v.
struct MessageLayout {
  std::vector<int> offsets;
  int total = 0;
};

MessageLayout message_layout(const FactorGraphModel& model);

/// Q_j padded with its zero columns to the full width of Q.
Matrix expand_rows(const LocalQBlock& block, const FactorGraphModel& model, const MessageLayout& layout);

struct Recursion {
  Matrix Q;
  Vector b;
};

/// Stacks every node's block. Refuses models larger than kCentralizedLimit unknowns.
Recursion assemble_recursion(const FactorGraphModel& model, const FixedPointInfo& fp);

inline constexpr int kCentralizedLimit = 3000;

class SizeLimitError : public std::runtime_error {
 public:
  explicit SizeLimitError(const std::string& what) : std::runtime_error(what) {}
};

struct CentralizedVerdict {
  double rho_Q = 0.0;
  double rho_QQt = 0.0;
};

CentralizedVerdict centralized_condition(const FactorGraphModel& model, const FixedPointInfo& fp);

struct WalkSummability {
  double rho_absR = 0.0;
  bool verdict = true;
};

WalkSummability walk_summability(const GmrfModel& model);
WalkSummability walk_summability(const FactorGraphModel& model);

struct NodeVerdict {
  NodeId node = 0;
  double rho_local = 0.0;
  bool verdict = true;
};

struct ConvergenceReport {
  std::vector<NodeVerdict> nodes;
  bool local_verdict = true;
  std::optional<double> rho_Q;
  std::optional<double> rho_QQt;
  std::optional<WalkSummability> walk;
  bool from_local = true;
  bool from_centralized = false;
  int fixed_point_iterations = 0;
  double fixed_point_residual = 0.0;
};

struct CertifyOptions {
  double tolerance = kFixedPointTol;
  int max_iter = kFixedPointMaxIter;
  bool centralized = false;
};

/// Local verdicts for every node, plus the centralized baselines on request.
/// Throws FixedPointNotCertified when the information recursion does not settle.
ConvergenceReport certify(const FactorGraphModel& model, const CertifyOptions& options = {});

}  // namespace gabp
