#pragma once

#include "gabp/model.hpp"

#include <stdexcept>
#include <vector>

namespace gabp {

/// Model data attached to one edge, seen from one endpoint ("self").
struct IncidentEdge {
  NodeId neighbor = 0;
  int neighbor_dim = 1;
  // Linear Gaussian path.
  Matrix A_self;   // multiplies x_self
  Matrix A_other;  // multiplies x_neighbor
  Matrix noise_cov;
  Vector y;
  // GMRF path.
  double coupling = 0.0;  // J_{self, neighbor}
};

/// Everything node `node` knows: its own prior (or J row diagonal and h) and
/// its incident edges in ascending neighbor order. Nothing else.
struct LocalSlice {
  NodeId node = 0;
  ModelKind kind = ModelKind::LinearGaussian;
  int dim = 1;
  Matrix prior_info;  // W^{-1}
  double J_self = 1.0;
  double h_self = 0.0;
  std::vector<IncidentEdge> edges;

  /// Position of `neighbor` in `edges`, or -1.
  int slot_of(NodeId neighbor) const;
};

LocalSlice extract_slice(const FactorGraphModel& model, NodeId node);
std::vector<LocalSlice> extract_all_slices(const FactorGraphModel& model);

class LocalityError : public std::runtime_error {
 public:
  LocalityError(NodeId node, NodeId a, NodeId b);
  NodeId node;
  NodeId edge_a;
  NodeId edge_b;
};

/// Read-only access to a slice that records which incident edges were read
/// and refuses anything else.
class LocalView {
 public:
  explicit LocalView(const LocalSlice& slice) : slice_(&slice) {}

  NodeId node() const { return slice_->node; }
  ModelKind kind() const { return slice_->kind; }
  int dim() const { return slice_->dim; }
  const Matrix& prior_info() const { return slice_->prior_info; }
  double J_self() const { return slice_->J_self; }
  double h_self() const { return slice_->h_self; }
  std::vector<NodeId> neighbors() const;

  /// Throws LocalityError when {node(), neighbor} is not an incident edge.
  const IncidentEdge& edge(NodeId neighbor) const;

  const std::vector<NodeId>& access_log() const { return log_; }

 private:
  const LocalSlice* slice_;
  mutable std::vector<NodeId> log_;
};

}  // namespace gabp
