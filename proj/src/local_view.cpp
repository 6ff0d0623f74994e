#include "gabp/local_view.hpp"

#include <string>

namespace gabp {

int LocalSlice::slot_of(NodeId neighbor) const {
  for (std::size_t k = 0; k < edges.size(); ++k) {
    if (edges[k].neighbor == neighbor) return static_cast<int>(k);
  }
  return -1;
}

LocalSlice extract_slice(const FactorGraphModel& model, NodeId node) {
  LocalSlice slice;
  slice.node = node;
  slice.kind = model.kind();
  slice.dim = model.dim(node);
  if (model.is_gmrf()) {
    const auto& g = model.gmrf();
    slice.J_self = g.coupling(node, node);
    slice.h_self = g.h(node - 1);
    slice.prior_info = Matrix::Constant(1, 1, slice.J_self);
  } else {
    slice.prior_info = invert_spd(model.linear().nodes[static_cast<std::size_t>(node - 1)].prior_cov);
  }
  for (NodeId k : model.neighbors(node)) {
    IncidentEdge e;
    e.neighbor = k;
    e.neighbor_dim = model.dim(k);
    if (model.is_gmrf()) {
      e.coupling = model.gmrf().coupling(node, k);
    } else {
      const auto& obs = model.observation(node, k);
      e.A_self = obs.coef_of(node);
      e.A_other = obs.coef_of(k);
      e.noise_cov = obs.noise_cov;
      e.y = obs.y;
    }
    slice.edges.push_back(std::move(e));
  }
  return slice;
}

std::vector<LocalSlice> extract_all_slices(const FactorGraphModel& model) {
  std::vector<LocalSlice> out;
  out.reserve(static_cast<std::size_t>(model.num_nodes()));
  for (NodeId j = 1; j <= model.num_nodes(); ++j) out.push_back(extract_slice(model, j));
  return out;
}

LocalityError::LocalityError(NodeId node_, NodeId a, NodeId b)
    : std::runtime_error("node " + std::to_string(node_) + " attempted to read non-incident edge (" +
                         std::to_string(a) + "," + std::to_string(b) + ")"),
      node(node_),
      edge_a(a),
      edge_b(b) {}

std::vector<NodeId> LocalView::neighbors() const {
  std::vector<NodeId> out;
  out.reserve(slice_->edges.size());
  for (const auto& e : slice_->edges) out.push_back(e.neighbor);
  return out;
}

const IncidentEdge& LocalView::edge(NodeId neighbor) const {
  const int slot = slice_->slot_of(neighbor);
  if (slot < 0) throw LocalityError(slice_->node, slice_->node, neighbor);
  log_.push_back(neighbor);
  return slice_->edges[static_cast<std::size_t>(slot)];
}

}  // namespace gabp
