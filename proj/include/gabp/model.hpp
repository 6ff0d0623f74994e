#pragma once

#include "gabp/numerics.hpp"

#include <Eigen/Sparse>

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace gabp {

/// Node ids are 1-based and contiguous.
using NodeId = int;

/// Ordered (from, to) pair naming a directed message. For a variable->factor
/// message (j, i) is j -> f_{i,j}; for factor->variable (k, j) is f_{k,j} -> j.
struct DirectedPair {
  NodeId from = 0;
  NodeId to = 0;
  friend auto operator<=>(const DirectedPair&, const DirectedPair&) = default;
};

struct NodeParams {
  NodeId id = 0;
  int dim = 1;
  Matrix prior_cov;  // W_i
};

/// One observation y = A_ji x_i + A_ij x_j + z, z ~ N(0, R), stored once per
/// unordered pair with i < j.
struct EdgeObservation {
  NodeId i = 0;
  NodeId j = 0;
  Matrix A_ji;  // m x dim(i), multiplies x_i
  Matrix A_ij;  // m x dim(j), multiplies x_j
  Matrix noise_cov;
  Vector y;

  /// Coefficient multiplying x_node.
  const Matrix& coef_of(NodeId node) const;
  /// Coefficient multiplying the endpoint that is not `node`.
  const Matrix& coef_of_other(NodeId node) const;
  NodeId other(NodeId node) const;
  int obs_dim() const { return static_cast<int>(y.size()); }
};

struct LinearGaussianModel {
  std::vector<NodeParams> nodes;
  std::vector<EdgeObservation> edges;
  /// Draw used to synthesize y, kept for tests. Absent for hand-built models.
  std::optional<std::vector<Vector>> ground_truth;
};

struct GmrfModel {
  int n = 0;
  Eigen::SparseMatrix<double> J;
  Vector h;

  Matrix dense_J() const { return Matrix(J); }
  /// Off-diagonal nonzeros as (i, j) with i < j, 1-based.
  std::vector<std::pair<NodeId, NodeId>> edge_set() const;
  double coupling(NodeId i, NodeId j) const { return J.coeff(i - 1, j - 1); }
};

enum class ModelKind { LinearGaussian, Gmrf };

std::string to_string(ModelKind kind);

class ModelError : public std::runtime_error {
 public:
  explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

/// Either model class plus an adjacency index. Immutable after construction.
class FactorGraphModel {
 public:
  explicit FactorGraphModel(LinearGaussianModel model);
  explicit FactorGraphModel(GmrfModel model);

  ModelKind kind() const { return kind_; }
  bool is_gmrf() const { return kind_ == ModelKind::Gmrf; }
  const LinearGaussianModel& linear() const;
  const GmrfModel& gmrf() const;

  int num_nodes() const { return static_cast<int>(neighbors_.size()); }
  int dim(NodeId node) const;
  /// Sorted ascending.
  const std::vector<NodeId>& neighbors(NodeId node) const;
  bool has_edge(NodeId a, NodeId b) const;
  /// Undirected edges with first < second, ascending.
  const std::vector<std::pair<NodeId, NodeId>>& edges() const { return edges_; }
  const EdgeObservation& observation(NodeId a, NodeId b) const;

  /// All directed pairs ordered by (from, to) ascending: the global message order.
  const std::vector<DirectedPair>& directed_pairs() const { return directed_; }
  int message_index(DirectedPair p) const;

 private:
  void index_adjacency(const std::vector<std::pair<NodeId, NodeId>>& edges, int n);

  ModelKind kind_;
  std::variant<LinearGaussianModel, GmrfModel> payload_;
  std::vector<std::vector<NodeId>> neighbors_;
  std::vector<std::pair<NodeId, NodeId>> edges_;
  std::map<std::pair<NodeId, NodeId>, int> edge_slot_;
  std::vector<DirectedPair> directed_;
  std::map<DirectedPair, int> directed_index_;
};

struct Violation {
  std::string location;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string summary() const;
};

ValidationReport validate(const FactorGraphModel& model);

struct Topology {
  enum class Kind { Chain, Cycle, Grid, ErdosRenyi, Tree };
  Kind kind = Kind::Chain;
  double p = 0.0;  // ErdosRenyi edge probability

  static Topology chain() { return {Kind::Chain, 0.0}; }
  static Topology cycle() { return {Kind::Cycle, 0.0}; }
  static Topology grid() { return {Kind::Grid, 0.0}; }
  static Topology erdos_renyi(double p) { return {Kind::ErdosRenyi, p}; }
  static Topology tree() { return {Kind::Tree, 0.0}; }
};

std::optional<Topology> parse_topology(const std::string& name, double p);

class GenerationError : public std::runtime_error {
 public:
  explicit GenerationError(const std::string& what) : std::runtime_error(what) {}
};

/// Undirected edge list (i < j, 1-based) for `topology` on n nodes. Deterministic in seed.
std::vector<std::pair<NodeId, NodeId>> generate_edges(int n, const Topology& topology,
                                                      std::uint64_t seed);

/// Unit diagonal, off-diagonal -coupling on each edge, h ~ U[-1, 1].
GmrfModel generate_gmrf(int n, const Topology& topology, double coupling, std::uint64_t seed);

/// W_i = I, R = c I with c ~ U[0.5, 2], A entries N(0, 1) redrawn until full
/// column rank, observation dim max(dim_i, dim_j), y synthesized from a prior draw.
LinearGaussianModel generate_linear(int n_nodes, const std::vector<int>& dims,
                                    const Topology& topology, std::uint64_t seed);

bool is_connected(int n, const std::vector<std::pair<NodeId, NodeId>>& edges);

}  // namespace gabp
