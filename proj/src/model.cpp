#include "gabp/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <sstream>

namespace gabp {

const Matrix& EdgeObservation::coef_of(NodeId node) const {
  if (node == i) return A_ji;
  if (node == j) return A_ij;
  throw ModelError("node " + std::to_string(node) + " is not an endpoint of edge (" +
                   std::to_string(i) + "," + std::to_string(j) + ")");
}

const Matrix& EdgeObservation::coef_of_other(NodeId node) const { return coef_of(other(node)); }

NodeId EdgeObservation::other(NodeId node) const {
  if (node == i) return j;
  if (node == j) return i;
  throw ModelError("node " + std::to_string(node) + " is not an endpoint of edge (" +
                   std::to_string(i) + "," + std::to_string(j) + ")");
}

std::vector<std::pair<NodeId, NodeId>> GmrfModel::edge_set() const {
  std::set<std::pair<NodeId, NodeId>> out;
  for (int col = 0; col < J.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(J, col); it; ++it) {
      if (it.row() == it.col() || it.value() == 0.0) continue;
      const auto a = static_cast<NodeId>(it.row()) + 1;
      const auto b = static_cast<NodeId>(it.col()) + 1;
      out.emplace(std::min(a, b), std::max(a, b));
    }
  }
  return {out.begin(), out.end()};
}

std::string to_string(ModelKind kind) {
  return kind == ModelKind::Gmrf ? "gmrf" : "linear";
}

FactorGraphModel::FactorGraphModel(LinearGaussianModel model)
    : kind_(ModelKind::LinearGaussian), payload_(std::move(model)) {
  const auto& lin = std::get<LinearGaussianModel>(payload_);
  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(lin.edges.size());
  for (const auto& e : lin.edges) edges.emplace_back(e.i, e.j);
  index_adjacency(edges, static_cast<int>(lin.nodes.size()));
}

FactorGraphModel::FactorGraphModel(GmrfModel model)
    : kind_(ModelKind::Gmrf), payload_(std::move(model)) {
  const auto& g = std::get<GmrfModel>(payload_);
  if (g.J.rows() != g.n || g.J.cols() != g.n || g.h.size() != g.n) {
    throw ModelError("gmrf: J must be n x n and h length n");
  }
  index_adjacency(g.edge_set(), g.n);
}

void FactorGraphModel::index_adjacency(const std::vector<std::pair<NodeId, NodeId>>& edges, int n) {
  neighbors_.assign(static_cast<std::size_t>(n), {});
  for (std::size_t slot = 0; slot < edges.size(); ++slot) {
    auto [a, b] = edges[slot];
    if (a < 1 || b < 1 || a > n || b > n) {
      throw ModelError("edge (" + std::to_string(a) + "," + std::to_string(b) +
                       ") references a node outside 1.." + std::to_string(n));
    }
    if (a == b) throw ModelError("self-loop at node " + std::to_string(a));
    const auto key = std::make_pair(std::min(a, b), std::max(a, b));
    if (!edge_slot_.emplace(key, static_cast<int>(slot)).second) {
      throw ModelError("duplicate edge (" + std::to_string(key.first) + "," +
                       std::to_string(key.second) + ")");
    }
    neighbors_[static_cast<std::size_t>(a - 1)].push_back(b);
    neighbors_[static_cast<std::size_t>(b - 1)].push_back(a);
  }
  for (auto& list : neighbors_) std::sort(list.begin(), list.end());
  for (const auto& [key, slot] : edge_slot_) edges_.push_back(key);
  for (NodeId from = 1; from <= n; ++from) {
    for (NodeId to : neighbors_[static_cast<std::size_t>(from - 1)]) {
      directed_index_.emplace(DirectedPair{from, to}, static_cast<int>(directed_.size()));
      directed_.push_back({from, to});
    }
  }
}

const LinearGaussianModel& FactorGraphModel::linear() const {
  if (kind_ != ModelKind::LinearGaussian) throw ModelError("model is not linear Gaussian");
  return std::get<LinearGaussianModel>(payload_);
}

const GmrfModel& FactorGraphModel::gmrf() const {
  if (kind_ != ModelKind::Gmrf) throw ModelError("model is not a GMRF");
  return std::get<GmrfModel>(payload_);
}

int FactorGraphModel::dim(NodeId node) const {
  if (node < 1 || node > num_nodes()) throw ModelError("no node " + std::to_string(node));
  if (kind_ == ModelKind::Gmrf) return 1;
  return linear().nodes[static_cast<std::size_t>(node - 1)].dim;
}

const std::vector<NodeId>& FactorGraphModel::neighbors(NodeId node) const {
  if (node < 1 || node > num_nodes()) throw ModelError("no node " + std::to_string(node));
  return neighbors_[static_cast<std::size_t>(node - 1)];
}

bool FactorGraphModel::has_edge(NodeId a, NodeId b) const {
  return edge_slot_.count({std::min(a, b), std::max(a, b)}) > 0;
}

const EdgeObservation& FactorGraphModel::observation(NodeId a, NodeId b) const {
  auto it = edge_slot_.find({std::min(a, b), std::max(a, b)});
  if (it == edge_slot_.end()) {
    throw ModelError("no edge (" + std::to_string(a) + "," + std::to_string(b) + ")");
  }
  return linear().edges[static_cast<std::size_t>(it->second)];
}

int FactorGraphModel::message_index(DirectedPair p) const {
  auto it = directed_index_.find(p);
  if (it == directed_index_.end()) {
    throw ModelError("no directed message " + std::to_string(p.from) + "->" + std::to_string(p.to));
  }
  return it->second;
}

std::string ValidationReport::summary() const {
  std::ostringstream out;
  for (const auto& v : violations) out << v.location << ": " << v.message << "\n";
  return out.str();
}

bool is_connected(int n, const std::vector<std::pair<NodeId, NodeId>>& edges) {
  if (n <= 1) return true;
  std::vector<std::vector<NodeId>> adj(static_cast<std::size_t>(n));
  for (auto [a, b] : edges) {
    if (a < 1 || b < 1 || a > n || b > n) continue;
    adj[static_cast<std::size_t>(a - 1)].push_back(b);
    adj[static_cast<std::size_t>(b - 1)].push_back(a);
  }
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  std::queue<NodeId> frontier;
  frontier.push(1);
  seen[0] = true;
  int count = 1;
  while (!frontier.empty()) {
    NodeId u = frontier.front();
    frontier.pop();
    for (NodeId v : adj[static_cast<std::size_t>(u - 1)]) {
      if (!seen[static_cast<std::size_t>(v - 1)]) {
        seen[static_cast<std::size_t>(v - 1)] = true;
        ++count;
        frontier.push(v);
      }
    }
  }
  return count == n;
}

namespace {

bool full_column_rank(const Matrix& a) {
  if (a.cols() == 0 || a.rows() < a.cols()) return false;
  Eigen::ColPivHouseholderQR<Matrix> qr(a);
  qr.setThreshold(1e-10);
  return qr.rank() == a.cols();
}

bool symmetric_pd(const Matrix& m) {
  if (m.rows() != m.cols() || m.size() == 0 || !m.allFinite()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol::kSymmetry * scale) return false;
  return is_pd(m);
}

std::string node_loc(NodeId id) { return "node " + std::to_string(id); }
std::string edge_loc(NodeId a, NodeId b) {
  return "edge (" + std::to_string(a) + "," + std::to_string(b) + ")";
}

void validate_linear(const FactorGraphModel& model, ValidationReport& report) {
  const auto& lin = model.linear();
  auto add = [&](std::string loc, std::string msg) {
    report.violations.push_back({std::move(loc), std::move(msg)});
  };
  for (std::size_t k = 0; k < lin.nodes.size(); ++k) {
    const auto& node = lin.nodes[k];
    const NodeId expected = static_cast<NodeId>(k) + 1;
    if (node.id != expected) {
      add(node_loc(node.id), "node ids must be unique and contiguous from 1 (expected " +
                                 std::to_string(expected) + ")");
    }
    if (node.dim < 1) {
      add(node_loc(node.id), "dimension must be at least 1");
      continue;
    }
    if (node.prior_cov.rows() != node.dim || node.prior_cov.cols() != node.dim) {
      add(node_loc(node.id), "prior covariance shape does not match dimension");
    } else if (!symmetric_pd(node.prior_cov)) {
      add(node_loc(node.id), "prior covariance not symmetric positive definite");
    }
  }
  const int n = static_cast<int>(lin.nodes.size());
  for (const auto& e : lin.edges) {
    const std::string loc = edge_loc(e.i, e.j);
    if (e.i >= e.j) add(loc, "endpoints must be listed with the smaller id first");
    if (e.i < 1 || e.j > n) continue;
    const int m = e.obs_dim();
    const int di = lin.nodes[static_cast<std::size_t>(e.i - 1)].dim;
    const int dj = lin.nodes[static_cast<std::size_t>(e.j - 1)].dim;
    if (m < 1) {
      add(loc, "missing observation");
      continue;
    }
    if (e.A_ji.rows() != m || e.A_ji.cols() != di || e.A_ij.rows() != m || e.A_ij.cols() != dj) {
      add(loc, "dimension mismatch");
      continue;
    }
    if (!full_column_rank(e.A_ji) || !full_column_rank(e.A_ij)) {
      add(loc, "rank deficient coefficient");
    }
    if (e.noise_cov.rows() != m || e.noise_cov.cols() != m) {
      add(loc, "noise covariance shape does not match observation");
    } else if (!symmetric_pd(e.noise_cov)) {
      add(loc, "noise covariance not symmetric positive definite");
    }
    if (!e.y.allFinite()) add(loc, "observation has non-finite entries");
  }
}

void validate_gmrf(const FactorGraphModel& model, ValidationReport& report) {
  const auto& g = model.gmrf();
  const Matrix J = g.dense_J();
  for (int i = 0; i < g.n; ++i) {
    if (J(i, i) != 1.0) {
      report.violations.push_back({node_loc(i + 1), "diagonal not unit at node " + std::to_string(i + 1)});
    }
    for (int k = i + 1; k < g.n; ++k) {
      if (J(i, k) != J(k, i)) {
        report.violations.push_back({edge_loc(i + 1, k + 1), "J not symmetric"});
      }
    }
  }
  if (!g.h.allFinite()) report.violations.push_back({"h", "non-finite potential"});
}

}  // namespace

ValidationReport validate(const FactorGraphModel& model) {
  ValidationReport report;
  if (model.is_gmrf()) {
    validate_gmrf(model, report);
  } else {
    validate_linear(model, report);
  }
  if (model.num_nodes() == 0) {
    report.violations.push_back({"model", "model has no nodes"});
  } else if (!is_connected(model.num_nodes(), model.edges())) {
    report.violations.push_back({"model", "graph is not connected"});
  }
  return report;
}

std::optional<Topology> parse_topology(const std::string& name, double p) {
  if (name == "chain") return Topology::chain();
  if (name == "cycle") return Topology::cycle();
  if (name == "grid") return Topology::grid();
  if (name == "tree") return Topology::tree();
  if (name == "erdos_renyi" || name == "er") return Topology::erdos_renyi(p);
  return std::nullopt;
}

std::vector<std::pair<NodeId, NodeId>> generate_edges(int n, const Topology& topology,
                                                      std::uint64_t seed) {
  if (n < 2) throw GenerationError("need at least 2 nodes");
  std::vector<std::pair<NodeId, NodeId>> edges;
  switch (topology.kind) {
    case Topology::Kind::Chain:
      for (NodeId a = 1; a < n; ++a) edges.emplace_back(a, a + 1);
      return edges;
    case Topology::Kind::Cycle:
      if (n < 3) throw GenerationError("a cycle needs at least 3 nodes");
      for (NodeId a = 1; a < n; ++a) edges.emplace_back(a, a + 1);
      edges.emplace_back(1, n);
      return edges;
    case Topology::Kind::Grid: {
      const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
      for (int k = 0; k < n; ++k) {
        const int right = k + 1;
        const int down = k + cols;
        if ((k + 1) % cols != 0 && right < n) edges.emplace_back(k + 1, right + 1);
        if (down < n) edges.emplace_back(k + 1, down + 1);
      }
      std::sort(edges.begin(), edges.end());
      return edges;
    }
    case Topology::Kind::Tree: {
      std::mt19937_64 rng(seed);
      for (NodeId a = 2; a <= n; ++a) {
        std::uniform_int_distribution<NodeId> parent(1, a - 1);
        edges.emplace_back(parent(rng), a);
      }
      std::sort(edges.begin(), edges.end());
      return edges;
    }
    case Topology::Kind::ErdosRenyi: {
      if (!(topology.p > 0.0) || topology.p > 1.0) {
        throw GenerationError("erdos_renyi probability must be in (0, 1]");
      }
      std::mt19937_64 rng(seed);
      std::bernoulli_distribution coin(topology.p);
      constexpr int kMaxAttempts = 1000;
      for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        edges.clear();
        for (NodeId a = 1; a <= n; ++a) {
          for (NodeId b = a + 1; b <= n; ++b) {
            if (coin(rng)) edges.emplace_back(a, b);
          }
        }
        if (is_connected(n, edges)) return edges;
      }
      throw GenerationError("erdos_renyi: no connected draw after " + std::to_string(kMaxAttempts) +
                            " attempts (p too small)");
    }
  }
  throw GenerationError("unknown topology");
}

GmrfModel generate_gmrf(int n, const Topology& topology, double coupling, std::uint64_t seed) {
  if (!std::isfinite(coupling)) throw GenerationError("coupling must be finite");
  if (coupling == 0.0) {
    throw GenerationError("coupling 0 yields no edges; the graph cannot be connected");
  }
  const auto edges = generate_edges(n, topology, seed);
  std::vector<Eigen::Triplet<double>> triplets;
  for (int i = 0; i < n; ++i) triplets.emplace_back(i, i, 1.0);
  for (auto [a, b] : edges) {
    triplets.emplace_back(a - 1, b - 1, -coupling);
    triplets.emplace_back(b - 1, a - 1, -coupling);
  }
  GmrfModel model;
  model.n = n;
  model.J.resize(n, n);
  model.J.setFromTriplets(triplets.begin(), triplets.end());
  model.J.makeCompressed();
  // Potentials use a stream separate from the topology draw.
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  model.h.resize(n);
  for (int i = 0; i < n; ++i) model.h(i) = unit(rng);
  return model;
}

LinearGaussianModel generate_linear(int n_nodes, const std::vector<int>& dims,
                                    const Topology& topology, std::uint64_t seed) {
  if (static_cast<int>(dims.size()) != n_nodes) {
    throw GenerationError("dims must list one dimension per node");
  }
  for (int d : dims) {
    if (d < 1) throw GenerationError("dimensions must be at least 1");
  }
  const auto edges = generate_edges(n_nodes, topology, seed);
  std::mt19937_64 rng(seed ^ 0xd1b54a32d192ed03ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> noise_scale(0.5, 2.0);
  auto draw = [&](int rows, int cols) {
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) m(r, c) = normal(rng);
    }
    return m;
  };
  auto draw_full_rank = [&](int rows, int cols) {
    Matrix m = draw(rows, cols);
    while (!full_column_rank(m)) m = draw(rows, cols);
    return m;
  };

  LinearGaussianModel model;
  std::vector<Vector> truth;
  for (int k = 0; k < n_nodes; ++k) {
    const int d = dims[static_cast<std::size_t>(k)];
    model.nodes.push_back({k + 1, d, Matrix::Identity(d, d)});
    truth.push_back(draw(d, 1).col(0));  // W = I
  }
  for (auto [a, b] : edges) {
    EdgeObservation e;
    e.i = a;
    e.j = b;
    const int di = dims[static_cast<std::size_t>(a - 1)];
    const int dj = dims[static_cast<std::size_t>(b - 1)];
    const int m = std::max(di, dj);
    e.A_ji = draw_full_rank(m, di);
    e.A_ij = draw_full_rank(m, dj);
    const double scale = noise_scale(rng);
    e.noise_cov = scale * Matrix::Identity(m, m);
    const Vector z = std::sqrt(scale) * draw(m, 1).col(0);
    e.y = e.A_ji * truth[static_cast<std::size_t>(a - 1)] +
          e.A_ij * truth[static_cast<std::size_t>(b - 1)] + z;
    model.edges.push_back(std::move(e));
  }
  model.ground_truth = std::move(truth);
  return model;
}

}  // namespace gabp
