#include "gabp/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <queue>
#include <sstream>
#include <stdexcept>

namespace gabp::netsim {

std::string to_string(PayloadKind kind) {
  switch (kind) {
    case PayloadKind::InfoMatrix: return "info_matrix";
    case PayloadKind::MeanVector: return "mean_vector";
    case PayloadKind::ScalarDeltaJ: return "delta_j";
    case PayloadKind::ScalarDeltaH: return "delta_h";
    case PayloadKind::VerdictBit: return "verdict_bit";
  }
  return "unknown";
}

WirePayload encode(PayloadKind kind, NodeId from, NodeId to, int round, const Matrix& value) {
  WirePayload p{kind, from, to, round, {}};
  const std::int32_t shape[2] = {static_cast<std::int32_t>(value.rows()), static_cast<std::int32_t>(value.cols())};
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = value;
  p.body.resize(sizeof shape + sizeof(double) * static_cast<std::size_t>(rm.size()));
  std::memcpy(p.body.data(), shape, sizeof shape);
  if (rm.size() > 0) {
    std::memcpy(p.body.data() + sizeof shape, rm.data(), sizeof(double) * static_cast<std::size_t>(rm.size()));
  }
  return p;
}

Matrix decode(const WirePayload& payload, int rows, int cols) {
  std::int32_t shape[2] = {0, 0};
  if (payload.body.size() < sizeof shape) throw std::runtime_error("payload body truncated");
  std::memcpy(shape, payload.body.data(), sizeof shape);
  const std::size_t expected = sizeof shape + sizeof(double) * static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  if (shape[0] != rows || shape[1] != cols || payload.body.size() != expected) {
    throw std::runtime_error("payload " + std::to_string(payload.from) + "->" + std::to_string(payload.to) +
                             " does not decode to " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  if (rm.size() > 0) std::memcpy(rm.data(), payload.body.data() + sizeof shape, sizeof(double) * static_cast<std::size_t>(rm.size()));
  return rm;
}

void SimTrace::append(const TraceRecord& record) { records_.push_back(record); }

std::size_t SimTrace::count(PayloadKind kind) const {
  return static_cast<std::size_t>(std::count_if(records_.begin(), records_.end(),
                                                [&](const TraceRecord& r) { return r.kind == kind; }));
}

std::size_t SimTrace::count(PayloadKind kind, int round) const {
  return static_cast<std::size_t>(std::count_if(records_.begin(), records_.end(), [&](const TraceRecord& r) {
    return r.kind == kind && r.round == round;
  }));
}

std::string SimTrace::to_csv() const {
  std::ostringstream out;
  out << "iter,edge_i,edge_j,direction,kind,bytes\n";
  for (const auto& r : records_) {
    const NodeId lo = std::min(r.from, r.to);
    const NodeId hi = std::max(r.from, r.to);
    out << r.round << ',' << lo << ',' << hi << ',' << (r.from == lo ? "fwd" : "bwd") << ','
        << to_string(r.kind) << ',' << r.bytes << '\n';
  }
  return out.str();
}

bool verify_locality(const SimTrace& trace, const FactorGraphModel& model) {
  for (const auto& r : trace.records()) {
    if (r.from == r.to || r.from < 1 || r.to < 1 || r.from > model.num_nodes() || r.to > model.num_nodes()) {
      return false;
    }
    if (!model.has_edge(r.from, r.to)) return false;
  }
  return true;
}

std::vector<NodeId> bfs_parents(const FactorGraphModel& model) {
  std::vector<NodeId> parent(static_cast<std::size_t>(model.num_nodes()) + 1, -1);
  parent[1] = 0;
  std::queue<NodeId> frontier;
  frontier.push(1);
  while (!frontier.empty()) {
    const NodeId u = frontier.front();
    frontier.pop();
    for (NodeId v : model.neighbors(u)) {
      if (parent[static_cast<std::size_t>(v)] == -1) {
        parent[static_cast<std::size_t>(v)] = u;
        frontier.push(v);
      }
    }
  }
  return parent;
}

namespace {

/// Delivers payloads only along model edges; everything sent is traced.
class Network {
 public:
  Network(const FactorGraphModel& model, SimTrace& trace)
      : model_(model), trace_(trace), inbox_(static_cast<std::size_t>(model.num_nodes()) + 1) {}

  void send(Phase phase, WirePayload payload) {
    if (!model_.has_edge(payload.from, payload.to)) {
      throw LocalityError(payload.from, payload.from, payload.to);
    }
    trace_.append({payload.round, phase, payload.from, payload.to, payload.kind, payload.body.size()});
    pending_.push_back(std::move(payload));
  }

  /// Round barrier: everything sent so far becomes readable.
  void barrier() {
    for (auto& p : pending_) inbox_[static_cast<std::size_t>(p.to)].push_back(std::move(p));
    pending_.clear();
  }

  std::vector<WirePayload> take(NodeId node) { return std::exchange(inbox_[static_cast<std::size_t>(node)], {}); }

 private:
  const FactorGraphModel& model_;
  SimTrace& trace_;
  std::vector<WirePayload> pending_;
  std::vector<std::vector<WirePayload>> inbox_;
};

/// One node's state. It sees its own slice and its inbox, nothing else.
struct NodeProcess {
  LocalSlice slice;
  // Information phase.
  std::vector<Matrix> in_f2v_info;      // f_{k,j} -> j, per slot
  std::vector<Matrix> in_v2f_info;      // received k -> f_{k,j}, per slot
  std::vector<Matrix> out_v2f_info;     // j -> f_{i,j}, per slot
  LocalFixedPoint fixed_point;
  NodeVerdict verdict;
  bool subtree_verdict = true;
  // Mean phase.
  std::vector<GaussianMessage> in_f2v;  // per slot
  std::vector<GaussianMessage> out_v2f; // per slot
  Belief belief;

  NodeId id() const { return slice.node; }
  std::size_t degree() const { return slice.edges.size(); }

  std::size_t slot(NodeId neighbor) const {
    const int s = slice.slot_of(neighbor);
    if (s < 0) throw LocalityError(slice.node, slice.node, neighbor);
    return static_cast<std::size_t>(s);
  }
};

PayloadKind info_kind(const FactorGraphModel& model) {
  return model.is_gmrf() ? PayloadKind::ScalarDeltaJ : PayloadKind::InfoMatrix;
}

PayloadKind mean_kind(const FactorGraphModel& model) {
  return model.is_gmrf() ? PayloadKind::ScalarDeltaH : PayloadKind::MeanVector;
}

/// Control plane: the simulator observes per-node scalars at the barrier to
/// decide termination. No model data is exchanged this way.
double reduce_max(const std::vector<double>& values) {
  double worst = 0.0;
  for (double v : values) worst = std::max(worst, v);
  return worst;
}

FixedPointInfo run_information_phase(const FactorGraphModel& model, std::vector<NodeProcess>& nodes,
                                     Network& net, int& round, const CertifyOptions& options) {
  if (!(options.tolerance > 0.0)) throw ConfigError("fixed-point tolerance must be positive");
  const PayloadKind kind = info_kind(model);
  for (auto& node : nodes) {
    node.in_f2v_info.clear();
    node.in_v2f_info.clear();
    node.out_v2f_info.clear();
    for (const auto& e : node.slice.edges) {
      node.in_f2v_info.push_back(Matrix::Zero(node.slice.dim, node.slice.dim));
      node.in_v2f_info.push_back(Matrix::Zero(e.neighbor_dim, e.neighbor_dim));
      node.out_v2f_info.push_back(Matrix::Zero(node.slice.dim, node.slice.dim));
    }
  }
  double residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  for (int iter = 1; iter <= options.max_iter; ++iter) {
    ++round;
    std::vector<double> local_residual(nodes.size(), 0.0);
    bool finite = true;
    std::vector<std::vector<Matrix>> next_out(nodes.size());
    for (std::size_t n = 0; n < nodes.size(); ++n) {
      auto& node = nodes[n];
      for (std::size_t s = 0; s < node.degree(); ++s) {
        Matrix info;
        try {
          info = kernels::v2f_info(node.slice, s, node.in_f2v_info);
        } catch (const NumericalError& e) {
          throw FixedPointNotCertified(e.what(), iter, residual);
        }
        net.send(Phase::InfoFixedPoint, encode(kind, node.id(), node.slice.edges[s].neighbor, round, info));
        next_out[n].push_back(std::move(info));
      }
    }
    net.barrier();
    for (std::size_t n = 0; n < nodes.size(); ++n) {
      auto& node = nodes[n];
      for (const auto& p : net.take(node.id())) {
        const std::size_t s = node.slot(p.from);
        const int d = node.slice.edges[s].neighbor_dim;
        node.in_v2f_info[s] = decode(p, d, d);
      }
      double r = 0.0;
      for (std::size_t s = 0; s < node.degree(); ++s) {
        Matrix f2v;
        try {
          f2v = model.is_gmrf() ? node.in_v2f_info[s] : kernels::f2v_info(node.slice.edges[s], node.in_v2f_info[s]);
        } catch (const NumericalError& e) {
          throw FixedPointNotCertified(e.what(), iter, residual);
        }
        if (!next_out[n][s].allFinite() || !f2v.allFinite()) finite = false;
        r = std::max(r, inf_norm(next_out[n][s] - node.out_v2f_info[s]));
        r = std::max(r, inf_norm(f2v - node.in_f2v_info[s]));
        node.in_f2v_info[s] = std::move(f2v);
        node.out_v2f_info[s] = std::move(next_out[n][s]);
      }
      local_residual[n] = r;
    }
    if (!finite) throw FixedPointNotCertified("information became non-finite", iter, residual);
    residual = reduce_max(local_residual);
    iterations = iter;
    if (residual < options.tolerance) break;
  }
  if (!(residual < options.tolerance)) throw FixedPointNotCertified("max_iter reached", iterations, residual);

  FixedPointInfo fp;
  fp.kind = model.kind();
  fp.residual = residual;
  fp.iterations = iterations;
  const auto count = model.directed_pairs().size();
  fp.v2f_info.assign(count, Matrix());
  fp.f2v_info.assign(count, Matrix());
  if (!model.is_gmrf()) fp.v2f_cov.assign(count, Matrix());
  for (auto& node : nodes) {
    LocalFixedPoint local;
    local.node = node.id();
    for (std::size_t s = 0; s < node.degree(); ++s) {
      const NodeId k = node.slice.edges[s].neighbor;
      local.outgoing_info.push_back(node.out_v2f_info[s]);
      local.incoming_info.push_back(node.in_v2f_info[s]);
      const auto out = static_cast<std::size_t>(model.message_index({node.id(), k}));
      const auto in = static_cast<std::size_t>(model.message_index({k, node.id()}));
      fp.v2f_info[out] = node.out_v2f_info[s];
      fp.f2v_info[in] = node.in_f2v_info[s];
      if (!model.is_gmrf()) {
        try {
          local.outgoing_cov.push_back(kernels::message_covariance(node.out_v2f_info[s]));
        } catch (const NumericalError& e) {
          throw FixedPointNotCertified(e.what(), iterations, residual);
        }
        fp.v2f_cov[out] = local.outgoing_cov.back();
      }
    }
    node.fixed_point = std::move(local);
  }
  return fp;
}

ConvergenceReport run_certify_phase(const FactorGraphModel& model, std::vector<NodeProcess>& nodes,
                                    Network& net, int& round, const FixedPointInfo& fp, SimTrace& trace) {
  ConvergenceReport report;
  report.fixed_point_iterations = fp.iterations;
  report.fixed_point_residual = fp.residual;
  for (auto& node : nodes) {
    const LocalView view(node.slice);
    const LocalVerdict v = local_condition(build_local_q(view, node.fixed_point));
    node.verdict = {node.id(), v.rho_local, v.verdict};
    node.subtree_verdict = v.verdict;
    report.nodes.push_back(node.verdict);
    report.local_verdict = report.local_verdict && v.verdict;
  }
  // Convergecast of the conjunction up the BFS tree, deepest level first.
  const auto parent = bfs_parents(model);
  std::vector<int> depth(parent.size(), 0);
  int max_depth = 0;
  for (NodeId j = 2; j <= model.num_nodes(); ++j) {
    int d = 0;
    for (NodeId u = j; parent[static_cast<std::size_t>(u)] > 0; u = parent[static_cast<std::size_t>(u)]) ++d;
    depth[static_cast<std::size_t>(j)] = d;
    max_depth = std::max(max_depth, d);
  }
  for (int level = max_depth; level >= 1; --level) {
    ++round;
    for (auto& node : nodes) {
      if (depth[static_cast<std::size_t>(node.id())] != level) continue;
      const Matrix bit = Matrix::Constant(1, 1, node.subtree_verdict ? 1.0 : 0.0);
      net.send(Phase::Certify, encode(PayloadKind::VerdictBit, node.id(), parent[static_cast<std::size_t>(node.id())], round, bit));
    }
    net.barrier();
    for (auto& node : nodes) {
      for (const auto& p : net.take(node.id())) {
        node.slot(p.from);
        node.subtree_verdict = node.subtree_verdict && decode(p, 1, 1)(0, 0) != 0.0;
      }
    }
  }
  trace.verdicts = report.nodes;
  trace.network_verdict = nodes.front().subtree_verdict;
  return report;
}

BpRunResult run_mean_phase(const FactorGraphModel& model, std::vector<NodeProcess>& nodes, Network& net,
                           int& round, const EngineConfig& config) {
  const auto init = initial_messages(model, config);
  const PayloadKind ik = info_kind(model);
  const PayloadKind mk = mean_kind(model);
  const auto count = model.directed_pairs().size();

  auto gather = [](const NodeProcess& node) {
    std::pair<std::vector<Matrix>, std::vector<Vector>> in;
    for (const auto& m : node.in_f2v) {
      in.first.push_back(m.info);
      in.second.push_back(m.mean_part);
    }
    return in;
  };

  BpRunResult result;
  std::vector<Belief> beliefs;
  for (auto& node : nodes) {
    node.in_f2v.clear();
    node.out_v2f.clear();
    for (const auto& e : node.slice.edges) {
      node.in_f2v.push_back(init[static_cast<std::size_t>(model.message_index({e.neighbor, node.id()}))]);
      node.out_v2f.push_back({Direction::VariableToFactor, node.id(), e.neighbor,
                              Matrix::Zero(node.slice.dim, node.slice.dim), Vector::Zero(node.slice.dim)});
    }
    const auto [info, mean] = gather(node);
    node.belief = kernels::belief(node.slice, info, mean);
    beliefs.push_back(node.belief);
  }
  auto snapshot = [&]() {
    MessageSnapshot snap;
    snap.v2f.resize(count);
    snap.f2v.resize(count);
    for (const auto& node : nodes) {
      for (std::size_t s = 0; s < node.degree(); ++s) {
        const NodeId k = node.slice.edges[s].neighbor;
        snap.v2f[static_cast<std::size_t>(model.message_index({node.id(), k}))] = node.out_v2f[s];
        snap.f2v[static_cast<std::size_t>(model.message_index({k, node.id()}))] = node.in_f2v[s];
      }
    }
    return snap;
  };
  result.beliefs.push_back(beliefs);
  if (config.record_messages) result.messages.push_back(snapshot());

  for (int iter = 1; iter <= config.max_iter; ++iter) {
    ++round;
    for (auto& node : nodes) {
      const auto [info, mean] = gather(node);
      for (std::size_t s = 0; s < node.degree(); ++s) {
        const NodeId i = node.slice.edges[s].neighbor;
        try {
          node.out_v2f[s] = kernels::v2f_message(node.slice, s, info, mean);
        } catch (const NumericalError& e) {
          throw BpNumericalError(iter, node.id(), i, e.what());
        }
        net.send(Phase::MeanPropagation, encode(ik, node.id(), i, round, node.out_v2f[s].info));
        net.send(Phase::MeanPropagation, encode(mk, node.id(), i, round, node.out_v2f[s].mean_part));
      }
    }
    net.barrier();
    std::vector<double> local_delta(nodes.size(), 0.0);
    for (std::size_t n = 0; n < nodes.size(); ++n) {
      auto& node = nodes[n];
      std::vector<GaussianMessage> received(node.degree());
      for (const auto& p : net.take(node.id())) {
        const std::size_t s = node.slot(p.from);
        const int d = node.slice.edges[s].neighbor_dim;
        auto& msg = received[s];
        msg.direction = Direction::VariableToFactor;
        msg.from = p.from;
        msg.to = node.id();
        if (p.kind == ik) {
          msg.info = decode(p, d, d);
        } else {
          msg.mean_part = decode(p, d, 1).col(0);
        }
      }
      for (std::size_t s = 0; s < node.degree(); ++s) {
        const NodeId k = node.slice.edges[s].neighbor;
        try {
          node.in_f2v[s] = kernels::f2v_message(node.slice, node.slice.edges[s], received[s]);
        } catch (const NumericalError& e) {
          throw BpNumericalError(iter, k, node.id(), e.what());
        }
      }
      const auto [info, mean] = gather(node);
      Belief next;
      try {
        next = kernels::belief(node.slice, info, mean);
      } catch (const NumericalError& e) {
        throw BpNumericalError(iter, 0, 0, e.what());
      }
      local_delta[n] = max_mean_delta({next}, {node.belief});
      node.belief = std::move(next);
      beliefs[n] = node.belief;
    }
    const double delta = reduce_max(local_delta);
    result.iterations = iter;
    result.max_delta.push_back(delta);
    result.beliefs.push_back(beliefs);
    if (config.record_messages) result.messages.push_back(snapshot());
    if (delta < config.eta) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace

SimulationResult simulate(const FactorGraphModel& model, const EngineConfig& config, const PhaseSelection& phases,
                          const CertifyOptions& certify) {
  if (phases.certify && !phases.info_fixed_point) {
    throw ConfigError("certification needs the information phase");
  }
  SimulationResult result;
  Network net(model, result.trace);
  std::vector<NodeProcess> nodes;
  for (NodeId j = 1; j <= model.num_nodes(); ++j) {
    NodeProcess node;
    node.slice = extract_slice(model, j);
    nodes.push_back(std::move(node));
  }
  int round = 0;
  if (phases.info_fixed_point) {
    result.fixed_point = run_information_phase(model, nodes, net, round, certify);
  }
  if (phases.certify) {
    result.report = run_certify_phase(model, nodes, net, round, *result.fixed_point, result.trace);
  }
  if (phases.mean_propagation) {
    result.run = run_mean_phase(model, nodes, net, round, config);
  }
  return result;
}

}  // namespace gabp::netsim
