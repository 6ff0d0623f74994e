#pragma once

#include "gabp/bp_engine.hpp"
#include "gabp/convergence.hpp"
#include "gabp/local_view.hpp"
#include "gabp/model.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gabp::netsim {

enum class PayloadKind { InfoMatrix, MeanVector, ScalarDeltaJ, ScalarDeltaH, VerdictBit };

std::string to_string(PayloadKind kind);

/// A message on the wire between two adjacent nodes. The body holds the
/// declared shape followed by the raw doubles.
struct WirePayload {
  PayloadKind kind = PayloadKind::InfoMatrix;
  NodeId from = 0;
  NodeId to = 0;
  int round = 0;
  std::vector<unsigned char> body;
};

WirePayload encode(PayloadKind kind, NodeId from, NodeId to, int round, const Matrix& value);
/// Throws std::runtime_error when the body does not decode to rows x cols.
Matrix decode(const WirePayload& payload, int rows, int cols);

enum class Phase { InfoFixedPoint, Certify, MeanPropagation };

struct TraceRecord {
  int round = 0;
  Phase phase = Phase::InfoFixedPoint;
  NodeId from = 0;
  NodeId to = 0;
  PayloadKind kind = PayloadKind::InfoMatrix;
  std::size_t bytes = 0;
};

/// Append-only log of everything that crossed the network.
class SimTrace {
 public:
  void append(const TraceRecord& record);
  const std::vector<TraceRecord>& records() const { return records_; }
  std::size_t count(PayloadKind kind) const;
  /// Payloads of `kind` sent during `round`.
  std::size_t count(PayloadKind kind, int round) const;
  /// Header line, then `iter,edge_i,edge_j,direction,kind,bytes` per record, edge_i < edge_j and
  /// direction `fwd` when the sender is edge_i.
  std::string to_csv() const;

  std::vector<NodeVerdict> verdicts;
  std::optional<bool> network_verdict;

 private:
  std::vector<TraceRecord> records_;
};

struct PhaseSelection {
  bool info_fixed_point = true;
  bool certify = true;
  bool mean_propagation = true;
};

struct SimulationResult {
  std::optional<FixedPointInfo> fixed_point;
  std::optional<ConvergenceReport> report;
  std::optional<BpRunResult> run;
  SimTrace trace;
};

/// Runs the selected phases as per-node processes exchanging payloads only
/// over model edges, with a barrier between rounds. Certification needs the
/// information phase. Throws FixedPointNotCertified like the centralized path.
SimulationResult simulate(const FactorGraphModel& model, const EngineConfig& config,
                          const PhaseSelection& phases = {}, const CertifyOptions& certify = {});

/// True iff every logged payload travelled along an edge of the model.
bool verify_locality(const SimTrace& trace, const FactorGraphModel& model);

/// Parent of each node in the breadth-first spanning tree rooted at node 1 (root maps to 0).
std::vector<NodeId> bfs_parents(const FactorGraphModel& model);

}  // namespace gabp::netsim
