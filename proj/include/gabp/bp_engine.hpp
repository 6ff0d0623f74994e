#pragma once

#include "gabp/local_view.hpp"
#include "gabp/model.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gabp {

enum class Direction { VariableToFactor, FactorToVariable };

/// Canonical message form: information matrix plus mean. On the GMRF path
/// `info` is the 1x1 Delta-J and `mean_part` the 1-vector Delta-h potential.
struct GaussianMessage {
  Direction direction = Direction::FactorToVariable;
  NodeId from = 0;
  NodeId to = 0;
  Matrix info;
  Vector mean_part;
};

struct Belief {
  NodeId node = 0;
  Vector mean;
  Matrix cov;
  /// False when the belief information is not positive (GMRF path only;
  /// the linear path throws instead).
  bool defined = true;
};

struct EngineConfig {
  double eta = 1e-9;
  int max_iter = 1000;
  /// Initial factor->variable information is init_info_scale * I unless
  /// overridden per message, keyed by (k, j) for f_{k,j} -> j.
  double init_info_scale = 0.0;
  std::map<DirectedPair, Matrix> init_info;
  /// Initial factor->variable means. Zero unless seeded or overridden.
  std::optional<std::uint64_t> init_mean_seed;
  std::map<DirectedPair, Vector> init_mean;
  bool record_messages = true;
  int threads = 1;
};

class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// A numerical failure during message passing, tagged with where it happened.
class BpNumericalError : public NumericalError {
 public:
  BpNumericalError(int iteration, NodeId from, NodeId to, const std::string& detail);
  int iteration;
  NodeId from;
  NodeId to;
};

/// All directed messages of one iteration, indexed by the model's global
/// message order (FactorGraphModel::directed_pairs).
struct MessageState {
  int iteration = 0;
  std::vector<GaussianMessage> v2f;  // v2f[idx(j,i)]: j -> f_{i,j}
  std::vector<GaussianMessage> f2v;  // f2v[idx(k,j)]: f_{k,j} -> j
  std::vector<Belief> beliefs;
};

struct MessageSnapshot {
  std::vector<GaussianMessage> v2f;
  std::vector<GaussianMessage> f2v;
};

struct BpRunResult {
  /// beliefs[l] for l = 0..iterations.
  std::vector<std::vector<Belief>> beliefs;
  /// messages[l] for l = 0..iterations when recording is on.
  std::vector<MessageSnapshot> messages;
  bool converged = false;
  int iterations = 0;
  /// max_delta[l-1] = max_i ||mu_i(l) - mu_i(l-1)||_2.
  std::vector<double> max_delta;

  const std::vector<Belief>& final_beliefs() const { return beliefs.back(); }
};

/// Local update rules. Each reads only one node's slice and the messages
/// that node has received, so the network simulator runs the same code.
/// `incoming_*` vectors are indexed like LocalSlice::edges.
namespace kernels {

Matrix v2f_info(const LocalSlice& slice, std::size_t dest_slot,
                const std::vector<Matrix>& incoming_info);

GaussianMessage v2f_message(const LocalSlice& slice, std::size_t dest_slot,
                            const std::vector<Matrix>& incoming_info,
                            const std::vector<Vector>& incoming_mean);

/// J_self + sum of incoming Delta-J except the one from edges[dest_slot] (GMRF).
double gmrf_denominator(const LocalSlice& slice, std::size_t dest_slot,
                        const std::vector<Matrix>& incoming_info);

/// Covariance of a variable->factor message (inverse of its information).
Matrix message_covariance(const Matrix& info);

/// A_selfᵀ (R + A_other C A_otherᵀ)^{-1} for the factor on `edge`, given the
/// neighbor's variable->factor covariance C.
Matrix factor_gain(const IncidentEdge& edge, const Matrix& sender_cov);

/// Information of f_{neighbor,self} -> self.
Matrix f2v_info(const IncidentEdge& edge, const Matrix& sender_info);

/// f_{neighbor,self} -> self computed at self from the neighbor's message.
GaussianMessage f2v_message(const LocalSlice& slice, const IncidentEdge& edge,
                            const GaussianMessage& sender);

Belief belief(const LocalSlice& slice, const std::vector<Matrix>& incoming_info,
              const std::vector<Vector>& incoming_mean);

}  // namespace kernels

MessageState init_state(const FactorGraphModel& model, const EngineConfig& config);

GaussianMessage update_variable_to_factor(const MessageState& state, const FactorGraphModel& model,
                                          NodeId from, NodeId to);

/// f_{source,destination} -> destination, from source's variable->factor message.
GaussianMessage update_factor_to_variable(const MessageState& state, const FactorGraphModel& model,
                                          NodeId source, NodeId destination);

std::vector<Belief> compute_beliefs(const MessageState& state, const FactorGraphModel& model);

/// Synchronous flooding schedule until the max belief-mean change drops below
/// eta or max_iter iterations have run.
BpRunResult run(const FactorGraphModel& model, const EngineConfig& config);

/// Validates init overrides and expands defaults into one (info, mean) per
/// factor->variable message, in global message order.
std::vector<GaussianMessage> initial_messages(const FactorGraphModel& model,
                                              const EngineConfig& config);

/// Max over nodes of the 2-norm mean change; +inf if any belief is undefined.
double max_mean_delta(const std::vector<Belief>& now, const std::vector<Belief>& before);

}  // namespace gabp
