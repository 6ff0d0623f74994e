#include "gabp/bp_engine.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <random>
#include <thread>

namespace gabp {

BpNumericalError::BpNumericalError(int iteration_, NodeId from_, NodeId to_, const std::string& detail)
    : NumericalError("iteration " + std::to_string(iteration_) + ", message " + std::to_string(from_) +
                     "->" + std::to_string(to_) + ": " + detail),
      iteration(iteration_),
      from(from_),
      to(to_) {}

namespace kernels {

namespace {

Matrix sym(const Matrix& m) { return 0.5 * (m + m.transpose()); }

struct FactorTerms {
  Matrix gain;
  Matrix info;
};

FactorTerms factor_terms(const IncidentEdge& edge, const Matrix& sender_info) {
  FactorTerms t;
  t.gain = factor_gain(edge, message_covariance(sender_info));
  t.info = sym(t.gain * edge.A_self);
  return t;
}

}  // namespace

double gmrf_denominator(const LocalSlice& slice, std::size_t dest_slot,
                        const std::vector<Matrix>& incoming_info) {
  double denom = slice.J_self;
  for (std::size_t k = 0; k < incoming_info.size(); ++k) {
    if (k != dest_slot) denom += incoming_info[k](0, 0);
  }
  return denom;
}

Matrix v2f_info(const LocalSlice& slice, std::size_t dest_slot,
                const std::vector<Matrix>& incoming_info) {
  if (slice.kind == ModelKind::Gmrf) {
    const double J = slice.edges[dest_slot].coupling;
    return Matrix::Constant(1, 1, -(J * J) / gmrf_denominator(slice, dest_slot, incoming_info));
  }
  Matrix info = slice.prior_info;
  for (std::size_t k = 0; k < incoming_info.size(); ++k) {
    if (k != dest_slot) info += incoming_info[k];
  }
  return info;
}

GaussianMessage v2f_message(const LocalSlice& slice, std::size_t dest_slot,
                            const std::vector<Matrix>& incoming_info,
                            const std::vector<Vector>& incoming_mean) {
  GaussianMessage msg;
  msg.direction = Direction::VariableToFactor;
  msg.from = slice.node;
  msg.to = slice.edges[dest_slot].neighbor;
  msg.info = v2f_info(slice, dest_slot, incoming_info);
  if (slice.kind == ModelKind::Gmrf) {
    double potential = slice.h_self;
    for (std::size_t k = 0; k < incoming_mean.size(); ++k) {
      if (k != dest_slot) potential += incoming_mean[k](0);
    }
    const double J = slice.edges[dest_slot].coupling;
    msg.mean_part = Vector::Constant(1, -J * potential / gmrf_denominator(slice, dest_slot, incoming_info));
    return msg;
  }
  // info * mean is accumulated directly so zero-information inputs never need inverting.
  Vector weighted = Vector::Zero(slice.dim);
  for (std::size_t k = 0; k < incoming_info.size(); ++k) {
    if (k != dest_slot) weighted += incoming_info[k] * incoming_mean[k];
  }
  msg.mean_part = solve_spd(msg.info, weighted);
  return msg;
}

Matrix message_covariance(const Matrix& info) { return invert_spd(info); }

Matrix factor_gain(const IncidentEdge& edge, const Matrix& sender_cov) {
  const Matrix bracket = sym(edge.noise_cov + edge.A_other * sender_cov * edge.A_other.transpose());
  return edge.A_self.transpose() * invert_spd(bracket);
}

Matrix f2v_info(const IncidentEdge& edge, const Matrix& sender_info) {
  return factor_terms(edge, sender_info).info;
}

GaussianMessage f2v_message(const LocalSlice& slice, const IncidentEdge& edge,
                            const GaussianMessage& sender) {
  GaussianMessage msg;
  msg.direction = Direction::FactorToVariable;
  msg.from = edge.neighbor;
  msg.to = slice.node;
  if (slice.kind == ModelKind::Gmrf) {
    // The pairwise factor is absorbed into the variable->factor update.
    msg.info = sender.info;
    msg.mean_part = sender.mean_part;
    return msg;
  }
  const FactorTerms t = factor_terms(edge, sender.info);
  msg.info = t.info;
  const Vector weighted = t.gain * (edge.y - edge.A_other * sender.mean_part);
  msg.mean_part = solve_spd(t.info, weighted);
  return msg;
}

Belief belief(const LocalSlice& slice, const std::vector<Matrix>& incoming_info,
              const std::vector<Vector>& incoming_mean) {
  Belief b;
  b.node = slice.node;
  if (slice.kind == ModelKind::Gmrf) {
    double precision = slice.J_self;
    double potential = slice.h_self;
    for (std::size_t k = 0; k < incoming_info.size(); ++k) {
      precision += incoming_info[k](0, 0);
      potential += incoming_mean[k](0);
    }
    b.mean = Vector::Constant(1, potential / precision);
    b.cov = Matrix::Constant(1, 1, 1.0 / precision);
    b.defined = std::isfinite(precision) && precision > 0.0 && b.mean.allFinite();
    return b;
  }
  Matrix precision = slice.prior_info;
  Vector weighted = Vector::Zero(slice.dim);
  for (std::size_t k = 0; k < incoming_info.size(); ++k) {
    precision += incoming_info[k];
    weighted += incoming_info[k] * incoming_mean[k];
  }
  try {
    b.cov = invert_spd(precision);
    b.mean = solve_spd(precision, weighted);
  } catch (const NumericalError&) {
    throw NumericalError("belief undefined at node " + std::to_string(slice.node));
  }
  return b;
}

}  // namespace kernels

namespace {

/// Runs body(k) for k in [0, count). Results must go to disjoint slots; the
/// first failure in index order is rethrown.
template <typename Body>
void parallel_for(int count, int threads, Body&& body) {
  if (threads <= 1 || count <= 1) {
    for (int k = 0; k < count; ++k) body(k);
    return;
  }
  const int workers = std::min(threads, count);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int k = w; k < count; k += workers) {
        try {
          body(k);
        } catch (...) {
          errors[static_cast<std::size_t>(k)] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct Incoming {
  std::vector<Matrix> info;
  std::vector<Vector> mean;
};

Incoming gather(const FactorGraphModel& model, const std::vector<GaussianMessage>& f2v, NodeId j) {
  Incoming in;
  for (NodeId k : model.neighbors(j)) {
    const auto& m = f2v[static_cast<std::size_t>(model.message_index({k, j}))];
    in.info.push_back(m.info);
    in.mean.push_back(m.mean_part);
  }
  return in;
}

std::vector<Belief> beliefs_from(const FactorGraphModel& model, const std::vector<LocalSlice>& slices,
                                 const std::vector<GaussianMessage>& f2v, int threads) {
  std::vector<Belief> out(static_cast<std::size_t>(model.num_nodes()));
  parallel_for(model.num_nodes(), threads, [&](int k) {
    const NodeId j = k + 1;
    const Incoming in = gather(model, f2v, j);
    out[static_cast<std::size_t>(k)] = kernels::belief(slices[static_cast<std::size_t>(k)], in.info, in.mean);
  });
  return out;
}

void check_config(const EngineConfig& config) {
  if (!(config.eta > 0.0)) throw ConfigError("eta must be positive");
  if (config.max_iter < 0) throw ConfigError("max_iter must be non-negative");
  if (config.threads < 1) throw ConfigError("threads must be at least 1");
  if (!(config.init_info_scale >= 0.0)) throw ConfigError("init_info_scale must be non-negative");
}

}  // namespace

std::vector<GaussianMessage> initial_messages(const FactorGraphModel& model, const EngineConfig& config) {
  check_config(config);
  for (const auto& [pair, _] : config.init_info) {
    if (!model.has_edge(pair.from, pair.to)) {
      throw ConfigError("init_info names a non-edge " + std::to_string(pair.from) + "->" +
                        std::to_string(pair.to));
    }
  }
  for (const auto& [pair, _] : config.init_mean) {
    if (!model.has_edge(pair.from, pair.to)) {
      throw ConfigError("init_mean names a non-edge " + std::to_string(pair.from) + "->" +
                        std::to_string(pair.to));
    }
  }
  std::optional<std::mt19937_64> rng;
  if (config.init_mean_seed) rng.emplace(*config.init_mean_seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<GaussianMessage> out;
  for (const auto& pair : model.directed_pairs()) {
    const int d = model.dim(pair.to);
    GaussianMessage msg;
    msg.direction = Direction::FactorToVariable;
    msg.from = pair.from;
    msg.to = pair.to;
    msg.info = config.init_info_scale * Matrix::Identity(d, d);
    if (auto it = config.init_info.find(pair); it != config.init_info.end()) {
      if (it->second.rows() != d || it->second.cols() != d) {
        throw ConfigError("init_info for " + std::to_string(pair.from) + "->" + std::to_string(pair.to) +
                          " has the wrong shape");
      }
      msg.info = it->second;
    }
    bool psd = false;
    try {
      psd = is_psd(msg.info);
    } catch (const NumericalError&) {
      psd = false;
    }
    if (!psd) {
      throw ConfigError("init_info for " + std::to_string(pair.from) + "->" + std::to_string(pair.to) +
                        " is not symmetric positive semidefinite");
    }
    msg.mean_part = Vector::Zero(d);
    if (rng) {
      for (int r = 0; r < d; ++r) msg.mean_part(r) = normal(*rng);
    }
    if (auto it = config.init_mean.find(pair); it != config.init_mean.end()) {
      if (it->second.size() != d) {
        throw ConfigError("init_mean for " + std::to_string(pair.from) + "->" + std::to_string(pair.to) +
                          " has the wrong size");
      }
      msg.mean_part = it->second;
    }
    if (model.is_gmrf()) msg.info = Matrix::Zero(1, 1);  // Delta-J(0) = 0 always
    out.push_back(std::move(msg));
  }
  return out;
}

MessageState init_state(const FactorGraphModel& model, const EngineConfig& config) {
  MessageState state;
  state.iteration = 0;
  state.f2v = initial_messages(model, config);
  for (const auto& pair : model.directed_pairs()) {
    const int d = model.dim(pair.from);
    state.v2f.push_back({Direction::VariableToFactor, pair.from, pair.to, Matrix::Zero(d, d), Vector::Zero(d)});
  }
  state.beliefs = beliefs_from(model, extract_all_slices(model), state.f2v, 1);
  return state;
}

GaussianMessage update_variable_to_factor(const MessageState& state, const FactorGraphModel& model,
                                          NodeId from, NodeId to) {
  const LocalSlice slice = extract_slice(model, from);
  const int slot = slice.slot_of(to);
  if (slot < 0) throw ModelError("no edge (" + std::to_string(from) + "," + std::to_string(to) + ")");
  const Incoming in = gather(model, state.f2v, from);
  return kernels::v2f_message(slice, static_cast<std::size_t>(slot), in.info, in.mean);
}

GaussianMessage update_factor_to_variable(const MessageState& state, const FactorGraphModel& model,
                                          NodeId source, NodeId destination) {
  const LocalSlice slice = extract_slice(model, destination);
  const int slot = slice.slot_of(source);
  if (slot < 0) throw ModelError("no edge (" + std::to_string(source) + "," + std::to_string(destination) + ")");
  const auto& sender = state.v2f[static_cast<std::size_t>(model.message_index({source, destination}))];
  try {
    return kernels::f2v_message(slice, slice.edges[static_cast<std::size_t>(slot)], sender);
  } catch (const NumericalError& e) {
    throw BpNumericalError(state.iteration, source, destination, e.what());
  }
}

std::vector<Belief> compute_beliefs(const MessageState& state, const FactorGraphModel& model) {
  return beliefs_from(model, extract_all_slices(model), state.f2v, 1);
}

double max_mean_delta(const std::vector<Belief>& now, const std::vector<Belief>& before) {
  double worst = 0.0;
  for (std::size_t k = 0; k < now.size(); ++k) {
    if (!now[k].defined || !before[k].defined) return std::numeric_limits<double>::infinity();
    const double d = (now[k].mean - before[k].mean).norm();
    if (!std::isfinite(d)) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, d);
  }
  return worst;
}

BpRunResult run(const FactorGraphModel& model, const EngineConfig& config) {
  const auto slices = extract_all_slices(model);
  MessageState state = init_state(model, config);
  const auto& pairs = model.directed_pairs();
  const int n = model.num_nodes();

  BpRunResult result;
  result.beliefs.push_back(state.beliefs);
  if (config.record_messages) result.messages.push_back({state.v2f, state.f2v});

  for (int iter = 1; iter <= config.max_iter; ++iter) {
    std::vector<GaussianMessage> v2f(pairs.size());
    parallel_for(n, config.threads, [&](int k) {
      const NodeId j = k + 1;
      const auto& slice = slices[static_cast<std::size_t>(k)];
      const Incoming in = gather(model, state.f2v, j);
      for (std::size_t slot = 0; slot < slice.edges.size(); ++slot) {
        const NodeId i = slice.edges[slot].neighbor;
        try {
          v2f[static_cast<std::size_t>(model.message_index({j, i}))] =
              kernels::v2f_message(slice, slot, in.info, in.mean);
        } catch (const NumericalError& e) {
          throw BpNumericalError(iter, j, i, e.what());
        }
      }
    });
    std::vector<GaussianMessage> f2v(pairs.size());
    parallel_for(n, config.threads, [&](int k) {
      const NodeId j = k + 1;
      const auto& slice = slices[static_cast<std::size_t>(k)];
      for (const auto& edge : slice.edges) {
        const auto idx = static_cast<std::size_t>(model.message_index({edge.neighbor, j}));
        try {
          f2v[idx] = kernels::f2v_message(slice, edge, v2f[idx]);
        } catch (const NumericalError& e) {
          throw BpNumericalError(iter, edge.neighbor, j, e.what());
        }
      }
    });
    std::vector<Belief> beliefs;
    try {
      beliefs = beliefs_from(model, slices, f2v, config.threads);
    } catch (const NumericalError& e) {
      throw BpNumericalError(iter, 0, 0, e.what());
    }
    const double delta = max_mean_delta(beliefs, state.beliefs);

    state.iteration = iter;
    state.v2f = std::move(v2f);
    state.f2v = std::move(f2v);
    state.beliefs = std::move(beliefs);
    result.iterations = iter;
    result.max_delta.push_back(delta);
    result.beliefs.push_back(state.beliefs);
    if (config.record_messages) result.messages.push_back({state.v2f, state.f2v});
    if (delta < config.eta) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace gabp
