#include "gabp/convergence.hpp"

#include <cmath>
#include <limits>

namespace gabp {

FixedPointNotCertified::FixedPointNotCertified(const std::string& why, int iterations_, double residual_)
    : std::runtime_error("fixed point not certified: " + why + " (iterations " +
                         std::to_string(iterations_) + ", residual " + std::to_string(residual_) + ")"),
      iterations(iterations_),
      residual(residual_) {}

void information_round(const FactorGraphModel& model, const std::vector<LocalSlice>& slices,
                       const std::vector<Matrix>& f2v_info, std::vector<Matrix>& v2f_out,
                       std::vector<Matrix>& f2v_out) {
  const auto count = model.directed_pairs().size();
  v2f_out.assign(count, Matrix());
  f2v_out.assign(count, Matrix());
  for (const auto& slice : slices) {
    std::vector<Matrix> incoming;
    for (const auto& e : slice.edges) {
      incoming.push_back(f2v_info[static_cast<std::size_t>(model.message_index({e.neighbor, slice.node}))]);
    }
    for (std::size_t slot = 0; slot < slice.edges.size(); ++slot) {
      const auto idx = model.message_index({slice.node, slice.edges[slot].neighbor});
      v2f_out[static_cast<std::size_t>(idx)] = kernels::v2f_info(slice, slot, incoming);
    }
  }
  for (const auto& slice : slices) {
    for (const auto& e : slice.edges) {
      const auto idx = static_cast<std::size_t>(model.message_index({e.neighbor, slice.node}));
      f2v_out[idx] = slice.kind == ModelKind::Gmrf ? v2f_out[idx] : kernels::f2v_info(e, v2f_out[idx]);
    }
  }
}

FixedPointInfo fixed_point_information(const FactorGraphModel& model, double tolerance, int max_iter) {
  if (!(tolerance > 0.0)) throw ConfigError("fixed-point tolerance must be positive");
  const auto slices = extract_all_slices(model);
  const auto& pairs = model.directed_pairs();

  FixedPointInfo fp;
  fp.kind = model.kind();
  fp.f2v_info.reserve(pairs.size());
  fp.v2f_info.reserve(pairs.size());
  for (const auto& p : pairs) {
    fp.f2v_info.push_back(Matrix::Zero(model.dim(p.to), model.dim(p.to)));
    fp.v2f_info.push_back(Matrix::Zero(model.dim(p.from), model.dim(p.from)));
  }
  fp.residual = std::numeric_limits<double>::infinity();

  std::vector<Matrix> v2f_next;
  std::vector<Matrix> f2v_next;
  for (int iter = 1; iter <= max_iter; ++iter) {
    try {
      information_round(model, slices, fp.f2v_info, v2f_next, f2v_next);
    } catch (const NumericalError& e) {
      throw FixedPointNotCertified(e.what(), iter, fp.residual);
    }
    double residual = 0.0;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      if (!v2f_next[k].allFinite() || !f2v_next[k].allFinite()) {
        throw FixedPointNotCertified("information became non-finite", iter, fp.residual);
      }
      residual = std::max(residual, inf_norm(v2f_next[k] - fp.v2f_info[k]));
      residual = std::max(residual, inf_norm(f2v_next[k] - fp.f2v_info[k]));
    }
    fp.v2f_info.swap(v2f_next);
    fp.f2v_info.swap(f2v_next);
    fp.residual = residual;
    fp.iterations = iter;
    if (residual < tolerance) break;
  }
  if (!(fp.residual < tolerance)) {
    throw FixedPointNotCertified("max_iter reached", fp.iterations, fp.residual);
  }
  if (model.is_gmrf()) return fp;
  fp.v2f_cov.reserve(pairs.size());
  for (const auto& info : fp.v2f_info) {
    try {
      fp.v2f_cov.push_back(kernels::message_covariance(info));
    } catch (const NumericalError& e) {
      throw FixedPointNotCertified(e.what(), fp.iterations, fp.residual);
    }
  }
  return fp;
}

LocalFixedPoint local_fixed_point(const FactorGraphModel& model, const FixedPointInfo& fp, NodeId node) {
  LocalFixedPoint local;
  local.node = node;
  const bool gmrf = model.is_gmrf();
  if (!gmrf && fp.v2f_cov.size() != fp.v2f_info.size()) {
    throw FixedPointNotCertified("missing fixed-point covariances", fp.iterations, fp.residual);
  }
  for (NodeId k : model.neighbors(node)) {
    const auto out = static_cast<std::size_t>(model.message_index({node, k}));
    const auto in = static_cast<std::size_t>(model.message_index({k, node}));
    if (out >= fp.v2f_info.size() || in >= fp.v2f_info.size()) {
      throw FixedPointNotCertified("missing fixed-point entries", fp.iterations, fp.residual);
    }
    local.outgoing_info.push_back(fp.v2f_info[out]);
    if (!gmrf) local.outgoing_cov.push_back(fp.v2f_cov[out]);
    local.incoming_info.push_back(fp.v2f_info[in]);
  }
  return local;
}

LocalQBlock build_local_q(const LocalView& view, const LocalFixedPoint& fp) {
  const auto neighbors = view.neighbors();
  const std::size_t degree = neighbors.size();
  const bool gmrf = view.kind() == ModelKind::Gmrf;
  if (fp.node != view.node() || fp.incoming_info.size() != degree || fp.outgoing_info.size() != degree ||
      (!gmrf && fp.outgoing_cov.size() != degree)) {
    throw FixedPointNotCertified("missing fixed-point entries for node " + std::to_string(view.node()), 0, 0.0);
  }

  LocalQBlock q;
  q.node = view.node();
  int rows = 0;
  int cols = 0;
  std::vector<const IncidentEdge*> edges;
  for (NodeId k : neighbors) {
    const IncidentEdge& e = view.edge(k);
    edges.push_back(&e);
    q.rows.push_back({view.node(), k});
    q.cols.push_back({k, view.node()});
    q.row_offsets.push_back(rows);
    q.col_offsets.push_back(cols);
    rows += view.dim();
    cols += e.neighbor_dim;
  }
  q.block = Matrix::Zero(rows, cols);
  q.offset = Vector::Zero(rows);

  if (gmrf) {
    for (std::size_t i = 0; i < degree; ++i) {
      double denom = view.J_self();
      for (std::size_t k = 0; k < degree; ++k) {
        if (k != i) denom += fp.incoming_info[k](0, 0);
      }
      const double coupling = edges[i]->coupling;
      q.offset(static_cast<Eigen::Index>(i)) = -coupling * view.h_self() / denom;
      for (std::size_t k = 0; k < degree; ++k) {
        if (k != i) q.block(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = coupling / denom;
      }
    }
    return q;
  }

  // Per incoming edge k: M_{k,j} = A_{k,j}ᵀ [R + A_{j,k} C*_{k} A_{j,k}ᵀ]^{-1}.
  std::vector<Matrix> gains;
  gains.reserve(degree);
  for (std::size_t k = 0; k < degree; ++k) {
    gains.push_back(kernels::factor_gain(*edges[k], kernels::message_covariance(fp.incoming_info[k])));
  }
  for (std::size_t i = 0; i < degree; ++i) {
    const Matrix& cov = fp.outgoing_cov[i];
    Vector drive = Vector::Zero(view.dim());
    for (std::size_t k = 0; k < degree; ++k) {
      if (k == i) continue;
      q.block.block(q.row_offsets[i], q.col_offsets[k], view.dim(), edges[k]->neighbor_dim) =
          cov * gains[k] * edges[k]->A_other;
      drive += gains[k] * edges[k]->y;
    }
    q.offset.segment(q.row_offsets[i], view.dim()) = cov * drive;
  }
  return q;
}

LocalQBlock build_local_q(const FactorGraphModel& model, const FixedPointInfo& fp, NodeId node) {
  const LocalSlice slice = extract_slice(model, node);
  const LocalView view(slice);
  return build_local_q(view, local_fixed_point(model, fp, node));
}

LocalVerdict local_condition(const LocalQBlock& block) {
  LocalVerdict v;
  if (block.block.size() > 0) {
    const Matrix gram = block.block * block.block.transpose();
    v.rho_local = spectral_radius(0.5 * (gram + gram.transpose()));
  }
  v.verdict = v.rho_local < 1.0;
  return v;
}

MessageLayout message_layout(const FactorGraphModel& model) {
  MessageLayout layout;
  for (const auto& p : model.directed_pairs()) {
    layout.offsets.push_back(layout.total);
    layout.total += model.dim(p.from);
  }
  return layout;
}

Matrix expand_rows(const LocalQBlock& block, const FactorGraphModel& model, const MessageLayout& layout) {
  Matrix out = Matrix::Zero(block.block.rows(), layout.total);
  for (std::size_t c = 0; c < block.cols.size(); ++c) {
    const int width = model.dim(block.cols[c].from);
    const int global = layout.offsets[static_cast<std::size_t>(model.message_index(block.cols[c]))];
    out.middleCols(global, width) = block.block.middleCols(block.col_offsets[c], width);
  }
  return out;
}

Recursion assemble_recursion(const FactorGraphModel& model, const FixedPointInfo& fp) {
  const MessageLayout layout = message_layout(model);
  if (layout.total > kCentralizedLimit) {
    throw SizeLimitError("centralized assembly refused: " + std::to_string(layout.total) +
                         " unknowns exceeds " + std::to_string(kCentralizedLimit));
  }
  Recursion r;
  r.Q = Matrix::Zero(layout.total, layout.total);
  r.b = Vector::Zero(layout.total);
  // Directed pairs are ordered by sender, so node j's rows are contiguous.
  for (NodeId j = 1; j <= model.num_nodes(); ++j) {
    if (model.neighbors(j).empty()) continue;
    const LocalQBlock q = build_local_q(model, fp, j);
    const int first = layout.offsets[static_cast<std::size_t>(model.message_index(q.rows.front()))];
    r.Q.middleRows(first, q.block.rows()) = expand_rows(q, model, layout);
    r.b.segment(first, q.offset.size()) = q.offset;
  }
  return r;
}

CentralizedVerdict centralized_condition(const FactorGraphModel& model, const FixedPointInfo& fp) {
  const Recursion r = assemble_recursion(model, fp);
  CentralizedVerdict v;
  if (r.Q.size() == 0) return v;
  v.rho_Q = spectral_radius(r.Q);
  const Matrix gram = r.Q * r.Q.transpose();
  v.rho_QQt = spectral_radius(0.5 * (gram + gram.transpose()));
  return v;
}

WalkSummability walk_summability(const GmrfModel& model) {
  const Matrix R = Matrix::Identity(model.n, model.n) - model.dense_J();
  WalkSummability w;
  w.rho_absR = spectral_radius(R.cwiseAbs());
  w.verdict = w.rho_absR < 1.0;
  return w;
}

WalkSummability walk_summability(const FactorGraphModel& model) {
  if (!model.is_gmrf()) throw ModelError("walk-summability applies to GMRF models only");
  return walk_summability(model.gmrf());
}

ConvergenceReport certify(const FactorGraphModel& model, const CertifyOptions& options) {
  const FixedPointInfo fp = fixed_point_information(model, options.tolerance, options.max_iter);
  ConvergenceReport report;
  report.fixed_point_iterations = fp.iterations;
  report.fixed_point_residual = fp.residual;
  for (NodeId j = 1; j <= model.num_nodes(); ++j) {
    const LocalVerdict v = local_condition(build_local_q(model, fp, j));
    report.nodes.push_back({j, v.rho_local, v.verdict});
    report.local_verdict = report.local_verdict && v.verdict;
  }
  if (options.centralized) {
    const CentralizedVerdict c = centralized_condition(model, fp);
    report.rho_Q = c.rho_Q;
    report.rho_QQt = c.rho_QQt;
    if (model.is_gmrf()) report.walk = walk_summability(model);
    report.from_centralized = true;
  }
  return report;
}

}  // namespace gabp
