#include "gabp/model_io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace gabp {

using nlohmann::json;

std::string format_double(double value) {
  if (!std::isfinite(value)) throw ParseError("cannot serialize non-finite value");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

namespace {

void write_values(std::ostringstream& out, const double* data, Eigen::Index count) {
  out << '[';
  for (Eigen::Index k = 0; k < count; ++k) {
    if (k) out << ',';
    out << format_double(data[k]);
  }
  out << ']';
}

void write_matrix(std::ostringstream& out, const Matrix& m) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  write_values(out, rm.data(), rm.size());
}

void write_vector(std::ostringstream& out, const Vector& v) { write_values(out, v.data(), v.size()); }

std::string edge_name(long i, long j) {
  return "edge (" + std::to_string(i) + "," + std::to_string(j) + ")";
}

const json& field(const json& obj, const char* name, const std::string& where) {
  if (!obj.is_object() || !obj.contains(name)) {
    throw ParseError(where + ": missing field '" + name + "'");
  }
  return obj.at(name);
}

long integer(const json& obj, const char* name, const std::string& where) {
  const json& v = field(obj, name, where);
  if (!v.is_number_integer()) throw ParseError(where + ": field '" + name + "' must be an integer");
  return v.get<long>();
}

std::vector<double> numbers(const json& v, const std::string& where, const char* name) {
  if (!v.is_array()) throw ParseError(where + ": field '" + name + "' must be an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number()) throw ParseError(where + ": field '" + name + "' must hold numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

Matrix reshape(const std::vector<double>& values, long rows, long cols, const std::string& where,
               const char* name) {
  if (rows < 0 || cols < 0 || static_cast<long>(values.size()) != rows * cols) {
    throw ParseError("dimension mismatch " + where + ": field '" + name + "' has " +
                     std::to_string(values.size()) + " entries, expected " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix m(rows, cols);
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) m(r, c) = values[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

FactorGraphModel parse_linear(const json& doc) {
  LinearGaussianModel model;
  const json& nodes = field(doc, "nodes", "model");
  if (!nodes.is_array()) throw ParseError("model: field 'nodes' must be an array");
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const std::string where = "nodes[" + std::to_string(k) + "]";
    const json& node = nodes[k];
    NodeParams p;
    p.id = static_cast<NodeId>(integer(node, "id", where));
    p.dim = static_cast<int>(integer(node, "dim", where));
    if (p.dim < 1) throw ParseError(where + ": dim must be positive");
    if (p.id != static_cast<NodeId>(k) + 1) {
      throw ParseError(where + ": ids must be contiguous from 1 in file order");
    }
    p.prior_cov = reshape(numbers(field(node, "W", where), where, "W"), p.dim, p.dim,
                          "node " + std::to_string(p.id), "W");
    model.nodes.push_back(std::move(p));
  }
  const json& edges = field(doc, "edges", "model");
  if (!edges.is_array()) throw ParseError("model: field 'edges' must be an array");
  const long n = static_cast<long>(model.nodes.size());
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const json& edge = edges[k];
    const std::string where = "edges[" + std::to_string(k) + "]";
    const long i = integer(edge, "i", where);
    const long j = integer(edge, "j", where);
    const std::string name = edge_name(i, j);
    if (i < 1 || j < 1 || i > n || j > n || i >= j) {
      throw ParseError(name + ": endpoints must satisfy 1 <= i < j <= " + std::to_string(n));
    }
    if (!edge.contains("y")) throw ParseError("missing observation on " + name);
    EdgeObservation e;
    e.i = static_cast<NodeId>(i);
    e.j = static_cast<NodeId>(j);
    const auto y = numbers(edge.at("y"), name, "y");
    const long m = static_cast<long>(y.size());
    if (m == 0) throw ParseError("missing observation on " + name);
    e.y = Eigen::Map<const Vector>(y.data(), m);
    const long di = model.nodes[static_cast<std::size_t>(i - 1)].dim;
    const long dj = model.nodes[static_cast<std::size_t>(j - 1)].dim;
    e.A_ji = reshape(numbers(field(edge, "A_ji", name), name, "A_ji"), m, di, name, "A_ji");
    e.A_ij = reshape(numbers(field(edge, "A_ij", name), name, "A_ij"), m, dj, name, "A_ij");
    e.noise_cov = reshape(numbers(field(edge, "R", name), name, "R"), m, m, name, "R");
    model.edges.push_back(std::move(e));
  }
  if (doc.contains("ground_truth")) {
    std::vector<Vector> truth;
    const json& gt = doc.at("ground_truth");
    if (!gt.is_array() || static_cast<long>(gt.size()) != n) {
      throw ParseError("model: ground_truth must hold one vector per node");
    }
    for (long k = 0; k < n; ++k) {
      const auto v = numbers(gt[static_cast<std::size_t>(k)], "ground_truth", "ground_truth");
      if (static_cast<long>(v.size()) != model.nodes[static_cast<std::size_t>(k)].dim) {
        throw ParseError("dimension mismatch ground_truth at node " + std::to_string(k + 1));
      }
      truth.emplace_back(Eigen::Map<const Vector>(v.data(), static_cast<long>(v.size())));
    }
    model.ground_truth = std::move(truth);
  }
  try {
    return FactorGraphModel(std::move(model));
  } catch (const ModelError& e) {
    throw ParseError(e.what());
  }
}

FactorGraphModel parse_gmrf(const json& doc) {
  const long n = integer(doc, "n", "model");
  if (n < 1) throw ParseError("model: n must be positive");
  const json& coo = field(doc, "J", "model");
  if (!coo.is_array()) throw ParseError("model: field 'J' must be an array of [i, j, value]");
  Matrix dense = Matrix::Zero(n, n);
  std::vector<std::vector<bool>> seen(static_cast<std::size_t>(n),
                                      std::vector<bool>(static_cast<std::size_t>(n), false));
  for (std::size_t k = 0; k < coo.size(); ++k) {
    const json& t = coo[k];
    const std::string where = "J[" + std::to_string(k) + "]";
    if (!t.is_array() || t.size() != 3 || !t[0].is_number_integer() || !t[1].is_number_integer() ||
        !t[2].is_number()) {
      throw ParseError(where + ": expected [i, j, value]");
    }
    const long i = t[0].get<long>();
    const long j = t[1].get<long>();
    if (i < 1 || j < 1 || i > n || j > n) throw ParseError(where + ": index out of range");
    auto flag = seen[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j - 1)];
    if (flag) throw ParseError(where + ": duplicate entry (" + std::to_string(i) + "," + std::to_string(j) + ")");
    flag = true;
    dense(i - 1, j - 1) = t[2].get<double>();
  }
  for (long i = 0; i < n; ++i) {
    for (long j = i + 1; j < n; ++j) {
      if (dense(i, j) != dense(j, i)) {
        throw ParseError("J: non-symmetric at (" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ")");
      }
    }
  }
  const auto h = numbers(field(doc, "h", "model"), "model", "h");
  if (static_cast<long>(h.size()) != n) {
    throw ParseError("dimension mismatch h: expected " + std::to_string(n) + " entries");
  }
  GmrfModel model;
  model.n = static_cast<int>(n);
  model.J = dense.sparseView(0.0, 0.0);
  for (long i = 0; i < n; ++i) {
    if (dense(i, i) == 0.0) model.J.coeffRef(i, i) = 0.0;
  }
  model.J.makeCompressed();
  model.h = Eigen::Map<const Vector>(h.data(), n);
  return FactorGraphModel(std::move(model));
}

}  // namespace

std::string model_to_json(const FactorGraphModel& model) {
  std::ostringstream out;
  if (model.is_gmrf()) {
    const auto& g = model.gmrf();
    const Matrix J = g.dense_J();
    out << "{\n  \"kind\": \"gmrf\",\n  \"n\": " << g.n << ",\n  \"J\": [";
    bool first = true;
    for (int i = 0; i < g.n; ++i) {
      for (int j = 0; j < g.n; ++j) {
        if (J(i, j) == 0.0 && i != j) continue;
        out << (first ? "\n    " : ",\n    ") << '[' << i + 1 << ',' << j + 1 << ','
            << format_double(J(i, j)) << ']';
        first = false;
      }
    }
    out << "\n  ],\n  \"h\": ";
    write_vector(out, g.h);
    out << "\n}\n";
    return out.str();
  }
  const auto& lin = model.linear();
  out << "{\n  \"kind\": \"linear\",\n  \"nodes\": [";
  for (std::size_t k = 0; k < lin.nodes.size(); ++k) {
    const auto& node = lin.nodes[k];
    out << (k ? ",\n    " : "\n    ") << "{\"id\": " << node.id << ", \"dim\": " << node.dim
        << ", \"W\": ";
    write_matrix(out, node.prior_cov);
    out << '}';
  }
  out << "\n  ],\n  \"edges\": [";
  for (std::size_t k = 0; k < lin.edges.size(); ++k) {
    const auto& e = lin.edges[k];
    out << (k ? ",\n    " : "\n    ") << "{\"i\": " << e.i << ", \"j\": " << e.j << ", \"A_ji\": ";
    write_matrix(out, e.A_ji);
    out << ", \"A_ij\": ";
    write_matrix(out, e.A_ij);
    out << ", \"R\": ";
    write_matrix(out, e.noise_cov);
    out << ", \"y\": ";
    write_vector(out, e.y);
    out << '}';
  }
  out << "\n  ]";
  if (lin.ground_truth) {
    out << ",\n  \"ground_truth\": [";
    for (std::size_t k = 0; k < lin.ground_truth->size(); ++k) {
      out << (k ? ", " : "");
      write_vector(out, (*lin.ground_truth)[k]);
    }
    out << ']';
  }
  out << "\n}\n";
  return out.str();
}

FactorGraphModel model_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("model: top level must be an object");
  const json& kind = field(doc, "kind", "model");
  if (!kind.is_string()) throw ParseError("model: field 'kind' must be a string");
  const auto k = kind.get<std::string>();
  if (k == "linear") return parse_linear(doc);
  if (k == "gmrf") return parse_gmrf(doc);
  throw ParseError("model: unknown kind '" + k + "'");
}

void save_model(const FactorGraphModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open " + path.string() + " for writing");
  out << model_to_json(model);
  if (!out) throw ParseError("write failed for " + path.string());
}

FactorGraphModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return model_from_json(text.str());
}

std::uint64_t model_digest(const FactorGraphModel& model) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : model_to_json(model)) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace gabp
