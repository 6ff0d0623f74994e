// gabp: generate models, run Gaussian BP, certify convergence.

#include "gabp/bp_engine.hpp"
#include "gabp/convergence.hpp"
#include "gabp/model_io.hpp"
#include "gabp/netsim.hpp"
#include "gabp/oracle.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

using namespace gabp;
using Json = nlohmann::ordered_json;

namespace {

enum ExitCode : int { kOk = 0, kInvalid = 2, kNumeric = 3, kNotConverged = 4, kUncertified = 5 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("GABP_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(raw, &used);
    if (used != std::string(raw).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw UsageError(std::string("GABP_SEED is not an unsigned integer: ") + raw);
  }
}

std::string hex_digest(const FactorGraphModel& model) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(model_digest(model)));
  return buf;
}

Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v(k));
  return out;
}

// NaN and infinity are not valid JSON numbers.
Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json to_json(const ConvergenceReport& r) {
  Json nodes = Json::array();
  for (const auto& n : r.nodes) nodes.push_back({{"node", n.node}, {"rho_local", n.rho_local}, {"verdict", n.verdict}});
  Json out;
  out["fixed_point"] = {{"iterations", r.fixed_point_iterations}, {"residual", r.fixed_point_residual}};
  out["nodes"] = nodes;
  out["local_verdict"] = r.local_verdict;
  if (r.rho_Q) out["rho_Q"] = finite_or_null(*r.rho_Q);
  if (r.rho_QQt) out["rho_QQt"] = finite_or_null(*r.rho_QQt);
  if (r.walk) out["walk_summability"] = {{"rho_absR", r.walk->rho_absR}, {"verdict", r.walk->verdict}};
  Json provenance = Json::array();
  if (r.from_local) provenance.push_back("local");
  if (r.from_centralized) provenance.push_back("centralized");
  out["provenance"] = provenance;
  return out;
}

void emit(const Json& report, const std::string& path) {
  const std::string text = report.dump(2) + "\n";
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path);
  out << text;
}

FactorGraphModel load_or_usage(const std::string& path) {
  try {
    FactorGraphModel model = load_model(path);
    const auto report = validate(model);
    if (!report.ok()) throw UsageError("invalid model " + path + ": " + report.summary());
    return model;
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  } catch (const ModelError& e) {
    throw UsageError(e.what());
  }
}

struct GenerateArgs {
  std::string kind = "gmrf";
  int n = 0;
  int dim = 1;
  std::string topology = "chain";
  double p = 0.3;
  double coupling = 0.4;
  std::uint64_t seed = 1;
  std::string output;
};

int cmd_generate(const GenerateArgs& a) {
  if (a.n < 1) throw UsageError("--n must be at least 1");
  const auto topo = parse_topology(a.topology, a.p);
  if (!topo) throw UsageError("unknown topology: " + a.topology);
  const std::uint64_t seed = env_seed().value_or(a.seed);
  try {
    FactorGraphModel model = [&]() -> FactorGraphModel {
      if (a.kind == "gmrf") return FactorGraphModel(generate_gmrf(a.n, *topo, a.coupling, seed));
      if (a.kind == "linear") {
        if (a.dim < 1) throw UsageError("--dim must be at least 1");
        return FactorGraphModel(generate_linear(a.n, std::vector<int>(static_cast<std::size_t>(a.n), a.dim), *topo, seed));
      }
      throw UsageError("unknown kind: " + a.kind);
    }();
    if (a.output.empty()) {
      std::cout << model_to_json(model);
    } else {
      save_model(model, a.output);
    }
  } catch (const GenerationError& e) {
    throw UsageError(e.what());
  }
  return kOk;
}

struct RunArgs {
  std::string model;
  double eta = 1e-9;
  int max_iter = 1000;
  bool oracle = false;
  bool strict = false;
  int threads = 1;
  std::optional<std::uint64_t> init_mean_seed;
  bool timing = false;
  std::string output;
};

int cmd_run(const RunArgs& a) {
  const FactorGraphModel model = load_or_usage(a.model);
  EngineConfig cfg;
  cfg.eta = a.eta;
  cfg.max_iter = a.max_iter;
  cfg.threads = a.threads;
  cfg.record_messages = false;
  cfg.init_mean_seed = a.init_mean_seed;
  if (cfg.init_mean_seed) {
    if (auto s = env_seed()) cfg.init_mean_seed = s;
  }

  const auto start = std::chrono::steady_clock::now();
  BpRunResult result;
  try {
    result = run(model, cfg);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  const auto stop = std::chrono::steady_clock::now();

  Json report;
  report["command"] = "run";
  report["model_digest"] = hex_digest(model);
  report["kind"] = model.is_gmrf() ? "gmrf" : "linear";
  Json config = {{"eta", cfg.eta}, {"max_iter", cfg.max_iter}, {"threads", cfg.threads}};
  if (cfg.init_mean_seed) config["init_mean_seed"] = *cfg.init_mean_seed;
  report["config"] = config;
  report["converged"] = result.converged;
  report["iterations"] = result.iterations;
  report["max_delta"] = result.max_delta.empty() ? Json(nullptr) : finite_or_null(result.max_delta.back());

  Json means = Json::array();
  for (const auto& b : result.final_beliefs()) means.push_back(b.defined ? to_json(b.mean) : Json(nullptr));
  report["means"] = means;

  if (a.oracle) {
    const ExactMarginals post = exact(model);
    Json oracle_means = Json::array();
    double err = 0.0;
    for (std::size_t k = 0; k < post.means.size(); ++k) {
      oracle_means.push_back(to_json(post.means[k]));
      const auto& b = result.final_beliefs()[k];
      err = b.defined ? std::max(err, (b.mean - post.means[k]).cwiseAbs().maxCoeff())
                      : std::numeric_limits<double>::infinity();
    }
    report["oracle_means"] = oracle_means;
    report["max_mean_error"] = finite_or_null(err);
  }
  if (a.timing) report["elapsed_ms"] = std::chrono::duration<double, std::milli>(stop - start).count();
  emit(report, a.output);
  return (a.strict && !result.converged) ? kNotConverged : kOk;
}

struct CertifyArgs {
  std::string model;
  bool centralized = false;
  bool distributed = false;
  double tol = kFixedPointTol;
  int max_iter = kFixedPointMaxIter;
  std::string output;
};

int cmd_certify(const CertifyArgs& a) {
  const FactorGraphModel model = load_or_usage(a.model);
  CertifyOptions opts;
  opts.tolerance = a.tol;
  opts.max_iter = a.max_iter;
  opts.centralized = a.centralized;

  Json report;
  report["command"] = "certify";
  report["model_digest"] = hex_digest(model);
  report["kind"] = model.is_gmrf() ? "gmrf" : "linear";
  try {
    const ConvergenceReport central = certify(model, opts);
    report["report"] = to_json(central);
    if (a.distributed) {
      netsim::PhaseSelection phases;
      phases.mean_propagation = false;
      CertifyOptions local = opts;
      local.centralized = false;
      const auto sim = netsim::simulate(model, EngineConfig{}, phases, local);
      bool agree = sim.report->local_verdict == central.local_verdict &&
                   sim.report->nodes.size() == central.nodes.size();
      for (std::size_t k = 0; agree && k < central.nodes.size(); ++k) {
        agree = sim.report->nodes[k].rho_local == central.nodes[k].rho_local;
      }
      report["distributed"] = {
          {"network_verdict", sim.trace.network_verdict.value_or(false)},
          {"locality", netsim::verify_locality(sim.trace, model) ? "pass" : "fail"},
          {"agrees_with_local", agree},
          {"payloads", sim.trace.records().size()},
      };
    }
  } catch (const FixedPointNotCertified& e) {
    report["error"] = e.what();
    report["fixed_point"] = {{"iterations", e.iterations}, {"residual", finite_or_null(e.residual)}};
    emit(report, a.output);
    std::cerr << "gabp: " << e.what() << "\n";
    return kUncertified;
  } catch (const SizeLimitError& e) {
    throw UsageError(e.what());
  }
  emit(report, a.output);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian belief propagation with a distributed convergence certificate"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a random model file");
  generate->add_option("--kind", gen.kind, "gmrf or linear")->check(CLI::IsMember({"gmrf", "linear"}));
  generate->add_option("--n,--nodes", gen.n, "Number of nodes")->required();
  generate->add_option("--dim", gen.dim, "Per-node dimension (linear)");
  generate->add_option("--topology", gen.topology, "chain, cycle, grid, er, tree");
  generate->add_option("--p", gen.p, "Edge probability for er");
  generate->add_option("--coupling", gen.coupling, "Off-diagonal value of J (gmrf)");
  generate->add_option("--seed", gen.seed, "Random seed (GABP_SEED overrides)");
  generate->add_option("-o,--output", gen.output, "Output path, stdout if omitted");

  RunArgs runa;
  auto* runc = app.add_subcommand("run", "Run synchronous BP and report the beliefs");
  runc->add_option("model", runa.model, "Model file")->required();
  runc->add_option("--eta", runa.eta, "Stop when the largest mean change is below eta");
  runc->add_option("--max-iter", runa.max_iter, "Iteration limit");
  runc->add_flag("--oracle", runa.oracle, "Compare with the exact posterior");
  runc->add_flag("--strict", runa.strict, "Exit 4 when not converged");
  runc->add_option("--threads", runa.threads, "Worker threads")->check(CLI::PositiveNumber);
  runc->add_option("--init-mean-seed", runa.init_mean_seed, "Draw random initial means");
  runc->add_flag("--timing", runa.timing, "Include wall-clock time in the report");
  runc->add_option("-o,--output", runa.output, "Report path, stdout if omitted");

  CertifyArgs cert;
  auto* certc = app.add_subcommand("certify", "Evaluate the convergence conditions");
  certc->add_option("model", cert.model, "Model file")->required();
  certc->add_flag("--centralized", cert.centralized, "Also compute rho(Q), rho(QQ^T) and walk-summability");
  certc->add_flag("--distributed", cert.distributed, "Also run the certificate through the network simulator");
  certc->add_option("--tol", cert.tol, "Fixed-point tolerance");
  certc->add_option("--max-iter", cert.max_iter, "Fixed-point iteration limit");
  certc->add_option("-o,--output", cert.output, "Report path, stdout if omitted");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalid;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen);
    if (runc->parsed()) return cmd_run(runa);
    if (certc->parsed()) return cmd_certify(cert);
  } catch (const UsageError& e) {
    std::cerr << "gabp: " << e.what() << "\n";
    return kInvalid;
  } catch (const FixedPointNotCertified& e) {
    std::cerr << "gabp: " << e.what() << "\n";
    return kUncertified;
  } catch (const NumericalError& e) {
    std::cerr << "gabp: numerical failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const ImproperModel& e) {
    std::cerr << "gabp: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "gabp: " << e.what() << "\n";
    return kInvalid;
  }
  return kInvalid;
}
