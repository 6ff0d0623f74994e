#include "gabp/bp_engine.hpp"
#include "gabp/convergence.hpp"
#include "gabp/oracle.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace gabp;

TEST_CASE("default initial state on the 3-chain") {
  const FactorGraphModel g3(testing::chain3(0.5, -1.0, 0.25));
  const MessageState s = init_state(g3, {});
  CHECK(s.iteration == 0);
  CHECK(s.f2v.size() == 4);
  for (const auto& m : s.f2v) {
    CHECK(m.direction == Direction::FactorToVariable);
    CHECK(m.info(0, 0) == 0.0);
    CHECK(m.mean_part(0) == 0.0);
  }
}

TEST_CASE("initial information follows the configuration") {
  const FactorGraphModel l2(testing::scalar_pair());
  EngineConfig cfg;
  cfg.init_info_scale = 1.0;
  for (const auto& m : init_state(l2, cfg).f2v) CHECK(m.info == Matrix::Identity(1, 1));

  // Delta-J(0) = 0 on the GMRF path whatever the configuration says.
  const FactorGraphModel g3(testing::chain3(1, 1, 1));
  for (const auto& m : init_state(g3, cfg).f2v) CHECK(m.info(0, 0) == 0.0);

  EngineConfig bad;
  bad.init_info[{1, 2}] = Matrix::Constant(1, 1, -0.1);
  CHECK_THROWS_AS(init_state(l2, bad), ConfigError);
  EngineConfig wrong_shape;
  wrong_shape.init_info[{1, 2}] = Matrix::Identity(2, 2);
  CHECK_THROWS_AS(init_state(l2, wrong_shape), ConfigError);
  EngineConfig non_edge;
  non_edge.init_mean[{1, 1}] = Vector::Zero(1);
  CHECK_THROWS_AS(init_state(l2, non_edge), ConfigError);
}

TEST_CASE("variable to factor updates") {
  SUBCASE("leaf of a linear model sends its prior") {
    const FactorGraphModel l2(testing::scalar_pair());
    const MessageState s = init_state(l2, {});
    const auto m = update_variable_to_factor(s, l2, 1, 2);
    CHECK(m.info(0, 0) == 1.0);
    CHECK(m.mean_part(0) == 0.0);
  }
  SUBCASE("3-chain node 2 towards node 1 in the first round") {
    const double h2 = -0.8;
    const FactorGraphModel g3(testing::chain3(0.1, h2, 0.3));
    const MessageState s = init_state(g3, {});
    const auto m = update_variable_to_factor(s, g3, 2, 1);
    // -J21^2 / J22 and -J21 h2 / J22 with zero incoming messages.
    CHECK(std::abs(m.info(0, 0) - (-0.16)) < 1e-15);
    CHECK(std::abs(m.mean_part(0) - 0.4 * h2) < 1e-15);
  }
}

TEST_CASE("factor to variable updates") {
  SUBCASE("scalar pair after the first round") {
    const FactorGraphModel l2(testing::scalar_pair());
    MessageState s = init_state(l2, {});
    s.v2f[static_cast<std::size_t>(l2.message_index({2, 1}))] = update_variable_to_factor(s, l2, 2, 1);
    const auto m = update_factor_to_variable(s, l2, 2, 1);
    // info = 1 (1 + 1)^{-1} 1; mean = info^{-1} * 0.5 * (y - 0) = 1.
    CHECK(std::abs(m.info(0, 0) - 0.5) < 1e-15);
    CHECK(std::abs(m.mean_part(0) - 1.0) < 1e-15);
  }
  SUBCASE("identity algebra") {
    LocalSlice slice;
    slice.node = 1;
    slice.dim = 2;
    IncidentEdge edge;
    edge.neighbor = 2;
    edge.neighbor_dim = 2;
    edge.A_self = Matrix::Identity(2, 2);
    edge.A_other = Matrix::Identity(2, 2);
    edge.noise_cov = Matrix::Identity(2, 2);
    edge.y = Vector::Zero(2);
    const Matrix info = kernels::f2v_info(edge, Matrix::Identity(2, 2));
    CHECK((info - 0.5 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("beliefs") {
  SUBCASE("prior only before any message") {
    LinearGaussianModel m = testing::scalar_pair();
    m.nodes[0].prior_cov(0, 0) = 4.0;
    const FactorGraphModel l2(m);
    const auto b = compute_beliefs(init_state(l2, {}), l2);
    CHECK(b[0].mean(0) == 0.0);
    CHECK(std::abs(b[0].cov(0, 0) - 4.0) < 1e-15);
  }
  SUBCASE("scalar pair converges to (1/3, 1/3)") {
    EngineConfig cfg;
    cfg.eta = 1e-14;
    const auto r = run(FactorGraphModel(testing::scalar_pair()), cfg);
    CHECK(r.converged);
    CHECK(std::abs(r.final_beliefs()[0].mean(0) - 1.0 / 3) < 1e-15);
    CHECK(std::abs(r.final_beliefs()[1].mean(0) - 1.0 / 3) < 1e-15);
  }
}

TEST_CASE("run on the 3-chain is exact") {
  const GmrfModel g = testing::chain3(0.3, -0.7, 0.9);
  EngineConfig cfg;
  cfg.eta = 1e-12;
  const auto r = run(FactorGraphModel(g), cfg);
  CHECK(r.converged);
  CHECK(r.iterations <= 10);
  const Vector exact = g.dense_J().partialPivLu().solve(g.h);
  for (int k = 0; k < 3; ++k) CHECK(std::abs(r.final_beliefs()[static_cast<std::size_t>(k)].mean(0) - exact(k)) < 1e-10);
}

TEST_CASE("the 4-cycle with coupling 0.6 does not converge") {
  EngineConfig cfg;
  cfg.max_iter = 500;
  cfg.record_messages = false;
  const auto r = run(FactorGraphModel(generate_gmrf(4, Topology::cycle(), 0.6, 2)), cfg);
  CHECK_FALSE(r.converged);
  CHECK(r.iterations == 500);
}

TEST_CASE("max_iter = 0 returns the initial beliefs") {
  EngineConfig cfg;
  cfg.max_iter = 0;
  const FactorGraphModel l2(testing::scalar_pair());
  const auto r = run(l2, cfg);
  CHECK_FALSE(r.converged);
  CHECK(r.iterations == 0);
  REQUIRE(r.beliefs.size() == 1);
  CHECK(r.final_beliefs()[0].mean(0) == 0.0);
}

TEST_CASE("numerical failures carry iteration and edge") {
  // R = -1 makes R + A C Aᵀ singular once C = 1.
  const FactorGraphModel bad(testing::scalar_pair(1.0, -1.0));
  try {
    run(bad, {});
    FAIL("expected a numerical failure");
  } catch (const BpNumericalError& e) {
    CHECK(e.iteration == 1);
    CHECK(((e.from == 1 && e.to == 2) || (e.from == 2 && e.to == 1)));
  }
}

TEST_CASE("property: information stays PD from the first round on") {
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    const int n = 4 + static_cast<int>(seed % 5);
    std::vector<int> dims;
    for (int k = 0; k < n; ++k) dims.push_back(1 + (k + static_cast<int>(seed)) % 3);
    const FactorGraphModel model(generate_linear(n, dims, Topology::erdos_renyi(0.5), seed));
    EngineConfig cfg;
    cfg.max_iter = 25;
    const auto r = run(model, cfg);
    for (std::size_t l = 1; l < r.messages.size(); ++l) {
      for (const auto& m : r.messages[l].v2f) CHECK(is_pd(m.info));
      for (const auto& m : r.messages[l].f2v) CHECK(is_pd(m.info));
    }
  }
}

TEST_CASE("property: trees are exact within diameter + 1 iterations") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const int n = 3 + static_cast<int>(seed % 12);
    std::vector<int> dims;
    for (int k = 0; k < n; ++k) dims.push_back(1 + (k * 7 + static_cast<int>(seed)) % 3);
    const FactorGraphModel lin(generate_linear(n, dims, Topology::tree(), seed));
    const FactorGraphModel gm(generate_gmrf(n, Topology::tree(), 0.05 + 0.0075 * static_cast<double>(seed), seed));
    for (const FactorGraphModel* model : {&lin, &gm}) {
      const int D = testing::diameter(*model);
      EngineConfig cfg;
      cfg.eta = 1e-12;
      cfg.max_iter = D + 1;
      const auto r = run(*model, cfg);
      CHECK(r.converged);
      const auto post = exact(*model);
      for (int k = 0; k < model->num_nodes(); ++k) {
        const auto& b = r.final_beliefs()[static_cast<std::size_t>(k)];
        CHECK((b.mean - post.means[static_cast<std::size_t>(k)]).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((b.cov - post.covs[static_cast<std::size_t>(k)]).cwiseAbs().maxCoeff() < 1e-8);
      }
    }
  }
}

TEST_CASE("property: information trajectories ignore the initial means") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const FactorGraphModel model(generate_linear(6, {2, 1, 2, 3, 1, 2}, Topology::cycle(), seed));
    EngineConfig a;
    a.max_iter = 30;
    a.eta = 1e-300;
    a.init_info_scale = 0.5;
    EngineConfig b = a;
    b.init_mean_seed = seed * 31;
    const auto ra = run(model, a);
    const auto rb = run(model, b);
    // Mean differences may stop one run earlier; compare the common prefix.
    const std::size_t common = std::min(ra.messages.size(), rb.messages.size());
    CHECK(common >= 10);
    for (std::size_t l = 0; l < common; ++l) {
      for (std::size_t k = 0; k < ra.messages[l].f2v.size(); ++k) {
        CHECK(testing::bit_equal(ra.messages[l].f2v[k].info, rb.messages[l].f2v[k].info));
        CHECK(testing::bit_equal(ra.messages[l].v2f[k].info, rb.messages[l].v2f[k].info));
      }
    }
  }
}

TEST_CASE("property: scalar linear and GMRF paths agree on converged means") {
  int compared = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const int n = 3 + static_cast<int>(seed % 8);
    const Topology topo = seed % 2 ? Topology::tree() : Topology::cycle();
    const auto lin = generate_linear(n, std::vector<int>(static_cast<std::size_t>(n), 1), topo, seed);
    const auto scaled = posterior_as_gmrf(lin);
    EngineConfig cfg;
    cfg.eta = 1e-13;
    cfg.max_iter = 5000;
    cfg.record_messages = false;
    const auto rl = run(FactorGraphModel(lin), cfg);
    const auto rg = run(FactorGraphModel(scaled.model), cfg);
    if (!rl.converged || !rg.converged) continue;
    ++compared;
    for (int k = 0; k < n; ++k) {
      const double gm = scaled.scale(k) * rg.final_beliefs()[static_cast<std::size_t>(k)].mean(0);
      CHECK(std::abs(rl.final_beliefs()[static_cast<std::size_t>(k)].mean(0) - gm) < 1e-9);
    }
  }
  CHECK(compared >= 15);
}

TEST_CASE("property: message covariance error is non-increasing after the transient") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const FactorGraphModel model(generate_linear(7, {1, 2, 3, 2, 1, 2, 3}, Topology::erdos_renyi(0.5), seed));
    const auto fp = fixed_point_information(model);
    EngineConfig cfg;
    cfg.max_iter = 40;
    cfg.eta = 1e-300;
    const auto r = run(model, cfg);
    std::vector<double> err;
    for (std::size_t l = 1; l < r.messages.size(); ++l) {
      double e = 0.0;
      for (std::size_t k = 0; k < fp.v2f_cov.size(); ++k) {
        e = std::max(e, inf_norm(invert_spd(r.messages[l].v2f[k].info) - fp.v2f_cov[k]));
      }
      err.push_back(e);
    }
    constexpr std::size_t kTransient = 2;
    for (std::size_t l = kTransient + 1; l < err.size(); ++l) CHECK(err[l] <= err[l - 1] + 1e-14);
  }
}

TEST_CASE("threaded execution is bit-identical to sequential") {
  const FactorGraphModel model(generate_linear(12, std::vector<int>(12, 2), Topology::grid(), 3));
  EngineConfig seq;
  seq.max_iter = 30;
  EngineConfig par = seq;
  par.threads = 4;
  const auto a = run(model, seq);
  const auto b = run(model, par);
  REQUIRE(a.iterations == b.iterations);
  for (std::size_t l = 0; l < a.beliefs.size(); ++l) {
    for (std::size_t k = 0; k < a.beliefs[l].size(); ++k) {
      CHECK(testing::bit_equal(a.beliefs[l][k].mean, b.beliefs[l][k].mean));
    }
  }
}
