#include "gabp/convergence.hpp"
#include "gabp/numerics.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

using namespace gabp;

namespace {

double dense_rho_gram(const Matrix& q) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(q * q.transpose());
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

std::vector<FactorGraphModel> loopy_ensemble(int count, std::uint64_t base) {
  std::vector<FactorGraphModel> out;
  for (int k = 0; k < count; ++k) {
    const std::uint64_t seed = base + static_cast<std::uint64_t>(k);
    const int n = 4 + k % 8;
    if (k % 2 == 0) {
      const Topology topo = k % 4 == 0 ? Topology::cycle() : Topology::grid();
      out.emplace_back(generate_gmrf(n, topo, 0.05 + 0.02 * (k % 10), seed));
    } else {
      std::vector<int> dims;
      for (int v = 0; v < n; ++v) dims.push_back(1 + (v + k) % 3);
      out.emplace_back(generate_linear(n, dims, Topology::erdos_renyi(0.4), seed));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("fixed point of the scalar pair") {
  const FactorGraphModel l2(testing::scalar_pair());
  const auto fp = fixed_point_information(l2);
  REQUIRE(fp.v2f_info.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(std::abs(fp.v2f_info[k](0, 0) - 1.0) < 1e-15);
    CHECK(std::abs(fp.f2v_info[k](0, 0) - 0.5) < 1e-15);
  }
}

TEST_CASE("fixed point of the 3-chain") {
  const FactorGraphModel g3(testing::chain3(1, 1, 1));
  const auto fp = fixed_point_information(g3);
  const auto leaf = g3.message_index({1, 2});
  const auto mid = g3.message_index({2, 1});
  CHECK(std::abs(fp.v2f_info[static_cast<std::size_t>(leaf)](0, 0) - (-0.16)) < 1e-15);
  CHECK(std::abs(fp.v2f_info[static_cast<std::size_t>(mid)](0, 0) - (-0.16 / 0.84)) < 1e-15);
  CHECK(fp.residual == 0.0);
}

TEST_CASE("trees settle exactly after diameter + 1 rounds") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const int n = 3 + static_cast<int>(seed);
    const FactorGraphModel tree(generate_linear(n, std::vector<int>(static_cast<std::size_t>(n), 2), Topology::tree(), seed));
    const auto fp = fixed_point_information(tree);
    CHECK(fp.residual == 0.0);
    CHECK(fp.iterations == testing::diameter(tree) + 1);
  }
}

TEST_CASE("a non-convergent information recursion is reported") {
  const FactorGraphModel c4(generate_gmrf(4, Topology::cycle(), 0.6, 2));
  CHECK_THROWS_AS(fixed_point_information(c4), FixedPointNotCertified);
  CHECK_THROWS_AS(fixed_point_information(FactorGraphModel(testing::scalar_pair()), 1e-12, 0), FixedPointNotCertified);
}

TEST_CASE("local Q blocks") {
  SUBCASE("a leaf block is identically zero") {
    const FactorGraphModel g3(testing::chain3(1, 1, 1));
    const auto fp = fixed_point_information(g3);
    const auto q1 = build_local_q(g3, fp, 1);
    CHECK(q1.rows.size() == 1);
    CHECK(q1.block.cwiseAbs().maxCoeff() == 0.0);
    CHECK(local_condition(q1).rho_local == 0.0);
  }
  SUBCASE("3-chain middle node") {
    const FactorGraphModel g3(testing::chain3(1, 1, 1));
    const auto fp = fixed_point_information(g3);
    const auto q2 = build_local_q(g3, fp, 2);
    REQUIRE(q2.rows == std::vector<DirectedPair>{{2, 1}, {2, 3}});
    REQUIRE(q2.cols == std::vector<DirectedPair>{{1, 2}, {3, 2}});
    // Row (2->1) reads only (3->2); the destination's own message is excluded.
    CHECK(std::abs(q2.block(0, 1) - (-0.4 / 0.84)) < 1e-15);
    CHECK(q2.block(0, 0) == 0.0);
    CHECK(std::abs(q2.block(1, 0) - (-0.4 / 0.84)) < 1e-15);
    CHECK(q2.block(1, 1) == 0.0);

    const auto v = local_condition(q2);
    CHECK(std::abs(v.rho_local - dense_rho_gram(q2.block)) < 1e-15);
    CHECK(std::abs(v.rho_local - std::pow(0.4 / 0.84, 2)) < 1e-15);
    CHECK(v.verdict);

    LocalQBlock scaled = q2;
    scaled.block(0, 1) = 10.0;
    CHECK_FALSE(local_condition(scaled).verdict);
  }
}

TEST_CASE("Q blocks only read incident edges") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const FactorGraphModel model(generate_linear(8, {1, 2, 3, 1, 2, 3, 1, 2}, Topology::erdos_renyi(0.4), seed));
    const auto fp = fixed_point_information(model);
    for (NodeId j = 1; j <= model.num_nodes(); ++j) {
      const LocalSlice slice = extract_slice(model, j);
      const LocalView view(slice);
      build_local_q(view, local_fixed_point(model, fp, j));
      const auto nb = model.neighbors(j);
      CHECK_FALSE(view.access_log().empty());
      for (NodeId k : view.access_log()) CHECK(std::find(nb.begin(), nb.end(), k) != nb.end());
    }
  }
  const FactorGraphModel g3(testing::chain3(1, 1, 1));
  const LocalSlice slice = extract_slice(g3, 1);
  const LocalView view(slice);
  CHECK_THROWS_AS(view.edge(3), LocalityError);
}

TEST_CASE("centralized baselines on the 3-chain") {
  const FactorGraphModel g3(testing::chain3(1, 1, 1));
  const auto fp = fixed_point_information(g3);
  const auto c = centralized_condition(g3, fp);
  CHECK(std::abs(c.rho_QQt - std::pow(0.4 / 0.84, 2)) < 1e-12);
  CHECK(c.rho_Q <= std::sqrt(c.rho_QQt) + 1e-12);
  const auto rec = assemble_recursion(g3, fp);
  CHECK(rec.Q.rows() == 4);
}

TEST_CASE("walk-summability") {
  const auto g3 = walk_summability(testing::chain3(0, 0, 0));
  CHECK(std::abs(g3.rho_absR - 0.4 * std::sqrt(2.0)) < 1e-12);
  CHECK(g3.verdict);
  const auto c4 = walk_summability(generate_gmrf(4, Topology::cycle(), 0.6, 2));
  CHECK(std::abs(c4.rho_absR - 1.2) < 1e-12);
  CHECK_FALSE(c4.verdict);
  CHECK_THROWS_AS(walk_summability(FactorGraphModel(testing::scalar_pair())), ModelError);
}

TEST_CASE("certify gathers local and centralized verdicts") {
  const FactorGraphModel g3(testing::chain3(1, 1, 1));
  CertifyOptions opts;
  opts.centralized = true;
  const auto r = certify(g3, opts);
  CHECK(r.local_verdict);
  CHECK(r.nodes.size() == 3);
  REQUIRE(r.rho_QQt.has_value());
  double best = 0.0;
  for (const auto& n : r.nodes) best = std::max(best, n.rho_local);
  CHECK(std::abs(*r.rho_QQt - best) < 1e-12);
  CHECK(r.walk.has_value());
  CHECK(r.from_centralized);
  CHECK_FALSE(certify(g3).rho_Q.has_value());
}

TEST_CASE("property: row blocks of different nodes are orthogonal") {
  for (const auto& model : loopy_ensemble(30, 100)) {
    const auto fp = fixed_point_information(model);
    const auto layout = message_layout(model);
    std::vector<Matrix> rows;
    for (NodeId j = 1; j <= model.num_nodes(); ++j) rows.push_back(expand_rows(build_local_q(model, fp, j), model, layout));
    for (std::size_t a = 0; a < rows.size(); ++a) {
      for (std::size_t b = a + 1; b < rows.size(); ++b) {
        CHECK((rows[a] * rows[b].transpose()).cwiseAbs().maxCoeff() == 0.0);
      }
    }
  }
}

TEST_CASE("property: local and centralized conditions agree") {
  for (const auto& model : loopy_ensemble(30, 200)) {
    const auto fp = fixed_point_information(model);
    double best = 0.0;
    for (NodeId j = 1; j <= model.num_nodes(); ++j) best = std::max(best, local_condition(build_local_q(model, fp, j)).rho_local);
    const auto c = centralized_condition(model, fp);
    CHECK(std::abs(best - c.rho_QQt) <= 1e-10);
    CHECK(c.rho_Q <= std::sqrt(c.rho_QQt) + 1e-10);
  }
}

TEST_CASE("property: stacked recursion reproduces the local blocks") {
  for (const auto& model : loopy_ensemble(10, 300)) {
    const auto fp = fixed_point_information(model);
    const auto layout = message_layout(model);
    const auto rec = assemble_recursion(model, fp);
    CHECK(rec.Q.rows() == layout.total);
    for (NodeId j = 1; j <= model.num_nodes(); ++j) {
      const auto block = build_local_q(model, fp, j);
      const Matrix full = expand_rows(block, model, layout);
      for (std::size_t r = 0; r < block.rows.size(); ++r) {
        const int row = layout.offsets[static_cast<std::size_t>(model.message_index(block.rows[r]))];
        const int local = block.row_offsets[r];
        const int len = (r + 1 < block.rows.size() ? block.row_offsets[r + 1] : static_cast<int>(full.rows())) - local;
        CHECK(testing::bit_equal(rec.Q.middleRows(row, len), full.middleRows(local, len)));
        CHECK(testing::bit_equal(rec.b.segment(row, len), block.offset.segment(local, len)));
      }
    }
  }
}
