#include "gabp/model_io.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <filesystem>
#include <string>

using namespace gabp;

namespace {

bool same_model(const FactorGraphModel& a, const FactorGraphModel& b) {
  if (a.kind() != b.kind() || a.num_nodes() != b.num_nodes() || a.edges() != b.edges()) return false;
  if (a.is_gmrf()) {
    return testing::bit_equal(a.gmrf().dense_J(), b.gmrf().dense_J()) &&
           testing::bit_equal(a.gmrf().h, b.gmrf().h);
  }
  const auto& la = a.linear();
  const auto& lb = b.linear();
  for (std::size_t k = 0; k < la.nodes.size(); ++k) {
    if (la.nodes[k].dim != lb.nodes[k].dim || !testing::bit_equal(la.nodes[k].prior_cov, lb.nodes[k].prior_cov)) {
      return false;
    }
  }
  for (std::size_t k = 0; k < la.edges.size(); ++k) {
    const auto& x = la.edges[k];
    const auto& y = lb.edges[k];
    if (!testing::bit_equal(x.A_ji, y.A_ji) || !testing::bit_equal(x.A_ij, y.A_ij) ||
        !testing::bit_equal(x.noise_cov, y.noise_cov) || !testing::bit_equal(x.y, y.y)) {
      return false;
    }
  }
  return true;
}

std::string error_of(const std::string& text) {
  try {
    model_from_json(text);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("doubles are written with 17 significant digits") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(1.0) == "1");
  CHECK_THROWS_AS(format_double(std::nan("")), ParseError);
}

TEST_CASE("save then load reproduces models bit for bit") {
  const auto dir = std::filesystem::temp_directory_path();
  const FactorGraphModel g3(generate_gmrf(3, Topology::chain(), 0.4, 7));
  save_model(g3, dir / "gabp_g3.json");
  CHECK(same_model(g3, load_model(dir / "gabp_g3.json")));

  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const FactorGraphModel lin(generate_linear(6, {1, 2, 3, 1, 2, 3}, Topology::erdos_renyi(0.5), seed));
    const FactorGraphModel back = model_from_json(model_to_json(lin));
    CHECK(same_model(lin, back));
    CHECK(model_to_json(back) == model_to_json(lin));
    CHECK(model_digest(back) == model_digest(lin));
    const FactorGraphModel gm(generate_gmrf(7, Topology::grid(), 0.05 * static_cast<double>(seed), seed));
    CHECK(same_model(gm, model_from_json(model_to_json(gm))));
  }
}

TEST_CASE("parse errors name the field and location") {
  const std::string base_nodes =
      R"("nodes": [{"id": 1, "dim": 1, "W": [1]}, {"id": 2, "dim": 2, "W": [1,0,0,1]}])";
  SUBCASE("coefficient inconsistent with the node dimension") {
    const auto err = error_of(R"({"kind": "linear", )" + base_nodes +
                              R"(, "edges": [{"i": 1, "j": 2, "A_ji": [1], "A_ij": [1], "R": [1], "y": [1]}]})");
    CHECK(err.find("dimension mismatch edge (1,2)") != std::string::npos);
    CHECK(err.find("A_ij") != std::string::npos);
  }
  SUBCASE("missing observation") {
    const auto err = error_of(R"({"kind": "linear", )" + base_nodes +
                              R"(, "edges": [{"i": 1, "j": 2, "A_ji": [1], "A_ij": [1, 1], "R": [1]}]})");
    CHECK(err.find("missing observation") != std::string::npos);
  }
  SUBCASE("non-symmetric J") {
    const auto err = error_of(R"({"kind": "gmrf", "n": 2, "J": [[1,1,1],[2,2,1],[1,2,-0.3]], "h": [0, 0]})");
    CHECK(err.find("non-symmetric") != std::string::npos);
  }
  SUBCASE("malformed documents") {
    CHECK(error_of("{").find("malformed JSON") != std::string::npos);
    CHECK(error_of(R"({"kind": "tensor"})").find("unknown kind") != std::string::npos);
    CHECK(error_of(R"({"kind": "gmrf", "n": 2, "J": [], "h": [0]})").find("dimension mismatch h") !=
          std::string::npos);
    CHECK(error_of(R"({"kind": "linear", "edges": []})").find("'nodes'") != std::string::npos);
  }
}
