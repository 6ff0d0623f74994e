#include "gabp/oracle.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace gabp;

TEST_CASE("identity GMRF marginals") {
  GmrfModel g;
  g.n = 4;
  g.J = Matrix::Identity(4, 4).sparseView();
  g.h = Vector::Ones(4);
  const auto post = exact_gmrf(g);
  for (int k = 0; k < 4; ++k) {
    CHECK(post.means[static_cast<std::size_t>(k)](0) == doctest::Approx(1.0));
    CHECK(post.covs[static_cast<std::size_t>(k)](0, 0) == doctest::Approx(1.0));
  }
}

TEST_CASE("chain GMRF matches an LU solve") {
  const GmrfModel g = testing::chain3(0.3, -0.7, 0.2);
  const auto post = exact_gmrf(g);
  const Vector lu = g.dense_J().partialPivLu().solve(g.h);
  const Matrix inv = g.dense_J().partialPivLu().inverse();
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(post.means[static_cast<std::size_t>(k)](0) - lu(k)) < 1e-14);
    CHECK(std::abs(post.covs[static_cast<std::size_t>(k)](0, 0) - inv(k, k)) < 1e-14);
  }
}

TEST_CASE("indefinite GMRF is improper") {
  // Eigenvalues of I - 0.6 * C4 include 1 - 1.2 < 0.
  CHECK_THROWS_AS(exact_gmrf(generate_gmrf(4, Topology::cycle(), 0.6, 1)), ImproperModel);
}

TEST_CASE("scalar pair posterior") {
  const auto post = exact_linear(testing::scalar_pair());
  Matrix J(2, 2);
  J << 2, 1, 1, 2;
  CHECK((post.info - J).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((post.potential - Vector::Ones(2)).cwiseAbs().maxCoeff() < 1e-15);
  // [[2,1],[1,2]]^{-1} (1,1) = (1/3, 1/3).
  CHECK(std::abs(post.means[0](0) - 1.0 / 3) < 1e-15);
  CHECK(std::abs(post.means[1](0) - 1.0 / 3) < 1e-15);
}

TEST_CASE("a node without edges keeps its prior") {
  LinearGaussianModel m;
  Matrix W(2, 2);
  W << 2, 0.5, 0.5, 1;
  m.nodes.push_back({1, 2, W});
  const auto post = exact_linear(m);
  CHECK(post.means[0].norm() == 0.0);
  CHECK((post.covs[0] - W).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("property: posterior residual and GMRF rewrite agree") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const int n = 3 + static_cast<int>(seed % 7);
    const auto lin = generate_linear(n, std::vector<int>(static_cast<std::size_t>(n), 1), Topology::erdos_renyi(0.5), seed);
    const auto post = exact_linear(lin);
    Vector mean(n);
    for (int k = 0; k < n; ++k) mean(k) = post.means[static_cast<std::size_t>(k)](0);
    CHECK((post.info * mean - post.potential).norm() <= 1e-10 * post.potential.norm());

    const auto scaled = posterior_as_gmrf(lin);
    CHECK(validate(FactorGraphModel(scaled.model)).ok());
    const auto gpost = exact_gmrf(scaled.model);
    for (int k = 0; k < n; ++k) {
      const double back = scaled.scale(k) * gpost.means[static_cast<std::size_t>(k)](0);
      CHECK(std::abs(back - mean(k)) <= 1e-12 * std::max(1.0, std::abs(mean(k))));
    }
  }
}
