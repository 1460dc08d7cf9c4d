#include "esbound/qp_solver.hpp"

#include <doctest.h>

#include <random>

using namespace esb;

namespace {

SpMat sparse(const Eigen::MatrixXd& m) { return m.sparseView(); }

QpProblem empty_problem(int n) {
  QpProblem p;
  p.Q.resize(n, n);
  p.c = Eigen::VectorXd::Zero(n);
  p.A.resize(0, n);
  p.b.resize(0);
  p.G.resize(0, n);
  p.h.resize(0);
  p.lb = Eigen::VectorXd::Constant(n, -INFINITY);
  p.ub = Eigen::VectorXd::Constant(n, INFINITY);
  return p;
}

}  // namespace

TEST_CASE("single generator meets a fixed load") {
  // min 0.01 g^2 + 20 g, g = 50: multiplier is minus the marginal cost 21.
  QpProblem p = empty_problem(1);
  p.Q = sparse(Eigen::MatrixXd::Constant(1, 1, 0.02));
  p.c(0) = 20.0;
  p.A = sparse(Eigen::MatrixXd::Ones(1, 1));
  p.b = Eigen::VectorXd::Constant(1, 50.0);
  p.lb(0) = 0.0;
  p.ub(0) = 100.0;
  const QpResult r = InteriorPointQp().solve(p, {});
  REQUIRE(r.ok());
  CHECK(r.x(0) == doctest::Approx(50.0).epsilon(1e-8));
  CHECK(r.y(0) == doctest::Approx(-21.0).epsilon(1e-8));

  // Same as an inequality: -g <= -50 with multiplier +21.
  p.A.resize(0, 1);
  p.b.resize(0);
  p.G = sparse(-Eigen::MatrixXd::Ones(1, 1));
  p.h = Eigen::VectorXd::Constant(1, -50.0);
  const QpResult q = InteriorPointQp().solve(p, {});
  REQUIRE(q.ok());
  CHECK(q.x(0) == doctest::Approx(50.0).epsilon(1e-8));
  CHECK(q.z(0) == doctest::Approx(21.0).epsilon(1e-8));
}

TEST_CASE("small linear program with a known vertex") {
  // max x + y  s.t. x + 2y <= 4, 3x + y <= 6, x, y >= 0  -> (1.6, 1.2), duals (0.4, 0.2).
  QpProblem p = empty_problem(2);
  p.c << -1.0, -1.0;
  Eigen::MatrixXd G(2, 2);
  G << 1, 2, 3, 1;
  p.G = sparse(G);
  p.h = Eigen::Vector2d(4.0, 6.0);
  p.lb.setZero();
  const QpResult r = InteriorPointQp().solve(p, {});
  REQUIRE(r.ok());
  CHECK(r.x(0) == doctest::Approx(1.6).epsilon(1e-7));
  CHECK(r.x(1) == doctest::Approx(1.2).epsilon(1e-7));
  CHECK(r.z(0) == doctest::Approx(0.4).epsilon(1e-7));
  CHECK(r.z(1) == doctest::Approx(0.2).epsilon(1e-7));
  CHECK(r.objective == doctest::Approx(-2.8).epsilon(1e-8));
}

TEST_CASE("equality-constrained QP matches a dense KKT solve") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> N;
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 8, m = 3;
    Eigen::MatrixXd L(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) L(i, j) = N(rng);
    const Eigen::MatrixXd Q = L * L.transpose() + Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd A(m, n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = N(rng);
    Eigen::VectorXd c(n), b(m);
    for (int i = 0; i < n; ++i) c(i) = N(rng);
    for (int i = 0; i < m; ++i) b(i) = N(rng);

    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + m, n + m);
    K.topLeftCorner(n, n) = Q;
    K.topRightCorner(n, m) = A.transpose();
    K.bottomLeftCorner(m, n) = A;
    Eigen::VectorXd rhs(n + m);
    rhs << -c, b;
    const Eigen::VectorXd sol = K.fullPivLu().solve(rhs);

    QpProblem p = empty_problem(n);
    p.Q = sparse(Q);
    p.c = c;
    p.A = sparse(A);
    p.b = b;
    const QpResult r = InteriorPointQp().solve(p, {});
    REQUIRE(r.ok());
    CHECK((r.x - sol.head(n)).cwiseAbs().maxCoeff() < 1e-7);
    CHECK((r.y - sol.tail(m)).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("random bounded QPs satisfy the KKT conditions") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> N;
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 12, mi = 6, me = 2;
    QpProblem p = empty_problem(n);
    Eigen::VectorXd diag(n);
    for (int i = 0; i < n; ++i) diag(i) = U(rng) < 0.3 ? 0.0 : U(rng);
    p.Q = sparse(Eigen::MatrixXd(diag.asDiagonal()));
    for (int i = 0; i < n; ++i) p.c(i) = 5.0 * N(rng);
    Eigen::MatrixXd G(mi, n), A(me, n);
    for (int i = 0; i < mi; ++i)
      for (int j = 0; j < n; ++j) G(i, j) = N(rng);
    for (int i = 0; i < me; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = N(rng);
    const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(n, 0.5);
    p.G = sparse(G);
    p.h = G * x0 + Eigen::VectorXd::Constant(mi, 1.0);
    p.A = sparse(A);
    p.b = A * x0;
    p.lb.setZero();
    p.ub.setOnes();
    const QpResult r = InteriorPointQp().solve(p, {});
    REQUIRE(r.ok());
    const Eigen::VectorXd grad = Eigen::MatrixXd(p.Q) * r.x + p.c + A.transpose() * r.y +
                                 G.transpose() * r.z - r.zl + r.zu;
    CHECK(grad.cwiseAbs().maxCoeff() < 1e-6);
    CHECK((A * r.x - p.b).cwiseAbs().maxCoeff() < 1e-7);
    CHECK((G * r.x - p.h).maxCoeff() < 1e-7);
    CHECK(r.z.minCoeff() >= -1e-9);
    CHECK((r.z.array() * (p.h - G * r.x).array()).abs().maxCoeff() < 1e-6);
    CHECK((r.zl.array() * r.x.array()).abs().maxCoeff() < 1e-6);
    CHECK((r.zu.array() * (1.0 - r.x.array())).abs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("infeasible problems are reported") {
  QpProblem p = empty_problem(1);
  p.c(0) = 1.0;
  p.lb(0) = 0.0;
  p.ub(0) = 100.0;
  p.G = sparse(-Eigen::MatrixXd::Ones(1, 1));
  p.h = Eigen::VectorXd::Constant(1, -150.0);
  const QpResult r = InteriorPointQp().solve(p, {});
  CHECK(r.status == QpStatus::primal_infeasible);
  CHECK_FALSE(r.ok());
}

TEST_CASE("fixed variables are handled") {
  QpProblem p = empty_problem(2);
  p.c << 1.0, 2.0;
  p.lb << 3.0, 0.0;
  p.ub << 3.0, 5.0;
  p.A = sparse(Eigen::RowVector2d(1.0, 1.0));
  p.b = Eigen::VectorXd::Constant(1, 4.0);
  const QpResult r = InteriorPointQp().solve(p, {});
  REQUIRE(r.ok());
  CHECK(r.x(0) == doctest::Approx(3.0));
  CHECK(r.x(1) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(r.y(0) == doctest::Approx(-2.0).epsilon(1e-7));
}

TEST_CASE("a sliver of a bound range is treated as fixed") {
  // Two supply segments for a load of 50, one only 1e-13 wide.
  QpProblem p = empty_problem(2);
  p.c << 10.0, 5.0;
  p.A = sparse(Eigen::MatrixXd::Ones(1, 2));
  p.b = Eigen::VectorXd::Constant(1, 50.0);
  p.lb << 0.0, 0.0;
  p.ub << 100.0, 1.4e-13;
  QpSettings st;
  st.tol = 1e-13;
  st.max_iter = 120;
  const QpResult r = InteriorPointQp().solve(p, st);
  REQUIRE(r.ok());
  CHECK(r.x(0) == doctest::Approx(50.0).epsilon(1e-9));
  CHECK(r.y(0) == doctest::Approx(-10.0).epsilon(1e-9));
}
