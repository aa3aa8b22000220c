#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "confsym/curvature.hpp"
#include "confsym/dsl.hpp"

using namespace confsym;

namespace {
std::string slurp(const std::string& name) {
  std::ifstream in(std::string(CONFSYM_FIXTURES_DIR) + "/" + name);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

GeometryPtr flat3() { return parse_geometry(slurp("flat3.geo")).geometry(); }
GeometryPtr dipirro() { return parse_geometry(slurp("dipirro.geo")).geometry(); }

// seeded random polynomial tensors for property tests
TensorField random_tensor(const GeometryPtr& G, std::vector<bool> up, std::mt19937& rng) {
  std::uniform_int_distribution<int> coeff(-3, 3), pick(0, 2);
  TensorField t(G, up);
  t.for_each_index([&](const std::vector<int>&, std::size_t k) {
    Expr e(static_cast<long>(coeff(rng)));
    for (int m = 0; m < 2; ++m)
      e = e + Expr(static_cast<long>(coeff(rng))) * Expr::coordinate(G->coords()[pick(rng)]);
    t.components()[k] = e;
  });
  return t;
}
}  // namespace

TEST_CASE("antisymmetrize of symmetric tensor vanishes; v^[a w^b]") {
  auto G = flat3();
  std::mt19937 rng(5);
  TensorField s = symmetrize(random_tensor(G, {true, true}, rng), {0, 1});
  CHECK(antisymmetrize(s, {0, 1}).is_zero());

  TensorField v(G, {true}), w(G, {true});
  v.at({0}) = Expr(1L);
  w.at({1}) = Expr(1L);
  TensorField vw = antisymmetrize(outer(v, w), {0, 1});
  CHECK((vw.at({0, 1}) - Expr::rational(1, 2)).is_zero());
  CHECK((vw.at({1, 0}) + Expr::rational(1, 2)).is_zero());
  // idempotence
  CHECK((antisymmetrize(vw, {0, 1}) - vw).is_zero());
  CHECK((symmetrize(s, {0, 1}) - s).is_zero());
}

TEST_CASE("raise then lower restores a tensor, weight included") {
  auto G = dipirro();
  std::mt19937 rng(11);
  TensorField t = random_tensor(G, {false, true}, rng);
  TensorField rt = lower_slot(raise_slot(t, 0), 0);
  CHECK((rt - t).is_zero());
  CHECK(rt.weight() == t.weight());
  // raising both slots of g_ab yields the inverse metric components, weight 2*(2/n)
  TensorField g(G, {false, false});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) g.at({i, j}) = G->metric(i, j);
  TensorField up = raise_slot(raise_slot(g, 0), 1);
  CHECK(up.weight() == Rational(4, 3));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK((up.at({i, j}) - G->inverse_metric(i, j)).is_zero());
}

TEST_CASE("trace-free projection") {
  auto G = flat3();
  // Pi0(g^{ab}) = 0
  TensorField gup(G, {true, true});
  for (int i = 0; i < 3; ++i) gup.at({i, i}) = Expr(1L);
  CHECK(tracefree_project(gup, {0, 1}).is_zero());
  // orthogonal v, w: Pi0(v^(a w^b)) unchanged
  TensorField v(G, {true}), w(G, {true});
  v.at({0}) = Expr(1L);
  w.at({1}) = Expr(1L);
  TensorField sym = symmetrize(outer(v, w), {0, 1});
  CHECK((tracefree_project(sym, {0, 1}) - sym).is_zero());
  // reconstruction of a random rank-2 tensor: S = Pi0 S + (TrS/3) g
  std::mt19937 rng(17);
  TensorField S = symmetrize(random_tensor(G, {true, true}, rng), {0, 1});
  TensorField S0 = tracefree_project(S, {0, 1});
  Expr tr;
  for (int i = 0; i < 3; ++i) tr = tr + S.at({i, i});
  TensorField rec = S0;
  for (int i = 0; i < 3; ++i) rec.at({i, i}) = rec.at({i, i}) + tr / 3;
  CHECK((rec - S).is_zero());
  // rank-3 projection has all traces zero, and reconstruction holds
  TensorField T = symmetrize_all(random_tensor(G, {true, true, true}, rng));
  TensorField T0 = tracefree_project(T, {0, 1, 2});
  for (int c = 0; c < 3; ++c) {
    Expr t01;
    for (int i = 0; i < 3; ++i) t01 = t01 + T0.at({i, i, c});
    CHECK(t01.is_zero());
  }
  CHECK_THROWS_AS(tracefree_project(random_tensor(G, {true, true, true, true}, rng), {0, 1, 2, 3}),
                  Error);
}

TEST_CASE("covariant derivative basics") {
  auto G = dipirro();
  // metric compatibility: nabla g = 0
  TensorField g(G, {false, false});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) g.at({i, j}) = G->metric(i, j);
  CHECK(covariant_derivative(g).is_zero());
  // scalar gradient
  Expr f = Expr::function("a", {"x1", "x2"});
  TensorField grad = covariant_derivative(TensorField::scalar(G, f));
  CHECK((grad.at({0}) - f.diff("x1")).is_zero());
  CHECK((grad.at({1}) - f.diff("x2")).is_zero());
  CHECK(grad.at({2}).is_zero());
}

TEST_CASE("commutator reproduces the curvature convention") {
  // [nabla_a, nabla_b] v^c = R_ab^c_d v^d on the Di Pirro geometry, abstract v
  auto spec = parse_geometry(
      "manifold { dim = 3; coords = [x1, x2, x3]; }\n"
      "functions { a(x1,x2); b(x1,x2); c(x3); gamma(x1,x2);"
      "  v1(x1,x2,x3); v2(x1,x2,x3); v3(x1,x2,x3); }\n"
      "metric g { g[1,1] = 2*(gamma + c)/a; g[2,2] = 2*(gamma + c)/b; g[3,3] = 2*(gamma + c); }");
  auto G = spec.geometry();
  TensorField v(G, {true});
  const char* names[] = {"v1", "v2", "v3"};
  for (int i = 0; i < 3; ++i) v.at({i}) = Expr::function(names[i], {"x1", "x2", "x3"});
  TensorField DDv = covariant_derivative(covariant_derivative(v));  // (a, b; c)
  const TensorField& R = riemann(G);
  bool ok = true;
  for (int a = 0; a < 3 && ok; ++a)
    for (int b = 0; b < 3 && ok; ++b)
      for (int c = 0; c < 3 && ok; ++c) {
        Expr lhs = DDv.at({a, b, c}) - DDv.at({b, a, c});
        Expr rhs;
        for (int d = 0; d < 3; ++d) rhs = rhs + R.at({a, b, c, d}) * v.at({d});
        ok = (lhs - rhs).is_zero();
      }
  CHECK(ok);
}

TEST_CASE("leibniz and trace-commutation for covariant derivatives") {
  auto G = dipirro();
  std::mt19937 rng(23);
  TensorField t = random_tensor(G, {true}, rng);
  TensorField s = random_tensor(G, {false}, rng);
  // nabla(t x s) = nabla t x s + t x nabla s   (free slot placement first)
  TensorField lhs = covariant_derivative(outer(t, s));
  TensorField r1 = covariant_derivative(t);  // (a; up)
  TensorField r2 = covariant_derivative(s);  // (a; dn)
  bool ok = true;
  for (int a = 0; a < 3 && ok; ++a)
    for (int i = 0; i < 3 && ok; ++i)
      for (int j = 0; j < 3 && ok; ++j)
        ok = (lhs.at({a, i, j}) - r1.at({a, i}) * s.at({j}) - t.at({i}) * r2.at({a, j})).is_zero();
  CHECK(ok);
  // trace commutes with nabla
  TensorField ts = outer(t, s);
  TensorField tr_first = contract(ts, 0, 1);  // scalar
  TensorField lhs2 = covariant_derivative(tr_first);
  TensorField rhs2 = contract(covariant_derivative(ts), 1, 2);
  CHECK((lhs2 - rhs2).is_zero());
}
