#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

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
}  // namespace

TEST_CASE("flat fixture parses") {
  auto spec = parse_geometry(slurp("flat3.geo"));
  CHECK(spec.n == 3);
  CHECK(spec.coords == std::vector<std::string>{"x1", "x2", "x3"});
  auto G = spec.geometry();
  CHECK((G->det() - 1).is_zero());
  CHECK(spec.symbols.count("K12") == 1);
  CHECK((spec.symbol("K12").components().at({0, 1}) - 1).is_zero());
  CHECK((spec.symbol("K12").components().at({1, 0}) - 1).is_zero());
}

TEST_CASE("di pirro fixture matches the inverse Hamiltonian") {
  auto spec = parse_geometry(slurp("dipirro.geo"));
  auto G = spec.geometry();
  Expr a = Expr::function("a", {"x1", "x2"});
  Expr c = Expr::function("c", {"x3"});
  Expr ga = Expr::function("gamma", {"x1", "x2"});
  CHECK((G->metric(0, 0) - 2 * (ga + c) / a).is_zero());
  CHECK((G->inverse_metric(0, 0) - a / (2 * (ga + c))).is_zero());
  CHECK((G->inverse_metric(2, 2) - Expr(1L) / (2 * (ga + c))).is_zero());
}

TEST_CASE("expression parser handles paper forms") {
  auto spec = parse_geometry(slurp("dipirro.geo"));
  Expr e = parse_expr("c(x3)*a(x1,x2)/(gamma(x1,x2)+c(x3))", spec);
  CHECK((e - spec.symbol("K").components().at({0, 0})).is_zero());
  Expr r = parse_expr("x1^2 + 1/2", spec);
  Expr x1 = Expr::coordinate("x1");
  CHECK((r - x1 * x1 - Expr::rational(1, 2)).is_zero());
  // bare function names resolve against declarations
  Expr h = parse_expr("1/(2*(gamma+c))", spec);
  CHECK((h - spec.scalars.at("hatfactor")).is_zero());
}

TEST_CASE("log atom parses") {
  auto spec = parse_geometry(slurp("stackel.geo"));
  Expr e = parse_expr("log(u(x2)+v(x3))", spec);
  Expr u = Expr::function("u", {"x2"});
  Expr v = Expr::function("v", {"x3"});
  CHECK((e - Expr::log(u + v)).is_zero());
}

TEST_CASE("error paths carry positions") {
  std::string bad = "manifold { dim = 3; coords = [x1, x2, x3]; }\nmetric g { g[1,1] = w(x1); }";
  try {
    parse_geometry(bad);
    FAIL("expected UndeclaredSymbol");
  } catch (const Error& err) {
    CHECK(err.code() == Errc::UndeclaredSymbol);
    CHECK(std::string(err.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(
      parse_geometry("manifold { dim = 2; coords = [x1, x2]; }\nmetric g { g[1,1]=1; g[2,2]=1; }"),
      Error);
  std::string degen =
      "manifold { dim = 3; coords = [x1, x2, x3]; }\nmetric g { g[1,1] = 1; g[2,2] = 1; }";
  try {
    parse_geometry(degen);
    FAIL("expected DegenerateMetric");
  } catch (const Error& err) {
    CHECK(err.code() == Errc::DegenerateMetric);
  }
  // parser is total: any input yields a diagnostic, never a crash
  CHECK_THROWS_AS(parse_geometry("]]]]"), Error);
  CHECK_THROWS_AS(parse_geometry(""), Error);
  CHECK_THROWS_AS(
      parse_geometry("manifold { dim = 3; coords = [x1,x2,x3]; } metric g { g[4,1]=1; }"), Error);
}

TEST_CASE("round trip: parse(print(spec)) component-equal") {
  for (const char* f : {"flat3.geo", "dipirro.geo", "stackel.geo", "minkowski_reduction.geo",
                        "lemma_product.geo", "conformally_flat3.geo", "cubicflat3.geo"}) {
    auto spec = parse_geometry(slurp(f));
    auto spec2 = parse_geometry(print_geometry(spec));
    REQUIRE(spec2.n == spec.n);
    for (size_t i = 0; i < spec.metric.size(); ++i)
      CHECK((spec.metric[i] - spec2.metric[i]).is_zero());
    for (auto& [name, sd] : spec.symbols) {
      auto& sd2 = spec2.symbols.at(name);
      for (size_t i = 0; i < sd.comps.size(); ++i) CHECK((sd.comps[i] - sd2.comps[i]).is_zero());
    }
  }
}

TEST_CASE("all shipped fixtures parse") {
  for (const char* f : {"flat3.geo", "flat4.geo", "dipirro.geo", "stackel.geo",
                        "minkowski_reduction.geo", "lemma_product.geo", "conformally_flat3.geo",
                        "polar3.geo", "sphere_stereo3.geo", "cubicflat3.geo"}) {
    CHECK_NOTHROW(parse_geometry(slurp(f)));
  }
}
