#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <bit>
#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "persist/error.hpp"
#include "persist/expr.hpp"

using namespace persist;
using namespace persist::expr;

namespace {

Ast p(const std::string& s) { return parse(s); }

double ev(const Ast& a, const std::map<std::string, double>& b) { return eval(a, b); }

}  // namespace

TEST_CASE("parse produces the expected tree shapes") {
  // x1*(1 - x1) = Mul(Var x1, Sub(1, x1))
  const Ast a = p("x1*(1 - x1)");
  REQUIRE(a->kind == Node::Kind::Binary);
  CHECK(a->op == BinOp::Mul);
  CHECK(a->lhs->kind == Node::Kind::Variable);
  CHECK(a->lhs->name == "x1");
  REQUIRE(a->rhs->kind == Node::Kind::Binary);
  CHECK(a->rhs->op == BinOp::Sub);
  CHECK(a->rhs->lhs->value == 1.0);

  // -x1 + eps = Add(Neg(x1), eps)
  const Ast b = p("-x1 + eps");
  REQUIRE(b->kind == Node::Kind::Binary);
  CHECK(b->op == BinOp::Add);
  CHECK(b->lhs->kind == Node::Kind::Neg);
  CHECK(b->lhs->lhs->name == "x1");
  CHECK(b->rhs->name == "eps");
}

TEST_CASE("parse errors carry byte offsets") {
  try {
    p("x1^^2");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 3);
  }
  try {
    p("1 + (2*");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 7);
  }
  CHECK_THROWS_AS(p(""), ParseError);
  CHECK_THROWS_AS(p("1 2"), ParseError);
  CHECK_THROWS_AS(p("foo(x1)"), ParseError);   // unknown function
  CHECK_THROWS_AS(p("(x1"), ParseError);
  CHECK_THROWS_AS(p("x1 +"), ParseError);
}

TEST_CASE("declared-variable context rejects unknown names") {
  const std::vector<std::string> declared = {"x1", "x2", "eps"};
  CHECK_NOTHROW(parse("x1 + x2*eps", &declared));
  CHECK_THROWS_AS(parse("x1 + y", &declared), ParseError);
  CHECK_NOTHROW(parse("x1 + y"));  // without a context any identifier is fine
}

TEST_CASE("precedence: pow > unary minus > mul/div > add/sub") {
  // -x1^2 is -(x1^2)
  const Ast a = p("-x1^2");
  CHECK(a->kind == Node::Kind::Neg);
  CHECK(a->lhs->op == BinOp::Pow);
  // -x1*x2 is (-x1)*x2
  const Ast b = p("-x1*x2");
  CHECK(b->op == BinOp::Mul);
  CHECK(b->lhs->kind == Node::Kind::Neg);
  // pow is right associative
  CHECK(ev(p("2^3^2"), {}) == 512.0);
  // exponent may carry a unary minus
  CHECK(ev(p("2^-2"), {}) == 0.25);
  // 1 - 2 - 3 associates left
  CHECK(ev(p("1 - 2 - 3"), {}) == -4.0);
}

TEST_CASE("eval matches the documented examples") {
  CHECK(ev(p("-x1 + eps"), {{"x1", 2.0}, {"eps", 0.5}}) == -1.5);
  CHECK(ev(p("x1*(1 - x1)"), {{"x1", 1.0}}) == 0.0);
  CHECK(ev(p("exp(0)"), {}) == 1.0);
  CHECK(ev(p("sqrt(2)"), {}) == doctest::Approx(std::sqrt(2.0)));
  CHECK(ev(p("tanh(1)"), {}) == doctest::Approx(std::tanh(1.0)));
}

TEST_CASE("domain violations raise instead of returning NaN") {
  CHECK_THROWS_AS(ev(p("ln(x1)"), {{"x1", 0.0}}), EvalError);
  CHECK_THROWS_AS(ev(p("ln(x1)"), {{"x1", -1.0}}), EvalError);
  CHECK_THROWS_AS(ev(p("1/x1"), {{"x1", 0.0}}), EvalError);
  CHECK_THROWS_AS(ev(p("x1^-1"), {{"x1", 0.0}}), EvalError);  // 0^negative
  CHECK_THROWS_AS(ev(p("sqrt(0 - x1)"), {{"x1", 1.0}}), EvalError);
  CHECK_THROWS_AS(ev(p("exp(x1)"), {{"x1", 1000.0}}), EvalError);  // overflow
  CHECK_THROWS_AS(ev(p("(0-2)^x1"), {{"x1", 0.5}}), EvalError);    // NaN from pow
  CHECK_THROWS_AS(ev(p("x1 + x2"), {{"x1", 1.0}}), EvalError);     // unbound
}

TEST_CASE("eval is deterministic bit for bit") {
  const Ast a = p("sin(x1)*exp(x1/3) + sqrt(x1 + 2)^2 - tanh(x1)");
  const std::map<std::string, double> b = {{"x1", 0.7368}};
  const double r1 = ev(a, b);
  const double r2 = ev(a, b);
  CHECK(std::bit_cast<std::uint64_t>(r1) == std::bit_cast<std::uint64_t>(r2));
}

TEST_CASE("differentiate: documented examples") {
  CHECK(structurally_equal(differentiate(p("x1*x2"), "x1"), p("x2")));
  CHECK(structurally_equal(differentiate(p("x1*(1 - x1)"), "eps"), constant(0.0)));

  // d/dx1 x1*(1-x1) = 1 - 2 x1 up to simplification; compare by value
  const Ast d = differentiate(p("x1*(1 - x1)"), "x1");
  for (double x : {-1.0, 0.0, 0.3, 1.0, 2.5})
    CHECK(ev(d, {{"x1", x}}) == doctest::Approx(1.0 - 2.0 * x).epsilon(1e-12));
}

TEST_CASE("differentiate: function and power rules") {
  // general power rule with non-constant exponent
  const Ast d = differentiate(p("x1^x2"), "x1");
  CHECK(ev(d, {{"x1", 2.0}, {"x2", 3.0}}) == doctest::Approx(12.0).epsilon(1e-12));
  const Ast de = differentiate(p("x1^x2"), "x2");
  CHECK(ev(de, {{"x1", 2.0}, {"x2", 3.0}}) ==
        doctest::Approx(8.0 * std::log(2.0)).epsilon(1e-12));

  struct Case {
    const char* src;
    std::function<double(double)> dfdx;
  };
  const Case cases[] = {
      {"exp(2*x1)", [](double x) { return 2.0 * std::exp(2.0 * x); }},
      {"ln(x1)", [](double x) { return 1.0 / x; }},
      {"sin(x1)", [](double x) { return std::cos(x); }},
      {"cos(x1)", [](double x) { return -std::sin(x); }},
      {"sqrt(x1)", [](double x) { return 0.5 / std::sqrt(x); }},
      {"tanh(x1)", [](double x) { return 1.0 - std::pow(std::tanh(x), 2); }},
      {"x1/(1 + x1)", [](double x) { return 1.0 / ((1.0 + x) * (1.0 + x)); }},
  };
  for (const auto& c : cases) {
    const Ast d2 = differentiate(p(c.src), "x1");
    for (double x : {0.3, 0.9, 1.7})
      CHECK(ev(d2, {{"x1", x}}) == doctest::Approx(c.dfdx(x)).epsilon(1e-10));
  }
}

TEST_CASE("round-trip: parse(print(ast)) is structurally identical") {
  std::mt19937 rng(20240811);
  const std::vector<std::string> vars = {"x1", "x2", "eps"};
  for (int i = 0; i < 500; ++i) {
    const Ast a = oracles::random_ast(rng, vars, 4);
    const Ast back = parse(print(a));
    CHECK(structurally_equal(a, back));
  }
  // explicit corner: negative constants in every operand position
  for (const char* s : {"(-2)^x1", "x1^-2", "x1*-1.5", "x1 + -1.5", "-(-x1)", "-(x1*x2)"}) {
    const Ast a = p(s);
    CHECK(structurally_equal(a, parse(print(a))));
  }
}

TEST_CASE("derivatives agree with central finite differences") {
  std::mt19937 rng(987654321);
  const std::vector<std::string> vars = {"x1", "x2", "x3"};
  std::uniform_real_distribution<double> bind(0.2, 2.0);
  int checked = 0;
  while (checked < 300) {
    const Ast a = oracles::random_ast(rng, vars, 4);
    std::map<std::string, double> at;
    for (const auto& v : vars) at[v] = bind(rng);
    const std::string var = vars[checked % vars.size()];
    double sym;
    try {
      sym = ev(differentiate(a, var), at);
    } catch (const EvalError&) {
      continue;  // derivative hits a domain edge at this point; resample
    }
    double fd;
    try {
      fd = oracles::central_diff(
          [&](double x) {
            auto b = at;
            b[var] = x;
            return ev(a, b);
          },
          at.at(var));
    } catch (const EvalError&) {
      continue;
    }
    if (!std::isfinite(fd)) continue;
    CHECK(std::abs(sym - fd) <= 1e-6 * (1.0 + std::abs(sym)));
    ++checked;
  }
  CHECK(checked == 300);
}

TEST_CASE("tape evaluation is bit-identical to tree evaluation") {
  std::mt19937 rng(555);
  const std::vector<std::string> vars = {"x1", "x2", "eps"};
  std::uniform_real_distribution<double> bind(0.2, 2.0);
  for (int i = 0; i < 200; ++i) {
    const Ast a = oracles::random_ast(rng, vars, 4);
    const double x1 = bind(rng), x2 = bind(rng), eps = bind(rng);
    double tree;
    try {
      tree = ev(a, {{"x1", x1}, {"x2", x2}, {"eps", eps}});
    } catch (const EvalError&) {
      continue;
    }
    const Tape tape(a, vars);
    const double slots[3] = {x1, x2, eps};
    const double flat = tape.eval(slots);
    CHECK(std::bit_cast<std::uint64_t>(tree) == std::bit_cast<std::uint64_t>(flat));
  }
}

TEST_CASE("conservative simplification only") {
  // identities fold
  CHECK(structurally_equal(binary(BinOp::Mul, constant(1.0), variable("x1")), variable("x1")));
  CHECK(structurally_equal(binary(BinOp::Add, variable("x1"), constant(0.0)), variable("x1")));
  CHECK(structurally_equal(binary(BinOp::Mul, constant(0.0), variable("x1")), constant(0.0)));
  // constant folding keeps domain errors for evaluation time
  const Ast div0 = binary(BinOp::Div, constant(1.0), constant(0.0));
  CHECK(div0->kind == Node::Kind::Binary);
  CHECK_THROWS_AS(ev(div0, {}), EvalError);
  // ... and folds valid constants
  CHECK(structurally_equal(binary(BinOp::Add, constant(1.0), constant(2.0)), constant(3.0)));
}
