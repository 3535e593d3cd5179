#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace persist::expr {

enum class BinOp { Add, Sub, Mul, Div, Pow };
enum class UnaryFn { Exp, Ln, Sin, Cos, Sqrt, Tanh };

const char* unary_fn_name(UnaryFn fn);

// Immutable expression tree. Nodes are shared freely across threads once
// built; nothing mutates them after construction.
struct Node;
using Ast = std::shared_ptr<const Node>;

struct Node {
  enum class Kind { Constant, Variable, Neg, Binary, Call };

  Kind kind;
  double value = 0.0;          // Constant
  std::string name;            // Variable
  BinOp op = BinOp::Add;       // Binary
  UnaryFn fn = UnaryFn::Exp;   // Call
  Ast lhs;                     // Binary left; Neg/Call operand
  Ast rhs;                     // Binary right
};

// Node constructors. These fold constants and eliminate trivial identities
// (0*u, 1*u, u+0, u-0, u/1, u^1, -(-u)); anything more aggressive could
// change domain-error behaviour and is deliberately avoided.
Ast constant(double v);
Ast variable(std::string name);
Ast neg(Ast u);
Ast binary(BinOp op, Ast lhs, Ast rhs);
Ast call(UnaryFn fn, Ast arg);

// Grammar (documented in docs/grammar.md):
//   expression := term (('+'|'-') term)*
//   term       := unary (('*'|'/') unary)*
//   unary      := '-' unary | power
//   power      := primary ('^' unary)?          -- right associative
//   primary    := number | name | name '(' expression ')' | '(' expression ')'
// so precedence is pow > unary minus > mul/div > add/sub.
//
// When `declared` is non-null, identifiers that are not function calls must
// appear in it; otherwise any identifier is accepted as a variable.
Ast parse(std::string_view source, const std::vector<std::string>* declared = nullptr);

// Prints with minimal parentheses; parse(print(a)) is structurally equal
// to a. Doubles are emitted with 17 significant digits.
std::string print(const Ast& a);

// IEEE double evaluation. Throws EvalError on unbound variables and on any
// operation producing a non-finite value (division by zero, ln of a
// non-positive number, 0^negative, overflow, ...).
double eval(const Ast& a, const std::map<std::string, double>& bindings);

// Exact symbolic partial derivative with respect to `var`.
Ast differentiate(const Ast& a, std::string_view var);

bool structurally_equal(const Ast& a, const Ast& b);

// Replaces the named variables by literal constants (used to freeze model
// parameters at load time).
Ast substitute(const Ast& a, const std::map<std::string, double>& consts);

// Collects the distinct variable names appearing in the tree.
std::vector<std::string> variables(const Ast& a);

// Flat postorder program for fast repeated evaluation with positional
// slots. Arithmetic order is identical to eval(), so results are
// bit-identical with it. Immutable after compile; safe to share.
class Tape {
 public:
  // slot_names[i] is the variable bound to slots[i] at evaluation time.
  Tape(const Ast& a, const std::vector<std::string>& slot_names);

  double eval(std::span<const double> slots) const;

 private:
  enum class Op : unsigned char {
    PushConst, PushSlot, Neg, Add, Sub, Mul, Div, Pow,
    Exp, Ln, Sin, Cos, Sqrt, Tanh,
  };
  struct Instr {
    Op op;
    int slot = 0;
    double value = 0.0;
  };
  std::vector<Instr> prog_;
  int max_depth_ = 0;
};

}  // namespace persist::expr
