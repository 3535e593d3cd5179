#include "persist/expr.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <set>

#include "persist/error.hpp"

namespace persist::expr {

namespace {

const char* op_symbol(BinOp op) {
  switch (op) {
    case BinOp::Add: return "+";
    case BinOp::Sub: return "-";
    case BinOp::Mul: return "*";
    case BinOp::Div: return "/";
    case BinOp::Pow: return "^";
  }
  return "?";
}

// Domain-checked arithmetic shared by eval() and Tape::eval(); identical
// operation order keeps the two paths bit-identical.
double checked_binary(BinOp op, double a, double b) {
  double r = 0.0;
  switch (op) {
    case BinOp::Add: r = a + b; break;
    case BinOp::Sub: r = a - b; break;
    case BinOp::Mul: r = a * b; break;
    case BinOp::Div:
      if (b == 0.0) throw EvalError("division by zero");
      r = a / b;
      break;
    case BinOp::Pow:
      if (a == 0.0 && b < 0.0) throw EvalError("0 raised to a negative power");
      r = std::pow(a, b);
      break;
  }
  if (!std::isfinite(r))
    throw EvalError(std::string("non-finite result from '") + op_symbol(op) + "'");
  return r;
}

double checked_call(UnaryFn fn, double x) {
  double r = 0.0;
  switch (fn) {
    case UnaryFn::Exp: r = std::exp(x); break;
    case UnaryFn::Ln:
      if (x <= 0.0) throw EvalError("ln of a non-positive value");
      r = std::log(x);
      break;
    case UnaryFn::Sin: r = std::sin(x); break;
    case UnaryFn::Cos: r = std::cos(x); break;
    case UnaryFn::Sqrt:
      if (x < 0.0) throw EvalError("sqrt of a negative value");
      r = std::sqrt(x);
      break;
    case UnaryFn::Tanh: r = std::tanh(x); break;
  }
  if (!std::isfinite(r))
    throw EvalError(std::string("non-finite result from '") + unary_fn_name(fn) + "'");
  return r;
}

Ast make(Node n) { return std::make_shared<const Node>(std::move(n)); }

bool is_const(const Ast& a, double v) {
  return a->kind == Node::Kind::Constant && a->value == v;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

const char* unary_fn_name(UnaryFn fn) {
  switch (fn) {
    case UnaryFn::Exp: return "exp";
    case UnaryFn::Ln: return "ln";
    case UnaryFn::Sin: return "sin";
    case UnaryFn::Cos: return "cos";
    case UnaryFn::Sqrt: return "sqrt";
    case UnaryFn::Tanh: return "tanh";
  }
  return "?";
}

Ast constant(double v) {
  if (!std::isfinite(v)) throw EvalError("non-finite constant");
  Node n;
  n.kind = Node::Kind::Constant;
  n.value = v;
  return make(std::move(n));
}

Ast variable(std::string name) {
  Node n;
  n.kind = Node::Kind::Variable;
  n.name = std::move(name);
  return make(std::move(n));
}

Ast neg(Ast u) {
  // Canonical form: no Neg wrapping a constant, so "-1.5" and the folded
  // Const(-1.5) are the same tree and printing round-trips.
  if (u->kind == Node::Kind::Constant) return constant(-u->value);
  if (u->kind == Node::Kind::Neg) return u->lhs;
  Node n;
  n.kind = Node::Kind::Neg;
  n.lhs = std::move(u);
  return make(std::move(n));
}

Ast binary(BinOp op, Ast lhs, Ast rhs) {
  if (lhs->kind == Node::Kind::Constant && rhs->kind == Node::Kind::Constant) {
    try {
      return constant(checked_binary(op, lhs->value, rhs->value));
    } catch (const EvalError&) {
      // would raise at evaluation time; keep the tree so it still does
    }
  }
  switch (op) {
    case BinOp::Add:
      if (is_const(lhs, 0.0)) return rhs;
      if (is_const(rhs, 0.0)) return lhs;
      break;
    case BinOp::Sub:
      if (is_const(rhs, 0.0)) return lhs;
      if (is_const(lhs, 0.0)) return neg(std::move(rhs));
      break;
    case BinOp::Mul:
      if (is_const(lhs, 0.0) || is_const(rhs, 0.0)) return constant(0.0);
      if (is_const(lhs, 1.0)) return rhs;
      if (is_const(rhs, 1.0)) return lhs;
      break;
    case BinOp::Div:
      if (is_const(rhs, 1.0)) return lhs;
      break;
    case BinOp::Pow:
      if (is_const(rhs, 1.0)) return lhs;
      break;
  }
  Node n;
  n.kind = Node::Kind::Binary;
  n.op = op;
  n.lhs = std::move(lhs);
  n.rhs = std::move(rhs);
  return make(std::move(n));
}

Ast call(UnaryFn fn, Ast arg) {
  if (arg->kind == Node::Kind::Constant) {
    try {
      return constant(checked_call(fn, arg->value));
    } catch (const EvalError&) {
    }
  }
  Node n;
  n.kind = Node::Kind::Call;
  n.fn = fn;
  n.lhs = std::move(arg);
  return make(std::move(n));
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

namespace {

struct Token {
  enum class Type { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, End };
  Type type = Type::End;
  double number = 0.0;
  std::string text;
  std::size_t offset = 0;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    Token t;
    t.offset = pos_;
    if (pos_ >= src_.size()) {
      t.type = Token::Type::End;
      return t;
    }
    const char c = src_[pos_];
    switch (c) {
      case '+': t.type = Token::Type::Plus; ++pos_; return t;
      case '-': t.type = Token::Type::Minus; ++pos_; return t;
      case '*': t.type = Token::Type::Star; ++pos_; return t;
      case '/': t.type = Token::Type::Slash; ++pos_; return t;
      case '^': t.type = Token::Type::Caret; ++pos_; return t;
      case '(': t.type = Token::Type::LParen; ++pos_; return t;
      case ')': t.type = Token::Type::RParen; ++pos_; return t;
      default: break;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return lex_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return lex_ident();
    throw ParseError(std::string("unexpected character '") + c + "'", pos_);
  }

 private:
  Token lex_number() {
    Token t;
    t.type = Token::Type::Number;
    t.offset = pos_;
    std::size_t p = pos_;
    bool digits = false;
    while (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) ++p, digits = true;
    if (p < src_.size() && src_[p] == '.') {
      ++p;
      while (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) ++p, digits = true;
    }
    if (!digits) throw ParseError("malformed number", pos_);
    if (p < src_.size() && (src_[p] == 'e' || src_[p] == 'E')) {
      std::size_t q = p + 1;
      if (q < src_.size() && (src_[q] == '+' || src_[q] == '-')) ++q;
      if (q < src_.size() && std::isdigit(static_cast<unsigned char>(src_[q]))) {
        while (q < src_.size() && std::isdigit(static_cast<unsigned char>(src_[q]))) ++q;
        p = q;
      }
    }
    const char* begin = src_.data() + pos_;
    const char* end = src_.data() + p;
    auto [ptr, ec] = std::from_chars(begin, end, t.number);
    if (ec != std::errc() || ptr != end) throw ParseError("malformed number", pos_);
    pos_ = p;
    return t;
  }

  Token lex_ident() {
    Token t;
    t.type = Token::Type::Ident;
    t.offset = pos_;
    std::size_t p = pos_;
    while (p < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[p])) || src_[p] == '_'))
      ++p;
    t.text.assign(src_.substr(pos_, p - pos_));
    pos_ = p;
    return t;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

class Parser {
 public:
  Parser(std::string_view src, const std::vector<std::string>* declared)
      : lex_(src), declared_(declared) {
    cur_ = lex_.next();
  }

  Ast run() {
    Ast a = expression();
    if (cur_.type != Token::Type::End) throw ParseError("unexpected token", cur_.offset);
    return a;
  }

 private:
  void advance() { cur_ = lex_.next(); }

  Ast expression() {
    Ast a = term();
    while (cur_.type == Token::Type::Plus || cur_.type == Token::Type::Minus) {
      const BinOp op = cur_.type == Token::Type::Plus ? BinOp::Add : BinOp::Sub;
      advance();
      a = binary(op, std::move(a), term());
    }
    return a;
  }

  Ast term() {
    Ast a = unary();
    while (cur_.type == Token::Type::Star || cur_.type == Token::Type::Slash) {
      const BinOp op = cur_.type == Token::Type::Star ? BinOp::Mul : BinOp::Div;
      advance();
      a = binary(op, std::move(a), unary());
    }
    return a;
  }

  Ast unary() {
    if (cur_.type == Token::Type::Minus) {
      advance();
      return neg(unary());
    }
    return power();
  }

  Ast power() {
    Ast base = primary();
    if (cur_.type == Token::Type::Caret) {
      advance();
      return binary(BinOp::Pow, std::move(base), unary());  // right associative
    }
    return base;
  }

  Ast primary() {
    switch (cur_.type) {
      case Token::Type::Number: {
        Ast a = constant(cur_.number);
        advance();
        return a;
      }
      case Token::Type::LParen: {
        advance();
        Ast a = expression();
        expect(Token::Type::RParen, "expected ')'");
        return a;
      }
      case Token::Type::Ident: {
        Token name = cur_;
        advance();
        if (cur_.type == Token::Type::LParen) {
          const UnaryFn fn = lookup_function(name);
          advance();
          Ast arg = expression();
          expect(Token::Type::RParen, "expected ')'");
          return call(fn, std::move(arg));
        }
        if (declared_ &&
            std::find(declared_->begin(), declared_->end(), name.text) == declared_->end())
          throw ParseError("unknown variable '" + name.text + "'", name.offset);
        return variable(std::move(name.text));
      }
      default:
        throw ParseError("expected expression", cur_.offset);
    }
  }

  void expect(Token::Type type, const char* msg) {
    if (cur_.type != type) throw ParseError(msg, cur_.offset);
    advance();
  }

  static UnaryFn lookup_function(const Token& name) {
    if (name.text == "exp") return UnaryFn::Exp;
    if (name.text == "ln") return UnaryFn::Ln;
    if (name.text == "sin") return UnaryFn::Sin;
    if (name.text == "cos") return UnaryFn::Cos;
    if (name.text == "sqrt") return UnaryFn::Sqrt;
    if (name.text == "tanh") return UnaryFn::Tanh;
    throw ParseError("unknown function '" + name.text + "'", name.offset);
  }

  Lexer lex_;
  Token cur_;
  const std::vector<std::string>* declared_;
};

}  // namespace

Ast parse(std::string_view source, const std::vector<std::string>* declared) {
  if (source.empty()) throw ParseError("empty expression", 0);
  return Parser(source, declared).run();
}

// ---------------------------------------------------------------------------
// Printer
// ---------------------------------------------------------------------------

namespace {

// add/sub < mul/div < unary minus < pow < atoms
int precedence(const Node& n) {
  switch (n.kind) {
    case Node::Kind::Binary:
      switch (n.op) {
        case BinOp::Add:
        case BinOp::Sub: return 1;
        case BinOp::Mul:
        case BinOp::Div: return 2;
        case BinOp::Pow: return 4;
      }
      return 1;
    case Node::Kind::Neg: return 3;
    case Node::Kind::Constant:
      // a negative literal prints with a leading '-', which parses like a
      // unary minus; rank it accordingly so "(-2)^x" keeps its parentheses
      return std::signbit(n.value) ? 3 : 5;
    default: return 5;
  }
}

void print_node(const Ast& a, std::string& out);

void print_child(const Ast& child, int min_prec, std::string& out) {
  if (precedence(*child) < min_prec) {
    out += '(';
    print_node(child, out);
    out += ')';
  } else {
    print_node(child, out);
  }
}

void print_node(const Ast& a, std::string& out) {
  switch (a->kind) {
    case Node::Kind::Constant:
      out += format_double(a->value);
      break;
    case Node::Kind::Variable:
      out += a->name;
      break;
    case Node::Kind::Neg:
      out += '-';
      print_child(a->lhs, 4, out);  // binds tighter than mul/div, looser than pow
      break;
    case Node::Kind::Call:
      out += unary_fn_name(a->fn);
      out += '(';
      print_node(a->lhs, out);
      out += ')';
      break;
    case Node::Kind::Binary: {
      const int p = precedence(*a);
      if (a->op == BinOp::Pow) {
        print_child(a->lhs, 5, out);  // left operand of ^ must be atomic
        out += '^';
        print_child(a->rhs, 3, out);  // exponent parses as a unary
      } else {
        print_child(a->lhs, p, out);
        const bool spaced = p == 1;
        if (spaced) out += ' ';
        out += op_symbol(a->op);
        if (spaced) out += ' ';
        print_child(a->rhs, p + 1, out);  // left associative
      }
      break;
    }
  }
}

}  // namespace

std::string print(const Ast& a) {
  std::string out;
  print_node(a, out);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

double eval(const Ast& a, const std::map<std::string, double>& bindings) {
  switch (a->kind) {
    case Node::Kind::Constant:
      return a->value;
    case Node::Kind::Variable: {
      auto it = bindings.find(a->name);
      if (it == bindings.end()) throw EvalError("unbound variable '" + a->name + "'");
      return it->second;
    }
    case Node::Kind::Neg:
      return -eval(a->lhs, bindings);
    case Node::Kind::Binary:
      return checked_binary(a->op, eval(a->lhs, bindings), eval(a->rhs, bindings));
    case Node::Kind::Call:
      return checked_call(a->fn, eval(a->lhs, bindings));
  }
  throw EvalError("corrupt expression node");
}

// ---------------------------------------------------------------------------
// Differentiation
// ---------------------------------------------------------------------------

Ast differentiate(const Ast& a, std::string_view var) {
  switch (a->kind) {
    case Node::Kind::Constant:
      return constant(0.0);
    case Node::Kind::Variable:
      return constant(a->name == var ? 1.0 : 0.0);
    case Node::Kind::Neg:
      return neg(differentiate(a->lhs, var));
    case Node::Kind::Binary: {
      const Ast& u = a->lhs;
      const Ast& v = a->rhs;
      Ast du = differentiate(u, var);
      Ast dv = differentiate(v, var);
      switch (a->op) {
        case BinOp::Add:
          return binary(BinOp::Add, std::move(du), std::move(dv));
        case BinOp::Sub:
          return binary(BinOp::Sub, std::move(du), std::move(dv));
        case BinOp::Mul:
          return binary(BinOp::Add, binary(BinOp::Mul, std::move(du), v),
                        binary(BinOp::Mul, u, std::move(dv)));
        case BinOp::Div:
          // (u'v - uv') / v^2
          return binary(BinOp::Div,
                        binary(BinOp::Sub, binary(BinOp::Mul, std::move(du), v),
                               binary(BinOp::Mul, u, std::move(dv))),
                        binary(BinOp::Pow, v, constant(2.0)));
        case BinOp::Pow:
          if (v->kind == Node::Kind::Constant) {
            // c * u^(c-1) * u'
            return binary(BinOp::Mul,
                          binary(BinOp::Mul, v,
                                 binary(BinOp::Pow, u, constant(v->value - 1.0))),
                          std::move(du));
          }
          // u^v * (v' ln u + v u'/u)
          return binary(
              BinOp::Mul, a,
              binary(BinOp::Add, binary(BinOp::Mul, std::move(dv), call(UnaryFn::Ln, u)),
                     binary(BinOp::Mul, v, binary(BinOp::Div, std::move(du), u))));
      }
      break;
    }
    case Node::Kind::Call: {
      const Ast& u = a->lhs;
      Ast du = differentiate(u, var);
      switch (a->fn) {
        case UnaryFn::Exp:
          return binary(BinOp::Mul, a, std::move(du));
        case UnaryFn::Ln:
          return binary(BinOp::Div, std::move(du), u);
        case UnaryFn::Sin:
          return binary(BinOp::Mul, call(UnaryFn::Cos, u), std::move(du));
        case UnaryFn::Cos:
          return neg(binary(BinOp::Mul, call(UnaryFn::Sin, u), std::move(du)));
        case UnaryFn::Sqrt:
          return binary(BinOp::Div, std::move(du),
                        binary(BinOp::Mul, constant(2.0), a));
        case UnaryFn::Tanh:
          return binary(BinOp::Mul,
                        binary(BinOp::Sub, constant(1.0),
                               binary(BinOp::Pow, a, constant(2.0))),
                        std::move(du));
      }
      break;
    }
  }
  throw EvalError("corrupt expression node");
}

// ---------------------------------------------------------------------------
// Structural helpers
// ---------------------------------------------------------------------------

bool structurally_equal(const Ast& a, const Ast& b) {
  if (a.get() == b.get()) return true;
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case Node::Kind::Constant:
      return std::bit_cast<std::uint64_t>(a->value) == std::bit_cast<std::uint64_t>(b->value);
    case Node::Kind::Variable:
      return a->name == b->name;
    case Node::Kind::Neg:
      return structurally_equal(a->lhs, b->lhs);
    case Node::Kind::Binary:
      return a->op == b->op && structurally_equal(a->lhs, b->lhs) &&
             structurally_equal(a->rhs, b->rhs);
    case Node::Kind::Call:
      return a->fn == b->fn && structurally_equal(a->lhs, b->lhs);
  }
  return false;
}

Ast substitute(const Ast& a, const std::map<std::string, double>& consts) {
  switch (a->kind) {
    case Node::Kind::Constant:
      return a;
    case Node::Kind::Variable: {
      auto it = consts.find(a->name);
      return it == consts.end() ? a : constant(it->second);
    }
    case Node::Kind::Neg:
      return neg(substitute(a->lhs, consts));
    case Node::Kind::Binary:
      return binary(a->op, substitute(a->lhs, consts), substitute(a->rhs, consts));
    case Node::Kind::Call:
      return call(a->fn, substitute(a->lhs, consts));
  }
  throw EvalError("corrupt expression node");
}

namespace {
void collect_variables(const Ast& a, std::vector<std::string>& out, std::set<std::string>& seen) {
  switch (a->kind) {
    case Node::Kind::Variable:
      if (seen.insert(a->name).second) out.push_back(a->name);
      break;
    case Node::Kind::Neg:
    case Node::Kind::Call:
      collect_variables(a->lhs, out, seen);
      break;
    case Node::Kind::Binary:
      collect_variables(a->lhs, out, seen);
      collect_variables(a->rhs, out, seen);
      break;
    case Node::Kind::Constant:
      break;
  }
}
}  // namespace

std::vector<std::string> variables(const Ast& a) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  collect_variables(a, out, seen);
  return out;
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Tape::Tape(const Ast& a, const std::vector<std::string>& slot_names) {
  int depth = 0;
  // postorder walk; depth tracking gives the stack size needed by eval
  auto compile = [&](auto&& self, const Ast& node) -> void {
    switch (node->kind) {
      case Node::Kind::Constant:
        prog_.push_back({Op::PushConst, 0, node->value});
        max_depth_ = std::max(max_depth_, ++depth);
        break;
      case Node::Kind::Variable: {
        auto it = std::find(slot_names.begin(), slot_names.end(), node->name);
        if (it == slot_names.end())
          throw EvalError("unbound variable '" + node->name + "'");
        prog_.push_back({Op::PushSlot, static_cast<int>(it - slot_names.begin()), 0.0});
        max_depth_ = std::max(max_depth_, ++depth);
        break;
      }
      case Node::Kind::Neg:
        self(self, node->lhs);
        prog_.push_back({Op::Neg, 0, 0.0});
        break;
      case Node::Kind::Binary: {
        self(self, node->lhs);
        self(self, node->rhs);
        Op op = Op::Add;
        switch (node->op) {
          case BinOp::Add: op = Op::Add; break;
          case BinOp::Sub: op = Op::Sub; break;
          case BinOp::Mul: op = Op::Mul; break;
          case BinOp::Div: op = Op::Div; break;
          case BinOp::Pow: op = Op::Pow; break;
        }
        prog_.push_back({op, 0, 0.0});
        --depth;
        break;
      }
      case Node::Kind::Call: {
        self(self, node->lhs);
        Op op = Op::Exp;
        switch (node->fn) {
          case UnaryFn::Exp: op = Op::Exp; break;
          case UnaryFn::Ln: op = Op::Ln; break;
          case UnaryFn::Sin: op = Op::Sin; break;
          case UnaryFn::Cos: op = Op::Cos; break;
          case UnaryFn::Sqrt: op = Op::Sqrt; break;
          case UnaryFn::Tanh: op = Op::Tanh; break;
        }
        prog_.push_back({op, 0, 0.0});
        break;
      }
    }
  };
  compile(compile, a);
}

double Tape::eval(std::span<const double> slots) const {
  static thread_local std::vector<double> stack;
  if (static_cast<int>(stack.size()) < max_depth_) stack.resize(max_depth_);
  int top = -1;
  for (const Instr& ins : prog_) {
    switch (ins.op) {
      case Op::PushConst: stack[++top] = ins.value; break;
      case Op::PushSlot: stack[++top] = slots[ins.slot]; break;
      case Op::Neg: stack[top] = -stack[top]; break;
      case Op::Add: --top; stack[top] = checked_binary(BinOp::Add, stack[top], stack[top + 1]); break;
      case Op::Sub: --top; stack[top] = checked_binary(BinOp::Sub, stack[top], stack[top + 1]); break;
      case Op::Mul: --top; stack[top] = checked_binary(BinOp::Mul, stack[top], stack[top + 1]); break;
      case Op::Div: --top; stack[top] = checked_binary(BinOp::Div, stack[top], stack[top + 1]); break;
      case Op::Pow: --top; stack[top] = checked_binary(BinOp::Pow, stack[top], stack[top + 1]); break;
      case Op::Exp: stack[top] = checked_call(UnaryFn::Exp, stack[top]); break;
      case Op::Ln: stack[top] = checked_call(UnaryFn::Ln, stack[top]); break;
      case Op::Sin: stack[top] = checked_call(UnaryFn::Sin, stack[top]); break;
      case Op::Cos: stack[top] = checked_call(UnaryFn::Cos, stack[top]); break;
      case Op::Sqrt: stack[top] = checked_call(UnaryFn::Sqrt, stack[top]); break;
      case Op::Tanh: stack[top] = checked_call(UnaryFn::Tanh, stack[top]); break;
    }
  }
  return stack[top];
}

}  // namespace persist::expr
