#pragma once

// Arithmetic expressions over a fixed set of real variables: lexer,
// recursive-descent parser, flat postfix evaluator and printer.
//
// Grammar (lowest to highest precedence):
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?          right-associative
//   primary := number | var | func '(' expr ')' | '(' expr ')'

#include <charstoch/errors.hpp>

#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace charstoch {

enum class TokenKind { Number, Identifier, Operator, LParen, RParen, Comma };

struct Token {
  TokenKind kind;
  std::string text;
  double number = 0.0;
  std::size_t offset = 0;

  bool operator==(const Token& o) const {
    return kind == o.kind && text == o.text && number == o.number;
  }
};

inline std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0;
  const auto isdig = [&](std::size_t k) {
    return k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]));
  };
  while (i < src.size()) {
    const char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    if (isdig(i) || (c == '.' && isdig(i + 1))) {
      while (isdig(i)) ++i;
      if (i < src.size() && src[i] == '.') {
        ++i;
        while (isdig(i)) ++i;
      }
      if (i < src.size() && (src[i] == 'e' || src[i] == 'E')) {
        std::size_t k = i + 1;
        if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
        if (!isdig(k)) throw IllegalCharacter(i, "malformed exponent in number literal");
        i = k;
        while (isdig(i)) ++i;
      }
      if (i < src.size() &&
          (src[i] == '.' || std::isalnum(static_cast<unsigned char>(src[i])) || src[i] == '_'))
        throw IllegalCharacter(i, "malformed number literal");
      const std::string text(src.substr(start, i - start));
      out.push_back({TokenKind::Number, text, std::strtod(text.c_str(), nullptr), start});
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (i < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[i])) || src[i] == '_'))
        ++i;
      out.push_back({TokenKind::Identifier, std::string(src.substr(start, i - start)), 0.0, start});
      continue;
    }
    switch (c) {
      case '+': case '-': case '*': case '/': case '^':
        out.push_back({TokenKind::Operator, std::string(1, c), 0.0, start});
        break;
      case '(': out.push_back({TokenKind::LParen, "(", 0.0, start}); break;
      case ')': out.push_back({TokenKind::RParen, ")", 0.0, start}); break;
      case ',': out.push_back({TokenKind::Comma, ",", 0.0, start}); break;
      default:
        throw IllegalCharacter(start, std::string("illegal character '") + c + "'");
    }
    ++i;
  }
  return out;
}

enum class Func { Sin, Cos, Exp, Log, Tanh, Sqrt, Abs };

inline constexpr std::array<std::string_view, 7> kFuncNames = {"sin",  "cos",  "exp", "log",
                                                               "tanh", "sqrt", "abs"};

/// Immutable expression tree stored as a postfix node array.
class Expr {
public:
  enum class Op { Const, Var, Neg, Add, Sub, Mul, Div, Pow, Call };

  struct Node {
    Op op;
    double value = 0.0;  // Const
    int slot = 0;        // Var: variable slot; Call: Func index
    int lhs = -1, rhs = -1;
    std::size_t offset = 0;
  };

  Expr() = default;

  const std::vector<std::string>& variables() const noexcept { return vars_; }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  bool empty() const noexcept { return nodes_.empty(); }

  /// True if the expression references the variable in `slot`.
  bool uses(int slot) const noexcept {
    for (const auto& n : nodes_)
      if (n.op == Op::Var && n.slot == slot) return true;
    return false;
  }
  bool uses(std::string_view name) const noexcept {
    for (std::size_t s = 0; s < vars_.size(); ++s)
      if (vars_[s] == name) return uses(static_cast<int>(s));
    return false;
  }

  /// Evaluate with values indexed by variable slot.
  double operator()(std::span<const double> values) const {
    constexpr std::size_t kSmall = 64;
    std::array<double, kSmall> small;
    std::vector<double> big;
    double* st = small.data();
    if (nodes_.size() > kSmall) {
      big.resize(nodes_.size());
      st = big.data();
    }
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
      const Node& n = nodes_[k];
      double r = 0.0;
      switch (n.op) {
        case Op::Const: r = n.value; break;
        case Op::Var: r = values[static_cast<std::size_t>(n.slot)]; break;
        case Op::Neg: r = -st[n.lhs]; break;
        case Op::Add: r = st[n.lhs] + st[n.rhs]; break;
        case Op::Sub: r = st[n.lhs] - st[n.rhs]; break;
        case Op::Mul: r = st[n.lhs] * st[n.rhs]; break;
        case Op::Div:
          if (st[n.rhs] == 0.0) throw EvalDomainError(n.offset, "division by zero");
          r = st[n.lhs] / st[n.rhs];
          break;
        case Op::Pow: r = std::pow(st[n.lhs], st[n.rhs]); break;
        case Op::Call: r = apply(static_cast<Func>(n.slot), st[n.lhs], n.offset); break;
      }
      if (!std::isfinite(r)) throw EvalDomainError(n.offset, "non-finite result");
      st[k] = r;
    }
    return st[root()];
  }

  double operator()(std::initializer_list<double> values) const {
    return (*this)(std::span<const double>(values.begin(), values.size()));
  }

  /// Fully parenthesised text that re-parses to an equivalent tree.
  std::string to_string() const { return empty() ? std::string() : print(root()); }

private:
  friend class ExprParser;

  int root() const noexcept { return static_cast<int>(nodes_.size()) - 1; }

  static double apply(Func f, double x, std::size_t offset) {
    switch (f) {
      case Func::Sin: return std::sin(x);
      case Func::Cos: return std::cos(x);
      case Func::Exp: return std::exp(x);
      case Func::Log:
        if (!(x > 0.0)) throw EvalDomainError(offset, "log of nonpositive argument");
        return std::log(x);
      case Func::Tanh: return std::tanh(x);
      case Func::Sqrt:
        if (x < 0.0) throw EvalDomainError(offset, "sqrt of negative argument");
        return std::sqrt(x);
      case Func::Abs: return std::fabs(x);
    }
    return 0.0;
  }

  std::string print(int k) const {
    const Node& n = nodes_[static_cast<std::size_t>(k)];
    switch (n.op) {
      case Op::Const: {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", n.value);
        return n.value < 0 ? "(" + std::string(buf) + ")" : std::string(buf);
      }
      case Op::Var: return vars_[static_cast<std::size_t>(n.slot)];
      case Op::Neg: return "(-" + print(n.lhs) + ")";
      case Op::Call:
        return std::string(kFuncNames[static_cast<std::size_t>(n.slot)]) + "(" + print(n.lhs) + ")";
      default: break;
    }
    const char* op = n.op == Op::Add   ? "+"
                     : n.op == Op::Sub ? "-"
                     : n.op == Op::Mul ? "*"
                     : n.op == Op::Div ? "/"
                                       : "^";
    return "(" + print(n.lhs) + op + print(n.rhs) + ")";
  }

  std::vector<std::string> vars_;
  std::vector<Node> nodes_;
};

class ExprParser {
public:
  ExprParser(std::span<const Token> tokens, std::vector<std::string> allowed, std::size_t end)
      : toks_(tokens), end_(end) {
    e_.vars_ = std::move(allowed);
  }

  Expr parse() {
    if (toks_.empty()) throw SyntaxError(0, "empty expression");
    expr();
    if (pos_ != toks_.size()) throw SyntaxError(toks_[pos_].offset, "unexpected '" + toks_[pos_].text + "'");
    return std::move(e_);
  }

private:
  using Op = Expr::Op;

  const Token* peek() const { return pos_ < toks_.size() ? &toks_[pos_] : nullptr; }
  std::size_t here() const { return pos_ < toks_.size() ? toks_[pos_].offset : end_; }
  bool at_op(char c) const {
    const Token* t = peek();
    return t && t->kind == TokenKind::Operator && t->text[0] == c;
  }

  int emit(Expr::Node n) {
    e_.nodes_.push_back(n);
    return static_cast<int>(e_.nodes_.size()) - 1;
  }

  int expr() {
    int lhs = term();
    while (at_op('+') || at_op('-')) {
      const Token& t = toks_[pos_++];
      int rhs = term();
      lhs = emit({t.text[0] == '+' ? Op::Add : Op::Sub, 0.0, 0, lhs, rhs, t.offset});
    }
    return lhs;
  }

  int term() {
    int lhs = unary();
    while (at_op('*') || at_op('/')) {
      const Token& t = toks_[pos_++];
      int rhs = unary();
      lhs = emit({t.text[0] == '*' ? Op::Mul : Op::Div, 0.0, 0, lhs, rhs, t.offset});
    }
    return lhs;
  }

  int unary() {
    if (at_op('-')) {
      const std::size_t off = toks_[pos_++].offset;
      int arg = unary();
      return emit({Op::Neg, 0.0, 0, arg, -1, off});
    }
    return power();
  }

  int power() {
    int base = primary();
    if (at_op('^')) {
      const std::size_t off = toks_[pos_++].offset;
      int exponent = unary();
      return emit({Op::Pow, 0.0, 0, base, exponent, off});
    }
    return base;
  }

  int primary() {
    const Token* t = peek();
    if (!t) throw SyntaxError(end_, "unexpected end of expression");
    switch (t->kind) {
      case TokenKind::Number:
        ++pos_;
        return emit({Op::Const, t->number, 0, -1, -1, t->offset});
      case TokenKind::LParen: {
        ++pos_;
        int inner = expr();
        expect_rparen();
        return inner;
      }
      case TokenKind::Identifier: {
        ++pos_;
        const Token* next = peek();
        if (next && next->kind == TokenKind::LParen) return call(*t);
        for (std::size_t s = 0; s < e_.vars_.size(); ++s)
          if (e_.vars_[s] == t->text)
            return emit({Op::Var, 0.0, static_cast<int>(s), -1, -1, t->offset});
        throw UnknownVariable(t->offset, t->text);
      }
      default:
        throw SyntaxError(t->offset, "unexpected '" + t->text + "'");
    }
  }

  int call(const Token& name) {
    int f = -1;
    for (std::size_t k = 0; k < kFuncNames.size(); ++k)
      if (kFuncNames[k] == name.text) f = static_cast<int>(k);
    if (f < 0) throw UnknownFunction(name.offset, name.text);
    ++pos_;  // '('
    if (peek() && peek()->kind == TokenKind::RParen)
      throw ArityMismatch(name.offset, name.text + " expects 1 argument, got 0");
    int arg = expr();
    std::size_t extra = 0;
    while (peek() && peek()->kind == TokenKind::Comma) {
      ++pos_;
      expr();
      ++extra;
    }
    if (extra)
      throw ArityMismatch(name.offset,
                          name.text + " expects 1 argument, got " + std::to_string(extra + 1));
    expect_rparen();
    return emit({Op::Call, 0.0, f, arg, -1, name.offset});
  }

  void expect_rparen() {
    const Token* t = peek();
    if (!t || t->kind != TokenKind::RParen) throw SyntaxError(here(), "expected ')'");
    ++pos_;
  }

  std::span<const Token> toks_;
  std::size_t end_;
  std::size_t pos_ = 0;
  Expr e_;
};

inline Expr parse_expr(std::span<const Token> tokens, std::vector<std::string> allowed_vars) {
  const std::size_t end = tokens.empty() ? 0 : tokens.back().offset + tokens.back().text.size();
  return ExprParser(tokens, std::move(allowed_vars), end).parse();
}

inline Expr parse_expr(std::string_view source, std::vector<std::string> allowed_vars) {
  const auto toks = tokenize(source);
  return ExprParser(toks, std::move(allowed_vars), source.size()).parse();
}

/// Evaluate against named bindings. Every variable the expression
/// references must be bound.
inline double eval_expr(const Expr& e, const std::map<std::string, double>& bindings) {
  std::vector<double> values(e.variables().size(), 0.0);
  for (std::size_t s = 0; s < values.size(); ++s) {
    const auto it = bindings.find(e.variables()[s]);
    if (it != bindings.end())
      values[s] = it->second;
    else if (e.uses(static_cast<int>(s)))
      throw ValidationError("no binding for variable '" + e.variables()[s] + "'");
  }
  return e(values);
}

}  // namespace charstoch
