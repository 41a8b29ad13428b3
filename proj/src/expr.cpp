#include "bdp/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "bdp/errors.hpp"

namespace bdp {

struct RateExpression::Node {
  enum class Kind { Number, State, Param, Neg, Add, Sub, Mul, Div, Pow, Less, LessEq,
                    Greater, GreaterEq, Exp, Log, Sqrt, Abs, Min, Max };
  Kind kind;
  double value = 0.0;
  std::size_t index = 0;
  std::shared_ptr<const Node> lhs;
  std::shared_ptr<const Node> rhs;

  double eval(double z, ParamView p) const {
    switch (kind) {
      case Kind::Number: return value;
      case Kind::State: return z;
      case Kind::Param: return p[index];
      case Kind::Neg: return -lhs->eval(z, p);
      case Kind::Add: return lhs->eval(z, p) + rhs->eval(z, p);
      case Kind::Sub: return lhs->eval(z, p) - rhs->eval(z, p);
      case Kind::Mul: return lhs->eval(z, p) * rhs->eval(z, p);
      case Kind::Div: return lhs->eval(z, p) / rhs->eval(z, p);
      case Kind::Pow: return std::pow(lhs->eval(z, p), rhs->eval(z, p));
      case Kind::Less: return lhs->eval(z, p) < rhs->eval(z, p) ? 1.0 : 0.0;
      case Kind::LessEq: return lhs->eval(z, p) <= rhs->eval(z, p) ? 1.0 : 0.0;
      case Kind::Greater: return lhs->eval(z, p) > rhs->eval(z, p) ? 1.0 : 0.0;
      case Kind::GreaterEq: return lhs->eval(z, p) >= rhs->eval(z, p) ? 1.0 : 0.0;
      case Kind::Exp: return std::exp(lhs->eval(z, p));
      case Kind::Log: return std::log(lhs->eval(z, p));
      case Kind::Sqrt: return std::sqrt(lhs->eval(z, p));
      case Kind::Abs: return std::abs(lhs->eval(z, p));
      case Kind::Min: return std::min(lhs->eval(z, p), rhs->eval(z, p));
      case Kind::Max: return std::max(lhs->eval(z, p), rhs->eval(z, p));
    }
    return 0.0;
  }
};

namespace {

using NodePtr = std::shared_ptr<const RateExpression::Node>;
using Kind = RateExpression::Node::Kind;

NodePtr make(Kind k, NodePtr lhs = nullptr, NodePtr rhs = nullptr) {
  auto n = std::make_shared<RateExpression::Node>();
  n->kind = k;
  n->lhs = std::move(lhs);
  n->rhs = std::move(rhs);
  return n;
}

class Parser {
 public:
  explicit Parser(std::string_view s) : s_(s) {}

  NodePtr parse() {
    NodePtr n = comparison();
    skip();
    if (pos_ != s_.size()) fail("unexpected character '" + std::string(1, s_[pos_]) + "'");
    return n;
  }

  std::size_t param_count() const { return param_count_; }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
  std::size_t param_count_ = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw InvalidArgument("rate expression '" + std::string(s_) + "', column " +
                          std::to_string(pos_ + 1) + ": " + what);
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(std::string_view tok) {
    skip();
    if (s_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(std::string_view(&c, 1))) fail(std::string("expected '") + c + "'");
  }

  NodePtr comparison() {
    NodePtr lhs = sum();
    if (accept("<=")) return make(Kind::LessEq, lhs, sum());
    if (accept(">=")) return make(Kind::GreaterEq, lhs, sum());
    if (accept("<")) return make(Kind::Less, lhs, sum());
    if (accept(">")) return make(Kind::Greater, lhs, sum());
    return lhs;
  }

  NodePtr sum() {
    NodePtr n = product();
    for (;;) {
      if (accept("+")) n = make(Kind::Add, n, product());
      else if (accept("-")) n = make(Kind::Sub, n, product());
      else return n;
    }
  }

  NodePtr product() {
    NodePtr n = unary();
    for (;;) {
      if (accept("*")) n = make(Kind::Mul, n, unary());
      else if (accept("/")) n = make(Kind::Div, n, unary());
      else return n;
    }
  }

  NodePtr unary() {
    if (accept("-")) return make(Kind::Neg, unary());
    if (accept("+")) return unary();
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    skip();
    if (accept("^")) return make(Kind::Pow, base, unary());
    if (s_.substr(pos_, 2) == "**") {
      pos_ += 2;
      return make(Kind::Pow, base, unary());
    }
    return base;
  }

  NodePtr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of expression");
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const std::string rest(s_.substr(pos_));
      char* end = nullptr;
      const double v = std::strtod(rest.c_str(), &end);
      if (end == rest.c_str()) fail("bad number");
      pos_ += static_cast<std::size_t>(end - rest.c_str());
      auto n = std::make_shared<RateExpression::Node>();
      n->kind = Kind::Number;
      n->value = v;
      return n;
    }
    if (accept("(")) {
      NodePtr n = comparison();
      expect(')');
      return n;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
        ++pos_;
      const std::string name(s_.substr(start, pos_ - start));
      if (name == "z") return make(Kind::State);
      if (name == "p" || (name.size() > 1 && name[0] == 'p' &&
                          name.find_first_not_of("0123456789", 1) == std::string::npos)) {
        std::size_t idx = 0;
        if (name == "p") {
          expect('[');
          skip();
          std::size_t d0 = pos_;
          while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
          if (d0 == pos_) fail("expected parameter index");
          idx = std::stoul(std::string(s_.substr(d0, pos_ - d0)));
          expect(']');
        } else {
          idx = std::stoul(name.substr(1));
        }
        param_count_ = std::max(param_count_, idx + 1);
        auto n = std::make_shared<RateExpression::Node>();
        n->kind = Kind::Param;
        n->index = idx;
        return n;
      }
      static const std::vector<std::pair<std::string, Kind>> unary_fns = {
          {"exp", Kind::Exp}, {"log", Kind::Log}, {"sqrt", Kind::Sqrt}, {"abs", Kind::Abs}};
      static const std::vector<std::pair<std::string, Kind>> binary_fns = {
          {"pow", Kind::Pow}, {"min", Kind::Min}, {"max", Kind::Max}};
      for (const auto& [fname, kind] : unary_fns) {
        if (name == fname) {
          expect('(');
          NodePtr arg = comparison();
          expect(')');
          return make(kind, arg);
        }
      }
      for (const auto& [fname, kind] : binary_fns) {
        if (name == fname) {
          expect('(');
          NodePtr a = comparison();
          expect(',');
          NodePtr b = comparison();
          expect(')');
          return make(kind, a, b);
        }
      }
      pos_ = start;
      fail("unknown identifier '" + name + "'");
    }
    fail("unexpected character '" + std::string(1, c) + "'");
  }
};

}  // namespace

RateExpression RateExpression::parse(std::string_view text) {
  Parser parser(text);
  RateExpression e;
  e.root_ = parser.parse();
  e.param_count_ = parser.param_count();
  e.text_ = std::string(text);
  return e;
}

double RateExpression::operator()(double z, ParamView p) const {
  if (p.size() < param_count_) {
    throw InvalidArgument("rate expression '" + text_ + "' needs " +
                          std::to_string(param_count_) + " parameters");
  }
  return root_->eval(z, p);
}

Model expression_model(const std::string& birth, const std::string& death,
                       std::size_t param_count) {
  auto b = RateExpression::parse(birth);
  auto d = RateExpression::parse(death);
  const std::size_t needed = std::max(b.param_count(), d.param_count());
  if (param_count < needed) {
    throw InvalidArgument("custom rates reference " + std::to_string(needed) +
                          " parameters but only " + std::to_string(param_count) +
                          " were supplied");
  }
  return custom_model(b, d, param_count);
}

}  // namespace bdp
