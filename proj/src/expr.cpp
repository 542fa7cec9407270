#include "rwlab/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

#include "rwlab/errors.hpp"

namespace rwlab {

namespace {

struct Parser {
  std::string_view s;
  size_t i = 0;

  void skip() {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  }
  bool eat(char c) {
    skip();
    if (i < s.size() && s[i] == c) {
      ++i;
      return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("descriptor parse error at offset " + std::to_string(i) + ": " + what +
                     " in \"" + std::string(s) + "\"");
  }

  std::string token() {
    skip();
    if (i < s.size() && s[i] == '"') {
      size_t j = s.find('"', i + 1);
      if (j == std::string_view::npos) fail("unterminated string");
      std::string out(s.substr(i + 1, j - i - 1));
      i = j + 1;
      return out;
    }
    size_t start = i;
    while (i < s.size()) {
      char c = s[i];
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-' ||
          c == '+' || c == '^' || c == '*')
        ++i;
      else
        break;
    }
    if (i == start) fail("expected a name or number");
    return std::string(s.substr(start, i - start));
  }

  Expr expr() {
    Expr e;
    e.name = token();
    if (eat('(')) {
      e.call = true;
      if (!eat(')')) {
        do {
          skip();
          size_t save = i;
          std::string key;
          std::string t = token();
          if (eat('=')) {
            key = t;
          } else {
            i = save;
          }
          e.args.emplace_back(key, expr());
        } while (eat(','));
        if (!eat(')')) fail("expected ')'");
      }
    }
    return e;
  }
};

}  // namespace

const Expr* Expr::get(std::string_view key) const {
  for (const auto& [k, v] : args)
    if (k == key) return &v;
  return nullptr;
}

const Expr* Expr::positional(size_t idx) const {
  size_t n = 0;
  for (const auto& [k, v] : args) {
    if (!k.empty()) continue;
    if (n++ == idx) return &v;
  }
  return nullptr;
}

double Expr::number() const {
  if (call) throw ParseError("expected a number, got call " + name);
  double v = 0.0;
  auto res = std::from_chars(name.data(), name.data() + name.size(), v);
  if (res.ec != std::errc() || res.ptr != name.data() + name.size())
    throw ParseError("expected a number, got '" + name + "'");
  return v;
}

long long Expr::integer() const {
  double v = number();
  if (std::floor(v) != v) throw ParseError("expected an integer, got '" + name + "'");
  return static_cast<long long>(v);
}

std::string Expr::str() const {
  if (!call) return name;
  std::string out = name + "(";
  for (size_t k = 0; k < args.size(); ++k) {
    if (k) out += ", ";
    if (!args[k].first.empty()) out += args[k].first + "=";
    out += args[k].second.str();
  }
  return out + ")";
}

Expr parse_expr(std::string_view text) {
  Parser p{text};
  Expr e = p.expr();
  p.skip();
  if (p.i != text.size()) p.fail("trailing characters");
  return e;
}

}  // namespace rwlab
