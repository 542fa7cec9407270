#pragma once

// Tiny parser for the call-style descriptor grammar shared by groups,
// measures, moment functions and Bernstein specs:
//
//   expr  := atom | name '(' [arg {',' arg}] ')'
//   arg   := [key '='] expr
//   atom  := number | identifier | "quoted string"
//
// Whitespace is insignificant.

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rwlab {

struct Expr {
  std::string name;  // call name, or atom text
  bool call = false;
  std::vector<std::pair<std::string, Expr>> args;  // key empty for positional

  // Named argument lookup; nullptr when absent.
  const Expr* get(std::string_view key) const;
  // Positional argument i (positional args counted separately from keyed).
  const Expr* positional(size_t i) const;

  double number() const;  // atom as double, ParseError otherwise
  long long integer() const;
  std::string str() const;  // canonical text form
};

Expr parse_expr(std::string_view text);

}  // namespace rwlab
