#pragma once

// Adaptive quadrature wrappers over Boost.Math. Internal to the library.

#include <functional>

namespace rwlab::quad {

struct Result {
  double value = 0.0;
  double error = 0.0;
};

// int_a^b f, b may be +inf. Endpoint singularities at a are allowed.
// `split` (if inside (a,b)) is used as a breakpoint, e.g. the integrand peak.
// Throws NumericError when the error estimate exceeds rel * |value| + abs.
Result integrate(const std::function<double(double)>& f, double a, double b, double split = -1.0,
                 double rel = 1e-12, double abs = 1e-300);

}  // namespace rwlab::quad
