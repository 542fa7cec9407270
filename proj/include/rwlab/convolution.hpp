#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "rwlab/measure.hpp"

namespace rwlab {

struct TruncationPolicy {
  enum class Mode { None, Radius, TopMass, MassFloor };
  Mode mode = Mode::None;
  double param = 0.0;  // R, k or eps

  static TruncationPolicy none() { return {}; }
  static TruncationPolicy radius(long R) { return {Mode::Radius, static_cast<double>(R)}; }
  static TruncationPolicy top_mass(long k) { return {Mode::TopMass, static_cast<double>(k)}; }
  static TruncationPolicy mass_floor(double eps) { return {Mode::MassFloor, eps}; }
  static TruncationPolicy parse(std::string_view text);
  std::string str() const;
};

// Support size above which a convolution under Mode::None is refused.
inline constexpr size_t kSupportCap = 20'000'000;

// Drops atoms per policy; the dropped mass is added to the deficit.
void truncate(SparseMeasure& m, const TruncationPolicy& policy);

// (mu * nu)(x) = sum_y mu(y) nu(y^-1 x). Deficit of the result is the exact
// mass lost: d_mu + d_nu - d_mu d_nu plus whatever the policy drops.
SparseMeasure convolve(const SparseMeasure& mu, const SparseMeasure& nu,
                       const TruncationPolicy& policy = {});

// mu^(n) by square-and-multiply over the bits of n, most significant first.
SparseMeasure power(const SparseMeasure& mu, long n, const TruncationPolicy& policy = {});

// Sum_x a(x) b(x^-1) = (a * b)(e).
double pair_at_identity(const SparseMeasure& a, const SparseMeasure& b);

// Rows (n, value, bound) with true mu^(2n)(e) in [value, value + bound].
struct ReturnSeries {
  std::vector<int> n;  // ascending
  std::vector<double> value;
  std::vector<double> deficit_bound;
  std::string measure;
  std::string policy;
  std::string method;

  void push(int k, double v, double b) {
    n.push_back(k);
    value.push_back(v);
    deficit_bound.push_back(b);
  }
  size_t size() const { return n.size(); }
  // Row index of step n; throws DomainError if absent.
  size_t index(int k) const;
  double at(int k) const { return value[index(k)]; }
  double bound(int k) const { return deficit_bound[index(k)]; }
};

enum class ReturnMethod { Auto, Sparse, Torus, Harper };

// mu^(2n)(e) for n = 1..N. Sparse iterates nu_{k+1} = nu_k * mu and pairs
// nu_n with itself. Torus and Harper are Fourier kernels for lattices and the
// Heisenberg group with rigorous wrap/window bounds folded into the deficit.
ReturnSeries return_series(const SparseMeasure& mu, int N, const TruncationPolicy& policy = {},
                           ReturnMethod method = ReturnMethod::Auto);

// Lattice kernel on the torus Z_L^d, evaluated at the given n (ascending).
// L is chosen from the support radius and max n unless given. Radial
// profiles on Z avoid materializing the measure.
ReturnSeries torus_return_series(const SparseMeasure& mu, const std::vector<int>& ns, long L = 0);
ReturnSeries torus_return_series(const RadialProfile& p, const std::vector<int>& ns, long L = 0);

// 1..N
std::vector<int> full_range(int N);
// Roughly log-spaced integers in [lo, hi], always including both ends.
std::vector<int> log_grid(int lo, int hi, int count);

struct HarperOptions {
  int exact_prefix = 16;   // n <= this from the sparse path
  int points_per_panel = 8;
  double panel_cap = 0.19634954084936207;  // pi/16
  double window_eps = 1e-13;               // per-step escape budget of the a-window
};
// mu supported on S* of the Heisenberg group.
ReturnSeries harper_return_series(const SparseMeasure& mu, int N, const HarperOptions& opt = {});
// Uniform trapezoid grid version (exact for small n), for validation.
double harper_uniform(const SparseMeasure& mu, int n, int grid);

// Switch-walk-switch return series on K wr Z with a lazy nearest-neighbour
// base measure (w0 at 0, w1 at each of +-1) and lamp measure nu_K, via the
// local-time decomposition of the base path. Exact up to rounding.
ReturnSeries sws_line_return_series(const SparseMeasure& nu_k, double w0, double w1, int N);
// Dispatches to the line kernel when the shape allows, else the sparse path.
ReturnSeries sws_return_series(const SparseMeasure& mu_k, const SparseMeasure& mu_h, GroupPtr w,
                               int N);

struct KernelValue {
  double value = 0.0;
  double tail_bound = 0.0;  // Poisson tail mass beyond K
};
// h_t(e) = e^-t sum_{k<=K} t^k/k! phi^(k)(e) from a series of phi^(k)(e).
KernelValue continuous_kernel(const SparseMeasure& mu, double t, int K);
KernelValue continuous_kernel_from(const std::vector<double>& at_e, double t);
// phi^(k)(e) for k = 0..K (odd and even steps).
std::vector<double> step_series(const SparseMeasure& mu, int K);

using FunctionMap = std::vector<std::pair<Element, double>>;  // sorted by element

// 1/2 sum_{x,y} |f(xy) - f(x)|^p mu(y).
double dirichlet_energy(const SparseMeasure& mu, const FunctionMap& f, double p);

struct Diagnostic {
  double value = 0.0;
  double deficit = 0.0;
  bool exact_lengths = true;
};
Diagnostic entropy(const SparseMeasure& m);
Diagnostic displacement(const SparseMeasure& m);

std::string to_csv(const ReturnSeries& s);
std::string to_json(const ReturnSeries& s);

}  // namespace rwlab
