#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rwlab/group.hpp"

namespace rwlab {

struct Expr;

using Atom = std::pair<Element, double>;

// Finitely supported (sub-)probability measure. Atoms are sorted by element
// and carry strictly positive weights; deficit is the mass known to be
// missing because of truncation.
struct SparseMeasure {
  GroupPtr group;
  std::vector<Atom> atoms;
  double deficit = 0.0;
  bool symmetric = false;
  std::string descriptor;
  // Series constructions are renormalized after truncation; this is the
  // analytic bound on the mass of the dropped part of the series, relative
  // to the retained part. Not counted in the deficit.
  double tail_bound = 0.0;

  size_t size() const { return atoms.size(); }
  double weight(const Element& x) const;
  double mass() const;  // Neumaier-summed weights
  // Throws ValidationError if weights are not positive, the mass balance is
  // off by more than tol, or the symmetric flag is not backed by exact
  // weight equality.
  void check(double tol = 1e-12) const;
};

// Assembles a measure from unsorted atoms; merges duplicates, drops zeros.
SparseMeasure make_measure(GroupPtr g, std::vector<Atom> atoms, double deficit, bool symmetric,
                           std::string descriptor);

// Replaces w(x), w(x^-1) by their average so the symmetric flag holds bit for
// bit. Used after floating point pipelines that are symmetric in exact
// arithmetic.
void symmetrize(SparseMeasure& m);

class MomentFunction {
 public:
  enum class Kind { Power, IteratedLog, CustomEll };

  // rho(s) = (1+s)^alpha; alpha = 0 gives rho = 1.
  static MomentFunction power(double alpha);
  // rho(s) = log_[k](s)^eps, log_[1](s) = 1 + log(1+s), log_[k] = 1 + log(log_[k-1]).
  static MomentFunction iterated_log(int k, double eps);
  // rho(t) proportional to (int_t^inf ds / ((1+s) l(s)))^-1 with l given by a
  // table (s_i, l_i), interpolated linearly in (log(1+s), log l) and extended
  // as l_last ((1+s)/(1+s_last))^tail beyond the table. Scaled so rho(0) = 1.
  static MomentFunction custom_ell(std::vector<std::pair<double, double>> table, double tail);
  static MomentFunction parse(std::string_view text);
  static MomentFunction from_expr(const Expr& e);

  double operator()(double s) const;
  Kind kind() const { return kind_; }
  double alpha() const { return alpha_; }
  int k() const { return k_; }
  double eps() const { return alpha_; }
  const std::string& descriptor() const { return descriptor_; }

 private:
  double ell_tail_integral(double t) const;

  Kind kind_ = Kind::Power;
  double alpha_ = 0.0;  // power exponent, iterated-log eps, or custom tail index
  int k_ = 1;
  std::vector<double> u_, logl_;  // custom table in (log(1+s), log l)
  double norm_ = 1.0;
  std::string descriptor_;
};

// Bernstein function f with f(0) = 0, f(1) = 1, given by drift b and a
// Levy density on (lo, hi).
class BernsteinSpec {
 public:
  enum class Kind { Identity, Power, Localized, TailNormalized };

  static BernsteinSpec identity();
  static BernsteinSpec power(double alpha);
  static BernsteinSpec localized(double alpha, double t);
  static BernsteinSpec tail_normalized(const BernsteinSpec& base, double t);
  static BernsteinSpec parse(std::string_view text);
  static BernsteinSpec from_expr(const Expr& e);

  Kind kind() const { return kind_; }
  double alpha() const { return alpha_; }
  double t() const { return t_; }
  double drift() const { return drift_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }  // +inf when unbounded
  const std::string& descriptor() const { return descriptor_; }

  // Levy density (zero outside (lo, hi)) and its log for quadrature.
  double levy_density(double u) const;
  double log_levy_density(double u) const;
  double operator()(double s) const;

 private:
  void verify() const;

  Kind kind_ = Kind::Identity;
  double alpha_ = 1.0, t_ = 0.0;
  double drift_ = 1.0;
  double log_scale_ = 0.0;  // density = exp(log_scale_) u^(-1-alpha) on (lo, hi)
  double lo_ = 0.0, hi_ = 0.0;
  std::string descriptor_;
};

struct Coefficients {
  std::vector<double> c;  // c[n] for n = 0..N, c[0] = 0
  double tail = 0.0;      // 1 - sum_{n<=N} c[n], clamped at 0
};

// Taylor coefficients of 1 - f(1 - x). Power and identity use closed forms,
// the other kinds adaptive quadrature.
Coefficients bernstein_coefficients(const BernsteinSpec& f, int N);
// Same, always through quadrature (cross-check path).
Coefficients bernstein_coefficients_quadrature(const BernsteinSpec& f, int N);

// Radial shell profile: per-element weight for each word length j = 0..R.
struct RadialProfile {
  GroupPtr group;
  std::vector<double> elem_weight;  // weight of a single element at length j
  std::vector<double> shell_count;  // |S(j)|
  double tail = 0.0;                // analytic bound on the dropped mass, relative
  std::string descriptor;
  int horizon() const { return static_cast<int>(elem_weight.size()) - 1; }
};

enum class RadialFlavor { Smooth, Dyadic };

// Sphere sizes |S(j)|, j = 0..R. Closed form on lattices, BFS otherwise.
std::vector<double> sphere_sizes(const Group& g, int R);

// Smallest horizon whose analytic tail bound is below tol (capped at cap).
int radial_horizon(double alpha, RadialFlavor flavor, double tol = 1e-6, int cap = 1 << 22);

RadialProfile radial_power_profile(GroupPtr g, double alpha, RadialFlavor flavor, int R);
RadialProfile radial_moment_profile(GroupPtr g, const MomentFunction& rho, int R);
SparseMeasure materialize(const RadialProfile& p);

SparseMeasure delta(GroupPtr g);
SparseMeasure uniform_generator(GroupPtr g);
SparseMeasure uniform_ball(GroupPtr g, int r);
SparseMeasure radial_power_law(GroupPtr g, double alpha, RadialFlavor flavor, int R);
// |X| has tail P(|X| > s) = 1/rho(s), uniform on spheres, truncated at R.
SparseMeasure radial_moment(GroupPtr g, const MomentFunction& rho, int R);
// Weights w(k) on lamp/base groups pushed into the wreath product.
SparseMeasure embed_lamp_measure(const SparseMeasure& mk, GroupPtr w);
SparseMeasure embed_base_measure(const SparseMeasure& mh, GroupPtr w);
SparseMeasure split_measure(const SparseMeasure& mk, const SparseMeasure& mh, GroupPtr w);
SparseMeasure sws_measure(const SparseMeasure& mk, const SparseMeasure& mh, GroupPtr w);
// sum_{n<=N} c(f,n) mu^(n); mass of the coefficient tail goes to the deficit.
SparseMeasure subordinate(const SparseMeasure& mu, const BernsteinSpec& f, int N);

// Parses a measure descriptor against a group, e.g.
//   radial_power(alpha=0.8, flavor=smooth, horizon=4096)
//   split(lamp=uniform, base=radial_power(alpha=1.5))
//   subordinate(base=uniform_gen, f=power(0.5), terms=256)
SparseMeasure parse_measure(GroupPtr g, std::string_view text);

struct MomentValue {
  double value = 0.0;
  double uncertainty = 0.0;  // mass not represented (the deficit)
  bool exact_lengths = true;  // false if some word length was an upper bound
};

MomentValue rho_moment(const SparseMeasure& mu, const MomentFunction& rho);
MomentValue weak_rho_moment(const SparseMeasure& mu, const MomentFunction& rho);
// W(rho, .) of a radial profile without materializing it.
double weak_rho_moment(const RadialProfile& p, const MomentFunction& rho);

// M_{p,rho}(t) = t^p / int_0^t s^(p-1)/rho(s) ds.
double m_p_rho(const MomentFunction& rho, double p, double t);

// Two-column text: header "# deficit <x>" then "<element>\t<weight>".
std::string to_text(const SparseMeasure& m);

}  // namespace rwlab
