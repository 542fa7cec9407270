#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rwlab/convolution.hpp"
#include "rwlab/measure.hpp"

namespace rwlab {

enum class BoundKind { ExactOnSet, UpperForLambda, LowerForLambda };
const char* to_string(BoundKind k);

struct ProfilePoint {
  double p = 2.0;
  double volume = 0.0;
  double log_volume = 0.0;  // volumes of wreath witnesses overflow binary64
  double value = 0.0;
  BoundKind kind = BoundKind::ExactOnSet;
  std::string witness;
};

struct ProfileCurve {
  double p = 2.0;
  std::string measure;
  std::vector<ProfilePoint> points;  // ascending volume
};

// Finite set of group elements, sorted.
struct WitnessSet {
  std::vector<Element> elements;
  std::string id;
  size_t size() const { return elements.size(); }
};

WitnessSet make_set(std::vector<Element> elems, std::string id);
// B(r) for each radius.
std::vector<WitnessSet> nested_balls(const Group& g, const std::vector<int>& radii);
// Cursor in [-r, r] and every lamp configuration over [-r, r]; needs a finite
// lamp group over lattice(1).
WitnessSet wreath_box(const Group& w, int r);
// All nonempty subsets of at most k elements of the window.
std::vector<WitnessSet> exhaustive_subsets(const std::vector<Element>& window, int k);

struct EigenOptions {
  double rq_tol = 1e-8;        // relative change of the Rayleigh quotient
  double residual_tol = 1e-6;  // ||(A - lambda) f|| / ||f||
  long max_iter = 100000;
  uint64_t seed = 0x5eedULL;  // start vector
  size_t max_states = 200000;
};

struct EigenResult {
  double lambda = 0.0;
  std::vector<double> f;  // unit 2-norm, aligned with the set
  long iterations = 0;
  double residual = 0.0;
};

// Lowest eigenvalue of I - P restricted to the set (killed outside), by power
// iteration on cI - A with c an upper bound of the spectrum of A.
EigenResult dirichlet_eigenvalue(const SparseMeasure& mu, const WitnessSet& omega, const EigenOptions& opt = {});

// mu(boundary) / |omega| = sum_{x in omega, xy not in omega} mu(y) / |omega|.
double l1_boundary(const SparseMeasure& mu, const WitnessSet& omega);

// Sum |f(xy) - f(x)|^p mu(y) / 2 over pairs, f supported on the set, divided
// by ||f||_p^p.
double rayleigh_quotient(const SparseMeasure& mu, const WitnessSet& omega, const std::vector<double>& f, double p);

struct DescentOptions {
  int sweeps = 200;
  double rel_tol = 1e-6;
};
// Coordinate descent on the L^p quotient seeded by the p = 2 eigenfunction.
double lp_descent(const SparseMeasure& mu, const WitnessSet& omega, double p, const DescentOptions& opt = {});

// Per requested volume, the least set value among family members of size at
// most v, then a running minimum.
ProfileCurve profile_curve(const SparseMeasure& mu, double p, const std::vector<WitnessSet>& family,
                           const std::vector<double>& volumes);

struct CheegerRow {
  std::string id;
  double l1 = 0.0, lambda2 = 0.0;
  double lower_margin = 0.0;  // lambda2 - l1^2 / 2
  double upper_margin = 0.0;  // l1 - lambda2
  bool pass = true;
};
// 1/2 q(O)^2 <= lambda(O) <= q(O) on each set, q the L^1 quotient of 1_O.
std::vector<CheegerRow> cheeger_check(const SparseMeasure& mu, const std::vector<WitnessSet>& sets, double tol = 1e-9);

// Factor witness: function on a factor group and the factor measure.
struct FactorWitness {
  SparseMeasure mu;
  FunctionMap f;
};
// Product test function on the wreath product for the split measure; ratio
// and volume from the factor quotients, never materialized.
ProfilePoint wreath_test_function(const FactorWitness& base, const FactorWitness& lamp, double p);
// Materializes the product function (small instances): the support set and
// values, aligned.
std::pair<WitnessSet, std::vector<double>> materialize_wreath_test_function(const FactorWitness& base,
                                                                            const FactorWitness& lamp,
                                                                            const GroupPtr& w, size_t cap = 100000);

// Decay bound psi(t) from a lower bound of Lambda_2: t = int_1^{1/psi} ds / (2 s L(4s)).
// The curve is read as a step function that takes on (v_i, v_{i+1}] the
// value at v_{i+1}, the value at v_0 below v_0 and 0 beyond the last point.
std::vector<double> coulhon_psi(const std::vector<std::pair<double, double>>& lower_curve, const std::vector<double>& ts);
// Same for an analytic lower bound, by quadrature and bisection.
double coulhon_psi(const std::function<double(double)>& lower, double t);

// sup_j (2 t_j)^-1 log(1 / (v h_j)), h_j upper bounds of h_{t_j}(e); 0 if none positive.
double coulhon_inverse(const std::vector<double>& ts, const std::vector<double>& h_upper, double v);

// Dyadic staircase inverse: least 4^k, k >= 0, with V(4^k) > t.
long dyadic_w(const Group& g, double t, int max_k);
// Lower bound for Lambda_p of the dyadic radial law with exponent alpha kept
// up to 4^K: 1 / (C 8^p W(2^p v)^alpha), C = sum_{k<=K} 4^-alpha k.
ProfilePoint pseudo_poincare_lower(const Group& g, double alpha, double p, double v, int K);

struct ComparisonValue {
  double value = 0.0;
  double s_opt = 0.0;
  bool constant_symbolic = true;  // C(p, rho) set to 1
};
// C K inf_s {1/rho(s) + n_gen s^p Lambda_u / M_{p,rho}(s)} over the grid.
ComparisonValue comparison_upper(double lambda_u, const MomentFunction& rho, double p, const std::vector<double>& s_grid,
                                 double n_gen, double K, double C = 1.0);

// e^{-t lambda} / |U|.
double cg_lower_bound(double lambda, double volume, double t);

struct SchillingRow {
  double v = 0.0;
  int r_small = 0, r_large = 0;  // ball radii for v and 8v
  double lambda_phi = 0.0;       // on the 8v ball
  double lambda_f = 0.0;         // on the v ball, truncated measure
  double deficit = 0.0;          // mass missing from the subordinated measure
  double lhs = 0.0, rhs = 0.0;   // f(lambda_phi / 2), 2 (lambda_f - deficit)
  bool exact = false;
  bool pass = true;
};
// f(lambda_phi(B_8v) / 2) <= 2 lambda_{phi_f}(B_v) on ball witnesses.
std::vector<SchillingRow> schilling_check(const SparseMeasure& mu, const BernsteinSpec& f, const std::vector<double>& volumes,
                                          int terms, double tol = 1e-9);

// Iterated wreath volume W for a symbol like "((.wr.)wr.)", slots filled
// left to right; W_(A wr B) = W_A^(W_B / K). Returns log W.
double erschler_log_volume(const std::string& symbol, const std::vector<double>& v, double K = 1.0);

std::string to_csv(const ProfileCurve& c);

}  // namespace rwlab
