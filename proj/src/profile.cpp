#include "rwlab/profile.hpp"

#include <absl/container/flat_hash_map.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "quad.hpp"
#include "rwlab/errors.hpp"
#include "rwlab/numeric.hpp"
#include "rwlab/parallel.hpp"

namespace rwlab {

const char* to_string(BoundKind k) {
  switch (k) {
    case BoundKind::ExactOnSet: return "exact-on-set";
    case BoundKind::UpperForLambda: return "upper-for-Lambda";
    case BoundKind::LowerForLambda: return "lower-for-Lambda";
  }
  return "?";
}

WitnessSet make_set(std::vector<Element> elems, std::string id) {
  std::sort(elems.begin(), elems.end());
  elems.erase(std::unique(elems.begin(), elems.end()), elems.end());
  return {std::move(elems), std::move(id)};
}

std::vector<WitnessSet> nested_balls(const Group& g, const std::vector<int>& radii) {
  std::vector<WitnessSet> out;
  for (int r : radii) out.push_back(make_set(g.ball(r).elements, "ball(" + std::to_string(r) + ")"));
  return out;
}

WitnessSet wreath_box(const Group& w, int r) {
  if (w.kind() != Group::Kind::Wreath) throw DomainError("wreath box needs a wreath group");
  const Group& K = *w.lamp();
  const Group& H = *w.base();
  if (!K.is_finite() || H.kind() != Group::Kind::Lattice || H.dim() != 1)
    throw DomainError("wreath box needs a finite lamp group over lattice(1)");
  // grow balls until the finite lamp group is exhausted
  std::vector<Element> lamps;
  for (int rk = 0;; ++rk) {
    auto b = K.ball(rk).elements;
    if (b.size() == lamps.size()) break;
    lamps = std::move(b);
  }
  size_t q = lamps.size(), width = static_cast<size_t>(2 * r + 1);
  double states = std::pow(static_cast<double>(q), static_cast<double>(width)) * static_cast<double>(width);
  if (states > 2e7) throw ResourceError("wreath box too large", -1);
  std::vector<Element> elems;
  elems.reserve(static_cast<size_t>(states));
  std::vector<size_t> digit(width, 0);
  for (;;) {
    for (int x = -r; x <= r; ++x) {
      Group::WreathParts parts;
      parts.cursor = Element{x};
      for (size_t i = 0; i < width; ++i)
        if (!K.is_identity(lamps[digit[i]])) parts.lamps.emplace_back(Element{static_cast<int64_t>(i) - r}, lamps[digit[i]]);
      elems.push_back(w.join(std::move(parts)));
    }
    size_t i = 0;
    while (i < width && ++digit[i] == q) digit[i++] = 0;
    if (i == width) break;
  }
  return make_set(std::move(elems), "box(" + std::to_string(r) + ")");
}

std::vector<WitnessSet> exhaustive_subsets(const std::vector<Element>& window, int k) {
  std::vector<WitnessSet> out;
  size_t n = window.size();
  std::vector<size_t> pick;
  // depth-first over increasing index tuples
  std::function<void(size_t)> rec = [&](size_t start) {
    if (!pick.empty()) {
      std::vector<Element> e;
      std::string id = "{";
      for (size_t i : pick) {
        e.push_back(window[i]);
        id += (id.size() > 1 ? "," : "") + std::to_string(i);
      }
      out.push_back(make_set(std::move(e), id + "}"));
    }
    if (pick.size() == static_cast<size_t>(k)) return;
    for (size_t i = start; i < n; ++i) {
      pick.push_back(i);
      rec(i + 1);
      pick.pop_back();
    }
  };
  rec(0);
  return out;
}

namespace {

// P restricted to the set, in CSR form; row sums give the boundary.
struct Restricted {
  std::vector<size_t> rowptr;
  std::vector<uint32_t> col;
  std::vector<double> val;
  std::vector<double> rowsum;
  double mass = 0.0;
  double center = 0.0;  // mu(e)
};

Restricted restrict_to(const SparseMeasure& mu, const WitnessSet& omega) {
  const Group& g = *mu.group;
  size_t n = omega.size();
  Restricted R;
  R.mass = mu.mass();
  R.center = mu.weight(g.identity());
  absl::flat_hash_map<Element, uint32_t> index;
  index.reserve(n);
  for (size_t i = 0; i < n; ++i) index.emplace(omega.elements[i], static_cast<uint32_t>(i));
  bool via_measure = mu.size() <= n;
  std::vector<std::vector<std::pair<uint32_t, double>>> rows(n);
  const size_t block = 1024;
  parallel_for((n + block - 1) / block, [&](size_t b) {
    for (size_t i = b * block; i < std::min(n, (b + 1) * block); ++i) {
      const Element& x = omega.elements[i];
      auto& row = rows[i];
      if (via_measure) {
        for (const auto& [y, w] : mu.atoms) {
          auto it = index.find(g.multiply(x, y));
          if (it != index.end()) row.emplace_back(it->second, w);
        }
        std::sort(row.begin(), row.end());
      } else {
        Element xi = g.inverse(x);
        for (size_t j = 0; j < n; ++j) {
          double w = mu.weight(g.multiply(xi, omega.elements[j]));
          if (w > 0.0) row.emplace_back(static_cast<uint32_t>(j), w);
        }
      }
    }
  });
  R.rowptr.assign(n + 1, 0);
  for (size_t i = 0; i < n; ++i) R.rowptr[i + 1] = R.rowptr[i] + rows[i].size();
  R.col.resize(R.rowptr[n]);
  R.val.resize(R.rowptr[n]);
  R.rowsum.assign(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    Accumulator s;
    size_t k = R.rowptr[i];
    for (const auto& [j, w] : rows[i]) {
      R.col[k] = j;
      R.val[k++] = w;
      s.add(w);
    }
    R.rowsum[i] = s.value();
  }
  return R;
}

void apply(const Restricted& R, double shift, const std::vector<double>& x, std::vector<double>& y) {
  size_t n = x.size();
  y.resize(n);
  const size_t block = 4096;
  parallel_for((n + block - 1) / block, [&](size_t b) {
    for (size_t i = b * block; i < std::min(n, (b + 1) * block); ++i) {
      double s = shift * x[i];
      for (size_t k = R.rowptr[i]; k < R.rowptr[i + 1]; ++k) s += R.val[k] * x[R.col[k]];
      y[i] = s;
    }
  });
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  Accumulator s;
  for (size_t i = 0; i < a.size(); ++i) s.add(a[i] * b[i]);
  return s.value();
}

uint64_t splitmix(uint64_t& s) {
  uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// E_p of f on the set: 1/2 sum_ij P_ij |f_j - f_i|^p + sum_i |f_i|^p (mass - rowsum_i).
double energy(const Restricted& R, const std::vector<double>& f, double p) {
  Accumulator e;
  for (size_t i = 0; i < f.size(); ++i) {
    for (size_t k = R.rowptr[i]; k < R.rowptr[i + 1]; ++k) e.add(0.5 * R.val[k] * std::pow(std::fabs(f[R.col[k]] - f[i]), p));
    e.add(std::pow(std::fabs(f[i]), p) * std::max(0.0, R.mass - R.rowsum[i]));
  }
  return e.value();
}

double pnorm_p(const std::vector<double>& f, double p) {
  Accumulator s;
  for (double x : f) s.add(std::pow(std::fabs(x), p));
  return s.value();
}

EigenResult eigen_on(const Restricted& R, size_t n, const EigenOptions& opt) {
  if (n == 0) throw DomainError("eigenvalue needs a nonempty set");
  // spectrum of A = I - P_O lies in [1 - mass, 1 - 2 mu(e) + mass]
  double c = 1.0 - 2.0 * R.center + R.mass;
  double shift = c - 1.0;
  std::vector<double> x(n), y;
  uint64_t s = opt.seed;
  for (auto& v : x) v = 0.5 + static_cast<double>(splitmix(s) >> 11) * 0x1.0p-53;
  double nx = std::sqrt(dot(x, x));
  for (auto& v : x) v /= nx;
  EigenResult out;
  double prev = INFINITY;
  for (long it = 1; it <= opt.max_iter; ++it) {
    apply(R, shift, x, y);
    double mu = dot(x, y);
    double res = 0.0;
    {
      Accumulator r;
      for (size_t i = 0; i < n; ++i) r.add((y[i] - mu * x[i]) * (y[i] - mu * x[i]));
      res = std::sqrt(r.value());
    }
    double lambda = c - mu;
    out.lambda = lambda;
    out.residual = res;
    out.iterations = it;
    bool rq_ok = std::fabs(lambda - prev) <= opt.rq_tol * std::max(std::fabs(lambda), 1e-7);
    if (rq_ok && res <= opt.residual_tol) {
      out.f = x;
      break;
    }
    prev = lambda;
    double ny = std::sqrt(dot(y, y));
    if (!(ny > 0.0)) {
      // B x = 0: the whole spectrum of A sits at c
      out.lambda = c;
      out.residual = 0.0;
      out.f = x;
      break;
    }
    for (size_t i = 0; i < n; ++i) x[i] = y[i] / ny;
  }
  if (out.f.empty()) throw NumericError("power iteration hit its cap", out.lambda, out.residual);
  double sum = std::accumulate(out.f.begin(), out.f.end(), 0.0);
  if (sum < 0.0)
    for (auto& v : out.f) v = -v;
  return out;
}

void require_symmetric(const SparseMeasure& mu) {
  if (!mu.symmetric) throw DomainError("profile computations need a symmetric measure");
}

}  // namespace

EigenResult dirichlet_eigenvalue(const SparseMeasure& mu, const WitnessSet& omega, const EigenOptions& opt) {
  require_symmetric(mu);
  if (omega.size() > opt.max_states)
    throw ResourceError("set exceeds the eigen solver budget of " + std::to_string(opt.max_states) + " states");
  auto R = restrict_to(mu, omega);
  return eigen_on(R, omega.size(), opt);
}

double l1_boundary(const SparseMeasure& mu, const WitnessSet& omega) {
  if (omega.size() == 0) throw DomainError("boundary of an empty set");
  auto R = restrict_to(mu, omega);
  Accumulator b;
  for (double s : R.rowsum) b.add(std::max(0.0, R.mass - s));
  return b.value() / static_cast<double>(omega.size());
}

double rayleigh_quotient(const SparseMeasure& mu, const WitnessSet& omega, const std::vector<double>& f, double p) {
  require_symmetric(mu);
  if (f.size() != omega.size()) throw DomainError("function and set sizes differ");
  auto R = restrict_to(mu, omega);
  double nrm = pnorm_p(f, p);
  if (!(nrm > 0.0)) throw DomainError("Rayleigh quotient of the zero function");
  return energy(R, f, p) / nrm;
}

double lp_descent(const SparseMeasure& mu, const WitnessSet& omega, double p, const DescentOptions& opt) {
  require_symmetric(mu);
  if (p < 1.0) throw DomainError("L^p profile needs p >= 1");
  auto R = restrict_to(mu, omega);
  size_t n = omega.size();
  std::vector<double> f = eigen_on(R, n, {}).f;
  for (auto& v : f) v = std::fabs(v);
  double E = energy(R, f, p), N = pnorm_p(f, p);
  double Q = E / N;
  // local energy of coordinate i at value s
  auto local = [&](size_t i, double s) {
    double e = std::pow(std::fabs(s), p) * std::max(0.0, R.mass - R.rowsum[i]);
    for (size_t k = R.rowptr[i]; k < R.rowptr[i + 1]; ++k)
      if (R.col[k] != i) e += R.val[k] * std::pow(std::fabs(f[R.col[k]] - s), p);
    return e;
  };
  double delta = 0.5;
  for (int sweep = 0; sweep < opt.sweeps; ++sweep) {
    double before = Q;
    for (size_t i = 0; i < n; ++i) {
      double cur = f[i], lc = local(i, cur), nc = std::pow(std::fabs(cur), p);
      for (double m : {1.0 + delta, 1.0 - delta}) {
        double s = cur * m;
        double ls = local(i, s), ns = std::pow(std::fabs(s), p);
        double Es = E - lc + ls, Ns = N - nc + ns;
        if (Ns > 0.0 && Es / Ns < Q) {
          f[i] = s;
          E = Es;
          N = Ns;
          Q = E / N;
          break;
        }
      }
    }
    // resum to keep rounding drift out of the running totals
    E = energy(R, f, p);
    N = pnorm_p(f, p);
    Q = E / N;
    if (before - Q < opt.rel_tol * Q) {
      if (delta < 1e-3) break;
      delta *= 0.25;
    }
  }
  return Q;
}

ProfileCurve profile_curve(const SparseMeasure& mu, double p, const std::vector<WitnessSet>& family,
                           const std::vector<double>& volumes) {
  ProfileCurve c;
  c.p = p;
  c.measure = mu.descriptor;
  std::vector<double> val(family.size());
  for (size_t i = 0; i < family.size(); ++i) {
    if (p == 2.0)
      val[i] = dirichlet_eigenvalue(mu, family[i]).lambda;
    else if (p == 1.0)
      val[i] = l1_boundary(mu, family[i]);
    else
      val[i] = lp_descent(mu, family[i], p);
  }
  std::vector<double> vs = volumes;
  std::sort(vs.begin(), vs.end());
  double run = INFINITY;
  std::string run_id;
  for (double v : vs) {
    for (size_t i = 0; i < family.size(); ++i)
      if (static_cast<double>(family[i].size()) <= v && val[i] < run) {
        run = val[i];
        run_id = family[i].id;
      }
    if (!std::isfinite(run)) continue;
    c.points.push_back({p, v, std::log(v), run, BoundKind::UpperForLambda, run_id});
  }
  return c;
}

std::vector<CheegerRow> cheeger_check(const SparseMeasure& mu, const std::vector<WitnessSet>& sets, double tol) {
  std::vector<CheegerRow> out;
  for (const auto& s : sets) {
    CheegerRow r;
    r.id = s.id;
    r.l1 = l1_boundary(mu, s);
    r.lambda2 = dirichlet_eigenvalue(mu, s).lambda;
    r.lower_margin = r.lambda2 - 0.5 * r.l1 * r.l1;
    r.upper_margin = r.l1 - r.lambda2;
    r.pass = r.lower_margin >= -tol && r.upper_margin >= -tol;
    out.push_back(r);
  }
  return out;
}

namespace {

double factor_ratio(const FactorWitness& w, double p, size_t& support) {
  support = 0;
  Accumulator n;
  for (const auto& [x, v] : w.f)
    if (v != 0.0) {
      ++support;
      n.add(std::pow(std::fabs(v), p));
    }
  if (support == 0) throw DomainError("test function is zero");
  return dirichlet_energy(w.mu, w.f, p) / n.value();
}

}  // namespace

ProfilePoint wreath_test_function(const FactorWitness& base, const FactorWitness& lamp, double p) {
  size_t v1 = 0, v2 = 0;
  double r1 = factor_ratio(base, p, v1);
  double r2 = factor_ratio(lamp, p, v2);
  ProfilePoint pt;
  pt.p = p;
  pt.value = 0.5 * (r1 + r2);
  pt.log_volume = static_cast<double>(v1) * std::log(static_cast<double>(v2)) + std::log(static_cast<double>(v1));
  pt.volume = std::exp(pt.log_volume);
  pt.kind = BoundKind::UpperForLambda;
  pt.witness = "product(base=" + std::to_string(v1) + " points, lamp=" + std::to_string(v2) + " points)";
  return pt;
}

std::pair<WitnessSet, std::vector<double>> materialize_wreath_test_function(const FactorWitness& base,
                                                                            const FactorWitness& lamp,
                                                                            const GroupPtr& w, size_t cap) {
  const Group& W = *w;
  if (W.kind() != Group::Kind::Wreath) throw DomainError("needs a wreath group");
  FunctionMap f1, f2;
  for (const auto& a : base.f)
    if (a.second != 0.0) f1.push_back(a);
  for (const auto& a : lamp.f)
    if (a.second != 0.0) f2.push_back(a);
  double count = std::pow(static_cast<double>(f2.size()), static_cast<double>(f1.size())) * static_cast<double>(f1.size());
  if (count > static_cast<double>(cap)) throw ResourceError("product function too large to materialize");
  std::vector<std::pair<Element, double>> pts;
  std::vector<size_t> digit(f1.size(), 0);
  for (;;) {
    double lampv = 1.0;
    Group::WreathParts proto;
    for (size_t i = 0; i < f1.size(); ++i) {
      const auto& [k, v] = f2[digit[i]];
      lampv *= v;
      if (!W.lamp()->is_identity(k)) proto.lamps.emplace_back(f1[i].first, k);
    }
    for (const auto& [x, v] : f1) {
      auto parts = proto;
      parts.cursor = x;
      pts.emplace_back(W.join(std::move(parts)), lampv * v);
    }
    size_t i = 0;
    while (i < digit.size() && ++digit[i] == f2.size()) digit[i++] = 0;
    if (i == digit.size()) break;
  }
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  WitnessSet s;
  s.id = "product";
  std::vector<double> vals;
  for (auto& [e, v] : pts) {
    s.elements.push_back(e);
    vals.push_back(v);
  }
  return {std::move(s), std::move(vals)};
}

std::vector<double> coulhon_psi(const std::vector<std::pair<double, double>>& curve, const std::vector<double>& ts) {
  if (curve.empty()) throw DomainError("empty profile curve");
  auto c = curve;
  std::sort(c.begin(), c.end());
  for (const auto& [v, l] : c)
    if (!(l > 0.0) || !(v > 0.0)) throw DomainError("Coulhon transfer needs a positive curve");
  // Lambda(4s) as steps in s: value c[0] for s <= v_0/4, c[i+1] on (v_i/4, v_{i+1}/4], 0 beyond
  std::vector<double> knots, level;
  knots.push_back(c[0].first / 4.0);
  level.push_back(c[0].second);
  for (size_t i = 1; i < c.size(); ++i) {
    knots.push_back(c[i].first / 4.0);
    level.push_back(c[i].second);
  }
  std::vector<double> out;
  for (double t : ts) {
    if (t < 0.0) throw DomainError("negative time");
    double s = 1.0, T = 0.0, psi = -1.0;
    size_t i = 0;
    while (i < knots.size() && knots[i] < s) ++i;  // s lies in segment i
    for (;;) {
      if (i >= knots.size()) {
        psi = 1.0 / s;  // beyond the curve the bound stops improving
        break;
      }
      double lam = level[i];
      double dt = std::log(knots[i] / s) / (2.0 * lam);
      if (T + dt >= t) {
        psi = 1.0 / (s * std::exp(2.0 * lam * (t - T)));
        break;
      }
      T += dt;
      s = knots[i];
      ++i;
    }
    out.push_back(psi);
  }
  return out;
}

double coulhon_psi(const std::function<double(double)>& lower, double t) {
  if (t < 0.0) throw DomainError("negative time");
  if (t == 0.0) return 1.0;
  // u = log s; dt/du = 1 / (2 Lambda(4 e^u))
  auto rate = [&](double u) {
    double l = lower(4.0 * std::exp(u));
    if (!(l > 0.0)) throw DomainError("Coulhon transfer needs a positive profile");
    return 0.5 / l;
  };
  double u = 0.0, T = 0.0, h = 1.0;
  for (int guard = 0; guard < 100000; ++guard) {
    double dt = quad::integrate(rate, u, u + h).value;
    if (T + dt >= t) {
      double lo = u, hi = u + h;
      for (int k = 0; k < 200 && hi - lo > 1e-14 * std::max(1.0, hi); ++k) {
        double mid = 0.5 * (lo + hi);
        if (T + quad::integrate(rate, u, mid).value >= t)
          hi = mid;
        else
          lo = mid;
      }
      return std::exp(-0.5 * (lo + hi));
    }
    T += dt;
    u += h;
    h = std::min(2.0 * h, 8.0);
  }
  throw NumericError("Coulhon inversion did not terminate", T, t);
}

double coulhon_inverse(const std::vector<double>& ts, const std::vector<double>& h, double v) {
  if (ts.size() != h.size()) throw DomainError("time and kernel grids differ");
  double best = 0.0;
  for (size_t j = 0; j < ts.size(); ++j) {
    if (!(ts[j] > 0.0) || !(h[j] > 0.0)) continue;
    double b = std::log(1.0 / (v * h[j])) / (2.0 * ts[j]);
    best = std::max(best, b);
  }
  return best;
}

long dyadic_w(const Group& g, double t, int max_k) {
  long r = 1;
  for (int k = 0; k <= max_k; ++k, r *= 4)
    if (static_cast<double>(g.volume(static_cast<int>(r))) > t) return r;
  throw DomainError("staircase inverse beyond the retained dyadic scales; refusing to extrapolate");
}

ProfilePoint pseudo_poincare_lower(const Group& g, double alpha, double p, double v, int K) {
  if (!(alpha > 0.0) || p < 1.0 || !(v > 0.0) || K < 0) throw DomainError("bad pseudo-Poincare arguments");
  long W = dyadic_w(g, std::pow(2.0, p) * v, K);
  Accumulator C;
  for (int k = K; k >= 0; --k) C.add(std::pow(4.0, -alpha * k));
  ProfilePoint pt;
  pt.p = p;
  pt.volume = v;
  pt.log_volume = std::log(v);
  pt.value = 1.0 / (C.value() * std::pow(8.0, p) * std::pow(static_cast<double>(W), alpha));
  pt.kind = BoundKind::LowerForLambda;
  pt.witness = "pseudo-poincare(W=" + std::to_string(W) + ")";
  return pt;
}

ComparisonValue comparison_upper(double lambda_u, const MomentFunction& rho, double p, const std::vector<double>& s_grid,
                                 double n_gen, double K, double C) {
  if (s_grid.empty()) throw DomainError("empty s grid");
  ComparisonValue best;
  best.value = INFINITY;
  for (double s : s_grid) {
    if (!(s > 0.0)) continue;
    double v = 1.0 / rho(s) + n_gen * std::pow(s, p) * lambda_u / m_p_rho(rho, p, s);
    if (v < best.value) {
      best.value = v;
      best.s_opt = s;
    }
  }
  best.value *= C * K;
  return best;
}

double cg_lower_bound(double lambda, double volume, double t) {
  if (!(volume >= 1.0) || t < 0.0) throw DomainError("bad CG bound arguments");
  return std::exp(-t * lambda) / volume;
}

std::vector<SchillingRow> schilling_check(const SparseMeasure& mu, const BernsteinSpec& f, const std::vector<double>& volumes,
                                          int terms, double tol) {
  const Group& g = *mu.group;
  auto phi_f = subordinate(mu, f, terms);
  auto radius_for = [&](double v) {
    int r = -1;
    while (static_cast<double>(g.volume(r + 1)) <= v) ++r;
    return r;
  };
  std::vector<SchillingRow> out;
  for (double v : volumes) {
    SchillingRow row;
    row.v = v;
    row.r_small = radius_for(v);
    row.r_large = radius_for(8.0 * v);
    if (row.r_small < 0) throw DomainError("volume below |B(0)|");
    auto big = make_set(g.ball(row.r_large).elements, "ball(" + std::to_string(row.r_large) + ")");
    auto small = make_set(g.ball(row.r_small).elements, "ball(" + std::to_string(row.r_small) + ")");
    row.lambda_phi = dirichlet_eigenvalue(mu, big).lambda;
    row.lambda_f = dirichlet_eigenvalue(phi_f, small).lambda;
    row.deficit = phi_f.deficit + mu.deficit;
    row.lhs = f(0.5 * row.lambda_phi);
    row.rhs = 2.0 * (row.lambda_f - row.deficit);
    row.exact = row.deficit == 0.0;
    row.pass = row.lhs <= row.rhs + tol;
    out.push_back(row);
  }
  return out;
}

namespace {

struct SymbolNode {
  bool slot = true;
  std::unique_ptr<SymbolNode> a, b;
};

struct SymbolParser {
  const std::string& s;
  size_t i = 0;

  void skip() {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  }
  bool eat(std::string_view tok) {
    skip();
    if (s.compare(i, tok.size(), tok) == 0) {
      i += tok.size();
      return true;
    }
    return false;
  }
  bool eat_slot() { return eat(".") || eat("\xC2\xB7"); }
  bool eat_wr() { return eat("wr") || eat("\xE2\x89\x80"); }

  std::unique_ptr<SymbolNode> node() {
    auto n = std::make_unique<SymbolNode>();
    if (eat_slot()) return n;
    if (!eat("(")) throw ParseError("bad wreath symbol '" + s + "'");
    auto a = node();
    if (eat_wr()) {
      n->slot = false;
      n->a = std::move(a);
      n->b = node();
    } else {
      n = std::move(a);
    }
    if (!eat(")")) throw ParseError("bad wreath symbol '" + s + "'");
    return n;
  }
};

double eval_symbol(const SymbolNode& n, const std::vector<double>& v, size_t& k, double K) {
  if (n.slot) {
    if (k >= v.size()) throw ParseError("too few volumes for the wreath symbol");
    if (!(v[k] > 0.0)) throw DomainError("volumes must be positive");
    return std::log(v[k++]);
  }
  double la = eval_symbol(*n.a, v, k, K);
  double lb = eval_symbol(*n.b, v, k, K);
  return std::exp(lb) / K * la;
}

}  // namespace

double erschler_log_volume(const std::string& symbol, const std::vector<double>& v, double K) {
  if (!(K > 0.0)) throw DomainError("K must be positive");
  SymbolParser p{symbol};
  auto root = p.node();
  p.skip();
  if (p.i != symbol.size()) throw ParseError("trailing text in wreath symbol '" + symbol + "'");
  size_t k = 0;
  double out = eval_symbol(*root, v, k, K);
  if (k != v.size()) throw ParseError("too many volumes for the wreath symbol");
  return out;
}

std::string to_csv(const ProfileCurve& c) {
  std::ostringstream o;
  o.precision(17);
  o << "p,volume,log_volume,value,bound_kind,witness_id\n";
  for (const auto& pt : c.points)
    o << pt.p << ',' << pt.volume << ',' << pt.log_volume << ',' << pt.value << ',' << to_string(pt.kind) << ",\""
      << pt.witness << "\"\n";
  return o.str();
}

}  // namespace rwlab
