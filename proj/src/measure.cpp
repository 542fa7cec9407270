#include "rwlab/measure.hpp"

#include <absl/container/flat_hash_map.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "quad.hpp"
#include "rwlab/convolution.hpp"
#include "rwlab/errors.hpp"
#include "rwlab/expr.hpp"
#include "rwlab/numeric.hpp"

namespace rwlab {

namespace {

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

void require_same(const Group& a, const Group& b, const char* what) {
  if (!a.same_as(b))
    throw DescriptorMismatch(std::string(what) + ": " + a.descriptor() + " vs " + b.descriptor());
}

}  // namespace

// ---------------------------------------------------------------------------
// SparseMeasure

double SparseMeasure::weight(const Element& x) const {
  auto it = std::lower_bound(atoms.begin(), atoms.end(), x,
                             [](const Atom& a, const Element& e) { return a.first < e; });
  return (it != atoms.end() && it->first == x) ? it->second : 0.0;
}

double SparseMeasure::mass() const {
  Accumulator acc;
  for (const auto& a : atoms) acc.add(a.second);
  return acc.value();
}

void SparseMeasure::check(double tol) const {
  for (size_t i = 0; i < atoms.size(); ++i) {
    if (!(atoms[i].second > 0.0)) throw ValidationError("measure has a non-positive weight");
    if (i && !(atoms[i - 1].first < atoms[i].first)) throw ValidationError("measure atoms not sorted/unique");
  }
  if (deficit < 0.0) throw ValidationError("negative deficit");
  double total = mass() + deficit;
  if (std::fabs(total - 1.0) > tol)
    throw ValidationError("mass balance off: sum + deficit = " + fmt(total));
  if (symmetric)
    for (const auto& [x, w] : atoms)
      if (weight(group->inverse(x)) != w) throw ValidationError("symmetric flag without exact symmetry");
}

SparseMeasure make_measure(GroupPtr g, std::vector<Atom> atoms, double deficit, bool symmetric,
                           std::string descriptor) {
  std::stable_sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.first < b.first; });
  SparseMeasure m;
  m.group = std::move(g);
  for (auto& a : atoms) {
    if (!m.atoms.empty() && m.atoms.back().first == a.first)
      m.atoms.back().second += a.second;
    else
      m.atoms.push_back(std::move(a));
  }
  std::erase_if(m.atoms, [](const Atom& a) { return !(a.second > 0.0); });
  m.deficit = std::max(0.0, deficit);
  m.symmetric = symmetric;
  m.descriptor = std::move(descriptor);
  return m;
}

void symmetrize(SparseMeasure& m) {
  const Group& g = *m.group;
  std::vector<double> w(m.atoms.size());
  for (size_t i = 0; i < m.atoms.size(); ++i) {
    double other = m.weight(g.inverse(m.atoms[i].first));
    w[i] = 0.5 * (m.atoms[i].second + other);
  }
  for (size_t i = 0; i < m.atoms.size(); ++i) m.atoms[i].second = w[i];
  std::erase_if(m.atoms, [](const Atom& a) { return !(a.second > 0.0); });
  m.symmetric = true;
}

// ---------------------------------------------------------------------------
// MomentFunction

MomentFunction MomentFunction::power(double alpha) {
  if (!(alpha >= 0.0)) throw ValidationError("power moment needs alpha >= 0");
  MomentFunction f;
  f.kind_ = Kind::Power;
  f.alpha_ = alpha;
  f.descriptor_ = "power(" + fmt(alpha) + ")";
  return f;
}

MomentFunction MomentFunction::iterated_log(int k, double eps) {
  if (k < 1 || !(eps > 0.0)) throw ValidationError("iterated_log needs k >= 1 and eps > 0");
  MomentFunction f;
  f.kind_ = Kind::IteratedLog;
  f.k_ = k;
  f.alpha_ = eps;
  f.descriptor_ = "iterated_log(k=" + std::to_string(k) + ", eps=" + fmt(eps) + ")";
  return f;
}

MomentFunction MomentFunction::custom_ell(std::vector<std::pair<double, double>> table, double tail) {
  if (table.empty()) throw ValidationError("custom_ell needs a non-empty table");
  if (!(tail > 0.0)) throw ValidationError("custom_ell needs a positive tail index");
  std::sort(table.begin(), table.end());
  MomentFunction f;
  f.kind_ = Kind::CustomEll;
  f.alpha_ = tail;
  std::string pts;
  for (const auto& [s, l] : table) {
    if (s < 0.0 || !(l > 0.0)) throw ValidationError("custom_ell table needs s >= 0 and l > 0");
    if (!f.u_.empty() && std::log1p(s) <= f.u_.back()) continue;
    f.u_.push_back(std::log1p(s));
    f.logl_.push_back(std::log(l));
    if (!pts.empty()) pts += ";";
    pts += fmt(s) + ":" + fmt(l);
  }
  if (f.u_.front() > 0.0) {
    // constant extension down to s = 0
    f.u_.insert(f.u_.begin(), 0.0);
    f.logl_.insert(f.logl_.begin(), f.logl_.front());
  }
  f.norm_ = 1.0;
  f.norm_ = f.ell_tail_integral(0.0);
  f.descriptor_ = "custom_ell(points=\"" + pts + "\", tail=" + fmt(tail) + ")";
  return f;
}

// int_t^inf ds / ((1+s) l(s)) in u = log(1+s), where log l is piecewise linear.
double MomentFunction::ell_tail_integral(double t) const {
  double u0 = std::log1p(t);
  Accumulator acc;
  for (size_t i = 0; i + 1 < u_.size(); ++i) {
    double a = u_[i], b = u_[i + 1];
    if (b <= u0) continue;
    double slope = (logl_[i + 1] - logl_[i]) / (b - a);
    double lo = std::max(a, u0);
    // int_lo^b exp(-(logl_i + slope (u - a))) du
    double c0 = -(logl_[i] + slope * (lo - a));
    double len = b - lo;
    double seg = std::fabs(slope) < 1e-14 ? std::exp(c0) * len : std::exp(c0) * (-std::expm1(-slope * len)) / slope;
    acc.add(seg);
  }
  double ul = u_.back();
  double lo = std::max(ul, u0);
  // l(s) = l_last exp(tail (u - ul)) beyond the table
  acc.add(std::exp(-logl_.back() - alpha_ * (lo - ul)) / alpha_);
  return acc.value();
}

double MomentFunction::operator()(double s) const {
  if (s < 0.0) s = 0.0;
  switch (kind_) {
    case Kind::Power: return alpha_ == 0.0 ? 1.0 : std::pow(1.0 + s, alpha_);
    case Kind::IteratedLog: {
      double v = 1.0 + std::log1p(s);
      for (int i = 1; i < k_; ++i) v = 1.0 + std::log(v);
      return std::pow(v, alpha_);
    }
    case Kind::CustomEll: return norm_ / ell_tail_integral(s);
  }
  return 1.0;
}

MomentFunction MomentFunction::from_expr(const Expr& e) {
  auto num = [&](const char* key, size_t pos, double dflt) {
    const Expr* a = e.get(key);
    if (!a) a = e.positional(pos);
    return a ? a->number() : dflt;
  };
  if (e.name == "power" || e.name == "rho_alpha") return power(num("alpha", 0, 1.0));
  if (e.name == "one" || e.name == "constant") return power(0.0);
  if (e.name == "iterated_log") return iterated_log(static_cast<int>(num("k", 0, 1.0)), num("eps", 1, 1.0));
  if (e.name == "custom_ell") {
    const Expr* p = e.get("points");
    if (!p) throw ParseError("custom_ell needs points=\"s:l;...\"");
    std::vector<std::pair<double, double>> table;
    std::string txt = p->name;
    size_t i = 0;
    while (i < txt.size()) {
      size_t j = txt.find(';', i);
      if (j == std::string::npos) j = txt.size();
      std::string item = txt.substr(i, j - i);
      size_t c = item.find(':');
      if (c == std::string::npos) throw ParseError("custom_ell point without ':' in " + item);
      table.emplace_back(std::stod(item.substr(0, c)), std::stod(item.substr(c + 1)));
      i = j + 1;
    }
    return custom_ell(std::move(table), num("tail", 99, 1.0));
  }
  throw ParseError("unknown moment function '" + e.name + "'");
}

MomentFunction MomentFunction::parse(std::string_view text) { return from_expr(parse_expr(text)); }

// ---------------------------------------------------------------------------
// BernsteinSpec

BernsteinSpec BernsteinSpec::identity() {
  BernsteinSpec f;
  f.kind_ = Kind::Identity;
  f.alpha_ = 1.0;
  f.drift_ = 1.0;
  f.descriptor_ = "identity";
  return f;
}

BernsteinSpec BernsteinSpec::power(double alpha) {
  if (alpha == 1.0) return identity();
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("power Bernstein function needs alpha in (0,1)");
  BernsteinSpec f;
  f.kind_ = Kind::Power;
  f.alpha_ = alpha;
  f.drift_ = 0.0;
  f.log_scale_ = std::log(alpha) - std::lgamma(1.0 - alpha);
  f.lo_ = 0.0;
  f.hi_ = std::numeric_limits<double>::infinity();
  f.descriptor_ = "power(" + fmt(alpha) + ")";
  f.verify();
  return f;
}

BernsteinSpec BernsteinSpec::localized(double alpha, double t) {
  if (!(alpha > 0.0 && alpha < 1.0) || !(t > 0.0))
    throw ValidationError("localized Bernstein function needs alpha in (0,1) and t > 0");
  BernsteinSpec f;
  f.kind_ = Kind::Localized;
  f.alpha_ = alpha;
  f.t_ = t;
  f.lo_ = t;
  f.hi_ = 2.0 * t;
  // kappa = alpha (1 - 2^-alpha)^-1 t^alpha makes nu a probability measure
  f.log_scale_ = std::log(alpha) - std::log1p(-std::pow(2.0, -alpha)) + alpha * std::log(t);
  f.drift_ = 0.0;
  auto dens = [&f](double u) { return std::exp(f.log_levy_density(u) - u); };
  f.drift_ = quad::integrate(dens, f.lo_, f.hi_).value;
  f.descriptor_ = "localized(alpha=" + fmt(alpha) + ", t=" + fmt(t) + ")";
  f.verify();
  return f;
}

BernsteinSpec BernsteinSpec::tail_normalized(const BernsteinSpec& base, double t) {
  if (base.kind_ == Kind::Identity) throw ValidationError("identity subordinator has no Levy measure to cut");
  if (!(t >= 0.0)) throw ValidationError("tail cutoff must be non-negative");
  BernsteinSpec f = base;
  f.kind_ = Kind::TailNormalized;
  f.t_ = t;
  f.drift_ = 0.0;
  f.lo_ = std::max(base.lo_, t);
  if (!(f.hi_ > f.lo_)) throw ValidationError("tail cutoff removes the whole Levy measure");
  auto g = [&base](double u) { return -std::expm1(-u) * std::exp(base.log_levy_density(u)); };
  double z = quad::integrate(g, f.lo_, f.hi_, 1.0).value;
  f.log_scale_ = base.log_scale_ - std::log(z);
  f.descriptor_ = "tail_normalized(base=" + base.descriptor_ + ", t=" + fmt(t) + ")";
  f.verify();
  return f;
}

double BernsteinSpec::log_levy_density(double u) const {
  if (kind_ == Kind::Identity || !(u > lo_) || !(u < hi_)) return -std::numeric_limits<double>::infinity();
  return log_scale_ - (1.0 + alpha_) * std::log(u);
}

double BernsteinSpec::levy_density(double u) const { return std::exp(log_levy_density(u)); }

double BernsteinSpec::operator()(double s) const {
  if (s <= 0.0) return 0.0;
  switch (kind_) {
    case Kind::Identity: return s;
    case Kind::Power: return std::pow(s, alpha_);
    default: break;
  }
  auto g = [this, s](double u) { return -std::expm1(-s * u) * std::exp(log_levy_density(u)); };
  double split = std::isinf(hi_) ? std::max(lo_, 1.0 / s) : -1.0;
  return drift_ * s + quad::integrate(g, lo_, hi_, split).value;
}

void BernsteinSpec::verify() const {
  if (kind_ == Kind::Identity || kind_ == Kind::Power) return;
  double f1 = (*this)(1.0);
  if (std::fabs(f1 - 1.0) > 1e-10) throw NumericError("Bernstein function fails f(1) = 1", f1, std::fabs(f1 - 1.0));
}

BernsteinSpec BernsteinSpec::from_expr(const Expr& e) {
  auto num = [&](const char* key, size_t pos, double dflt) {
    const Expr* a = e.get(key);
    if (!a) a = e.positional(pos);
    return a ? a->number() : dflt;
  };
  if (e.name == "identity") return identity();
  if (e.name == "power" || e.name == "sqrt") return power(e.name == "sqrt" ? 0.5 : num("alpha", 0, 0.5));
  if (e.name == "localized") return localized(num("alpha", 0, 0.5), num("t", 1, 1.0));
  if (e.name == "tail_normalized") {
    const Expr* b = e.get("base");
    if (!b) b = e.positional(0);
    if (!b) throw ParseError("tail_normalized needs base=");
    return tail_normalized(from_expr(*b), num("t", 1, 1.0));
  }
  throw ParseError("unknown Bernstein function '" + e.name + "'");
}

BernsteinSpec BernsteinSpec::parse(std::string_view text) { return from_expr(parse_expr(text)); }

namespace {

Coefficients finish_coefficients(std::vector<double> c) {
  Coefficients out;
  Accumulator acc;
  for (double x : c) acc.add(x);
  out.tail = std::max(0.0, 1.0 - acc.value());
  out.c = std::move(c);
  return out;
}

}  // namespace

Coefficients bernstein_coefficients_quadrature(const BernsteinSpec& f, int N) {
  if (N < 1) throw DomainError("bernstein_coefficients needs N >= 1");
  std::vector<double> c(static_cast<size_t>(N) + 1, 0.0);
  if (f.kind() == BernsteinSpec::Kind::Identity) {
    c[1] = 1.0;
    return finish_coefficients(std::move(c));
  }
  for (int n = 1; n <= N; ++n) {
    double lg = std::lgamma(n + 1.0);
    auto g = [&f, n, lg](double u) {
      double ld = f.log_levy_density(u);
      if (std::isinf(ld)) return 0.0;
      return std::exp(n * std::log(u) - u - lg + ld);
    };
    double peak = std::max(f.lo(), std::min(f.hi(), static_cast<double>(n) - 1.0 - f.alpha()));
    c[static_cast<size_t>(n)] = quad::integrate(g, f.lo(), f.hi(), peak > f.lo() ? peak : -1.0).value;
  }
  c[1] += f.drift();
  return finish_coefficients(std::move(c));
}

Coefficients bernstein_coefficients(const BernsteinSpec& f, int N) {
  if (N < 1) throw DomainError("bernstein_coefficients needs N >= 1");
  std::vector<double> c(static_cast<size_t>(N) + 1, 0.0);
  switch (f.kind()) {
    case BernsteinSpec::Kind::Identity: c[1] = 1.0; return finish_coefficients(std::move(c));
    case BernsteinSpec::Kind::Power: {
      // 1 - (1-x)^a = sum_n (-1)^(n+1) binom(a, n) x^n
      double a = f.alpha();
      c[1] = a;
      for (int n = 1; n < N; ++n) c[static_cast<size_t>(n) + 1] = c[static_cast<size_t>(n)] * (n - a) / (n + 1);
      return finish_coefficients(std::move(c));
    }
    default: return bernstein_coefficients_quadrature(f, N);
  }
}

// ---------------------------------------------------------------------------
// Radial constructions

std::vector<double> sphere_sizes(const Group& g, int R) {
  std::vector<double> s(static_cast<size_t>(R) + 1, 0.0);
  if (g.kind() == Group::Kind::Lattice) {
    // |S(j)| = sum_k 2^k C(d,k) C(j-1,k-1)
    int d = g.dim();
    s[0] = 1.0;
    for (int j = 1; j <= R; ++j) {
      double tot = 0.0;
      for (int k = 1; k <= std::min(d, j); ++k) {
        double lc = std::lgamma(d + 1.0) - std::lgamma(k + 1.0) - std::lgamma(d - k + 1.0) +
                    std::lgamma(static_cast<double>(j)) - std::lgamma(static_cast<double>(k)) -
                    std::lgamma(static_cast<double>(j - k + 1));
        tot += std::ldexp(std::round(std::exp(lc)), k);
      }
      s[static_cast<size_t>(j)] = tot;
    }
    return s;
  }
  size_t prev = 0;
  for (int j = 0; j <= R; ++j) {
    size_t v = g.volume(j);
    s[static_cast<size_t>(j)] = static_cast<double>(v - prev);
    prev = v;
  }
  return s;
}

int radial_horizon(double alpha, RadialFlavor flavor, double tol, int cap) {
  if (!(alpha > 0.0)) throw ValidationError("radial power law needs alpha > 0");
  if (flavor == RadialFlavor::Dyadic) {
    // tail fraction <= 4^(-a(K+1)) / (1 - 4^-a) relative to the k = 0 term
    int K = 0;
    while (std::pow(4.0, -alpha * (K + 1)) / (1.0 - std::pow(4.0, -alpha)) >= tol && K < 30) ++K;
    double R = std::pow(4.0, K);
    return R > cap ? cap : static_cast<int>(R);
  }
  // tail <= R^-a / a, head >= 1
  double R = std::ceil(std::pow(alpha * tol, -1.0 / alpha));
  return R > cap ? cap : static_cast<int>(std::max(1.0, R));
}

RadialProfile radial_power_profile(GroupPtr g, double alpha, RadialFlavor flavor, int R) {
  if (!(alpha > 0.0)) throw ValidationError("radial power law needs alpha > 0");
  if (R < 1) throw DomainError("radial power law needs horizon >= 1");
  RadialProfile p;
  p.group = g;
  p.shell_count = sphere_sizes(*g, R);
  std::vector<double> vol(p.shell_count.size());
  std::partial_sum(p.shell_count.begin(), p.shell_count.end(), vol.begin());
  // series terms a_k attached to u_k for the retained k, then head + tail
  std::vector<std::pair<int, double>> terms;
  double tail = 0.0;
  if (flavor == RadialFlavor::Smooth) {
    for (int k = 1; k <= R; ++k) terms.emplace_back(k, std::pow(static_cast<double>(k), -alpha - 1.0));
    tail = std::pow(static_cast<double>(R), -alpha) / alpha;
  } else {
    int K = 0;
    while (std::pow(4.0, K + 1) <= R) ++K;
    for (int k = 0; k <= K; ++k) terms.emplace_back(static_cast<int>(std::pow(4.0, k)), std::pow(4.0, -alpha * k));
    tail = std::pow(4.0, -alpha * (K + 1)) / (1.0 - std::pow(4.0, -alpha));
  }
  Accumulator head;
  for (auto it = terms.rbegin(); it != terms.rend(); ++it) head.add(it->second);
  double c = 1.0 / head.value();
  // per-element weight at length j: c sum_{k >= max(j,1), k retained} a_k / V(k)
  p.elem_weight.assign(static_cast<size_t>(R) + 1, 0.0);
  double run = 0.0;
  size_t t = terms.size();
  for (int j = R; j >= 0; --j) {
    while (t > 0 && terms[t - 1].first >= std::max(j, 1)) {
      --t;
      run += terms[t].second / vol[static_cast<size_t>(terms[t].first)];
    }
    p.elem_weight[static_cast<size_t>(j)] = c * run;
  }
  // trim trailing zero shells (dyadic horizon between powers of 4)
  while (p.elem_weight.size() > 1 && p.elem_weight.back() == 0.0) {
    p.elem_weight.pop_back();
    p.shell_count.pop_back();
  }
  p.tail = c * tail;
  p.descriptor = std::string("radial_power(alpha=") + fmt(alpha) +
                 ", flavor=" + (flavor == RadialFlavor::Smooth ? "smooth" : "dyadic") + ", horizon=" + std::to_string(R) + ")";
  return p;
}

RadialProfile radial_moment_profile(GroupPtr g, const MomentFunction& rho, int R) {
  if (R < 1) throw DomainError("radial_moment needs horizon >= 1");
  RadialProfile p;
  p.group = g;
  p.shell_count = sphere_sizes(*g, R);
  p.elem_weight.assign(static_cast<size_t>(R) + 1, 0.0);
  double prev = 1.0;  // P(|X| > -1)
  double kept = 1.0 - 1.0 / rho(R);
  if (!(kept > 0.0)) throw DomainError("radial_moment horizon keeps no mass");
  for (int k = 0; k <= R; ++k) {
    double q = 1.0 / rho(k);
    double m = std::max(0.0, prev - q);
    p.elem_weight[static_cast<size_t>(k)] = m / kept / p.shell_count[static_cast<size_t>(k)];
    prev = q;
  }
  p.tail = (1.0 / rho(R)) / kept;
  p.descriptor = "radial_moment(rho=" + rho.descriptor() + ", horizon=" + std::to_string(R) + ")";
  return p;
}

namespace {

void lattice_ball(int d, int R, std::vector<Element>& out) {
  Element cur;
  cur.v.assign(static_cast<size_t>(d), 0);
  auto rec = [&](auto&& self, int i, int budget) -> void {
    if (i == d) {
      out.push_back(cur);
      return;
    }
    for (int x = -budget; x <= budget; ++x) {
      cur.v[static_cast<size_t>(i)] = x;
      self(self, i + 1, budget - std::abs(x));
    }
    cur.v[static_cast<size_t>(i)] = 0;
  };
  rec(rec, 0, R);
}

std::vector<std::pair<Element, int>> ball_with_lengths(const Group& g, int R) {
  std::vector<std::pair<Element, int>> out;
  if (g.kind() == Group::Kind::Lattice) {
    std::vector<Element> pts;
    lattice_ball(g.dim(), R, pts);
    out.reserve(pts.size());
    for (auto& x : pts) {
      int l = static_cast<int>(g.word_length(x).length);
      out.emplace_back(std::move(x), l);
    }
    return out;
  }
  Ball b = g.ball(R);
  out.reserve(b.elements.size());
  for (auto& x : b.elements) {
    int l = static_cast<int>(g.word_length(x).length);
    out.emplace_back(std::move(x), l);
  }
  return out;
}

}  // namespace

SparseMeasure materialize(const RadialProfile& p) {
  auto pts = ball_with_lengths(*p.group, p.horizon());
  std::vector<Atom> atoms;
  atoms.reserve(pts.size());
  for (auto& [x, l] : pts) {
    double w = p.elem_weight[static_cast<size_t>(l)];
    if (w > 0.0) atoms.emplace_back(std::move(x), w);
  }
  auto m = make_measure(p.group, std::move(atoms), 0.0, true, p.descriptor);
  // absorb the rounding of the shell sums so that mass + deficit = 1
  m.deficit = std::max(0.0, 1.0 - m.mass());
  m.tail_bound = p.tail;
  return m;
}

SparseMeasure delta(GroupPtr g) {
  Element e = g->identity();
  return make_measure(g, {{e, 1.0}}, 0.0, true, "delta");
}

SparseMeasure uniform_generator(GroupPtr g) {
  const auto& s = g->sstar();
  double w = 1.0 / static_cast<double>(s.size());
  std::vector<Atom> atoms;
  for (const auto& x : s) atoms.emplace_back(x, w);
  return make_measure(g, std::move(atoms), 0.0, true, "uniform");
}

SparseMeasure uniform_ball(GroupPtr g, int r) {
  if (r < 0) throw DomainError("uniform_ball needs r >= 0");
  std::vector<Element> pts;
  if (g->kind() == Group::Kind::Lattice)
    lattice_ball(g->dim(), r, pts);
  else
    pts = g->ball(r).elements;
  double w = 1.0 / static_cast<double>(pts.size());
  std::vector<Atom> atoms;
  atoms.reserve(pts.size());
  for (auto& x : pts) atoms.emplace_back(std::move(x), w);
  return make_measure(g, std::move(atoms), 0.0, true, "uniform_ball(r=" + std::to_string(r) + ")");
}

SparseMeasure radial_power_law(GroupPtr g, double alpha, RadialFlavor flavor, int R) {
  size_t need = g->kind() == Group::Kind::Lattice ? 0 : g->volume(R);
  if (need > g->budget()) throw ResourceError("radial horizon exceeds ball budget", -1);
  return materialize(radial_power_profile(std::move(g), alpha, flavor, R));
}

SparseMeasure radial_moment(GroupPtr g, const MomentFunction& rho, int R) {
  return materialize(radial_moment_profile(std::move(g), rho, R));
}

SparseMeasure embed_lamp_measure(const SparseMeasure& mk, GroupPtr w) {
  if (w->kind() != Group::Kind::Wreath) throw DescriptorMismatch("lamp embedding needs a wreath product");
  require_same(*mk.group, *w->lamp(), "lamp measure");
  std::vector<Atom> atoms;
  for (const auto& [k, p] : mk.atoms) atoms.emplace_back(w->embed_lamp(k), p);
  return make_measure(w, std::move(atoms), mk.deficit, mk.symmetric, "lamp(" + mk.descriptor + ")");
}

SparseMeasure embed_base_measure(const SparseMeasure& mh, GroupPtr w) {
  if (w->kind() != Group::Kind::Wreath) throw DescriptorMismatch("base embedding needs a wreath product");
  require_same(*mh.group, *w->base(), "base measure");
  std::vector<Atom> atoms;
  for (const auto& [h, p] : mh.atoms) atoms.emplace_back(w->embed_base(h), p);
  return make_measure(w, std::move(atoms), mh.deficit, mh.symmetric, "base(" + mh.descriptor + ")");
}

SparseMeasure split_measure(const SparseMeasure& mk, const SparseMeasure& mh, GroupPtr w) {
  auto a = embed_lamp_measure(mk, w);
  auto b = embed_base_measure(mh, w);
  std::vector<Atom> atoms;
  for (auto& [x, p] : a.atoms) atoms.emplace_back(x, 0.5 * p);
  for (auto& [x, p] : b.atoms) atoms.emplace_back(x, 0.5 * p);
  return make_measure(w, std::move(atoms), 0.5 * (mk.deficit + mh.deficit), mk.symmetric && mh.symmetric,
                      "split(lamp=" + mk.descriptor + ", base=" + mh.descriptor + ")");
}

SparseMeasure sws_measure(const SparseMeasure& mk, const SparseMeasure& mh, GroupPtr w) {
  auto a = embed_lamp_measure(mk, w);
  auto b = embed_base_measure(mh, w);
  auto m = convolve(convolve(a, b), a);
  if (mk.symmetric && mh.symmetric) symmetrize(m);
  m.descriptor = "sws(lamp=" + mk.descriptor + ", base=" + mh.descriptor + ")";
  return m;
}

SparseMeasure subordinate(const SparseMeasure& mu, const BernsteinSpec& f, int N) {
  auto coef = bernstein_coefficients(f, N);
  absl::flat_hash_map<Element, double> acc;
  double deficit = coef.tail;
  SparseMeasure p = mu;
  for (int n = 1; n <= N; ++n) {
    if (n > 1) p = convolve(p, mu);
    double c = coef.c[static_cast<size_t>(n)];
    if (c == 0.0) continue;
    for (const auto& [x, w] : p.atoms) acc[x] += c * w;
    deficit += c * p.deficit;
  }
  std::vector<Atom> atoms(acc.begin(), acc.end());
  auto m = make_measure(mu.group, std::move(atoms), deficit, false,
                        "subordinate(base=" + mu.descriptor + ", f=" + f.descriptor() + ", terms=" + std::to_string(N) + ")");
  if (mu.symmetric) symmetrize(m);
  return m;
}

// ---------------------------------------------------------------------------
// Descriptor parsing

namespace {

SparseMeasure measure_from_expr(GroupPtr g, const Expr& e);

SparseMeasure sub_measure(GroupPtr g, const Expr& parent, const char* key, size_t pos) {
  const Expr* a = parent.get(key);
  if (!a) a = parent.positional(pos);
  if (!a) throw ParseError(parent.name + " needs " + key + "=");
  return measure_from_expr(std::move(g), *a);
}

SparseMeasure measure_from_expr(GroupPtr g, const Expr& e) {
  auto num = [&](const char* key, size_t pos, double dflt) {
    const Expr* a = e.get(key);
    if (!a) a = e.positional(pos);
    return a ? a->number() : dflt;
  };
  const std::string& n = e.name;
  if (n == "uniform" || n == "uniform_gen" || n == "uniform_generator") return uniform_generator(g);
  if (n == "delta") return delta(g);
  if (n == "uniform_ball") return uniform_ball(g, static_cast<int>(num("r", 0, 1)));
  if (n == "radial_power") {
    double alpha = num("alpha", 0, 1.0);
    RadialFlavor fl = RadialFlavor::Smooth;
    if (const Expr* f = e.get("flavor")) {
      if (f->name == "dyadic")
        fl = RadialFlavor::Dyadic;
      else if (f->name != "smooth")
        throw ParseError("radial_power flavor must be smooth or dyadic");
    }
    int R = static_cast<int>(num("horizon", 99, radial_horizon(alpha, fl)));
    return radial_power_law(g, alpha, fl, R);
  }
  if (n == "radial_moment") {
    const Expr* r = e.get("rho");
    if (!r) throw ParseError("radial_moment needs rho=");
    return radial_moment(g, MomentFunction::from_expr(*r), static_cast<int>(num("horizon", 99, 1024)));
  }
  if (n == "lazy") {
    auto base = sub_measure(g, e, "base", 0);
    double hold = num("hold", 1, 0.5);
    if (!(hold >= 0.0 && hold <= 1.0)) throw ValidationError("lazy hold must be in [0,1]");
    std::vector<Atom> atoms;
    for (const auto& [x, w] : base.atoms) atoms.emplace_back(x, (1.0 - hold) * w);
    atoms.emplace_back(g->identity(), hold);
    return make_measure(g, std::move(atoms), (1.0 - hold) * base.deficit, base.symmetric,
                        "lazy(base=" + base.descriptor + ", hold=" + fmt(hold) + ")");
  }
  if (n == "split" || n == "sws") {
    if (g->kind() != Group::Kind::Wreath) throw DescriptorMismatch(n + " measure needs a wreath product group");
    auto mk = sub_measure(g->lamp(), e, "lamp", 0);
    auto mh = sub_measure(g->base(), e, "base", 1);
    return n == "split" ? split_measure(mk, mh, g) : sws_measure(mk, mh, g);
  }
  if (n == "subordinate") {
    auto base = sub_measure(g, e, "base", 0);
    const Expr* f = e.get("f");
    if (!f) throw ParseError("subordinate needs f=");
    return subordinate(base, BernsteinSpec::from_expr(*f), static_cast<int>(num("terms", 99, 256)));
  }
  throw ParseError("unknown measure '" + n + "'");
}

}  // namespace

SparseMeasure parse_measure(GroupPtr g, std::string_view text) {
  auto m = measure_from_expr(std::move(g), parse_expr(text));
  return m;
}

// ---------------------------------------------------------------------------
// Moments

MomentValue rho_moment(const SparseMeasure& mu, const MomentFunction& rho) {
  MomentValue out;
  Accumulator acc;
  for (const auto& [x, w] : mu.atoms) {
    auto len = mu.group->word_length(x);
    out.exact_lengths = out.exact_lengths && len.exact;
    acc.add(w * rho(static_cast<double>(len.length)));
  }
  out.value = acc.value();
  out.uncertainty = mu.deficit;
  return out;
}

namespace {

// sup_s s mu(rho > s) over the jump levels: max_l s_l mu(rho >= s_l).
double weak_from_levels(std::vector<std::pair<double, double>> lv) {
  std::sort(lv.begin(), lv.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  double best = 0.0, above = 0.0;
  for (size_t i = 0; i < lv.size();) {
    size_t j = i;
    while (j < lv.size() && lv[j].first == lv[i].first) above += lv[j++].second;
    best = std::max(best, lv[i].first * above);
    i = j;
  }
  return best;
}

}  // namespace

MomentValue weak_rho_moment(const SparseMeasure& mu, const MomentFunction& rho) {
  MomentValue out;
  std::vector<std::pair<double, double>> lv;
  lv.reserve(mu.atoms.size());
  for (const auto& [x, w] : mu.atoms) {
    auto len = mu.group->word_length(x);
    out.exact_lengths = out.exact_lengths && len.exact;
    lv.emplace_back(rho(static_cast<double>(len.length)), w);
  }
  out.value = weak_from_levels(std::move(lv));
  out.uncertainty = mu.deficit;
  return out;
}

double weak_rho_moment(const RadialProfile& p, const MomentFunction& rho) {
  std::vector<std::pair<double, double>> lv;
  for (size_t j = 0; j < p.elem_weight.size(); ++j)
    if (p.elem_weight[j] > 0.0) lv.emplace_back(rho(static_cast<double>(j)), p.elem_weight[j] * p.shell_count[j]);
  return weak_from_levels(std::move(lv));
}

double m_p_rho(const MomentFunction& rho, double p, double t) {
  if (!(t > 0.0)) throw DomainError("m_p_rho needs t > 0");
  if (!(p >= 1.0)) throw DomainError("m_p_rho needs p >= 1");
  auto g = [&rho, p](double s) { return std::pow(s, p - 1.0) / rho(s); };
  // dyadic panels resolve the slow variation of rho over many scales
  Accumulator acc;
  double a = 0.0;
  double b = std::min(t, 1.0);
  while (a < t) {
    acc.add(quad::integrate(g, a, b, -1.0, 1e-12).value);
    a = b;
    b = std::min(t, 2.0 * b);
  }
  return std::pow(t, p) / acc.value();
}

std::string to_text(const SparseMeasure& m) {
  std::ostringstream os;
  os.precision(17);
  os << "# deficit " << m.deficit << "\n";
  for (const auto& [x, w] : m.atoms) os << m.group->to_string(x) << "\t" << w << "\n";
  return os.str();
}

}  // namespace rwlab
