#include "rwlab/experiment.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "rwlab/errors.hpp"
#include "rwlab/expr.hpp"
#include "rwlab/profile.hpp"

namespace rwlab {

// ---------------------------------------------------------------------------
// Rational

namespace {

long long narrow(__int128 v) {
  if (v > std::numeric_limits<long long>::max() || v < std::numeric_limits<long long>::min())
    throw DomainError("rational overflow");
  return static_cast<long long>(v);
}

Rational make(__int128 n, __int128 d) {
  if (d == 0) throw DomainError("rational with zero denominator");
  if (d < 0) n = -n, d = -d;
  __int128 a = n < 0 ? -n : n, b = d;
  while (b != 0) {
    __int128 t = a % b;
    a = b;
    b = t;
  }
  if (a > 1) n /= a, d /= a;
  return Rational(narrow(n), narrow(d));
}

}  // namespace

Rational::Rational(long long n, long long d) {
  if (d == 0) throw DomainError("rational with zero denominator");
  long long g = std::gcd(n, d);
  if (g == 0) g = 1;
  n_ = n / g;
  d_ = d / g;
  if (d_ < 0) n_ = -n_, d_ = -d_;
}

Rational Rational::parse(std::string_view t) {
  auto bad = [&] { return ParseError("not an exact number: '" + std::string(t) + "'"); };
  if (t.empty()) throw bad();
  if (auto slash = t.find('/'); slash != std::string_view::npos) {
    Rational a = parse(t.substr(0, slash)), b = parse(t.substr(slash + 1));
    if (b.num() == 0) throw bad();
    return a / b;
  }
  size_t i = 0;
  bool neg = false;
  if (t[0] == '-' || t[0] == '+') neg = t[0] == '-', i = 1;
  __int128 n = 0, d = 1;
  bool digits = false, dot = false;
  for (; i < t.size(); ++i) {
    char c = t[i];
    if (c == '.' && !dot) {
      dot = true;
    } else if (c >= '0' && c <= '9') {
      digits = true;
      n = n * 10 + (c - '0');
      if (dot) d *= 10;
      if (n > (static_cast<__int128>(1) << 62) || d > (static_cast<__int128>(1) << 62)) throw bad();
    } else {
      throw bad();
    }
  }
  if (!digits) throw bad();
  return make(neg ? -n : n, d);
}

std::string Rational::str() const { return d_ == 1 ? std::to_string(n_) : std::to_string(n_) + "/" + std::to_string(d_); }

Rational operator+(Rational a, Rational b) {
  return make(static_cast<__int128>(a.n_) * b.d_ + static_cast<__int128>(b.n_) * a.d_, static_cast<__int128>(a.d_) * b.d_);
}
Rational operator-(Rational a, Rational b) { return a + Rational(-b.n_, b.d_); }
Rational operator*(Rational a, Rational b) {
  return make(static_cast<__int128>(a.n_) * b.n_, static_cast<__int128>(a.d_) * b.d_);
}
Rational operator/(Rational a, Rational b) {
  return make(static_cast<__int128>(a.n_) * b.d_, static_cast<__int128>(a.d_) * b.n_);
}
bool operator<(Rational a, Rational b) {
  return static_cast<__int128>(a.n_) * b.d_ < static_cast<__int128>(b.n_) * a.d_;
}

// ---------------------------------------------------------------------------
// Prediction table

const char* to_string(DecayFamily f) {
  switch (f) {
    case DecayFamily::Polynomial: return "polynomial";
    case DecayFamily::Stretched: return "stretched";
    case DecayFamily::Slow: return "slow";
  }
  return "?";
}

std::string Prediction::formula() const {
  std::string s;
  switch (family) {
    case DecayFamily::Polynomial:
      s = "n^-(" + beta.str() + ")";
      if (eta.num() != 0) s += " (log n)^-(" + eta.str() + ")";
      break;
    case DecayFamily::Stretched:
      s = "exp(-n^(" + gamma.str() + ")";
      if (delta.num() != 0) s += " (log n)^(" + delta.str() + ")";
      s += ")";
      break;
    case DecayFamily::Slow:
      s = "exp(-n / log_[" + std::to_string(depth) + "](n)^(" + eps.str() + "))";
      break;
  }
  return one_sided ? ">= " + s : s;
}

std::optional<Prediction> Prediction::as_stretched() const {
  if (family == DecayFamily::Stretched) return *this;
  if (family != DecayFamily::Slow || depth != 1) return std::nullopt;
  Prediction p = *this;
  p.family = DecayFamily::Stretched;
  p.gamma = 1;
  p.delta = Rational(0) - eps;
  return p;
}

const std::vector<PredictionRule>& prediction_rules() {
  static const std::vector<PredictionRule> rules = {
      {"poly.diffusive", "growth degree D, finite second moment", "n^-(D/2)"},
      {"poly.stable", "growth degree D, radial index a in (0,2)", "n^-(D/a)"},
      {"poly.critical", "growth degree D, radial index 2", "n^-(D/2) (log n)^-(D/2)"},
      {"poly.log-moment", "growth degree D, moment log_[1]^e", "exp(-n^(1/(1+e)))"},
      {"poly.iterated-log-moment", "growth degree D, moment log_[k]^e with k >= 2", "exp(-n / log_[k-1](n)^e)"},
      {"wreath.finite-lamp", "finite K wr H, H degree d, base index a in (0,2]", "exp(-n^(d/(d+a)))"},
      {"wreath.poly-lamp", "K polynomial wr H, H degree d, base index a in (0,2]",
       "exp(-n^(d/(a+d)) (log n)^(a/(a+d)))"},
      {"wreath.exp-lamp", "K with cube-root decay wr H, H degree d, base index a1, lamp index a2",
       "exp(-n^((a1+a2 d)/(a1+a2 d+a1 a2)))"},
      {"wreath.exp-base", "K wr H, H with cube-root decay, base index a1 in (0,2)", "exp(-n / log_[1](n)^a1)"},
      {"wreath.finite-lamp.critical", "finite K wr H, H degree d, base index 2", "exp(-(n log n)^(d/(d+2)))"},
      {"wreath.poly-lamp.critical", "K polynomial wr H, H degree d, base index 2", "exp(-n^(d/(d+2)) log n)"},
      {"wreath.exp-lamp.critical", "K with cube-root decay wr H, H degree d, base index 2 (lower bound)",
       ">= exp(-n^((d+1)/(d+3)) log n)"},
      {"wreath.slow-moment", "K wr H with stretched decay, moment log_[k]^e", "exp(-n / log_[k](n)^e)"},
      {"lamplighter.stable", "finite K wr Z, radial index a in (0,2) on the whole group", "exp(-n^(1/(1+a)))"},
      {"lamplighter.critical", "finite K wr Z, radial index 2 on the whole group (lower bound)",
       ">= exp(-n^(1/3) log n)"},
  };
  return rules;
}

namespace {

// Growth classes that the table distinguishes.
enum class GK { Trivial, Finite, Poly, CubeRoot, Other };

struct GClass {
  GK k = GK::Other;
  int degree = 0;
};

GClass classify(const Group& g) {
  switch (g.kind()) {
    case Group::Kind::Cyclic: return {g.modulus() == 1 ? GK::Trivial : GK::Finite, 0};
    case Group::Kind::Lattice: return {GK::Poly, g.dim()};
    case Group::Kind::Heisenberg: return {GK::Poly, 4};
    case Group::Kind::Wreath: {
      auto l = classify(*g.lamp()), b = classify(*g.base());
      if (l.k == GK::Trivial) return b;
      if (l.k == GK::Finite && g.base()->kind() == Group::Kind::Lattice && g.base()->dim() == 1) return {GK::CubeRoot, 0};
      return {GK::Other, 0};
    }
  }
  return {};
}

// Moment classes of a measure descriptor.
enum class MK { None, Finite, Stable, Critical, LogMoment };

struct MClass {
  MK k = MK::None;
  Rational alpha;  // Stable
  int depth = 0;   // LogMoment
  Rational eps;
  MClass() = default;
  MClass(MK kind, Rational a = 0) : k(kind), alpha(a) {}
};

const Expr* arg(const Expr& e, const char* key, size_t pos) {
  const Expr* a = e.get(key);
  return a ? a : e.positional(pos);
}

MClass power_class(const Rational& a) {
  if (!(Rational(0) < a)) return {};
  if (a < Rational(2)) return {MK::Stable, a};
  if (a == Rational(2)) return {MK::Critical, a};
  return {MK::Finite, Rational(2)};
}

MClass measure_class(const Expr& e) {
  const std::string& n = e.name;
  if (n == "uniform" || n == "uniform_gen" || n == "uniform_generator" || n == "uniform_ball") return {MK::Finite, 2};
  if (n == "lazy") {
    const Expr* b = arg(e, "base", 0);
    return b ? measure_class(*b) : MClass{};
  }
  if (n == "radial_power") {
    const Expr* a = arg(e, "alpha", 0);
    return power_class(a ? Rational::parse(a->name) : Rational(1));
  }
  if (n == "radial_moment") {
    const Expr* r = e.get("rho");
    if (!r) return {};
    if (r->name == "power" || r->name == "rho_alpha") {
      const Expr* a = arg(*r, "alpha", 0);
      return power_class(a ? Rational::parse(a->name) : Rational(1));
    }
    if (r->name == "iterated_log") {
      const Expr* k = arg(*r, "k", 0);
      const Expr* ep = arg(*r, "eps", 1);
      MClass c{MK::LogMoment};
      c.depth = k ? static_cast<int>(k->integer()) : 1;
      c.eps = ep ? Rational::parse(ep->name) : Rational(1);
      if (c.depth < 1 || !(Rational(0) < c.eps)) return {};
      return c;
    }
    return {};
  }
  if (n == "subordinate") {
    const Expr* b = arg(e, "base", 0);
    const Expr* f = e.get("f");
    if (!b || !f || measure_class(*b).k != MK::Finite) return {};
    Rational a;
    if (f->name == "sqrt") {
      a = Rational(1, 2);
    } else if (f->name == "power") {
      const Expr* x = arg(*f, "alpha", 0);
      a = x ? Rational::parse(x->name) : Rational(1, 2);
    } else if (f->name == "identity") {
      a = 1;
    } else {
      return {};
    }
    if (!(Rational(0) < a) || Rational(1) < a) return {};
    return a == Rational(1) ? MClass{MK::Finite, 2} : MClass{MK::Stable, a * Rational(2)};
  }
  return {};
}

Prediction poly(Rational beta, Rational eta, const char* rule) {
  Prediction p;
  p.family = DecayFamily::Polynomial;
  p.beta = beta;
  p.eta = eta;
  p.rule = rule;
  return p;
}

Prediction stretched(Rational gamma, Rational delta, const char* rule, bool one_sided = false) {
  Prediction p;
  p.family = DecayFamily::Stretched;
  p.gamma = gamma;
  p.delta = delta;
  p.rule = rule;
  p.one_sided = one_sided;
  return p;
}

Prediction slow(int depth, Rational eps, const char* rule) {
  Prediction p;
  p.family = DecayFamily::Slow;
  p.depth = depth;
  p.eps = eps;
  p.rule = rule;
  return p;
}

std::optional<Prediction> predict_poly(int D, const MClass& m) {
  Rational d(D);
  switch (m.k) {
    case MK::Finite: return poly(d / 2, 0, "poly.diffusive");
    case MK::Stable: return poly(d / m.alpha, 0, "poly.stable");
    case MK::Critical: return poly(d / 2, d / 2, "poly.critical");
    case MK::LogMoment:
      if (m.depth == 1) return stretched(Rational(1) / (Rational(1) + m.eps), 0, "poly.log-moment");
      return slow(m.depth - 1, m.eps, "poly.iterated-log-moment");
    case MK::None: break;
  }
  return std::nullopt;
}

// Index of a factor measure as used by the wreath rules: finite second
// moment counts as 2.
std::optional<Rational> index_of(const MClass& m) {
  if (m.k == MK::Finite) return Rational(2);
  if (m.k == MK::Stable) return m.alpha;
  return std::nullopt;
}

std::optional<Prediction> predict_wreath(const Group& g, const MClass& lamp_m, const MClass& base_m) {
  auto K = classify(*g.lamp()), H = classify(*g.base());
  if (K.k == GK::Trivial || K.k == GK::Other) return std::nullopt;
  if (H.k == GK::CubeRoot) {
    if (base_m.k == MK::Stable) return slow(1, base_m.alpha, "wreath.exp-base");
    return std::nullopt;
  }
  if (H.k != GK::Poly) return std::nullopt;
  Rational d(H.degree);
  if (base_m.k == MK::Critical) {
    if (lamp_m.k != MK::Finite && lamp_m.k != MK::Critical) return std::nullopt;
    Rational g2 = d / (d + 2);
    if (K.k == GK::Finite) return stretched(g2, g2, "wreath.finite-lamp.critical");
    if (K.k == GK::Poly) return stretched(g2, 1, "wreath.poly-lamp.critical");
    return stretched((d + 1) / (d + 3), 1, "wreath.exp-lamp.critical", true);
  }
  auto a1 = index_of(base_m);
  if (!a1) return std::nullopt;
  const Rational a = *a1;
  if (K.k == GK::Finite) return stretched(d / (d + a), 0, "wreath.finite-lamp");
  auto a2 = index_of(lamp_m);
  if (!a2) return std::nullopt;
  if (K.k == GK::Poly) return stretched(d / (a + d), a / (a + d), "wreath.poly-lamp");
  Rational num = a + *a2 * d;
  return stretched(num / (num + a * *a2), 0, "wreath.exp-lamp");
}

}  // namespace

std::optional<Prediction> predict(std::string_view group, std::string_view measure) {
  GroupPtr gp = Group::parse(group);
  const Group& g = *gp;
  Expr m = parse_expr(measure);
  GClass gc = classify(g);
  if (gc.k == GK::Poly) return predict_poly(gc.degree, measure_class(m));
  if (g.kind() != Group::Kind::Wreath) return std::nullopt;
  if (m.name == "split" || m.name == "sws") {
    const Expr* l = arg(m, "lamp", 0);
    const Expr* b = arg(m, "base", 1);
    if (!l || !b) return std::nullopt;
    return predict_wreath(g, measure_class(*l), measure_class(*b));
  }
  MClass whole = measure_class(m);
  if (whole.k == MK::Finite) return predict_wreath(g, whole, whole);
  auto K = classify(*g.lamp()), H = classify(*g.base());
  bool stretched_class = H.k == GK::Poly && (K.k == GK::Finite || K.k == GK::Poly || K.k == GK::CubeRoot);
  if (whole.k == MK::LogMoment && stretched_class) return slow(whole.depth, whole.eps, "wreath.slow-moment");
  if (gc.k == GK::CubeRoot) {
    if (whole.k == MK::Stable) return stretched(Rational(1) / (Rational(1) + whole.alpha), 0, "lamplighter.stable");
    if (whole.k == MK::Critical) return stretched(Rational(1, 3), 1, "lamplighter.critical", true);
  }
  return std::nullopt;
}

std::optional<Prediction> predict_functional(std::string_view group, std::string_view measure,
                                             std::string_view functional) {
  Expr f = parse_expr(functional);
  std::string lamp;
  if (f.name == "range") {
    lamp = "cyclic(2)";
  } else if (f.name == "lamp") {
    const Expr* k = f.get("group");
    lamp = k ? k->str() : "cyclic(2)";
  } else {
    return std::nullopt;
  }
  std::string w = "wreath(" + lamp + ", " + std::string(group) + ")";
  std::string mu = "split(lamp=uniform, base=" + std::string(measure) + ")";
  return predict(w, mu);
}

// ---------------------------------------------------------------------------
// Fitting

namespace {

struct Line {
  double slope = 0.0, intercept = 0.0, rms = 0.0;
};

Line least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) mx += x[i], my += y[i];
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  Line l;
  l.slope = sxy / sxx;
  l.intercept = my - l.slope * mx;
  double ss = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double r = y[i] - (l.intercept + l.slope * x[i]);
    ss += r * r;
  }
  l.rms = std::sqrt(ss / static_cast<double>(n));
  return l;
}

std::string fmtd(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

DecayFit fit_decay(const std::vector<DecayPoint>& pts, DecayFamily family, const FitOptions& opt) {
  if (family == DecayFamily::Slow) throw FitRefused("slow forms are fitted as stretched with gamma = 1");
  std::vector<DecayPoint> w;
  for (const auto& p : pts)
    if (p.n >= opt.burn_in && (opt.n_max <= 0 || p.n <= opt.n_max)) w.push_back(p);
  if (w.size() < opt.min_points)
    throw FitRefused("fit window has " + std::to_string(w.size()) + " points, needs " + std::to_string(opt.min_points));
  double lo = w.front().n, hi = w.front().n;
  for (const auto& p : w) lo = std::min(lo, p.n), hi = std::max(hi, p.n);
  if (hi < opt.min_span * lo) throw FitRefused("fit window [" + fmtd(lo) + ", " + fmtd(hi) + "] spans less than a factor " + fmtd(opt.min_span));
  std::vector<double> x, y, ll;
  for (const auto& p : w) {
    if (!(p.value > 0.0) || !std::isfinite(p.value)) throw FitRefused("non-positive value at n = " + fmtd(p.n));
    double rel = p.uncertainty / p.value;
    if (family == DecayFamily::Stretched) {
      if (!(p.value < 1.0)) throw FitRefused("value at n = " + fmtd(p.n) + " is not below 1");
      rel /= -std::log(p.value);
    }
    if (!(rel < opt.max_uncertainty)) throw FitRefused("uncertainty dominates the value at n = " + fmtd(p.n));
    x.push_back(std::log(p.n));
    y.push_back(family == DecayFamily::Stretched ? std::log(-std::log(p.value)) : std::log(p.value));
    ll.push_back(p.n > std::exp(1.0) ? std::log(std::log(p.n)) : 0.0);
  }
  DecayFit f;
  f.family = family;
  f.n_lo = lo;
  f.n_hi = hi;
  f.points = w.size();
  if (family == DecayFamily::Polynomial) {
    std::vector<double> yy(y);
    if (opt.eta != 0.0)
      for (size_t i = 0; i < yy.size(); ++i) {
        if (w[i].n <= std::exp(1.0)) throw FitRefused("log power needs n > e");
        yy[i] += opt.eta * ll[i];
      }
    Line l = least_squares(x, yy);
    f.beta = -l.slope;
    f.eta = opt.eta;
    f.log_c = l.intercept;
    f.residual = l.rms;
    return f;
  }
  if (opt.delta_grid.empty()) throw FitRefused("empty delta grid");
  bool first = true;
  for (double delta : opt.delta_grid) {
    std::vector<double> yy(y);
    if (delta != 0.0)
      for (size_t i = 0; i < yy.size(); ++i) {
        if (w[i].n <= std::exp(1.0)) throw FitRefused("log power needs n > e");
        yy[i] -= delta * ll[i];
      }
    Line l = least_squares(x, yy);
    if (first || l.rms < f.residual) {
      f.gamma = l.slope;
      f.delta = delta;
      f.log_c = l.intercept;
      f.residual = l.rms;
      first = false;
    }
  }
  if (!(f.gamma > 0.0 && f.gamma < 1.5)) throw FitRefused("fitted gamma " + fmtd(f.gamma) + " outside (0, 1.5)");
  return f;
}

DecayFit fit_decay(const ReturnSeries& s, DecayFamily family, const FitOptions& opt) {
  std::vector<DecayPoint> pts;
  for (size_t i = 0; i < s.size(); ++i) pts.push_back({static_cast<double>(s.n[i]), s.value[i], s.deficit_bound[i]});
  return fit_decay(pts, family, opt);
}

DecayFit fit_decay(const std::vector<FunctionalEstimate>& est, DecayFamily family, const FitOptions& opt) {
  std::vector<DecayPoint> pts;
  for (const auto& e : est) pts.push_back({static_cast<double>(e.n), e.value, e.stderr_});
  return fit_decay(pts, family, opt);
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Match: return "MATCH";
    case Verdict::Inconclusive: return "INCONCLUSIVE";
    case Verdict::Mismatch: return "MISMATCH";
  }
  return "?";
}

Verdict compare(const std::optional<Prediction>& pred, const std::optional<DecayFit>& fit, double tol) {
  if (!pred || !fit) return Verdict::Inconclusive;
  std::optional<Prediction> p = pred;
  if (p->family == DecayFamily::Slow) p = p->as_stretched();
  if (!p || p->family != fit->family) return Verdict::Inconclusive;
  double got = fit->family == DecayFamily::Polynomial ? fit->beta : fit->gamma;
  double want = p->family == DecayFamily::Polynomial ? p->beta.value() : p->gamma.value();
  if (p->one_sided) return got <= want + tol ? Verdict::Match : Verdict::Mismatch;
  return std::abs(got - want) <= tol ? Verdict::Match : Verdict::Mismatch;
}

// ---------------------------------------------------------------------------
// Config

const char* to_string(Task t) {
  switch (t) {
    case Task::ReturnSeries: return "return-series";
    case Task::Profile: return "profile";
    case Task::McFunctional: return "mc-functional";
    case Task::Entropy: return "entropy";
  }
  return "?";
}

namespace {

std::string trim(std::string_view s) {
  size_t a = s.find_first_not_of(" \t\r"), b = s.find_last_not_of(" \t\r");
  return a == std::string_view::npos ? std::string() : std::string(s.substr(a, b - a + 1));
}

template <class T>
T parse_num(const std::string& key, const std::string& v) {
  T out{};
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ParseError("bad value for " + key + ": '" + v + "'");
  return out;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_num<T>(key, item));
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    if constexpr (std::is_floating_point_v<T>)
      s += fmtd(v[i]);
    else
      s += std::to_string(v[i]);
  }
  return s;
}

Task parse_task(const std::string& v) {
  if (v == "return-series") return Task::ReturnSeries;
  if (v == "profile") return Task::Profile;
  if (v == "mc-functional") return Task::McFunctional;
  if (v == "entropy") return Task::Entropy;
  throw ParseError("unknown task '" + v + "'");
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
  ExperimentConfig c;
  std::stringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("line " + std::to_string(lineno) + ": expected key = value");
    std::string k = trim(std::string_view(line).substr(0, eq)), v = trim(std::string_view(line).substr(eq + 1));
    if (k == "name") c.name = v;
    else if (k == "group") c.group = v;
    else if (k == "measure") c.measure = v;
    else if (k == "task") c.task = parse_task(v);
    else if (k == "N") c.N = parse_num<int>(k, v);
    else if (k == "policy") c.policy = v;
    else if (k == "method") c.method = v;
    else if (k == "fit") c.fit = v;
    else if (k == "burn_in") c.burn_in = parse_num<double>(k, v);
    else if (k == "fit_max") c.fit_max = parse_num<double>(k, v);
    else if (k == "delta_grid") c.delta_grid = parse_list<double>(k, v);
    else if (k == "tolerance") c.tolerance = parse_num<double>(k, v);
    else if (k == "p") c.p = parse_num<double>(k, v);
    else if (k == "family") c.family = v;
    else if (k == "volumes") c.volumes = parse_list<double>(k, v);
    else if (k == "replicas") c.replicas = parse_num<long>(k, v);
    else if (k == "ns") c.ns = parse_list<long>(k, v);
    else if (k == "functional") c.functional = v;
    else if (k == "seed") c.seed = parse_num<uint64_t>(k, v);
    else if (k == "experiment_id") c.experiment_id = parse_num<uint64_t>(k, v);
    else throw ParseError("line " + std::to_string(lineno) + ": unknown key '" + k + "'");
  }
  return c;
}

std::string ExperimentConfig::serialize() const {
  std::ostringstream o;
  o << "name = " << name << "\n"
    << "group = " << group << "\n"
    << "measure = " << measure << "\n"
    << "task = " << to_string(task) << "\n"
    << "N = " << N << "\n"
    << "policy = " << policy << "\n"
    << "method = " << method << "\n"
    << "fit = " << fit << "\n"
    << "burn_in = " << fmtd(burn_in) << "\n"
    << "fit_max = " << fmtd(fit_max) << "\n"
    << "delta_grid = " << join(delta_grid) << "\n"
    << "tolerance = " << fmtd(tolerance) << "\n"
    << "p = " << fmtd(p) << "\n"
    << "family = " << family << "\n"
    << "volumes = " << join(volumes) << "\n"
    << "replicas = " << replicas << "\n"
    << "ns = " << join(ns) << "\n"
    << "functional = " << functional << "\n";
  if (seed) o << "seed = " << *seed << "\n";
  o << "experiment_id = " << experiment_id << "\n";
  return o.str();
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const { return serialize() == o.serialize(); }

LocalTimeFunctional parse_functional(std::string_view text) {
  Expr e = parse_expr(text);
  auto num = [&](const char* key, size_t pos, double dflt) {
    const Expr* a = arg(e, key, pos);
    return a ? a->number() : dflt;
  };
  if (e.name == "zero") return LocalTimeFunctional::zero();
  if (e.name == "range") return LocalTimeFunctional::range(num("kappa", 0, 1.0), num("start", 1, 0.0) != 0.0);
  if (e.name == "power") return LocalTimeFunctional::power(num("kappa", 0, 1.0), num("gamma", 1, 1.0));
  if (e.name == "lamp") {
    const Expr* k = e.get("group");
    const Expr* nu = e.get("nu");
    GroupPtr g = Group::parse(k ? k->str() : "cyclic(2)");
    return LocalTimeFunctional::lamp(parse_measure(g, nu ? nu->str() : "lazy(uniform_ball(r=1), hold=0.5)"));
  }
  throw ParseError("unknown functional '" + e.name + "'");
}

// ---------------------------------------------------------------------------
// Runner

namespace {

void write_atomic(const std::filesystem::path& path, const std::string& data) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ResourceError("cannot write " + tmp.string());
    f << data;
    if (!f) throw ResourceError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ReturnMethod parse_method(const std::string& m) {
  if (m == "auto") return ReturnMethod::Auto;
  if (m == "sparse") return ReturnMethod::Sparse;
  if (m == "torus") return ReturnMethod::Torus;
  if (m == "harper") return ReturnMethod::Harper;
  throw ParseError("unknown method '" + m + "'");
}

nlohmann::ordered_json prediction_json(const std::optional<Prediction>& p) {
  if (!p) return nullptr;
  nlohmann::ordered_json j;
  j["family"] = to_string(p->family);
  j["formula"] = p->formula();
  j["rule"] = p->rule;
  j["one_sided"] = p->one_sided;
  if (p->family == DecayFamily::Polynomial) {
    j["beta"] = p->beta.str();
    j["eta"] = p->eta.str();
  } else if (p->family == DecayFamily::Stretched) {
    j["gamma"] = p->gamma.str();
    j["delta"] = p->delta.str();
  } else {
    j["depth"] = p->depth;
    j["eps"] = p->eps.str();
  }
  return j;
}

nlohmann::ordered_json fit_json(const DecayFit& f) {
  nlohmann::ordered_json j;
  j["family"] = to_string(f.family);
  if (f.family == DecayFamily::Polynomial) {
    j["beta"] = f.beta;
    j["eta"] = f.eta;
  } else {
    j["gamma"] = f.gamma;
    j["delta"] = f.delta;
  }
  j["log_c"] = f.log_c;
  j["residual"] = f.residual;
  j["n_lo"] = f.n_lo;
  j["n_hi"] = f.n_hi;
  j["points"] = f.points;
  return j;
}

struct Outcome {
  std::string csv, dat;
  std::optional<Prediction> pred;
  std::optional<DecayFit> fit;
  std::vector<DecayPoint> points;
  DecayFamily family = DecayFamily::Polynomial;
  bool want_fit = false;
  std::string method;
};

DecayFamily fit_family(const ExperimentConfig& c, const std::optional<Prediction>& pred, DecayFamily dflt, bool& want) {
  want = c.fit != "none";
  if (c.fit == "polynomial") return DecayFamily::Polynomial;
  if (c.fit == "stretched") return DecayFamily::Stretched;
  if (c.fit != "auto" && c.fit != "none") throw ParseError("unknown fit '" + c.fit + "'");
  if (pred) {
    if (pred->family == DecayFamily::Polynomial) return DecayFamily::Polynomial;
    return DecayFamily::Stretched;
  }
  return dflt;
}

FitOptions fit_options(const ExperimentConfig& c, const std::optional<Prediction>& pred) {
  FitOptions o;
  o.burn_in = c.burn_in;
  o.n_max = c.fit_max;
  if (!c.delta_grid.empty()) {
    o.delta_grid = c.delta_grid;
  } else if (pred) {
    auto s = pred->as_stretched();
    if (s) o.delta_grid = {s->delta.value()};
    if (pred->family == DecayFamily::Polynomial) o.eta = pred->eta.value();
  }
  return o;
}

std::string two_column(const std::vector<DecayPoint>& pts) {
  std::ostringstream o;
  o.precision(17);
  for (const auto& p : pts) o << p.n << ' ' << p.value << '\n';
  return o.str();
}

Outcome run_return_series(const ExperimentConfig& c, GroupPtr g) {
  Outcome out;
  Expr me = parse_expr(c.measure);
  ReturnSeries s;
  TruncationPolicy pol = TruncationPolicy::parse(c.policy);
  if (me.name == "sws" && g->kind() == Group::Kind::Wreath && pol.mode == TruncationPolicy::Mode::None && c.method == "auto") {
    const Expr* l = arg(me, "lamp", 0);
    const Expr* b = arg(me, "base", 1);
    if (!l || !b) throw ParseError("sws needs lamp and base");
    s = sws_return_series(parse_measure(g->lamp(), l->str()), parse_measure(g->base(), b->str()), g, c.N);
  } else {
    s = return_series(parse_measure(g, c.measure), c.N, pol, parse_method(c.method));
  }
  out.method = s.method;
  out.csv = to_csv(s);
  for (size_t i = 0; i < s.size(); ++i) out.points.push_back({static_cast<double>(s.n[i]), s.value[i], s.deficit_bound[i]});
  out.dat = two_column(out.points);
  out.pred = predict(c.group, c.measure);
  out.family = fit_family(c, out.pred, DecayFamily::Polynomial, out.want_fit);
  return out;
}

Outcome run_profile(const ExperimentConfig& c, GroupPtr g) {
  if (c.volumes.empty()) throw ValidationError("profile task needs a non-empty volume list");
  Outcome out;
  SparseMeasure mu = parse_measure(g, c.measure);
  double vmax = *std::max_element(c.volumes.begin(), c.volumes.end());
  std::vector<WitnessSet> fam;
  if (c.family == "balls") {
    std::vector<int> radii;
    for (int r = 0;; ++r) {
      radii.push_back(r);
      if (static_cast<double>(g->volume(r)) >= vmax || r >= 100000) break;
    }
    fam = nested_balls(*g, radii);
  } else if (c.family == "boxes") {
    for (int r = 0; r <= 8; ++r) {
      fam.push_back(wreath_box(*g, r));
      if (static_cast<double>(fam.back().size()) >= vmax) break;
    }
  } else {
    throw ParseError("unknown witness family '" + c.family + "'");
  }
  ProfileCurve curve = profile_curve(mu, c.p, fam, c.volumes);
  out.method = "witness-" + c.family;
  out.csv = to_csv(curve);
  for (const auto& pt : curve.points) out.points.push_back({pt.volume, pt.value, 0.0});
  out.dat = two_column(out.points);
  // Profile values scale as v^(-1/beta) where return probabilities decay as n^-beta.
  auto p = predict(c.group, c.measure);
  if (p && p->family == DecayFamily::Polynomial && p->eta.num() == 0) {
    p->beta = Rational(1) / p->beta;
    p->rule += "/profile";
    out.pred = p;
  }
  out.want_fit = c.fit == "polynomial";
  out.family = DecayFamily::Polynomial;
  return out;
}

Outcome run_functional(const ExperimentConfig& c, GroupPtr g) {
  if (c.ns.empty()) throw ValidationError("mc-functional task needs a non-empty n list");
  Outcome out;
  SparseMeasure mu = parse_measure(g, c.measure);
  auto F = parse_functional(c.functional);
  auto est = functional_estimate(mu, F, c.ns, c.replicas, {c.seed.value_or(0), c.experiment_id, 0});
  out.method = "monte-carlo";
  out.csv = to_csv(est);
  for (const auto& e : est) out.points.push_back({static_cast<double>(e.n), e.value, e.stderr_});
  out.dat = two_column(out.points);
  out.pred = predict_functional(c.group, c.measure, c.functional);
  out.family = fit_family(c, out.pred, DecayFamily::Stretched, out.want_fit);
  return out;
}

Outcome run_entropy(const ExperimentConfig& c, GroupPtr g) {
  if (c.N < 1) throw ValidationError("entropy task needs N >= 1");
  Outcome out;
  SparseMeasure mu = parse_measure(g, c.measure);
  TruncationPolicy pol = TruncationPolicy::parse(c.policy);
  std::ostringstream o;
  o.precision(17);
  o << "n,entropy,deficit\n";
  SparseMeasure nu = mu;
  for (int n = 1; n <= c.N; ++n) {
    if (n > 1) nu = convolve(nu, mu, pol);
    auto d = entropy(nu);
    o << n << ',' << d.value << ',' << d.deficit << '\n';
    out.points.push_back({static_cast<double>(n), d.value, d.deficit});
  }
  out.method = "sparse";
  out.csv = o.str();
  out.dat = two_column(out.points);
  return out;
}

std::string table(const ExperimentConfig& c, const Outcome& o, Verdict v, const std::string& error) {
  std::ostringstream t;
  t << "experiment  " << c.name << "\n"
    << "task        " << to_string(c.task) << "\n"
    << "group       " << c.group << "\n"
    << "measure     " << c.measure << "\n";
  if (!o.method.empty()) t << "method      " << o.method << "\n";
  t << "\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-10s %-14s %-14s %-30s %s\n", "quantity", "fitted", "predicted", "rule", "verdict");
  t << buf;
  std::string fitted = "-", predicted = "-", rule = "-", q = "-";
  if (o.pred) {
    rule = o.pred->rule;
    auto sp = o.pred->family == DecayFamily::Slow ? o.pred->as_stretched() : o.pred;
    if (sp) predicted = (sp->one_sided ? "<=" : "") + (sp->family == DecayFamily::Polynomial ? sp->beta.str() : sp->gamma.str());
  }
  if (o.fit) {
    q = o.fit->family == DecayFamily::Polynomial ? "beta" : "gamma";
    std::snprintf(buf, sizeof buf, "%.6f", o.fit->family == DecayFamily::Polynomial ? o.fit->beta : o.fit->gamma);
    fitted = buf;
  } else if (o.pred) {
    q = o.pred->family == DecayFamily::Polynomial ? "beta" : "gamma";
  }
  std::snprintf(buf, sizeof buf, "%-10s %-14s %-14s %-30s %s\n", q.c_str(), fitted.c_str(), predicted.c_str(), rule.c_str(),
                to_string(v));
  t << buf;
  if (o.pred) t << "\nprediction  " << o.pred->formula() << "\n";
  if (o.fit) {
    std::snprintf(buf, sizeof buf, "window      [%g, %g], %zu points, residual %.3g\n", o.fit->n_lo, o.fit->n_hi, o.fit->points,
                  o.fit->residual);
    t << buf;
  }
  if (!error.empty()) t << "error       " << error << "\n";
  return t.str();
}

}  // namespace

RunResult run(const ExperimentConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  RunResult res;
  fs::create_directories(out_dir);
  fs::path base = fs::path(out_dir) / cfg.name;
  nlohmann::ordered_json side;
  side["name"] = cfg.name;
  {
    nlohmann::ordered_json conf;
    std::stringstream ss(cfg.serialize());
    std::string line;
    while (std::getline(ss, line)) {
      auto eq = line.find(" = ");
      if (eq != std::string::npos) conf[line.substr(0, eq)] = line.substr(eq + 3);
    }
    side["config"] = conf;
  }
  side["seed"] = cfg.seed.value_or(0);
  side["experiment_id"] = cfg.experiment_id;
  Outcome out;
  Verdict verdict = Verdict::Inconclusive;
  std::string error;
  nlohmann::ordered_json err = nullptr;
  auto fail = [&](const Error& e, int code) {
    res.exit_code = code;
    error = std::string(e.kind()) + ": " + e.what();
    err = {{"kind", e.kind()}, {"message", e.what()}};
  };
  try {
    if (cfg.group.empty() || cfg.measure.empty()) throw ValidationError("config needs group and measure");
    GroupPtr g = Group::parse(cfg.group);
    switch (cfg.task) {
      case Task::ReturnSeries: out = run_return_series(cfg, g); break;
      case Task::Profile: out = run_profile(cfg, g); break;
      case Task::McFunctional: out = run_functional(cfg, g); break;
      case Task::Entropy: out = run_entropy(cfg, g); break;
    }
    if (out.want_fit) {
      FitOptions fo = fit_options(cfg, out.pred);
      if (cfg.task == Task::Profile) fo.burn_in = 0, fo.eta = 0;
      out.fit = fit_decay(out.points, out.family, fo);
      verdict = compare(out.pred, out.fit, cfg.tolerance);
    }
  } catch (const FitRefused& e) {
    fail(e, 2);
  } catch (const ResourceError& e) {
    fail(e, 3);
  } catch (const NumericError& e) {
    fail(e, 3);
  } catch (const Error& e) {
    fail(e, 2);
  }
  side["status"] = res.exit_code == 0 ? "ok" : "failed";
  side["exit_code"] = res.exit_code;
  side["method"] = out.method;
  side["prediction"] = prediction_json(out.pred);
  side["fit"] = out.fit ? fit_json(*out.fit) : nlohmann::ordered_json(nullptr);
  side["verdict"] = to_string(verdict);
  side["tolerance"] = cfg.tolerance;
  side["error"] = err;
  side["rows"] = out.points.size();
  res.error = error;
  try {
    if (!out.csv.empty()) {
      write_atomic(base.string() + ".csv", out.csv);
      write_atomic(base.string() + ".dat", out.dat);
      res.files.push_back(base.string() + ".csv");
      res.files.push_back(base.string() + ".dat");
    }
    write_atomic(base.string() + ".json", side.dump(2) + "\n");
    write_atomic(base.string() + ".txt", table(cfg, out, verdict, error));
    res.files.push_back(base.string() + ".json");
    res.files.push_back(base.string() + ".txt");
  } catch (const ResourceError& e) {
    res.exit_code = 3;
    res.error = e.what();
  } catch (const fs::filesystem_error& e) {
    res.exit_code = 3;
    res.error = e.what();
  }
  return res;
}

}  // namespace rwlab
