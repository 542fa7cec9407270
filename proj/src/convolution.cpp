#include "rwlab/convolution.hpp"

#include <absl/container/flat_hash_map.h>

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "rwlab/errors.hpp"
#include "rwlab/expr.hpp"
#include "rwlab/numeric.hpp"
#include "rwlab/parallel.hpp"

namespace rwlab {

namespace {

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

constexpr size_t kBlock = 1024;  // outer atoms per work block; fixed for determinism

}  // namespace

// ---------------------------------------------------------------------------
// Policy

TruncationPolicy TruncationPolicy::parse(std::string_view text) {
  Expr e = parse_expr(text);
  auto arg = [&]() {
    const Expr* a = e.positional(0);
    if (!a && !e.args.empty()) a = &e.args.front().second;
    if (!a) throw ParseError("truncation policy " + e.name + " needs a parameter");
    return a->number();
  };
  if (e.name == "none") return none();
  if (e.name == "radius") return {Mode::Radius, arg()};
  if (e.name == "top_mass") return {Mode::TopMass, arg()};
  if (e.name == "mass_floor") return {Mode::MassFloor, arg()};
  throw ParseError("unknown truncation policy '" + e.name + "'");
}

std::string TruncationPolicy::str() const {
  switch (mode) {
    case Mode::None: return "none";
    case Mode::Radius: return "radius(" + fmt(param) + ")";
    case Mode::TopMass: return "top_mass(" + fmt(param) + ")";
    case Mode::MassFloor: return "mass_floor(" + fmt(param) + ")";
  }
  return "none";
}

void truncate(SparseMeasure& m, const TruncationPolicy& policy) {
  if (policy.mode == TruncationPolicy::Mode::None) return;
  std::vector<char> keep(m.atoms.size(), 1);
  switch (policy.mode) {
    case TruncationPolicy::Mode::Radius:
      for (size_t i = 0; i < m.atoms.size(); ++i)
        keep[i] = static_cast<double>(m.group->word_length(m.atoms[i].first).length) <= policy.param;
      break;
    case TruncationPolicy::Mode::MassFloor:
      for (size_t i = 0; i < m.atoms.size(); ++i) keep[i] = m.atoms[i].second >= policy.param;
      break;
    case TruncationPolicy::Mode::TopMass: {
      auto k = static_cast<size_t>(policy.param);
      if (k >= m.atoms.size()) break;
      // units are single atoms, or inverse pairs when the measure is symmetric
      std::vector<std::pair<size_t, size_t>> units;
      std::vector<char> seen(m.atoms.size(), 0);
      for (size_t i = 0; i < m.atoms.size(); ++i) {
        if (seen[i]) continue;
        seen[i] = 1;
        size_t j = i;
        if (m.symmetric) {
          Element inv = m.group->inverse(m.atoms[i].first);
          auto it = std::lower_bound(m.atoms.begin(), m.atoms.end(), inv,
                                     [](const Atom& a, const Element& e) { return a.first < e; });
          if (it != m.atoms.end() && it->first == inv) j = static_cast<size_t>(it - m.atoms.begin());
          seen[j] = 1;
        }
        units.emplace_back(i, j);
      }
      // heaviest first, ties by canonical order
      std::stable_sort(units.begin(), units.end(),
                       [&](const auto& a, const auto& b) { return m.atoms[a.first].second > m.atoms[b.first].second; });
      std::fill(keep.begin(), keep.end(), 0);
      size_t kept = 0;
      for (const auto& [i, j] : units) {
        size_t w = i == j ? 1 : 2;
        if (kept + w > k) continue;
        keep[i] = keep[j] = 1;
        kept += w;
      }
      break;
    }
    case TruncationPolicy::Mode::None: break;
  }
  Accumulator dropped;
  std::vector<Atom> out;
  out.reserve(m.atoms.size());
  for (size_t i = 0; i < m.atoms.size(); ++i) {
    if (keep[i])
      out.push_back(std::move(m.atoms[i]));
    else
      dropped.add(m.atoms[i].second);
  }
  m.atoms = std::move(out);
  m.deficit += dropped.value();
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

struct Box {
  std::vector<int64_t> lo, hi;
  size_t cells() const {
    size_t c = 1;
    for (size_t i = 0; i < lo.size(); ++i) c *= static_cast<size_t>(hi[i] - lo[i] + 1);
    return c;
  }
};

Box bounding_box(const SparseMeasure& m, int d) {
  Box b;
  b.lo.assign(static_cast<size_t>(d), std::numeric_limits<int64_t>::max());
  b.hi.assign(static_cast<size_t>(d), std::numeric_limits<int64_t>::min());
  for (const auto& [x, w] : m.atoms)
    for (size_t i = 0; i < static_cast<size_t>(d); ++i) {
      b.lo[i] = std::min(b.lo[i], x.v[i]);
      b.hi[i] = std::max(b.hi[i], x.v[i]);
    }
  return b;
}

// Dense gather on Z^d: out(z) = sum over small atoms x (sorted) of w(x) big(z - x).
std::vector<Atom> lattice_dense(const SparseMeasure& small, const SparseMeasure& big, int d) {
  Box bs = bounding_box(small, d), bb = bounding_box(big, d);
  Box bo;
  bo.lo.resize(static_cast<size_t>(d));
  bo.hi.resize(static_cast<size_t>(d));
  for (size_t i = 0; i < static_cast<size_t>(d); ++i) {
    bo.lo[i] = bs.lo[i] + bb.lo[i];
    bo.hi[i] = bs.hi[i] + bb.hi[i];
  }
  std::vector<size_t> ext(static_cast<size_t>(d)), stride_b(static_cast<size_t>(d));
  size_t nb = 1;
  for (size_t i = static_cast<size_t>(d); i-- > 0;) {
    stride_b[i] = nb;
    nb *= static_cast<size_t>(bb.hi[i] - bb.lo[i] + 1);
  }
  std::vector<double> dense(nb, 0.0);
  for (const auto& [x, w] : big.atoms) {
    size_t idx = 0;
    for (size_t i = 0; i < static_cast<size_t>(d); ++i) idx += static_cast<size_t>(x.v[i] - bb.lo[i]) * stride_b[i];
    dense[idx] = w;
  }
  size_t no = bo.cells();
  std::vector<double> out(no, 0.0);
  std::vector<size_t> ext_o(static_cast<size_t>(d));
  for (size_t i = 0; i < static_cast<size_t>(d); ++i) ext_o[i] = static_cast<size_t>(bo.hi[i] - bo.lo[i] + 1);
  size_t nblocks = (no + 4095) / 4096;
  parallel_for(nblocks, [&](size_t blk) {
    size_t begin = blk * 4096, end = std::min(no, begin + 4096);
    std::vector<int64_t> z(static_cast<size_t>(d));
    for (size_t f = begin; f < end; ++f) {
      size_t r = f;
      for (size_t i = static_cast<size_t>(d); i-- > 0;) {
        z[i] = bo.lo[i] + static_cast<int64_t>(r % ext_o[i]);
        r /= ext_o[i];
      }
      double acc = 0.0;
      for (const auto& [x, w] : small.atoms) {
        size_t idx = 0;
        bool in = true;
        for (size_t i = 0; i < static_cast<size_t>(d); ++i) {
          int64_t c = z[i] - x.v[i];
          if (c < bb.lo[i] || c > bb.hi[i]) {
            in = false;
            break;
          }
          idx += static_cast<size_t>(c - bb.lo[i]) * stride_b[i];
        }
        if (in) acc += w * dense[idx];
      }
      out[f] = acc;
    }
  });
  std::vector<Atom> atoms;
  for (size_t f = 0; f < no; ++f) {
    if (!(out[f] > 0.0)) continue;
    Element e;
    e.v.resize(static_cast<size_t>(d));
    size_t r = f;
    for (size_t i = static_cast<size_t>(d); i-- > 0;) {
      e.v[i] = bo.lo[i] + static_cast<int64_t>(r % ext_o[i]);
      r /= ext_o[i];
    }
    atoms.emplace_back(std::move(e), out[f]);
  }
  return atoms;
}

std::vector<Atom> generic_sparse(const SparseMeasure& mu, const SparseMeasure& nu) {
  const Group& g = *mu.group;
  size_t nblocks = (mu.atoms.size() + kBlock - 1) / kBlock;
  std::vector<absl::flat_hash_map<Element, double>> parts(nblocks);
  parallel_for(nblocks, [&](size_t b) {
    auto& map = parts[b];
    size_t begin = b * kBlock, end = std::min(mu.atoms.size(), begin + kBlock);
    for (size_t i = begin; i < end; ++i) {
      const auto& [x, wx] = mu.atoms[i];
      for (const auto& [y, wy] : nu.atoms) map[g.multiply(x, y)] += wx * wy;
    }
  });
  // merge in block order so sums do not depend on scheduling
  absl::flat_hash_map<Element, double> total = std::move(parts[0]);
  for (size_t b = 1; b < nblocks; ++b) {
    for (auto& [k, v] : parts[b]) total[k] += v;
    parts[b].clear();
    if (total.size() > kSupportCap) throw ResourceError("convolution support exceeds cap", -1);
  }
  if (total.size() > kSupportCap) throw ResourceError("convolution support exceeds cap", -1);
  std::vector<Atom> atoms;
  atoms.reserve(total.size());
  for (auto& [k, v] : total) atoms.emplace_back(k, v);
  return atoms;
}

bool nearly_symmetric(const SparseMeasure& m) {
  for (const auto& [x, w] : m.atoms) {
    double v = m.weight(m.group->inverse(x));
    if (std::fabs(v - w) > 1e-13 * w) return false;
  }
  return true;
}

}  // namespace

SparseMeasure convolve(const SparseMeasure& mu, const SparseMeasure& nu, const TruncationPolicy& policy) {
  if (!mu.group || !nu.group || !mu.group->same_as(*nu.group))
    throw DescriptorMismatch("convolve: measures on different groups");
  const Group& g = *mu.group;
  double deficit = mu.deficit + nu.deficit - mu.deficit * nu.deficit;
  std::vector<Atom> atoms;
  if (!mu.atoms.empty() && !nu.atoms.empty()) {
    bool dense = false;
    if (g.kind() == Group::Kind::Lattice) {
      const auto& small = mu.size() <= nu.size() ? mu : nu;
      const auto& big = mu.size() <= nu.size() ? nu : mu;
      Box bs = bounding_box(small, g.dim()), bb = bounding_box(big, g.dim());
      size_t cells = 1;
      for (size_t i = 0; i < static_cast<size_t>(g.dim()); ++i)
        cells *= static_cast<size_t>(bs.hi[i] - bs.lo[i] + bb.hi[i] - bb.lo[i] + 1);
      // gather cost cells * |small| against pair cost |small| * |big|
      if (cells <= 64'000'000 && cells <= 4 * big.size() + 1024) {
        atoms = lattice_dense(small, big, g.dim());
        dense = true;
      }
    }
    if (!dense) atoms = generic_sparse(mu, nu);
  }
  if (atoms.size() > kSupportCap) throw ResourceError("convolution support exceeds cap", -1);
  auto m = make_measure(mu.group, std::move(atoms), deficit, false, "(" + mu.descriptor + ")*(" + nu.descriptor + ")");
  if (mu.symmetric && nu.symmetric) {
    // Exact arithmetic makes the product symmetric when the group is abelian
    // or the factors coincide; otherwise (e.g. mu^k * mu) accept symmetry only
    // when the computed weights already agree to rounding.
    bool abelian = g.kind() == Group::Kind::Lattice || g.kind() == Group::Kind::Cyclic;
    if (abelian || &mu == &nu || mu.atoms == nu.atoms || nearly_symmetric(m)) symmetrize(m);
  }
  truncate(m, policy);
  return m;
}

SparseMeasure power(const SparseMeasure& mu, long n, const TruncationPolicy& policy) {
  if (n < 1) throw DomainError("power needs n >= 1");
  int top = 63 - __builtin_clzll(static_cast<unsigned long long>(n));
  SparseMeasure r = mu;
  for (int b = top - 1; b >= 0; --b) {
    r = convolve(r, r, policy);
    if ((n >> b) & 1) r = convolve(r, mu, policy);
  }
  r.descriptor = "(" + mu.descriptor + ")^" + std::to_string(n);
  return r;
}

double pair_at_identity(const SparseMeasure& a, const SparseMeasure& b) {
  const Group& g = *a.group;
  Accumulator acc;
  for (const auto& [x, w] : a.atoms) {
    double v = b.weight(g.inverse(x));
    if (v != 0.0) acc.add(w * v);
  }
  return acc.value();
}

// ---------------------------------------------------------------------------
// Return series

size_t ReturnSeries::index(int k) const {
  auto it = std::lower_bound(n.begin(), n.end(), k);
  if (it == n.end() || *it != k) throw DomainError("return series has no row for n = " + std::to_string(k));
  return static_cast<size_t>(it - n.begin());
}

std::vector<int> full_range(int N) {
  std::vector<int> v(static_cast<size_t>(std::max(0, N)));
  for (int i = 0; i < N; ++i) v[static_cast<size_t>(i)] = i + 1;
  return v;
}

std::vector<int> log_grid(int lo, int hi, int count) {
  if (lo < 1 || hi < lo || count < 1) throw DomainError("log_grid needs 1 <= lo <= hi and count >= 1");
  std::vector<int> v;
  for (int i = 0; i < count; ++i) {
    double t = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    v.push_back(static_cast<int>(std::lround(std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo))))));
  }
  v.front() = lo;
  v.back() = hi;
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

namespace {

ReturnSeries sparse_series(const SparseMeasure& mu, int N, const TruncationPolicy& policy) {
  ReturnSeries s;
  s.measure = mu.descriptor;
  s.policy = policy.str();
  s.method = "sparse";
  SparseMeasure nu = mu;
  for (int n = 1; n <= N; ++n) {
    if (n > 1) nu = convolve(nu, mu, policy);
    double d = nu.deficit;
    // nu_n * nu_n evaluated at e; its deficit is 2d - d^2
    s.push(n, pair_at_identity(nu, nu), 2.0 * d - d * d);
  }
  return s;
}

bool on_sstar(const SparseMeasure& mu) {
  const auto& s = mu.group->sstar();
  for (const auto& [x, w] : mu.atoms)
    if (!std::binary_search(s.begin(), s.end(), x)) return false;
  return true;
}

}  // namespace

ReturnSeries return_series(const SparseMeasure& mu, int N, const TruncationPolicy& policy, ReturnMethod method) {
  if (N < 1) throw DomainError("return_series needs N >= 1");
  const Group& g = *mu.group;
  bool exact_policy = policy.mode == TruncationPolicy::Mode::None;
  if (method == ReturnMethod::Auto) {
    method = ReturnMethod::Sparse;
    if (exact_policy && mu.symmetric && mu.deficit == 0.0) {
      if (g.kind() == Group::Kind::Lattice && (g.dim() >= 2 ? N > 64 : N > 2048)) method = ReturnMethod::Torus;
      if (g.kind() == Group::Kind::Heisenberg && N > 16 && on_sstar(mu)) method = ReturnMethod::Harper;
    }
  }
  ReturnSeries s;
  switch (method) {
    case ReturnMethod::Torus: s = torus_return_series(mu, full_range(N)); break;
    case ReturnMethod::Harper: s = harper_return_series(mu, N); break;
    default: s = sparse_series(mu, N, policy); break;
  }
  s.policy = policy.str();
  return s;
}

// ---------------------------------------------------------------------------
// Continuous time

std::vector<double> step_series(const SparseMeasure& mu, int K) {
  std::vector<double> out(static_cast<size_t>(K) + 1, 0.0);
  out[0] = 1.0;
  Element e = mu.group->identity();
  SparseMeasure nu = mu;
  for (int k = 1; k <= K; ++k) {
    if (k > 1) nu = convolve(nu, mu);
    out[static_cast<size_t>(k)] = nu.weight(e);
  }
  return out;
}

KernelValue continuous_kernel_from(const std::vector<double>& at_e, double t) {
  if (t < 0.0) throw DomainError("continuous_kernel needs t >= 0");
  KernelValue kv;
  if (t == 0.0) {
    kv.value = at_e.empty() ? 0.0 : at_e[0];
    return kv;
  }
  int K = static_cast<int>(at_e.size()) - 1;
  Accumulator acc;
  for (int k = 0; k <= K; ++k) {
    double lw = k * std::log(t) - t - std::lgamma(k + 1.0);
    acc.add(std::exp(lw) * at_e[static_cast<size_t>(k)]);
  }
  kv.value = acc.value();
  // P(Poisson(t) > K) = P(K+1, t), and phi^(k)(e) <= 1
  kv.tail_bound = boost::math::gamma_p(static_cast<double>(K) + 1.0, t);
  return kv;
}

KernelValue continuous_kernel(const SparseMeasure& mu, double t, int K) {
  if (K < 0) throw DomainError("continuous_kernel needs K >= 0");
  if (t == 0.0) return {1.0, 0.0};
  return continuous_kernel_from(step_series(mu, K), t);
}

// ---------------------------------------------------------------------------
// Energies and diagnostics

double dirichlet_energy(const SparseMeasure& mu, const FunctionMap& f, double p) {
  if (!(p >= 1.0)) throw DomainError("dirichlet_energy needs p >= 1");
  const Group& g = *mu.group;
  auto val = [&f](const Element& x) {
    auto it = std::lower_bound(f.begin(), f.end(), x, [](const auto& a, const Element& e) { return a.first < e; });
    return (it != f.end() && it->first == x) ? it->second : 0.0;
  };
  auto in_support = [&f](const Element& x) {
    auto it = std::lower_bound(f.begin(), f.end(), x, [](const auto& a, const Element& e) { return a.first < e; });
    return it != f.end() && it->first == x;
  };
  Accumulator acc;
  for (const auto& [x, fx] : f)
    for (const auto& [y, w] : mu.atoms) {
      // pair (x, y) with x in supp f
      Element xy = g.multiply(x, y);
      acc.add(std::pow(std::fabs(val(xy) - fx), p) * w);
      // pair (x', y) with x' = x y^-1 outside supp f and x' y = x inside
      Element xp = g.multiply(x, g.inverse(y));
      if (!in_support(xp)) acc.add(std::pow(std::fabs(fx), p) * w);
    }
  return 0.5 * acc.value();
}

Diagnostic entropy(const SparseMeasure& m) {
  Diagnostic d;
  Accumulator acc;
  for (const auto& [x, w] : m.atoms) acc.add(-w * std::log(w));
  d.value = acc.value();
  d.deficit = m.deficit;
  return d;
}

Diagnostic displacement(const SparseMeasure& m) {
  Diagnostic d;
  Accumulator acc;
  for (const auto& [x, w] : m.atoms) {
    auto l = m.group->word_length(x);
    d.exact_lengths = d.exact_lengths && l.exact;
    acc.add(w * static_cast<double>(l.length));
  }
  d.value = acc.value();
  d.deficit = m.deficit;
  return d;
}

// ---------------------------------------------------------------------------
// Export

std::string to_csv(const ReturnSeries& s) {
  std::ostringstream os;
  os.precision(17);
  os << "n,value,deficit_bound\n";
  for (size_t i = 0; i < s.size(); ++i) os << s.n[i] << "," << s.value[i] << "," << s.deficit_bound[i] << "\n";
  return os.str();
}

std::string to_json(const ReturnSeries& s) {
  nlohmann::ordered_json j;
  j["measure"] = s.measure;
  j["policy"] = s.policy;
  j["method"] = s.method;
  j["rows"] = s.size();
  return j.dump(2) + "\n";
}

}  // namespace rwlab
