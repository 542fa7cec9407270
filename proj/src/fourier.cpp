// Fourier kernels for return probabilities: the lattice torus and the
// Heisenberg group (Harper operator on the a-line).

#include <fftw3.h>

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <numbers>

#include "rwlab/convolution.hpp"
#include "rwlab/errors.hpp"
#include "rwlab/numeric.hpp"
#include "rwlab/parallel.hpp"

namespace rwlab {

namespace {

constexpr double kPrune = 1e-30;  // terms q^n below this are skipped

struct Spectrum {
  std::vector<double> logq;  // sorted descending
  std::vector<double> mult;
  double scale = 1.0;  // 1 / torus size
};

// Sum mult q^n / size over the spectrum, pruned; returns (value, prune bound).
std::pair<double, double> spectral_sum(const Spectrum& s, int n) {
  double cut = std::log(kPrune) / n;
  Accumulator acc;
  size_t i = 0;
  for (; i < s.logq.size() && s.logq[i] >= cut; ++i) acc.add(s.mult[i] * std::exp(n * s.logq[i]));
  double rest = 0.0;
  for (size_t j = i; j < s.mult.size(); ++j) rest += s.mult[j];
  return {acc.value() * s.scale, rest * kPrune * s.scale};
}

Spectrum make_spectrum(std::vector<std::pair<double, double>> qm, double size) {
  std::sort(qm.begin(), qm.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  Spectrum s;
  s.logq.reserve(qm.size());
  s.mult.reserve(qm.size());
  for (const auto& [lq, m] : qm) {
    s.logq.push_back(lq);
    s.mult.push_back(m);
  }
  s.scale = 1.0 / size;
  return s;
}

// Real-to-complex transform of a symmetric array; returns (log q, multiplicity)
// for q = phi_hat^2 over the full torus and, in 1-D, over the half torus.
struct TorusData {
  Spectrum full, half;
  bool have_half = false;
};

TorusData transform(std::vector<double>& a, int d, long L, bool want_half) {
  std::vector<int> dims(static_cast<size_t>(d), static_cast<int>(L));
  size_t total = a.size();
  size_t last = static_cast<size_t>(L / 2 + 1);
  size_t outer = total / static_cast<size_t>(L);
  auto* out = fftw_alloc_complex(outer * last);
  if (!out) throw ResourceError("fftw allocation failed", -1);
  fftw_plan plan = fftw_plan_dft_r2c(d, dims.data(), a.data(), out, FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  TorusData t;
  std::vector<std::pair<double, double>> qm, qh;
  qm.reserve(outer * last);
  for (size_t o = 0; o < outer; ++o)
    for (size_t k = 0; k < last; ++k) {
      double re = out[o * last + k][0];
      double q = re * re;
      if (!(q > 0.0)) continue;
      double m = (k == 0 || 2 * k == static_cast<size_t>(L)) ? 1.0 : 2.0;
      qm.emplace_back(std::log(q), m);
      if (want_half && d == 1 && k % 2 == 0) {
        size_t kh = k / 2;
        double mh = (kh == 0 || 4 * kh == static_cast<size_t>(L)) ? 1.0 : 2.0;
        qh.emplace_back(std::log(q), mh);
      }
    }
  fftw_free(out);
  t.full = make_spectrum(std::move(qm), static_cast<double>(total));
  if (want_half && d == 1) {
    t.half = make_spectrum(std::move(qh), static_cast<double>(total) / 2.0);
    t.have_half = true;
  }
  return t;
}

long pow2_at_least(double x) {
  long L = 2;
  while (static_cast<double>(L) < x) L *= 2;
  return L;
}

ReturnSeries torus_series(std::vector<double>& a, int d, long L, const std::vector<int>& ns, bool unimodal,
                          double m_inf, std::string descriptor) {
  TorusData td = transform(a, d, L, unimodal);
  ReturnSeries s;
  s.measure = std::move(descriptor);
  s.policy = "none";
  s.method = "torus(L=" + std::to_string(L) + ")";
  for (int n : ns) {
    if (n < 1) throw DomainError("torus series needs n >= 1");
    auto [tl, pl] = spectral_sum(td.full, n);
    double wrap;
    if (unimodal && td.have_half) {
      // aliasing: sum_{k != 0} P(S = kL) <= T_{L/2} - T_L for symmetric unimodal laws on Z
      auto [th, ph] = spectral_sum(td.half, n);
      wrap = std::max(0.0, th - tl) + ph + pl;
    } else {
      // Hoeffding per coordinate for 2n steps bounded by m_inf
      wrap = 2.0 * d * std::exp(-static_cast<double>(L) * static_cast<double>(L) / (4.0 * n * m_inf * m_inf));
    }
    s.push(n, std::max(0.0, tl - wrap), wrap + pl);
  }
  return s;
}

}  // namespace

ReturnSeries torus_return_series(const SparseMeasure& mu, const std::vector<int>& ns, long L) {
  const Group& g = *mu.group;
  if (g.kind() != Group::Kind::Lattice) throw DomainError("torus kernel needs a lattice group");
  if (!mu.symmetric) throw DomainError("torus kernel needs a symmetric measure");
  if (ns.empty()) return {};
  int d = g.dim();
  double m_inf = 0.0;
  for (const auto& [x, w] : mu.atoms)
    for (auto c : x.v) m_inf = std::max(m_inf, static_cast<double>(std::llabs(c)));
  m_inf = std::max(m_inf, 1.0);
  int nmax = *std::max_element(ns.begin(), ns.end());
  // Hoeffding bound below 1e-20 relative to a polynomially small return value
  double need = m_inf * std::sqrt(4.0 * nmax * std::log(2.0 * d * 1e20 * std::pow(2.0 * nmax, 0.5 * d)));
  long cap = d == 1 ? (1L << 24) : d == 2 ? (1L << 11) : d == 3 ? (1L << 8) : (1L << 5);
  if (L == 0) L = std::min(cap, pow2_at_least(std::max(need, 2.0 * m_inf + 1.0)));
  size_t total = 1;
  for (int i = 0; i < d; ++i) total *= static_cast<size_t>(L);
  std::vector<double> a(total, 0.0);
  for (const auto& [x, w] : mu.atoms) {
    size_t idx = 0;
    for (int i = 0; i < d; ++i) {
      long c = static_cast<long>(x.v[static_cast<size_t>(i)]) % L;
      if (c < 0) c += L;
      idx = idx * static_cast<size_t>(L) + static_cast<size_t>(c);
    }
    a[idx] += w;
  }
  bool unimodal = false;
  if (d == 1) {
    // weights non-increasing in |x| on Z (gaps count as zero)
    std::vector<std::pair<int64_t, double>> byabs;
    for (const auto& [x, w] : mu.atoms)
      if (x.v[0] >= 0) byabs.emplace_back(x.v[0], w);
    unimodal = !byabs.empty() && byabs.front().first == 0;
    for (size_t i = 1; unimodal && i < byabs.size(); ++i)
      unimodal = byabs[i].first == byabs[i - 1].first + 1 && byabs[i].second <= byabs[i - 1].second;
  }
  return torus_series(a, d, L, ns, unimodal, m_inf, mu.descriptor);
}

ReturnSeries torus_return_series(const RadialProfile& p, const std::vector<int>& ns, long L) {
  const Group& g = *p.group;
  if (g.kind() != Group::Kind::Lattice || g.dim() != 1)
    throw DomainError("radial torus kernel is implemented on lattice(1); materialize otherwise");
  if (ns.empty()) return {};
  long R = p.horizon();
  if (L == 0) L = std::min(1L << 24, pow2_at_least(4.0 * R + 2.0));
  std::vector<double> a(static_cast<size_t>(L), 0.0);
  for (long x = -R; x <= R; ++x) {
    long c = x % L;
    if (c < 0) c += L;
    a[static_cast<size_t>(c)] += p.elem_weight[static_cast<size_t>(std::labs(x))];
  }
  bool unimodal = true;
  for (size_t j = 1; j < p.elem_weight.size(); ++j) unimodal = unimodal && p.elem_weight[j] <= p.elem_weight[j - 1];
  auto s = torus_series(a, 1, L, ns, unimodal, static_cast<double>(std::max(1L, R)), p.descriptor);
  return s;
}

// ---------------------------------------------------------------------------
// Heisenberg: mu^(2n)(e) = pi^-2 int_[0,pi]^2 || H^n delta_0 ||^2 dtheta domega,
// H = w_e + w_a (S + S^-1) + 2 w_b cos(theta + omega a) on l^2(Z_a).

namespace {

struct HarperWeights {
  double we = 0.0, wa = 0.0, wb = 0.0;
};

HarperWeights harper_weights(const SparseMeasure& mu) {
  const Group& g = *mu.group;
  if (g.kind() != Group::Kind::Heisenberg) throw DomainError("Harper kernel needs the Heisenberg group");
  if (!mu.symmetric || mu.deficit != 0.0) throw DomainError("Harper kernel needs an exact symmetric measure");
  HarperWeights h;
  for (const auto& [x, w] : mu.atoms) {
    const auto& v = x.v;
    if (v[0] == 0 && v[1] == 0 && v[2] == 0)
      h.we = w;
    else if (std::llabs(v[0]) == 1 && v[1] == 0 && v[2] == 0)
      h.wa = w;
    else if (v[0] == 0 && std::llabs(v[1]) == 1 && v[2] == 0)
      h.wb = w;
    else
      throw DomainError("Harper kernel needs a measure supported on S*");
  }
  return h;
}

// Windows W_k with P(|a_k| > W_k) <= eps for the lazy a-marginal; returns the
// realized escape probabilities too.
void a_windows(double wa, int N, double eps, std::vector<int>& W, std::vector<double>& escape) {
  W.assign(static_cast<size_t>(N) + 1, 0);
  escape.assign(static_cast<size_t>(N) + 1, 0.0);
  std::vector<double> p(static_cast<size_t>(N) + 2, 0.0), q(p.size(), 0.0);  // p[j] = P(a_k = j), j >= 0
  p[0] = 1.0;
  double stay = 1.0 - 2.0 * wa;
  for (int k = 1; k <= N; ++k) {
    for (int j = 0; j <= k; ++j) {
      double left = j > 0 ? p[static_cast<size_t>(j - 1)] : p[1];  // symmetric: P(a = -1) = P(a = 1)
      double right = p[static_cast<size_t>(j + 1)];
      q[static_cast<size_t>(j)] = stay * p[static_cast<size_t>(j)] + wa * (left + right);
    }
    std::swap(p, q);
    // tail from the far end so small terms are summed first
    // windows never shrink so stale cells of the work buffers stay outside
    double tail = 0.0;
    int w = k, floor_w = W[static_cast<size_t>(k - 1)];
    while (w > floor_w && tail + 2.0 * p[static_cast<size_t>(w)] <= eps) {
      tail += 2.0 * p[static_cast<size_t>(w)];
      --w;
    }
    W[static_cast<size_t>(k)] = w;
    escape[static_cast<size_t>(k)] = tail;
  }
}

// Graded panel edges on [0, pi]: geometric from h0, widths capped.
std::vector<double> graded_edges(double h0, double cap) {
  std::vector<double> e{0.0};
  double h = std::min(h0, cap);
  double pi = std::numbers::pi;
  while (e.back() < pi) {
    double next = std::min(pi, e.back() + h);
    if (pi - next < 0.25 * h) next = pi;
    e.push_back(next);
    h = std::min(cap, 2.0 * h);
  }
  return e;
}

struct Node {
  double x, w;
};

std::vector<Node> gauss_nodes(const std::vector<double>& edges, int pts) {
  std::vector<Node> out;
  auto add = [&](const auto& absc, const auto& wts, bool odd) {
    for (size_t p = 0; p + 1 < edges.size(); ++p) {
      double c = 0.5 * (edges[p] + edges[p + 1]), h = 0.5 * (edges[p + 1] - edges[p]);
      for (size_t i = 0; i < absc.size(); ++i) {
        if (i == 0 && odd) {
          out.push_back({c, h * wts[0]});
          continue;
        }
        out.push_back({c - h * absc[i], h * wts[i]});
        out.push_back({c + h * absc[i], h * wts[i]});
      }
    }
  };
  using boost::math::quadrature::gauss;
  switch (pts) {
    case 6: add(gauss<double, 6>::abscissa(), gauss<double, 6>::weights(), false); break;
    case 7: add(gauss<double, 7>::abscissa(), gauss<double, 7>::weights(), true); break;
    case 10: add(gauss<double, 10>::abscissa(), gauss<double, 10>::weights(), false); break;
    default: add(gauss<double, 8>::abscissa(), gauss<double, 8>::weights(), false); break;
  }
  return out;
}

// Runs v <- H v from delta_0 for k = 1..N and calls sink(k, ||v_k||^2).
// Stops early once ||v||^2 < stop; returns the last step done.
template <typename Sink>
int harper_node(const HarperWeights& h, double theta, double omega, int N, const std::vector<int>& W,
                double stop, std::vector<double>& v, std::vector<double>& nv, std::vector<double>& diag, Sink&& sink) {
  int Wmax = W[static_cast<size_t>(N)];
  size_t off = static_cast<size_t>(Wmax) + 1;
  size_t len = 2 * off + 1;
  v.assign(len, 0.0);
  nv.assign(len, 0.0);
  diag.resize(len);
  for (long a = -Wmax; a <= Wmax; ++a)
    diag[off + static_cast<size_t>(a)] = h.we + 2.0 * h.wb * std::cos(theta + omega * static_cast<double>(a));
  v[off] = 1.0;
  for (int k = 1; k <= N; ++k) {
    int w = W[static_cast<size_t>(k)];
    double s = 0.0;
    size_t lo = off - static_cast<size_t>(w), hi = off + static_cast<size_t>(w);
    for (size_t i = lo; i <= hi; ++i) {
      double x = diag[i] * v[i] + h.wa * (v[i - 1] + v[i + 1]);
      nv[i] = x;
      s += x * x;
    }
    std::swap(v, nv);
    sink(k, s);
    if (s < stop) return k;
  }
  return N;
}

}  // namespace

ReturnSeries harper_return_series(const SparseMeasure& mu, int N, const HarperOptions& opt) {
  if (N < 1) throw DomainError("harper series needs N >= 1");
  HarperWeights hw = harper_weights(mu);
  std::vector<int> W;
  std::vector<double> escape;
  a_windows(hw.wa, N, opt.window_eps, W, escape);
  std::vector<double> cum(static_cast<size_t>(N) + 1, 0.0);
  for (int k = 1; k <= N; ++k) cum[static_cast<size_t>(k)] = cum[static_cast<size_t>(k - 1)] + escape[static_cast<size_t>(k)];

  double pi = std::numbers::pi;
  auto th_nodes = gauss_nodes(graded_edges(0.5 / std::sqrt(static_cast<double>(N)), opt.panel_cap), opt.points_per_panel);
  auto om_nodes = gauss_nodes(graded_edges(0.5 / static_cast<double>(N), opt.panel_cap), opt.points_per_panel);
  const double stop = 1e-18;
  // one block per theta node: sums over omega in fixed order
  size_t nb = th_nodes.size();
  std::vector<std::vector<double>> part(nb), slack(nb);
  parallel_for(nb, [&](size_t b) {
    auto& acc = part[b];
    auto& sl = slack[b];
    acc.assign(static_cast<size_t>(N) + 1, 0.0);
    sl.assign(static_cast<size_t>(N) + 2, 0.0);
    std::vector<double> v, nv, diag;
    for (const auto& om : om_nodes) {
      double w = th_nodes[b].w * om.w;
      int last = harper_node(hw, th_nodes[b].x, om.x, N, W, stop, v, nv, diag,
                             [&](int k, double s) { acc[static_cast<size_t>(k)] += w * s; });
      // later steps are bounded by the value at the stop (||H|| <= 1)
      if (last < N) sl[static_cast<size_t>(last) + 1] += w * stop;
    }
  });
  std::vector<double> total(static_cast<size_t>(N) + 1, 0.0), term(static_cast<size_t>(N) + 2, 0.0);
  for (size_t b = 0; b < nb; ++b)
    for (int k = 1; k <= N; ++k) {
      total[static_cast<size_t>(k)] += part[b][static_cast<size_t>(k)];
      term[static_cast<size_t>(k)] += slack[b][static_cast<size_t>(k)];
    }
  ReturnSeries s;
  s.measure = mu.descriptor;
  s.policy = "none";
  s.method = "harper";
  ReturnSeries exact;
  int pre = std::min(N, opt.exact_prefix);
  if (pre >= 1) {
    exact = return_series(mu, pre, TruncationPolicy::none(), ReturnMethod::Sparse);
    s.method = "sparse<=" + std::to_string(pre) + "+harper";
  }
  double run_term = 0.0;
  double norm = 1.0 / (pi * pi);
  for (int k = 1; k <= N; ++k) {
    run_term += term[static_cast<size_t>(k)] * norm;
    if (k <= pre) {
      s.push(k, exact.value[static_cast<size_t>(k - 1)], exact.deficit_bound[static_cast<size_t>(k - 1)]);
      continue;
    }
    double window = 2.0 * cum[static_cast<size_t>(k)];
    double v = total[static_cast<size_t>(k)] * norm;
    s.push(k, std::max(0.0, v - window), 2.0 * window + run_term);
  }
  return s;
}

double harper_uniform(const SparseMeasure& mu, int n, int grid) {
  HarperWeights hw = harper_weights(mu);
  if (n < 1 || grid < 1) throw DomainError("harper_uniform needs n >= 1 and grid >= 1");
  std::vector<int> W(static_cast<size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) W[static_cast<size_t>(k)] = k;  // exact: |a_k| <= k
  double two_pi = 2.0 * std::numbers::pi;
  Accumulator acc;
  std::vector<double> v, nv, diag;
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      double last = 0.0;
      harper_node(hw, two_pi * i / grid, two_pi * j / grid, n, W, -1.0, v, nv, diag,
                  [&](int k, double s) {
                    if (k == n) last = s;
                  });
      acc.add(last);
    }
  return acc.value() / (static_cast<double>(grid) * grid);
}

}  // namespace rwlab
