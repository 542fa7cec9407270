// Switch-walk-switch return probabilities on K wr Z through base local times.
//
// With a lazy base step (w0 hold, w1 each way) the m-step return probability
// is E[1{X_m = 0} prod_x g(L_x)], g(l) = nu_K^(2l)(e), L_x = visits to x in
// times 0..m-1. A closed path on Z is fixed by its edge crossing counts e_x,
// holds h_x and, per site, the order of departures. Sites away from 0 must
// leave last towards 0, which gives C(L-1, h) C(e_x + e_{x-1} - 1, e_x)
// orders at x > 0; the start site has the full multinomial.
//
// R[a][t]: weight of everything strictly beyond a site entered a times from
// the 0 side, with t total visits out there. Each side of 0 uses the same R.

#include <cmath>

#include "rwlab/convolution.hpp"
#include "rwlab/errors.hpp"
#include "rwlab/numeric.hpp"

namespace rwlab {

namespace {

struct LogFact {
  std::vector<double> lf;
  explicit LogFact(int n) : lf(static_cast<size_t>(n) + 1) {
    for (int i = 0; i <= n; ++i) lf[static_cast<size_t>(i)] = std::lgamma(i + 1.0);
  }
  double choose(int n, int k) const {
    return lf[static_cast<size_t>(n)] - lf[static_cast<size_t>(k)] - lf[static_cast<size_t>(n - k)];
  }
};

double safe_log(double x) { return x > 0.0 ? std::log(x) : -INFINITY; }

}  // namespace

ReturnSeries sws_line_return_series(const SparseMeasure& nu_k, double w0, double w1, int N) {
  if (N < 1) throw DomainError("sws line series needs N >= 1");
  if (!(w1 > 0.0) || w0 < 0.0 || std::abs(w0 + 2.0 * w1 - 1.0) > 1e-12)
    throw DomainError("line kernel needs w0 + 2 w1 = 1 with w1 > 0");
  if (nu_k.deficit != 0.0) throw DomainError("line kernel needs an exact lamp measure");
  const int M = 2 * N;
  const int A = M / 2;
  // g(l) = nu_K^(2l)(e) for l = 0..M
  std::vector<double> lg(static_cast<size_t>(M) + 1, 0.0);
  {
    auto lamp = return_series(nu_k, M, TruncationPolicy::none(), ReturnMethod::Sparse);
    for (int l = 1; l <= M; ++l) lg[static_cast<size_t>(l)] = safe_log(lamp.at(l));
  }
  LogFact F(2 * M + 2);
  double l0 = safe_log(w0), l1 = std::log(w1);
  auto hold = [&](int h) { return h == 0 ? 0.0 : h * l0; };

  // Acoef[a][b] = C(a+b-1, b) w1^(a+b), a >= 1
  std::vector<std::vector<double>> Acoef(static_cast<size_t>(A) + 1, std::vector<double>(static_cast<size_t>(A) + 1, 0.0));
  for (int a = 1; a <= A; ++a)
    for (int b = 0; a + b <= M; ++b)
      if (b <= A) Acoef[static_cast<size_t>(a)][static_cast<size_t>(b)] = std::exp(F.choose(a + b - 1, b) + (a + b) * l1);
  // Gcoef[s][h] = C(h+s-1, h) w0^h g(s+h), s >= 1
  std::vector<std::vector<double>> Gcoef(static_cast<size_t>(M) + 1);
  for (int s = 1; s <= M; ++s) {
    auto& row = Gcoef[static_cast<size_t>(s)];
    row.assign(static_cast<size_t>(M - s) + 1, 0.0);
    for (int h = 0; s + h <= M; ++h) row[static_cast<size_t>(h)] = std::exp(F.choose(h + s - 1, h) + hold(h) + lg[static_cast<size_t>(s + h)]);
  }

  // R[a][t], t = 0..M; R[a][t] = 0 for t < a when a >= 1
  std::vector<std::vector<double>> R(static_cast<size_t>(A) + 1, std::vector<double>(static_cast<size_t>(M) + 1, 0.0));
  R[0][0] = 1.0;
  for (int t = 1; t <= M; ++t)
    for (int a = 1; a <= std::min(A, t); ++a) {
      // b = 0: the walk turns back at this site for good
      Accumulator acc;
      acc.add(Acoef[static_cast<size_t>(a)][0] * Gcoef[static_cast<size_t>(a)][static_cast<size_t>(t - a)]);
      for (int b = 1; a + 2 * b <= t && b <= A; ++b) {
        const auto& G = Gcoef[static_cast<size_t>(a + b)];
        const auto& Rb = R[static_cast<size_t>(b)];
        double s = 0.0;
        for (int h = 0; a + b + h + b <= t; ++h) s += G[static_cast<size_t>(h)] * Rb[static_cast<size_t>(t - a - b - h)];
        acc.add(Acoef[static_cast<size_t>(a)][static_cast<size_t>(b)] * s);
      }
      R[static_cast<size_t>(a)][static_cast<size_t>(t)] = acc.value();
    }

  // Q_m = sum_{a,b,h0} C(a+b,a) C(L0,h0) w1^(a+b) w0^h0 g(L0) (R[a] * R[b])[m - L0], L0 = a+b+h0
  // every term is positive, so plain sums keep full relative accuracy
  std::vector<double> Q(static_cast<size_t>(M) + 1, 0.0);
  std::vector<double> conv(static_cast<size_t>(M) + 1);
  for (int a = 0; a <= A; ++a)
    for (int b = a; a + b <= M; ++b) {
      if (b > A) break;
      // (R[a] * R[b])[u], nonzero only for u >= a + b
      std::fill(conv.begin(), conv.end(), 0.0);
      const auto& Ra = R[static_cast<size_t>(a)];
      const auto& Rb = R[static_cast<size_t>(b)];
      for (int u = a + b; u <= M; ++u) {
        double s = 0.0;
        for (int i = a; i <= u - b; ++i) s += Ra[static_cast<size_t>(i)] * Rb[static_cast<size_t>(u - i)];
        conv[static_cast<size_t>(u)] = s;
      }
      double mult = a == b ? 1.0 : 2.0;
      for (int h0 = 0; 2 * (a + b) + h0 <= M; ++h0) {
        int L0 = a + b + h0;
        if (L0 == 0) continue;
        double c = mult * std::exp(F.choose(a + b, a) + F.choose(L0, h0) + (a + b) * l1 + hold(h0) + lg[static_cast<size_t>(L0)]);
        for (int m = L0 + a + b; m <= M; ++m) Q[static_cast<size_t>(m)] += c * conv[static_cast<size_t>(m - L0)];
      }
    }

  ReturnSeries s;
  s.measure = "sws(lamp=" + nu_k.descriptor + ", base=lazy(" + std::to_string(w0) + "))";
  s.policy = "none";
  s.method = "sws-line";
  for (int n = 1; n <= N; ++n) {
    double v = Q[static_cast<size_t>(2 * n)];
    if (!std::isfinite(v)) throw NumericError("sws line series overflow", v, 0.0);
    s.push(n, v, 0.0);
  }
  return s;
}

ReturnSeries sws_return_series(const SparseMeasure& mu_k, const SparseMeasure& mu_h, GroupPtr w, int N) {
  const Group& g = *w;
  if (g.kind() != Group::Kind::Wreath) throw DomainError("sws series needs a wreath group");
  const Group& base = *g.base();
  bool line = base.kind() == Group::Kind::Lattice && base.dim() == 1 && mu_h.deficit == 0.0 && mu_k.deficit == 0.0 &&
              mu_k.symmetric && mu_h.symmetric;
  double w0 = 0.0, w1 = 0.0;
  if (line)
    for (const auto& [x, wt] : mu_h.atoms) {
      if (x.v[0] == 0)
        w0 = wt;
      else if (std::llabs(x.v[0]) == 1)
        w1 = wt;
      else
        line = false;
    }
  if (line && w1 > 0.0) {
    auto s = sws_line_return_series(mu_k, w0, w1, N);
    s.measure = "sws(lamp=" + mu_k.descriptor + ", base=" + mu_h.descriptor + ")";
    return s;
  }
  return return_series(sws_measure(mu_k, mu_h, w), N, TruncationPolicy::none(), ReturnMethod::Sparse);
}

}  // namespace rwlab
