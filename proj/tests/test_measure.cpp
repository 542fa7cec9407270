#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "rwlab/convolution.hpp"
#include "rwlab/errors.hpp"
#include "rwlab/measure.hpp"

using namespace rwlab;

namespace {

// Central coefficients of (1 + x + x^2)^n by integer DP.
std::vector<double> central_trinomial(int N) {
  std::vector<long long> row{1};
  std::vector<double> out{1.0};
  for (int n = 1; n <= N; ++n) {
    std::vector<long long> next(row.size() + 2, 0);
    for (size_t i = 0; i < row.size(); ++i)
      for (size_t k = 0; k < 3; ++k) next[i + k] += row[i];
    row = next;
    out.push_back(static_cast<double>(row[row.size() / 2]));
  }
  return out;
}

// Lamplighter element as (lit positions, cursor).
using Lamp = std::pair<std::set<long>, long>;

Element lamp_element(const Group& w, const Lamp& x) {
  Group::WreathParts p;
  p.cursor = Element{x.second};
  for (long pos : x.first) p.lamps.emplace_back(Element{pos}, Element{1});
  return w.join(p);
}

double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  double h = (b - a) / n, s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("uniform generator measures") {
  auto z = Group::lattice(1);
  auto u = uniform_generator(z);
  REQUIRE(u.size() == 3);
  for (long x : {-1L, 0L, 1L}) CHECK(u.weight(Element{x}) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(u.symmetric);
  u.check();

  auto c2 = uniform_generator(Group::cyclic(2));
  REQUIRE(c2.size() == 2);
  CHECK(c2.weight(Element{0}) == 0.5);
  CHECK(c2.weight(Element{1}) == 0.5);

  auto w = Group::parse("wreath(cyclic(2), lattice(1))");
  auto uw = uniform_generator(w);
  CHECK(uw.size() == 4);
  CHECK(uw.mass() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("uniform balls") {
  auto z2 = Group::lattice(2);
  auto b = uniform_ball(z2, 2);
  CHECK(b.size() == 13);
  CHECK(b.weight(Element{1, 1}) == doctest::Approx(1.0 / 13).epsilon(1e-15));
  CHECK(b.weight(Element{2, 1}) == 0.0);
  auto h = uniform_ball(Group::heisenberg(), 1);
  CHECK(h.size() == 5);
}

TEST_CASE("radial smooth law on Z against the series") {
  const double a = 1.0;
  auto m = radial_power_law(Group::lattice(1), a, RadialFlavor::Smooth, 3);
  double norm = 0.0;
  for (int k = 1; k <= 3; ++k) norm += std::pow(k, -a - 1.0);
  for (int j = 0; j <= 3; ++j) {
    double want = 0.0;
    for (int k = std::max(j, 1); k <= 3; ++k) want += std::pow(k, -a - 1.0) / (2 * k + 1);
    want /= norm;
    CHECK(m.weight(Element{j}) == doctest::Approx(want).epsilon(1e-14));
    CHECK(m.weight(Element{-j}) == doctest::Approx(want).epsilon(1e-14));
  }
  CHECK(m.weight(Element{4}) == 0.0);
  CHECK(m.mass() + m.deficit == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(m.tail_bound == doctest::Approx(std::pow(3.0, -a) / a / norm).epsilon(1e-14));
}

TEST_CASE("radial dyadic law keeps shells 1 and 4") {
  const double a = 0.7;
  auto m = radial_power_law(Group::lattice(1), a, RadialFlavor::Dyadic, 4);
  double c = 1.0 / (1.0 + std::pow(4.0, -a));
  double inner = c * (1.0 / 3 + std::pow(4.0, -a) / 9), outer = c * std::pow(4.0, -a) / 9;
  CHECK(m.weight(Element{0}) == doctest::Approx(inner).epsilon(1e-14));
  CHECK(m.weight(Element{-1}) == doctest::Approx(inner).epsilon(1e-14));
  for (long x : {2L, 3L, 4L, -4L}) CHECK(m.weight(Element{x}) == doctest::Approx(outer).epsilon(1e-14));
  CHECK(m.size() == 9);
}

TEST_CASE("radial smooth law is comparable to |x|^-(d+alpha)") {
  for (int d : {1, 2}) {
    const double a = 1.0;
    const int R = 256;
    auto p = radial_power_profile(Group::lattice(d), a, RadialFlavor::Smooth, R);
    double lo = INFINITY, hi = 0.0;
    for (int j = 0; j <= R / 2; ++j) {
      double r = p.elem_weight[static_cast<size_t>(j)] * std::pow(1.0 + j, d + a);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    CHECK(std::log(hi / lo) <= std::log(16.0));
  }
}

TEST_CASE("split measure weights") {
  auto w = Group::parse("wreath(cyclic(2), lattice(1))");
  auto mk = uniform_generator(w->lamp());
  auto mh = uniform_generator(w->base());
  auto m = split_measure(mk, mh, w);
  CHECK(m.size() == 4);
  CHECK(m.weight(w->identity()) == doctest::Approx(0.5 * (0.5 + 1.0 / 3)).epsilon(1e-15));
  CHECK(m.weight(lamp_element(*w, {{0}, 0})) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(m.weight(lamp_element(*w, {{}, 1})) == doctest::Approx(1.0 / 6).epsilon(1e-15));
  CHECK(m.weight(lamp_element(*w, {{}, -1})) == doctest::Approx(1.0 / 6).epsilon(1e-15));
  m.check();
}

TEST_CASE("switch-walk-switch table by brute force") {
  auto w = Group::parse("wreath(cyclic(2), lattice(1))");
  auto m = sws_measure(uniform_generator(w->lamp()), uniform_generator(w->base()), w);
  std::map<Lamp, double> want;
  for (int k1 : {0, 1})
    for (long h : {-1L, 0L, 1L})
      for (int k2 : {0, 1}) {
        std::set<long> lit;
        if (k1) lit.insert(0);
        if (k2 && !lit.erase(h)) lit.insert(h);
        want[{lit, h}] += 0.5 * (1.0 / 3) * 0.5;
      }
  CHECK(m.size() == want.size());
  for (const auto& [x, p] : want) CHECK(m.weight(lamp_element(*w, x)) == doctest::Approx(p).epsilon(1e-15));
  CHECK(m.symmetric);
  m.check();
}

TEST_CASE("rho moments") {
  auto z = Group::lattice(1);
  auto sq = MomentFunction::power(2.0);
  CHECK(rho_moment(uniform_ball(z, 2), sq).value == doctest::Approx(5.4).epsilon(1e-14));
  auto lin = MomentFunction::power(1.0);
  CHECK(weak_rho_moment(delta(z), lin).value == doctest::Approx(lin(0.0)).epsilon(1e-15));
  CHECK(weak_rho_moment(uniform_ball(z, 1), lin).value == doctest::Approx(4.0 / 3).epsilon(1e-14));
  auto w = Group::parse("wreath(cyclic(2), lattice(1))");
  auto m = rho_moment(uniform_generator(w), lin);
  CHECK(m.exact_lengths);
  CHECK(m.value == doctest::Approx(0.25 + 0.75 * 2).epsilon(1e-14));
}

TEST_CASE("weak moment of the radial law is stable under doubling the horizon") {
  const double a = 0.8;
  auto rho = MomentFunction::power(a);
  for (int d : {1, 2}) {
    double w1 = weak_rho_moment(radial_power_profile(Group::lattice(d), a, RadialFlavor::Smooth, 1024), rho);
    double w2 = weak_rho_moment(radial_power_profile(Group::lattice(d), a, RadialFlavor::Smooth, 2048), rho);
    CHECK(std::fabs(w2 / w1 - 1.0) < 0.05);
  }
}

TEST_CASE("M_{p,rho}") {
  auto one = MomentFunction::power(0.0);
  CHECK(m_p_rho(one, 2.0, 7.0) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(m_p_rho(one, 1.0, 7.0) == doctest::Approx(1.0).epsilon(1e-10));
  auto sq = MomentFunction::power(2.0);
  double want = 1e4 / (std::log(101.0) + 1.0 / 101 - 1.0);
  CHECK(m_p_rho(sq, 2.0, 100.0) == doctest::Approx(want).epsilon(1e-9));
  for (const auto& rho : {MomentFunction::power(0.5), MomentFunction::iterated_log(1, 1.0), MomentFunction::iterated_log(2, 2.0)})
    for (double p : {1.0, 2.0, 3.0})
      for (double t : {1.0, 10.0, 1000.0}) CHECK(m_p_rho(rho, p, t) <= p * rho(t) * (1 + 1e-12));
  CHECK_THROWS_AS(m_p_rho(sq, 2.0, 0.0), DomainError);
}

TEST_CASE("Bernstein coefficients of the square root") {
  auto f = BernsteinSpec::power(0.5);
  auto c = bernstein_coefficients(f, 256);
  CHECK(c.c[0] == 0.0);
  CHECK(c.c[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(c.c[2] == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(c.c[3] == doctest::Approx(1.0 / 16).epsilon(1e-15));
  CHECK(c.c[4] == doctest::Approx(5.0 / 128).epsilon(1e-15));
  double s = 0.0;
  for (double x : c.c) s += x;
  CHECK(s >= 0.93);
  CHECK(c.tail == doctest::Approx(1.0 - s).epsilon(1e-12));
  auto q = bernstein_coefficients_quadrature(f, 12);
  for (int n = 1; n <= 12; ++n) CHECK(q.c[static_cast<size_t>(n)] == doctest::Approx(c.c[static_cast<size_t>(n)]).epsilon(1e-8));

  auto id = bernstein_coefficients(BernsteinSpec::identity(), 5);
  CHECK(id.c[1] == 1.0);
  CHECK(id.tail == 0.0);
}

TEST_CASE("localized Bernstein function") {
  const double a = 0.5, t = 3.0;
  auto f = BernsteinSpec::localized(a, t);
  CHECK(f(1.0) == doctest::Approx(1.0).epsilon(1e-10));
  double kappa = a / (1.0 - std::pow(2.0, -a)) * std::pow(t, a);
  auto dens = [&](double s) { return kappa * std::pow(s, -a - 1.0); };
  CHECK(f.levy_density(4.0) == doctest::Approx(dens(4.0)).epsilon(1e-13));
  CHECK(f.levy_density(2.0) == 0.0);
  CHECK(simpson(dens, t, 2 * t, 20000) == doctest::Approx(1.0).epsilon(1e-12));
  auto c = bernstein_coefficients(f, 64);
  double s = 0.0;
  for (double x : c.c) s += x;
  CHECK(std::fabs(s - 1.0) < 1e-8);
  double drift = simpson([&](double u) { return std::exp(-u) * dens(u); }, t, 2 * t, 20000);
  for (int n = 1; n <= 6; ++n) {
    double want = simpson([&](double u) { return std::pow(u, n) * std::exp(-u - std::lgamma(n + 1.0)) * dens(u); }, t, 2 * t, 20000);
    if (n == 1) want += drift;
    CHECK(c.c[static_cast<size_t>(n)] == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("subordinated uniform walk on Z") {
  auto z = Group::lattice(1);
  auto u = uniform_generator(z);
  auto m = subordinate(u, BernsteinSpec::power(0.5), 4);
  const double c[] = {0.0, 0.5, 0.125, 1.0 / 16, 5.0 / 128};
  auto T = central_trinomial(4);
  double want = 0.0;
  for (int n = 1; n <= 4; ++n) want += c[n] * T[static_cast<size_t>(n)] / std::pow(3.0, n);
  CHECK(m.weight(Element{0}) == doctest::Approx(want).epsilon(1e-14));
  CHECK(m.deficit == doctest::Approx(35.0 / 128).epsilon(1e-14));
  CHECK(m.mass() + m.deficit == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(m.symmetric);
  CHECK(m.weight(Element{4}) == doctest::Approx(c[4] / 81).epsilon(1e-14));
}

TEST_CASE("measure descriptors") {
  auto z = Group::lattice(1);
  auto m = parse_measure(z, "lazy(uniform_ball(r=1), hold=0.5)");
  CHECK(m.weight(Element{0}) == doctest::Approx(0.5 + 0.5 / 3).epsilon(1e-15));
  CHECK(parse_measure(z, "radial_power(alpha=1.5, flavor=dyadic, horizon=16)").size() == 33);
  CHECK_THROWS_AS(parse_measure(z, "split(lamp=uniform, base=uniform)"), DescriptorMismatch);
  CHECK_THROWS_AS(parse_measure(z, "gaussian(1)"), ParseError);
  CHECK_THROWS_AS(parse_measure(z, "radial_power(alpha=-1)"), ValidationError);
  CHECK_THROWS_AS(make_measure(z, {{Element{1}, 0.5}, {Element{0}, 0.5}}, 0.0, true, "bad").check(), ValidationError);
}
