#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "rwlab/convolution.hpp"
#include "rwlab/errors.hpp"
#include "rwlab/profile.hpp"

using namespace rwlab;

namespace {

// Dense I - P restricted to the set, smallest eigenvalue.
double dense_lambda(const SparseMeasure& mu, const WitnessSet& s) {
  const Group& g = *mu.group;
  size_t n = s.size();
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (size_t i = 0; i < n; ++i)
    for (const auto& [y, w] : mu.atoms) {
      auto xy = g.multiply(s.elements[i], y);
      auto it = std::lower_bound(s.elements.begin(), s.elements.end(), xy);
      if (it != s.elements.end() && *it == xy)
        A(static_cast<Eigen::Index>(i), it - s.elements.begin()) -= w;
    }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (A + A.transpose()));
  return es.eigenvalues()(0);
}

WitnessSet interval(int a, int b) {
  std::vector<Element> e;
  for (int x = a; x <= b; ++x) e.push_back(Element{x});
  return make_set(e, "interval");
}

}  // namespace

TEST_CASE("dirichlet eigenvalue examples") {
  auto u = uniform_generator(Group::lattice(1));
  CHECK(dirichlet_eigenvalue(u, interval(0, 0)).lambda == doctest::Approx(2.0 / 3).epsilon(1e-8));
  CHECK(dirichlet_eigenvalue(u, interval(0, 1)).lambda == doctest::Approx(1.0 / 3).epsilon(1e-8));
  auto c5 = Group::cyclic(5);
  auto full = make_set(c5->ball(5).elements, "full");
  auto r = dirichlet_eigenvalue(uniform_generator(c5), full);
  CHECK(std::fabs(r.lambda) < 1e-8);
  for (double x : r.f) CHECK(std::fabs(x - r.f[0]) < 1e-6);
}

TEST_CASE("dirichlet eigenvalue against dense solvers") {
  auto u = uniform_generator(Group::lattice(1));
  for (int r : {4, 8, 16, 32, 64}) {
    int n = 2 * r + 1;
    double want = 2.0 / 3 * (1.0 - std::cos(M_PI / (n + 1)));
    CHECK(dirichlet_eigenvalue(u, interval(-r, r)).lambda == doctest::Approx(want).epsilon(1e-7));
  }
  for (const char* g : {"lattice(2)", "heisenberg3", "wreath(cyclic(2), lattice(1))"}) {
    auto G = Group::parse(g);
    auto mu = uniform_generator(G);
    auto s = nested_balls(*G, {3})[0];
    CHECK(dirichlet_eigenvalue(mu, s).lambda == doctest::Approx(dense_lambda(mu, s)).epsilon(1e-7));
  }
  auto zz = Group::parse("wreath(cyclic(3), lattice(1))");
  auto box = wreath_box(*zz, 1);
  CHECK(box.size() == 27 * 3);
  auto mu = uniform_generator(zz);
  CHECK(dirichlet_eigenvalue(mu, box).lambda == doctest::Approx(dense_lambda(mu, box)).epsilon(1e-7));
}

TEST_CASE("l1 boundary") {
  auto u = uniform_generator(Group::lattice(1));
  CHECK(l1_boundary(u, interval(0, 0)) == doctest::Approx(2.0 / 3).epsilon(1e-15));
  CHECK(l1_boundary(u, interval(0, 1)) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  auto c4 = Group::cyclic(4);
  CHECK(l1_boundary(uniform_generator(c4), make_set(c4->ball(4).elements, "full")) == 0.0);
  auto s = interval(-2, 5);
  std::vector<double> one(s.size(), 1.0);
  CHECK(rayleigh_quotient(u, s, one, 1.0) == doctest::Approx(l1_boundary(u, s)).epsilon(1e-14));
}

TEST_CASE("profile curves") {
  auto u = uniform_generator(Group::lattice(1));
  std::vector<Element> window;
  for (int x = -3; x <= 3; ++x) window.push_back(Element{x});
  auto fam = exhaustive_subsets(window, 3);
  CHECK(fam.size() == 7 + 21 + 35);
  auto c = profile_curve(u, 1.0, fam, {1, 2, 3});
  REQUIRE(c.points.size() == 3);
  CHECK(c.points[0].value == doctest::Approx(2.0 / 3).epsilon(1e-14));
  CHECK(c.points[1].value == doctest::Approx(1.0 / 3).epsilon(1e-14));
  CHECK(c.points[2].value == doctest::Approx(2.0 / 9).epsilon(1e-14));

  auto balls = nested_balls(*Group::lattice(1), {4, 8, 16, 32});
  auto c2 = profile_curve(u, 2.0, balls, {9, 17, 33, 65, 100});
  for (size_t i = 1; i < c2.points.size(); ++i) CHECK(c2.points[i].value <= c2.points[i - 1].value);
  for (const auto& p : c2.points) {
    double v = p.volume > 65 ? 65 : p.volume;
    CHECK(p.value * (v + 1) * (v + 1) / (M_PI * M_PI / 3) == doctest::Approx(1.0).epsilon(0.02));
  }
  auto c3 = profile_curve(u, 1.5, nested_balls(*Group::lattice(1), {1, 2}), {3, 5});
  for (size_t i = 0; i < c3.points.size(); ++i) CHECK(c3.points[i].value > 0.0);
}

TEST_CASE("Cheeger sandwich on every set") {
  auto u = uniform_generator(Group::lattice(1));
  auto rows = cheeger_check(u, {interval(0, 0), interval(0, 1), interval(-5, 5)});
  CHECK(rows[0].lower_margin == doctest::Approx(2.0 / 3 - 2.0 / 9).epsilon(1e-8));
  CHECK(std::fabs(rows[0].upper_margin) < 1e-8);
  for (const auto& r : rows) CHECK(r.pass);
  auto c3 = Group::cyclic(3);
  auto full = cheeger_check(uniform_generator(c3), {make_set(c3->ball(3).elements, "full")});
  CHECK(full[0].pass);
  for (const char* g : {"lattice(2)", "heisenberg3", "wreath(cyclic(2), lattice(1))"}) {
    auto G = Group::parse(g);
    for (const auto& r : cheeger_check(uniform_generator(G), nested_balls(*G, {0, 1, 2, 3}))) CHECK(r.pass);
  }
}

TEST_CASE("wreath product test function") {
  auto z = Group::lattice(1);
  auto c2 = Group::cyclic(2);
  auto w = Group::parse("wreath(cyclic(2), lattice(1))");
  FactorWitness base{uniform_generator(z), {{Element{0}, 1.0}}};
  FactorWitness lamp{uniform_generator(c2), {{Element{0}, 1.0}}};
  auto pt = wreath_test_function(base, lamp, 2.0);
  CHECK(pt.value == doctest::Approx(0.5 * (2.0 / 3 + 0.5)).epsilon(1e-15));
  CHECK(pt.volume == doctest::Approx(1.0));
  auto split = split_measure(uniform_generator(c2), uniform_generator(z), w);
  auto [set, vals] = materialize_wreath_test_function(base, lamp, w);
  CHECK(dirichlet_eigenvalue(split, set).lambda <= pt.value + 1e-12);

  FactorWitness flat{uniform_generator(c2), {{Element{0}, 1.0}, {Element{1}, 1.0}}};
  auto p0 = wreath_test_function(base, flat, 2.0);
  CHECK(p0.value == doctest::Approx(1.0 / 3).epsilon(1e-15));

  for (double p : {2.0, 1.0, 3.0}) {
    FactorWitness b{uniform_generator(z), {{Element{-1}, 0.5}, {Element{0}, 1.0}, {Element{1}, 0.7}, {Element{2}, 0.2}}};
    FactorWitness l{uniform_generator(c2), {{Element{0}, 1.0}, {Element{1}, 0.3}}};
    auto a = wreath_test_function(b, l, p);
    auto [s, f] = materialize_wreath_test_function(b, l, w);
    CHECK(s.size() == 64);
    CHECK(a.volume == doctest::Approx(64.0));
    CHECK(rayleigh_quotient(split, s, f, p) == doctest::Approx(a.value).epsilon(1e-10));
  }

  auto zz = Group::parse("wreath(lattice(1), lattice(1))");
  auto sz = split_measure(uniform_generator(z), uniform_generator(z), zz);
  auto ground = [&](int r) {
    auto s = interval(-r, r);
    auto e = dirichlet_eigenvalue(uniform_generator(z), s);
    FunctionMap f;
    for (size_t i = 0; i < s.size(); ++i) f.emplace_back(s.elements[i], e.f[i]);
    return FactorWitness{uniform_generator(z), f};
  };
  auto big = wreath_test_function(ground(8), ground(8), 2.0);
  CHECK(big.log_volume == doctest::Approx(17 * std::log(17.0) + std::log(17.0)).epsilon(1e-14));
  auto small = wreath_test_function(ground(1), ground(1), 2.0);
  auto [s1, f1] = materialize_wreath_test_function(ground(1), ground(1), zz);
  CHECK(s1.size() == 81);
  CHECK(rayleigh_quotient(sz, s1, f1, 2.0) == doctest::Approx(small.value).epsilon(1e-10));
  CHECK(dirichlet_eigenvalue(sz, s1).lambda <= small.value + 1e-9);
}

TEST_CASE("Coulhon transfer") {
  const double lam = 0.3;
  for (double t : {0.0, 1.0, 5.0, 20.0}) {
    CHECK(coulhon_psi([&](double) { return lam; }, t) == doctest::Approx(std::exp(-2 * lam * t)).epsilon(1e-8));
    CHECK(coulhon_psi([](double s) { return 1.0 / s; }, t) == doctest::Approx(1.0 / (1.0 + t / 2)).epsilon(1e-8));
  }
  auto flat = coulhon_psi({{4e12, lam}}, {0.0, 1.0, 5.0, 20.0});
  CHECK(flat[2] == doctest::Approx(std::exp(-2 * lam * 5.0)).epsilon(1e-12));

  // Lambda(4s) = 0.5 up to s = 2, 0.1 up to s = 100, no information beyond
  std::vector<std::pair<double, double>> curve{{8.0, 0.5}, {400.0, 0.1}};
  double tb = std::log(2.0), te = tb + std::log(50.0) / 0.2;
  auto want = [&](double t) {
    if (t <= tb) return std::exp(-t);
    if (t <= te) return 0.5 * std::exp(-0.2 * (t - tb));
    return 0.01;
  };
  std::vector<double> ts{0.1, tb - 1e-9, tb + 1e-9, 3.0, te - 1e-6, te + 1.0};
  auto got = coulhon_psi(curve, ts);
  for (size_t i = 0; i < ts.size(); ++i) CHECK(got[i] == doctest::Approx(want(ts[i])).epsilon(1e-8));
  CHECK_THROWS_AS(coulhon_psi({{4.0, 0.0}}, {1.0}), DomainError);
}

TEST_CASE("Coulhon inverse") {
  const double lam = 0.4;
  std::vector<double> ts, h;
  for (double t = 1; t <= 1000; t *= 2) {
    ts.push_back(t);
    h.push_back(std::exp(-lam * t));
  }
  CHECK(coulhon_inverse(ts, h, 1.0) == doctest::Approx(lam / 2).epsilon(1e-12));
  CHECK(coulhon_inverse(ts, h, 0.5) == doctest::Approx(lam / 2 + std::log(2.0) / 2).epsilon(1e-12));
  CHECK(coulhon_inverse(ts, std::vector<double>(ts.size(), 0.5), 10.0) == 0.0);

  auto u = uniform_generator(Group::lattice(1));
  std::vector<double> tz, hz;
  for (double t = 1; t <= 1000; t *= 1.5) {
    auto k = continuous_kernel(u, t, static_cast<int>(t + 12 * std::sqrt(t) + 40));
    tz.push_back(t);
    hz.push_back(k.value + k.tail_bound);
  }
  double lower = coulhon_inverse(tz, hz, 10.0);
  CHECK(lower > 0.0);
  CHECK(lower <= dirichlet_eigenvalue(u, interval(0, 9)).lambda);
}

TEST_CASE("pseudo-Poincare lower bound") {
  auto z = Group::lattice(1);
  double C = 0.0;
  for (int k = 0; k <= 6; ++k) C += std::pow(4.0, -k);
  auto pt = pseudo_poincare_lower(*z, 1.0, 2.0, 5.0, 6);
  CHECK(pt.value == doctest::Approx(1.0 / (C * 64 * 16)).epsilon(1e-14));
  CHECK(pt.kind == BoundKind::LowerForLambda);
  CHECK(pseudo_poincare_lower(*z, 1.0, 2.0, 0.5, 6).value == doctest::Approx(1.0 / (C * 64)).epsilon(1e-14));
  CHECK(pseudo_poincare_lower(*z, 1.0, 1.0, 5.0, 6).value == doctest::Approx(1.0 / (C * 8 * 16)).epsilon(1e-14));
  CHECK(pseudo_poincare_lower(*z, 1.0, 1.0, 5.0, 6).value > pt.value);
  CHECK_THROWS_AS(pseudo_poincare_lower(*z, 1.0, 2.0, 1e6, 3), DomainError);

  // lower bounds sit below exact-on-set values of the same measure
  for (const char* g : {"lattice(1)", "lattice(2)", "heisenberg3"}) {
    auto G = Group::parse(g);
    int K = G->kind() == Group::Kind::Heisenberg ? 1 : (G->dim() == 1 ? 4 : 2);
    for (double a : {0.5, 1.0, 1.5}) {
      auto mu = radial_power_law(G, a, RadialFlavor::Dyadic, static_cast<int>(std::pow(4, K)));
      for (const auto& s : nested_balls(*G, {1, 2})) {
        double v = static_cast<double>(s.size());
        auto lo = pseudo_poincare_lower(*G, a, 2.0, v, K + 3);
        CHECK(lo.value <= dirichlet_eigenvalue(mu, s).lambda);
      }
    }
  }
}

TEST_CASE("comparison upper bound") {
  auto one = MomentFunction::power(0.0);
  auto v = comparison_upper(0.01, one, 2.0, {0.5, 1.0, 2.0}, 3.0, 1.0);
  CHECK(v.value == doctest::Approx(1.0 + 3.0 * 0.25 * 0.01 / 2.0).epsilon(1e-9));
  CHECK(v.s_opt == 0.5);
  CHECK(v.constant_symbolic);

  const double a = 1.0;
  auto rho = MomentFunction::power(a);
  std::vector<double> grid;
  for (double s = 0.5; s < 1e5; s *= 1.1) grid.push_back(s);
  double lo = INFINITY, hi = 0.0;
  for (double vol : {10.0, 100.0, 1000.0}) {
    auto c = comparison_upper(1.0 / (vol * vol), rho, 2.0, grid, 3.0, 1.0);
    double r = c.value * std::pow(vol, a);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
    CHECK(c.s_opt >= vol / 4);
    CHECK(c.s_opt <= vol * 4);
  }
  CHECK(hi / lo < 2.0);
}

TEST_CASE("CG lower bound sits below the kernel") {
  auto u = uniform_generator(Group::lattice(1));
  double l0 = dirichlet_eigenvalue(u, interval(0, 0)).lambda;
  CHECK(cg_lower_bound(l0, 1.0, 3.0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-8));
  auto b8 = interval(-8, 8);
  double l8 = dirichlet_eigenvalue(u, b8).lambda;
  for (double t : {0.0, 1.0, 16.0, 100.0}) {
    auto k = continuous_kernel(u, t, static_cast<int>(t + 12 * std::sqrt(t) + 40));
    CHECK(cg_lower_bound(l8, 17.0, t) <= k.value);
    CHECK(cg_lower_bound(l0, 1.0, t) <= k.value);
  }
  CHECK(cg_lower_bound(l8, 17.0, 0.0) == doctest::Approx(1.0 / 17));
}

TEST_CASE("subordination inequality on balls") {
  auto u = uniform_generator(Group::lattice(1));
  for (const auto& r : schilling_check(u, BernsteinSpec::identity(), {3, 9, 17}, 4)) {
    CHECK(r.exact);
    CHECK(r.pass);
    CHECK(r.lhs == doctest::Approx(r.lambda_phi / 2));
  }
  auto rows = schilling_check(u, BernsteinSpec::power(0.5), {3, 9, 17, 33, 65}, 256);
  for (const auto& r : rows) {
    CHECK(r.r_large <= 260);
    CHECK(r.pass);
  }
  auto h = uniform_generator(Group::heisenberg());
  for (const auto& r : schilling_check(h, BernsteinSpec::power(0.5), {5, 20}, 16)) CHECK(r.pass);
}

TEST_CASE("iterated wreath volumes") {
  CHECK(erschler_log_volume(".", {7.0}) == doctest::Approx(std::log(7.0)));
  CHECK(std::exp(erschler_log_volume("(.wr.)", {4.0, 3.0})) == doctest::Approx(64.0).epsilon(1e-12));
  CHECK(std::exp(erschler_log_volume("((.wr.)wr.)", {8.0, 2.0, 3.0})) == doctest::Approx(std::pow(64.0, 3)).epsilon(1e-12));
  CHECK(erschler_log_volume("(.wr.)", {4.0, 6.0}, 2.0) == doctest::Approx(3 * std::log(4.0)).epsilon(1e-14));
  CHECK(erschler_log_volume("(.wr(.wr.))", {2.0, 3.0, 4.0}) == doctest::Approx(81 * std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(erschler_log_volume("(.wr", {1.0, 2.0}), ParseError);
  CHECK_THROWS_AS(erschler_log_volume("(.wr.)", {1.0}), ParseError);
}
