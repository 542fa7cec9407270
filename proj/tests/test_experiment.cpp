#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "rwlab/errors.hpp"
#include "rwlab/experiment.hpp"
#include "rwlab/parallel.hpp"

using namespace rwlab;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("rwlab_test_" + name);
  std::filesystem::remove_all(p);
  return p.string();
}

struct Row {
  const char* group;
  const char* measure;
  DecayFamily family;
  Rational a, b;  // (beta, eta), (gamma, delta) or (depth, eps)
  bool one_sided;
  const char* rule;
};

// Hand-written from the statements of the decay theorems, exponents in
// lowest terms.
const std::vector<Row>& table() {
  using F = DecayFamily;
  static const std::vector<Row> rows = {
      {"lattice(1)", "uniform", F::Polynomial, {1, 2}, 0, false, "poly.diffusive"},
      {"lattice(3)", "uniform_ball(r=2)", F::Polynomial, {3, 2}, 0, false, "poly.diffusive"},
      {"heisenberg3", "uniform", F::Polynomial, 2, 0, false, "poly.diffusive"},
      {"lattice(2)", "radial_power(alpha=3)", F::Polynomial, 1, 0, false, "poly.diffusive"},
      {"lattice(1)", "radial_power(alpha=0.8)", F::Polynomial, {5, 4}, 0, false, "poly.stable"},
      {"lattice(2)", "radial_power(alpha=1.5)", F::Polynomial, {4, 3}, 0, false, "poly.stable"},
      {"heisenberg3", "radial_power(alpha=0.5, flavor=dyadic)", F::Polynomial, 8, 0, false, "poly.stable"},
      {"lattice(1)", "subordinate(base=uniform, f=sqrt)", F::Polynomial, 1, 0, false, "poly.stable"},
      {"lattice(1)", "radial_moment(rho=power(0.5))", F::Polynomial, 2, 0, false, "poly.stable"},
      {"lattice(1)", "radial_power(alpha=2)", F::Polynomial, {1, 2}, {1, 2}, false, "poly.critical"},
      {"heisenberg3", "radial_power(alpha=2)", F::Polynomial, 2, 2, false, "poly.critical"},
      {"lattice(1)", "radial_moment(rho=iterated_log(k=1, eps=1))", F::Stretched, {1, 2}, 0, false, "poly.log-moment"},
      {"lattice(2)", "radial_moment(rho=iterated_log(k=1, eps=0.25))", F::Stretched, {4, 5}, 0, false, "poly.log-moment"},
      {"lattice(2)", "radial_moment(rho=iterated_log(k=2, eps=0.5))", F::Slow, 1, {1, 2}, false, "poly.iterated-log-moment"},
      {"lattice(1)", "radial_moment(rho=iterated_log(k=3, eps=2))", F::Slow, 2, 2, false, "poly.iterated-log-moment"},
      {"wreath(cyclic(2), lattice(1))", "uniform", F::Stretched, {1, 3}, 0, false, "wreath.finite-lamp"},
      {"wreath(cyclic(2), lattice(1))", "split(lamp=uniform, base=radial_power(alpha=0.5))", F::Stretched, {2, 3}, 0, false,
       "wreath.finite-lamp"},
      {"wreath(cyclic(3), lattice(2))", "split(lamp=uniform, base=radial_power(alpha=1))", F::Stretched, {2, 3}, 0, false,
       "wreath.finite-lamp"},
      {"wreath(cyclic(2), heisenberg3)", "sws(lamp=uniform, base=uniform)", F::Stretched, {2, 3}, 0, false, "wreath.finite-lamp"},
      {"wreath(lattice(1), lattice(1))", "split(lamp=uniform, base=radial_power(alpha=1))", F::Stretched, {1, 2}, {1, 2}, false,
       "wreath.poly-lamp"},
      {"wreath(lattice(2), lattice(3))", "split(lamp=uniform, base=uniform)", F::Stretched, {3, 5}, {2, 5}, false,
       "wreath.poly-lamp"},
      {"wreath(wreath(cyclic(2), lattice(1)), lattice(1))", "split(lamp=uniform, base=radial_power(alpha=0.5))", F::Stretched,
       {5, 7}, 0, false, "wreath.exp-lamp"},
      {"wreath(wreath(cyclic(2), lattice(1)), lattice(1))",
       "split(lamp=radial_power(alpha=1), base=radial_power(alpha=0.5))", F::Stretched, {3, 4}, 0, false, "wreath.exp-lamp"},
      {"wreath(wreath(cyclic(2), lattice(1)), lattice(2))", "split(lamp=uniform, base=radial_power(alpha=1))", F::Stretched,
       {5, 7}, 0, false, "wreath.exp-lamp"},
      {"wreath(cyclic(2), wreath(cyclic(2), lattice(1)))", "split(lamp=uniform, base=radial_power(alpha=0.5))", F::Slow, 1,
       {1, 2}, false, "wreath.exp-base"},
      {"wreath(cyclic(2), lattice(2))", "split(lamp=uniform, base=radial_power(alpha=2))", F::Stretched, {1, 2}, {1, 2}, false,
       "wreath.finite-lamp.critical"},
      {"wreath(lattice(1), lattice(1))", "split(lamp=uniform, base=radial_power(alpha=2))", F::Stretched, {1, 3}, 1, false,
       "wreath.poly-lamp.critical"},
      {"wreath(wreath(cyclic(2), lattice(1)), lattice(1))", "split(lamp=uniform, base=radial_power(alpha=2))", F::Stretched,
       {1, 2}, 1, true, "wreath.exp-lamp.critical"},
      {"wreath(cyclic(2), lattice(1))", "radial_moment(rho=iterated_log(k=2, eps=1))", F::Slow, 2, 1, false,
       "wreath.slow-moment"},
      {"wreath(lattice(1), lattice(2))", "radial_moment(rho=iterated_log(k=1, eps=0.5))", F::Slow, 1, {1, 2}, false,
       "wreath.slow-moment"},
      {"wreath(cyclic(2), lattice(1))", "radial_power(alpha=0.5)", F::Stretched, {2, 3}, 0, false, "lamplighter.stable"},
      {"wreath(cyclic(5), lattice(1))", "radial_power(alpha=1.2, flavor=dyadic)", F::Stretched, {5, 11}, 0, false,
       "lamplighter.stable"},
      {"wreath(cyclic(2), lattice(1))", "radial_power(alpha=2)", F::Stretched, {1, 3}, 1, true, "lamplighter.critical"},
  };
  return rows;
}

std::vector<DecayPoint> synth(double lo, double hi, int count, const std::function<double(double)>& f) {
  std::vector<DecayPoint> p;
  for (int i = 0; i < count; ++i) {
    double n = std::round(lo * std::pow(hi / lo, i / double(count - 1)));
    p.push_back({n, f(n), 0.0});
  }
  return p;
}

}  // namespace

TEST_CASE("rationals") {
  CHECK(Rational::parse("0.8") == Rational(4, 5));
  CHECK(Rational::parse("3/4") == Rational(3, 4));
  CHECK(Rational::parse("-2") == Rational(-2));
  CHECK(Rational::parse("1.25") == Rational(5, 4));
  CHECK(Rational(6, -4).str() == "-3/2");
  CHECK(Rational(1, 2) + Rational(1, 3) == Rational(5, 6));
  CHECK(Rational(1, 2) - Rational(1, 3) == Rational(1, 6));
  CHECK(Rational(2, 3) * Rational(3, 4) == Rational(1, 2));
  CHECK(Rational(2, 3) / Rational(4, 9) == Rational(3, 2));
  CHECK(Rational(1, 3) < Rational(1, 2));
  CHECK_THROWS_AS(Rational::parse("abc"), ParseError);
  CHECK_THROWS_AS(Rational::parse("1/0"), ParseError);
  CHECK_THROWS_AS(Rational(1, 0), DomainError);
}

TEST_CASE("prediction table matches the hand-written exponents") {
  std::set<std::string> seen;
  for (const auto& r : table()) {
    INFO(r.group << " | " << r.measure);
    auto p = predict(r.group, r.measure);
    REQUIRE(p.has_value());
    CHECK(p->rule == r.rule);
    CHECK(p->family == r.family);
    CHECK(p->one_sided == r.one_sided);
    switch (r.family) {
      case DecayFamily::Polynomial:
        CHECK(p->beta == r.a);
        CHECK(p->eta == r.b);
        break;
      case DecayFamily::Stretched:
        CHECK(p->gamma == r.a);
        CHECK(p->delta == r.b);
        break;
      case DecayFamily::Slow:
        CHECK(Rational(p->depth) == r.a);
        CHECK(p->eps == r.b);
        break;
    }
    seen.insert(r.rule);
  }
  for (const auto& rule : prediction_rules()) CHECK_MESSAGE(seen.count(rule.id), "rule without a table row: " << rule.id);
  CHECK(seen.size() == prediction_rules().size());
}

TEST_CASE("prediction lookups without a match") {
  CHECK_FALSE(predict("lattice(1)", "delta").has_value());
  CHECK_FALSE(predict("cyclic(5)", "uniform").has_value());
  CHECK_FALSE(predict("wreath(cyclic(2), wreath(cyclic(2), lattice(1)))", "uniform").has_value());
  CHECK_THROWS_AS(predict("torus(2)", "uniform"), ParseError);
  auto a = predict("lattice(2)", "uniform"), b = predict("lattice(2)", "uniform");
  CHECK(a->formula() == b->formula());
}

TEST_CASE("functional predictions go through the lamplighter") {
  auto p = predict_functional("lattice(1)", "uniform", "range(kappa=1)");
  REQUIRE(p);
  CHECK(p->gamma == Rational(1, 3));
  auto q = predict_functional("lattice(2)", "uniform", "lamp(group=cyclic(3))");
  REQUIRE(q);
  CHECK(q->gamma == Rational(1, 2));
  CHECK_FALSE(predict_functional("lattice(1)", "uniform", "power(kappa=1, gamma=0.5)").has_value());
  auto s = predict("wreath(cyclic(2), wreath(cyclic(2), lattice(1)))", "split(lamp=uniform, base=radial_power(alpha=0.5))");
  auto st = s->as_stretched();
  REQUIRE(st);
  CHECK(st->gamma == Rational(1));
  CHECK(st->delta == Rational(-1, 2));
}

TEST_CASE("fits on exact synthetic series") {
  auto p = synth(32, 4096, 24, [](double n) { return std::pow(n, -1.5); });
  auto f = fit_decay(p, DecayFamily::Polynomial);
  CHECK(f.beta == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(f.residual < 1e-10);

  auto pl = synth(32, 4096, 24, [](double n) { return 3.0 / (n * std::log(n)); });
  FitOptions eo;
  eo.eta = 1.0;
  CHECK(fit_decay(pl, DecayFamily::Polynomial, eo).beta == doctest::Approx(1.0).epsilon(1e-10));

  auto s = synth(64, 4096, 24, [](double n) { return std::exp(-std::sqrt(n)); });
  auto g = fit_decay(s, DecayFamily::Stretched);
  CHECK(std::fabs(g.gamma - 0.5) < 1e-6);
  CHECK(g.delta == 0.0);

  auto sd = synth(64, 4096, 24, [](double n) { return std::exp(-0.5 * std::pow(n, 0.4) * std::pow(std::log(n), 0.6)); });
  FitOptions o;
  o.delta_grid = {0.0, 0.3, 0.6, 0.9};
  auto h = fit_decay(sd, DecayFamily::Stretched, o);
  CHECK(h.delta == 0.6);
  CHECK(std::fabs(h.gamma - 0.4) < 1e-6);
  CHECK(h.log_c == doctest::Approx(std::log(0.5)).epsilon(1e-9));
}

TEST_CASE("fit preconditions") {
  auto p = synth(32, 4096, 5, [](double n) { return 1.0 / n; });
  CHECK_THROWS_AS(fit_decay(p, DecayFamily::Polynomial), FitRefused);
  auto narrow = synth(100, 300, 12, [](double n) { return 1.0 / n; });
  CHECK_THROWS_AS(fit_decay(narrow, DecayFamily::Polynomial), FitRefused);
  auto noisy = synth(32, 4096, 12, [](double n) { return 1.0 / n; });
  noisy[5].uncertainty = 0.5 * noisy[5].value;
  CHECK_THROWS_AS(fit_decay(noisy, DecayFamily::Polynomial), FitRefused);
  auto fast = synth(32, 1000, 12, [](double n) { return std::exp(-1e-3 * std::pow(n, 1.8)); });
  CHECK_THROWS_AS(fit_decay(fast, DecayFamily::Stretched), FitRefused);
  auto early = synth(1, 20, 12, [](double n) { return 1.0 / n; });
  CHECK_THROWS_AS(fit_decay(early, DecayFamily::Polynomial), FitRefused);
  try {
    fit_decay(p, DecayFamily::Polynomial);
  } catch (const FitRefused& e) {
    CHECK(std::string(e.what()).find("points") != std::string::npos);
  }
}

TEST_CASE("simple walk on Z decays like n^-1/2") {
  auto u = uniform_generator(Group::lattice(1));
  auto s = torus_return_series(u, log_grid(64, 4096, 40));
  FitOptions o;
  o.burn_in = 64;
  auto f = fit_decay(s, DecayFamily::Polynomial, o);
  CHECK(std::fabs(f.beta - 0.5) <= 0.03);
  CHECK(compare(predict("lattice(1)", "uniform"), f, 0.03) == Verdict::Match);
}

TEST_CASE("verdicts") {
  Prediction p;
  p.family = DecayFamily::Stretched;
  p.gamma = Rational(1, 3);
  DecayFit f;
  f.family = DecayFamily::Stretched;
  f.gamma = 0.36;
  CHECK(compare(p, f, 0.05) == Verdict::Match);
  f.gamma = 0.45;
  CHECK(compare(p, f, 0.05) == Verdict::Mismatch);
  p.one_sided = true;
  CHECK(compare(p, f, 0.05) == Verdict::Mismatch);
  f.gamma = 0.1;
  CHECK(compare(p, f, 0.05) == Verdict::Match);
  CHECK(compare(std::nullopt, f, 0.05) == Verdict::Inconclusive);
  CHECK(compare(p, std::nullopt, 0.05) == Verdict::Inconclusive);
  f.family = DecayFamily::Polynomial;
  CHECK(compare(p, f, 0.05) == Verdict::Inconclusive);
}

TEST_CASE("config round trip") {
  ExperimentConfig c;
  c.name = "rt";
  c.group = "wreath(cyclic(2), lattice(1))";
  c.measure = "sws(lamp=uniform, base=lazy(uniform, hold=0.3333333333333333))";
  c.task = Task::McFunctional;
  c.N = 77;
  c.policy = "top_mass(1000)";
  c.method = "sparse";
  c.fit = "stretched";
  c.burn_in = 10;
  c.fit_max = 1e5;
  c.delta_grid = {0, 0.5, 1};
  c.tolerance = 0.1;
  c.p = 1.5;
  c.family = "boxes";
  c.volumes = {1, 10, 1e6};
  c.replicas = 12345;
  c.ns = {1, 10, 100};
  c.functional = "lamp(group=cyclic(2), nu=uniform)";
  c.seed = 18446744073709551615ULL;
  c.experiment_id = 9;
  auto d = ExperimentConfig::parse(c.serialize());
  CHECK(d == c);
  CHECK(d.serialize() == c.serialize());
  CHECK(d.seed == c.seed);
  ExperimentConfig e;
  CHECK(ExperimentConfig::parse(e.serialize()) == e);
  CHECK_FALSE(ExperimentConfig::parse(e.serialize()).seed.has_value());
  CHECK_THROWS_AS(ExperimentConfig::parse("colour = red\n"), ParseError);
  CHECK_THROWS_AS(ExperimentConfig::parse("N = ten\n"), ParseError);
  CHECK_THROWS_AS(ExperimentConfig::parse("task = dance\n"), ParseError);
  auto f = ExperimentConfig::parse("# comment\n\ngroup = lattice(1)  # trailing\nmeasure = uniform\n");
  CHECK(f.group == "lattice(1)");
}

TEST_CASE("functional descriptors") {
  CHECK(parse_functional("zero")(5) == 0.0);
  auto r = parse_functional("range(kappa=2, start=1)");
  CHECK(r(3) == 2.0);
  CHECK(r.count_start);
  auto l = parse_functional("lamp");
  l.ensure(3);
  CHECK(l(1) == doctest::Approx(-std::log(0.625)).epsilon(1e-14));
  CHECK_THROWS_AS(parse_functional("spin(1)"), ParseError);
}

TEST_CASE("runs write their outputs") {
  ExperimentConfig c;
  c.name = "z";
  c.group = "lattice(1)";
  c.measure = "uniform";
  c.N = 4096;
  c.method = "torus";
  c.burn_in = 64;
  c.tolerance = 0.03;
  auto dir = scratch("run");
  auto r = run(c, dir);
  CHECK(r.exit_code == 0);
  CHECK(r.files.size() == 4);
  auto j = slurp(dir + "/z.json");
  CHECK(j.find("\"verdict\": \"MATCH\"") != std::string::npos);
  CHECK(slurp(dir + "/z.csv").rfind("n,", 0) == 0);
  CHECK(slurp(dir + "/z.txt").find("poly.diffusive") != std::string::npos);

  ExperimentConfig p;
  p.name = "empty";
  p.group = "lattice(1)";
  p.measure = "uniform";
  p.task = Task::Profile;
  auto rp = run(p, dir);
  CHECK(rp.exit_code == 2);
  CHECK(slurp(dir + "/empty.json").find("validation-error") != std::string::npos);

  ExperimentConfig q = c;
  q.name = "short";
  q.N = 8;
  CHECK(run(q, dir).exit_code == 2);
  std::filesystem::remove_all(dir);
}

TEST_CASE("seeded runs are byte identical") {
  ExperimentConfig c;
  c.name = "mc";
  c.group = "lattice(1)";
  c.measure = "uniform";
  c.task = Task::McFunctional;
  c.replicas = 400;
  c.ns = {16, 32, 64, 128, 256, 512, 1024, 2048};
  c.burn_in = 16;
  c.seed = 77;
  auto a = scratch("a"), b = scratch("b");
  set_threads(1);
  run(c, a);
  set_threads(3);
  run(c, b);
  set_threads(1);
  for (const char* ext : {".csv", ".json", ".txt", ".dat"}) CHECK(slurp(a + "/mc" + ext) == slurp(b + "/mc" + ext));
  CHECK(!slurp(a + "/mc.csv").empty());
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}
