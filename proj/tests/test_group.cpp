#include <doctest.h>

#include <cmath>
#include <deque>
#include <map>
#include <set>

#include "rwlab/errors.hpp"
#include "rwlab/group.hpp"

using namespace rwlab;

namespace {

// Lamplighter over Z held as (lit positions, cursor), independent of the
// library's payload layout.
struct Lamp {
  std::set<long> lit;
  long cursor = 0;
  bool operator<(const Lamp& o) const { return std::tie(cursor, lit) < std::tie(o.cursor, o.lit); }
};

std::map<Lamp, int> lamplighter_bfs(int R) {
  std::map<Lamp, int> d{{Lamp{}, 0}};
  std::deque<Lamp> q{Lamp{}};
  while (!q.empty()) {
    Lamp x = q.front();
    q.pop_front();
    int dx = d[x];
    if (dx == R) continue;
    Lamp a = x, b = x, c = x;
    a.cursor++;
    b.cursor--;
    if (!c.lit.erase(c.cursor)) c.lit.insert(c.cursor);
    for (const Lamp& y : {a, b, c})
      if (d.emplace(y, dx + 1).second) q.push_back(y);
  }
  return d;
}

Element lamp_element(const Group& w, const Lamp& x) {
  Group::WreathParts p;
  p.cursor = Element{x.cursor};
  for (long pos : x.lit) p.lamps.emplace_back(Element{pos}, Element{1});
  return w.join(p);
}

// Heisenberg BFS with the normal form law written out here.
std::map<std::array<long, 3>, int> heisenberg_bfs(int R) {
  using T = std::array<long, 3>;
  auto mul = [](T a, T b) { return T{a[0] + b[0], a[1] + b[1], a[2] + b[2] + a[0] * b[1]}; };
  std::map<T, int> d{{T{0, 0, 0}, 0}};
  std::deque<T> q{T{0, 0, 0}};
  const T gens[] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}};
  while (!q.empty()) {
    T x = q.front();
    q.pop_front();
    int dx = d[x];
    if (dx == R) continue;
    for (const T& s : gens) {
      T y = mul(x, s);
      if (d.emplace(y, dx + 1).second) q.push_back(y);
    }
  }
  return d;
}

}  // namespace

TEST_CASE("multiply on lattice, heisenberg and lamplighter") {
  auto z2 = Group::lattice(2);
  CHECK(z2->multiply(Element{1, 2}, Element{3, -1}) == Element{4, 1});
  auto h = Group::heisenberg();
  CHECK(h->multiply(Element{1, 0, 0}, Element{0, 1, 0}) == Element{1, 1, 1});
  auto w = Group::parse("wreath(cyclic(2), lattice(1))");
  Lamp on0;
  on0.lit = {0};
  Lamp c1;
  c1.cursor = 1;
  Lamp want = on0;
  want.cursor = 1;
  CHECK(w->multiply(lamp_element(*w, on0), lamp_element(*w, c1)) == lamp_element(*w, want));
}

TEST_CASE("descriptor mismatch") {
  auto z2 = Group::lattice(2);
  CHECK_THROWS_AS(z2->multiply(Element{1}, Element{1, 2}), DescriptorMismatch);
  GroupElement a{Group::lattice(1), Element{1}}, b{Group::lattice(2), Element{1, 1}};
  CHECK_THROWS_AS(multiply(a, b), DescriptorMismatch);
}

TEST_CASE("word length examples") {
  auto z = Group::lattice(1);
  CHECK(z->word_length(Element{5}).length == 5);
  auto w = Group::parse("wreath(cyclic(2), lattice(1))");
  Lamp x;
  x.lit = {1};
  CHECK(w->word_length(lamp_element(*w, x)).length == 3);
  auto h = Group::heisenberg();
  auto d = heisenberg_bfs(6);
  REQUIRE(d.count({0, 0, 1}));
  CHECK(d[{0, 0, 1}] == 4);
  CHECK(h->word_length(Element{0, 0, 1}).length == 4);
}

TEST_CASE("word length agrees with an independent BFS") {
  auto w = Group::parse("wreath(cyclic(2), lattice(1))");
  for (const auto& [x, dist] : lamplighter_bfs(6)) {
    auto wl = w->word_length(lamp_element(*w, x));
    CHECK(wl.exact);
    CHECK(wl.length == dist);
  }
  auto h = Group::heisenberg();
  for (const auto& [x, dist] : heisenberg_bfs(6)) CHECK(h->word_length(Element{x[0], x[1], x[2]}).length == dist);
}

TEST_CASE("balls") {
  CHECK(Group::lattice(1)->volume(3) == 7);
  CHECK(Group::lattice(2)->volume(2) == 13);
  for (const char* d : {"lattice(3)", "heisenberg3", "cyclic(5)", "wreath(cyclic(2), lattice(1))"}) {
    auto g = Group::parse(d);
    auto b = g->ball(0);
    REQUIRE(b.volume() == 1);
    CHECK(g->is_identity(b.elements[0]));
  }
  auto w = Group::parse("wreath(cyclic(2), lattice(1))");
  CHECK(w->volume(6) == lamplighter_bfs(6).size());
  CHECK(Group::heisenberg()->volume(6) == heisenberg_bfs(6).size());
}

TEST_CASE("balls are symmetric, nested and multiplicative") {
  for (const char* d : {"lattice(2)", "heisenberg3", "wreath(cyclic(2), lattice(1))", "wreath(lattice(1), lattice(1))"}) {
    auto g = Group::parse(d);
    auto b2 = g->ball(2), b4 = g->ball(4);
    std::set<Element> s4(b4.elements.begin(), b4.elements.end());
    std::set<Element> s2(b2.elements.begin(), b2.elements.end());
    for (const auto& x : b4.elements) CHECK(s4.count(g->inverse(x)));
    for (const auto& x : b2.elements) CHECK(s4.count(x));
    for (const auto& x : b2.elements)
      for (const auto& y : b2.elements) CHECK(s4.count(g->multiply(x, y)));
    for (int r = 0; r < 4; ++r) CHECK(g->volume(r) <= g->volume(r + 1));
  }
}

TEST_CASE("heisenberg growth degree 4") {
  auto h = Group::heisenberg();
  for (int r : {8, 12, 16}) {
    double q = std::log2(static_cast<double>(h->volume(2 * r)) / static_cast<double>(h->volume(r)));
    CHECK(q >= 3.5);
    CHECK(q <= 4.5);
  }
}

TEST_CASE("ball budget") {
  auto w = Group::parse("wreath(cyclic(2), lattice(2))");
  w->set_budget(1000);
  try {
    w->ball(50);
    FAIL("expected a resource error");
  } catch (const ResourceError& e) {
    CHECK(e.completed >= 0);
    CHECK(w->volume(static_cast<int>(e.completed)) <= 1000);
  }
}

TEST_CASE("wreath construction") {
  auto w = Group::parse("wreath(cyclic(2), lattice(1))");
  CHECK(w->sstar().size() == 4);
  auto it = Group::parse("wreath(cyclic(2), wreath(cyclic(2), lattice(1)))");
  for (const auto& x : it->ball(3).elements) CHECK(it->canonicalize(x) == x);
  auto zz = Group::parse("wreath(lattice(1), lattice(1))");
  Element k = zz->embed_lamp(Element{1}), h = zz->embed_base(Element{1});
  auto p = zz->split(zz->multiply(k, h));
  CHECK(p.cursor == Element{1});
  REQUIRE(p.lamps.size() == 1);
  CHECK(p.lamps[0].first == Element{0});
  CHECK(p.lamps[0].second == Element{1});
}

TEST_CASE("canonicalize is idempotent and group laws hold") {
  for (const char* d : {"cyclic(3)", "heisenberg3", "wreath(cyclic(3), lattice(1))", "wreath(lattice(1), cyclic(4))"}) {
    auto g = Group::parse(d);
    auto b = g->ball(2).elements;
    for (const auto& x : b) {
      CHECK(g->canonicalize(g->canonicalize(x)) == g->canonicalize(x));
      CHECK(g->is_identity(g->multiply(x, g->inverse(x))));
      CHECK(g->multiply(x, g->identity()) == x);
      for (const auto& y : b)
        for (const auto& z : {b.front(), b.back()}) CHECK(g->multiply(g->multiply(x, y), z) == g->multiply(x, g->multiply(y, z)));
    }
  }
}

TEST_CASE("parse errors") {
  CHECK_THROWS_AS(Group::parse("torus(2)"), ParseError);
  CHECK_THROWS_AS(Group::parse("cyclic()"), ParseError);
}
