#include "rwlab/group.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>

#include "rwlab/errors.hpp"
#include "rwlab/expr.hpp"

namespace rwlab {

namespace {

int64_t mod(int64_t a, int64_t m) {
  int64_t r = a % m;
  return r < 0 ? r + m : r;
}

// Wreath payload layout:
//   [len(cursor), cursor..., count, {len(pos), pos..., len(lamp), lamp...}*]
void append_sized(Payload& out, const Element& e) {
  out.push_back(static_cast<int64_t>(e.v.size()));
  out.insert(out.end(), e.v.begin(), e.v.end());
}

Element read_sized(const Payload& p, size_t& i) {
  if (i >= p.size()) throw ValidationError("malformed wreath payload");
  auto n = static_cast<size_t>(p[i++]);
  if (i + n > p.size()) throw ValidationError("malformed wreath payload");
  Element e;
  e.v.assign(p.begin() + static_cast<long>(i), p.begin() + static_cast<long>(i + n));
  i += n;
  return e;
}

}  // namespace

GroupPtr Group::lattice(int d) {
  if (d < 1) throw ValidationError("lattice dimension must be >= 1");
  auto g = std::shared_ptr<Group>(new Group());
  g->kind_ = Kind::Lattice;
  g->dim_ = d;
  g->descriptor_ = "lattice(" + std::to_string(d) + ")";
  for (int i = 0; i < d; ++i) {
    Element e;
    e.v.assign(static_cast<size_t>(d), 0);
    e.v[static_cast<size_t>(i)] = 1;
    g->gens_.push_back(e);
  }
  g->finish();
  return g;
}

GroupPtr Group::cyclic(int64_t m) {
  if (m < 1) throw ValidationError("cyclic modulus must be >= 1");
  auto g = std::shared_ptr<Group>(new Group());
  g->kind_ = Kind::Cyclic;
  g->modulus_ = m;
  g->descriptor_ = "cyclic(" + std::to_string(m) + ")";
  g->gens_.push_back(Element{m == 1 ? 0 : 1});
  g->finish();
  return g;
}

GroupPtr Group::heisenberg() {
  auto g = std::shared_ptr<Group>(new Group());
  g->kind_ = Kind::Heisenberg;
  g->descriptor_ = "heisenberg3";
  g->gens_ = {Element{1, 0, 0}, Element{0, 1, 0}};
  g->finish();
  return g;
}

GroupPtr Group::wreath(GroupPtr lamp, GroupPtr base) {
  if (!lamp || !base) throw ValidationError("wreath needs lamp and base groups");
  auto g = std::shared_ptr<Group>(new Group());
  g->kind_ = Kind::Wreath;
  g->lamp_ = std::move(lamp);
  g->base_ = std::move(base);
  g->descriptor_ = "wreath(" + g->lamp_->descriptor() + ", " + g->base_->descriptor() + ")";
  for (const auto& k : g->lamp_->generators())
    if (!g->lamp_->is_identity(k)) g->gens_.push_back(g->embed_lamp(k));
  for (const auto& h : g->base_->generators())
    if (!g->base_->is_identity(h)) g->gens_.push_back(g->embed_base(h));
  g->finish();
  return g;
}

GroupPtr wreath_group(GroupPtr lamp, GroupPtr base) { return Group::wreath(std::move(lamp), std::move(base)); }

namespace {
GroupPtr group_from_expr(const Expr& e) {
  const std::string& n = e.name;
  if (n == "lattice" || n == "Z") {
    const Expr* a = e.positional(0);
    if (!a) a = e.get("d");
    return Group::lattice(a ? static_cast<int>(a->integer()) : 1);
  }
  if (n == "cyclic") {
    const Expr* a = e.positional(0);
    if (!a) a = e.get("m");
    if (!a) throw ParseError("cyclic(m) needs a modulus");
    return Group::cyclic(a->integer());
  }
  if (n == "heisenberg3" || n == "heisenberg") return Group::heisenberg();
  if (n == "wreath") {
    const Expr* l = e.get("lamp");
    const Expr* b = e.get("base");
    if (!l) l = e.positional(0);
    if (!b) b = e.positional(l == e.positional(0) ? 1 : 0);
    if (!l || !b) throw ParseError("wreath(lamp, base) needs two groups");
    return Group::wreath(group_from_expr(*l), group_from_expr(*b));
  }
  throw ParseError("unknown group kind '" + n + "'");
}
}  // namespace

GroupPtr Group::parse(std::string_view descriptor) { return group_from_expr(parse_expr(descriptor)); }

void Group::finish() {
  std::vector<Element> s{identity()};
  for (const auto& g : gens_) {
    s.push_back(canonicalize(g));
    s.push_back(inverse(g));
  }
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  sstar_ = std::move(s);
}

bool Group::is_finite() const {
  switch (kind_) {
    case Kind::Cyclic: return true;
    case Kind::Wreath: return lamp_->is_finite() && base_->is_finite();
    default: return false;
  }
}

int Group::growth_degree() const {
  switch (kind_) {
    case Kind::Lattice: return dim_;
    case Kind::Cyclic: return 0;
    case Kind::Heisenberg: return 4;
    case Kind::Wreath: {
      bool trivial_lamp = lamp_->kind() == Kind::Cyclic && lamp_->modulus() == 1;
      if (trivial_lamp) return base_->growth_degree();
      if (base_->is_finite()) {
        if (lamp_->is_finite()) return 0;
        int dk = lamp_->growth_degree();
        if (dk < 0) return -1;
        int64_t n = 1;
        if (base_->kind() == Kind::Cyclic) n = base_->modulus();
        return static_cast<int>(dk * n);
      }
      return -1;
    }
  }
  return -1;
}

Element Group::identity() const {
  switch (kind_) {
    case Kind::Lattice: {
      Element e;
      e.v.assign(static_cast<size_t>(dim_), 0);
      return e;
    }
    case Kind::Cyclic: return Element{0};
    case Kind::Heisenberg: return Element{0, 0, 0};
    case Kind::Wreath: {
      Element e;
      append_sized(e.v, base_->identity());
      e.v.push_back(0);
      return e;
    }
  }
  return {};
}

bool Group::is_identity(const Element& g) const { return g == identity(); }

bool Group::valid(const Element& a) const {
  switch (kind_) {
    case Kind::Lattice: return a.v.size() == static_cast<size_t>(dim_);
    case Kind::Cyclic: return a.v.size() == 1 && a.v[0] >= 0 && a.v[0] < modulus_;
    case Kind::Heisenberg: return a.v.size() == 3;
    case Kind::Wreath:
      try {
        auto p = split(a);
        if (!base_->valid(p.cursor)) return false;
        for (const auto& [x, k] : p.lamps)
          if (!base_->valid(x) || !lamp_->valid(k) || lamp_->is_identity(k)) return false;
        return true;
      } catch (const Error&) {
        return false;
      }
  }
  return false;
}

Group::WreathParts Group::split(const Element& g) const {
  WreathParts out;
  size_t i = 0;
  out.cursor = read_sized(g.v, i);
  if (i >= g.v.size()) throw ValidationError("malformed wreath payload");
  auto count = static_cast<size_t>(g.v[i++]);
  out.lamps.reserve(count);
  for (size_t k = 0; k < count; ++k) {
    Element x = read_sized(g.v, i);
    Element l = read_sized(g.v, i);
    out.lamps.emplace_back(std::move(x), std::move(l));
  }
  if (i != g.v.size()) throw ValidationError("malformed wreath payload");
  return out;
}

Element Group::join(WreathParts parts) const {
  auto& L = parts.lamps;
  std::stable_sort(L.begin(), L.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // merge duplicate positions (product in order of appearance), drop identities
  std::vector<std::pair<Element, Element>> merged;
  for (auto& e : L) {
    if (!merged.empty() && merged.back().first == e.first)
      merged.back().second = lamp_->multiply(merged.back().second, e.second);
    else
      merged.push_back(std::move(e));
  }
  Element out;
  append_sized(out.v, parts.cursor);
  Payload tail;
  int64_t count = 0;
  for (const auto& [x, k] : merged) {
    if (lamp_->is_identity(k)) continue;
    append_sized(tail, x);
    append_sized(tail, k);
    ++count;
  }
  out.v.push_back(count);
  out.v.insert(out.v.end(), tail.begin(), tail.end());
  return out;
}

Element Group::embed_lamp(const Element& k) const {
  WreathParts p;
  p.cursor = base_->identity();
  p.lamps.emplace_back(base_->identity(), lamp_->canonicalize(k));
  return join(std::move(p));
}

Element Group::embed_base(const Element& h) const {
  WreathParts p;
  p.cursor = base_->canonicalize(h);
  return join(std::move(p));
}

Element Group::canonicalize(const Element& a) const {
  switch (kind_) {
    case Kind::Lattice:
    case Kind::Heisenberg: return a;
    case Kind::Cyclic: return Element{mod(a.v.at(0), modulus_)};
    case Kind::Wreath: {
      auto p = split(a);
      p.cursor = base_->canonicalize(p.cursor);
      for (auto& [x, k] : p.lamps) {
        x = base_->canonicalize(x);
        k = lamp_->canonicalize(k);
      }
      return join(std::move(p));
    }
  }
  return a;
}

Element Group::multiply(const Element& a, const Element& b) const {
  switch (kind_) {
    case Kind::Lattice: {
      if (a.v.size() != static_cast<size_t>(dim_) || b.v.size() != a.v.size())
        throw DescriptorMismatch("lattice element of wrong dimension");
      Element r;
      r.v.resize(a.v.size());
      for (size_t i = 0; i < a.v.size(); ++i) r.v[i] = a.v[i] + b.v[i];
      return r;
    }
    case Kind::Cyclic:
      if (a.v.size() != 1 || b.v.size() != 1) throw DescriptorMismatch("cyclic element of wrong size");
      return Element{mod(a.v[0] + b.v[0], modulus_)};
    case Kind::Heisenberg:
      if (a.v.size() != 3 || b.v.size() != 3) throw DescriptorMismatch("heisenberg element of wrong size");
      return Element{a.v[0] + b.v[0], a.v[1] + b.v[1], a.v[2] + b.v[2] + a.v[0] * b.v[1]};
    case Kind::Wreath: {
      // (f,h)(f',h') = (f * tau_h f', h h'), (tau_h f')(x) = f'(h^-1 x)
      auto pa = split(a);
      auto pb = split(b);
      WreathParts r;
      r.cursor = base_->multiply(pa.cursor, pb.cursor);
      r.lamps = std::move(pa.lamps);
      for (auto& [y, k] : pb.lamps) r.lamps.emplace_back(base_->multiply(pa.cursor, y), std::move(k));
      return join(std::move(r));
    }
  }
  return {};
}

Element Group::inverse(const Element& a) const {
  switch (kind_) {
    case Kind::Lattice: {
      Element r = a;
      for (auto& x : r.v) x = -x;
      return r;
    }
    case Kind::Cyclic: return Element{mod(-a.v.at(0), modulus_)};
    case Kind::Heisenberg:
      // (a,b,c)^-1 = (-a,-b,-c+ab)
      return Element{-a.v[0], -a.v[1], -a.v[2] + a.v[0] * a.v[1]};
    case Kind::Wreath: {
      auto p = split(a);
      Element hinv = base_->inverse(p.cursor);
      WreathParts r;
      r.cursor = hinv;
      for (auto& [x, k] : p.lamps) r.lamps.emplace_back(base_->multiply(hinv, x), lamp_->inverse(k));
      return join(std::move(r));
    }
  }
  return {};
}

std::string Group::to_string(const Element& g) const {
  switch (kind_) {
    case Kind::Cyclic: return std::to_string(g.v.at(0));
    case Kind::Lattice:
    case Kind::Heisenberg: {
      std::string s = "(";
      for (size_t i = 0; i < g.v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(g.v[i]);
      }
      return s + ")";
    }
    case Kind::Wreath: {
      auto p = split(g);
      std::string s = "[{";
      for (size_t i = 0; i < p.lamps.size(); ++i) {
        if (i) s += ";";
        s += base_->to_string(p.lamps[i].first) + ":" + lamp_->to_string(p.lamps[i].second);
      }
      return s + "}|" + base_->to_string(p.cursor) + "]";
    }
  }
  return {};
}

GroupElement multiply(const GroupElement& a, const GroupElement& b) {
  if (!a.group || !b.group || !a.group->same_as(*b.group))
    throw DescriptorMismatch("multiply: elements of different groups (" +
                             (a.group ? a.group->descriptor() : std::string("?")) + " vs " +
                             (b.group ? b.group->descriptor() : std::string("?")) + ")");
  return {a.group, a.group->multiply(a.value, b.value)};
}

// ---------------------------------------------------------------------------
// Balls and word length

void Group::set_budget(size_t b) const {
  std::lock_guard<std::mutex> lock(mu_);
  budget_ = b;
  exhausted_ = false;
}

void Group::extend_cache(int r) const {
  if (spheres_.empty()) {
    Element e = identity();
    spheres_.push_back({e});
    dist_.emplace(e, 0);
    cached_total_ = 1;
  }
  while (static_cast<int>(spheres_.size()) <= r && !saturated_) {
    const auto& last = spheres_.back();
    int d = static_cast<int>(spheres_.size());
    std::vector<Element> next;
    for (const auto& x : last)
      for (const auto& s : sstar_) {
        if (is_identity(s)) continue;
        Element y = multiply(x, s);
        if (dist_.contains(y)) continue;
        dist_.emplace(y, d);
        next.push_back(std::move(y));
        if (cached_total_ + next.size() > budget_) {
          exhausted_ = true;
          // roll back the partial sphere so the cache stays exact
          for (const auto& z : next) dist_.erase(z);
          throw ResourceError("ball enumeration exceeded budget of " + std::to_string(budget_) +
                                  " elements while building radius " + std::to_string(d),
                              d - 1);
        }
      }
    if (next.empty()) {
      saturated_ = true;
      break;
    }
    std::sort(next.begin(), next.end());
    cached_total_ += next.size();
    spheres_.push_back(std::move(next));
  }
}

Ball Group::ball(int r) const {
  if (r < 0) throw DomainError("ball radius must be non-negative");
  std::lock_guard<std::mutex> lock(mu_);
  extend_cache(r);
  Ball b;
  b.radius = r;
  for (int k = 0; k <= r && k < static_cast<int>(spheres_.size()); ++k)
    b.elements.insert(b.elements.end(), spheres_[static_cast<size_t>(k)].begin(),
                      spheres_[static_cast<size_t>(k)].end());
  std::sort(b.elements.begin(), b.elements.end());
  return b;
}

size_t Group::volume(int r) const {
  if (kind_ == Kind::Lattice && dim_ <= 2) {
    if (dim_ == 1) return static_cast<size_t>(2 * r + 1);
    return static_cast<size_t>(2 * r * r + 2 * r + 1);
  }
  std::lock_guard<std::mutex> lock(mu_);
  extend_cache(r);
  size_t v = 0;
  for (int k = 0; k <= r && k < static_cast<int>(spheres_.size()); ++k) v += spheres_[static_cast<size_t>(k)].size();
  return v;
}

WordLength Group::wreath_line_length(const Element& g) const {
  // Lamps over Z with cyclic or Z lamp groups: the cursor must visit every
  // lit position (shortest covering walk on a line) and each lamp costs its
  // own word length.
  auto p = split(g);
  int64_t c = p.cursor.v[0];
  int64_t lo = std::min<int64_t>(0, c), hi = std::max<int64_t>(0, c);
  int64_t flips = 0;
  for (const auto& [x, k] : p.lamps) {
    lo = std::min(lo, x.v[0]);
    hi = std::max(hi, x.v[0]);
    flips += lamp_->word_length(k).length;
  }
  int64_t travel = (hi - lo) + std::min(std::llabs(lo) + std::llabs(hi - c), std::llabs(hi) + std::llabs(c - lo));
  return {travel + flips, true};
}

WordLength Group::upper_bound_length(const Element& g) const {
  if (kind_ == Kind::Heisenberg) {
    // a^x b^y gives (x, y, xy); fix the centre with commutators [a^p, b^q]
    // which contribute pq using 2(p+q) letters.
    int64_t x = g.v[0], y = g.v[1];
    int64_t rest = g.v[2] - x * y;
    int64_t len = std::llabs(x) + std::llabs(y);
    int64_t r = std::llabs(rest);
    while (r > 0) {
      auto p = static_cast<int64_t>(std::floor(std::sqrt(static_cast<double>(r))));
      while ((p + 1) * (p + 1) <= r) ++p;
      while (p * p > r) --p;
      int64_t q = r / p;
      len += 2 * (p + q);
      r -= p * q;
    }
    return {len, false};
  }
  if (kind_ == Kind::Wreath) {
    // nearest-neighbour tour over the lit positions, then to the cursor
    auto p = split(g);
    int64_t len = 0;
    bool exact = false;
    std::vector<Element> todo;
    for (const auto& [x, k] : p.lamps) {
      len += lamp_->word_length(k).length;
      todo.push_back(x);
    }
    Element at = base_->identity();
    auto dist = [&](const Element& u, const Element& v) {
      return base_->word_length(base_->multiply(base_->inverse(u), v)).length;
    };
    while (!todo.empty()) {
      size_t best = 0;
      int64_t bd = dist(at, todo[0]);
      for (size_t i = 1; i < todo.size(); ++i) {
        int64_t d = dist(at, todo[i]);
        if (d < bd) {
          bd = d;
          best = i;
        }
      }
      len += bd;
      at = todo[best];
      todo.erase(todo.begin() + static_cast<long>(best));
    }
    len += dist(at, p.cursor);
    return {len, exact};
  }
  return {0, false};
}

WordLength Group::word_length(const Element& g) const {
  switch (kind_) {
    case Kind::Lattice: {
      int64_t s = 0;
      for (auto x : g.v) s += std::llabs(x);
      return {s, true};
    }
    case Kind::Cyclic: {
      int64_t r = mod(g.v.at(0), modulus_);
      return {std::min(r, modulus_ - r), true};
    }
    case Kind::Wreath:
      if (base_->kind() == Kind::Lattice && base_->dim() == 1 &&
          (lamp_->kind() == Kind::Cyclic || (lamp_->kind() == Kind::Lattice && lamp_->dim() == 1)))
        return wreath_line_length(g);
      break;
    case Kind::Heisenberg: break;
  }
  std::lock_guard<std::mutex> lock(mu_);
  if (auto it = dist_.find(g); it != dist_.end()) return {it->second, true};
  if (exhausted_) return upper_bound_length(g);
  try {
    while (!saturated_) {
      extend_cache(static_cast<int>(spheres_.size()));
      if (auto it = dist_.find(g); it != dist_.end()) return {it->second, true};
    }
  } catch (const ResourceError&) {
  }
  return upper_bound_length(g);
}

}  // namespace rwlab
