#include "rwlab/mc.hpp"

#include <absl/container/flat_hash_map.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rwlab/convolution.hpp"
#include "rwlab/errors.hpp"
#include "rwlab/numeric.hpp"
#include "rwlab/parallel.hpp"

namespace rwlab {

namespace {

uint64_t mix(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

}  // namespace

Rng::Rng(const StreamKey& k) {
  uint64_t h = mix(k.seed + kGolden);
  h = mix(h ^ (k.experiment + 2 * kGolden));
  h = mix(h ^ (k.replica + 3 * kGolden));
  state_ = h;
}

uint64_t Rng::next() { return mix(state_ += kGolden); }

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

AliasTable::AliasTable(const std::vector<double>& w) {
  size_t n = w.size();
  if (n == 0) throw DomainError("alias table over no atoms");
  Accumulator tot;
  for (double x : w) {
    if (!(x >= 0.0)) throw DomainError("negative weight in alias table");
    tot.add(x);
  }
  prob_.assign(n, 0.0);
  alias_.assign(n, 0);
  std::vector<double> scaled(n);
  std::vector<uint32_t> small, large;
  for (size_t i = 0; i < n; ++i) {
    scaled[i] = w[i] * static_cast<double>(n) / tot.value();
    (scaled[i] < 1.0 ? small : large).push_back(static_cast<uint32_t>(i));
  }
  while (!small.empty() && !large.empty()) {
    uint32_t s = small.back(), l = large.back();
    small.pop_back();
    large.pop_back();
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] = (scaled[l] + scaled[s]) - 1.0;
    (scaled[l] < 1.0 ? small : large).push_back(l);
  }
  for (uint32_t i : large) prob_[i] = 1.0;
  for (uint32_t i : small) prob_[i] = 1.0;  // rounding leftovers
  for (size_t i = 0; i < n; ++i)
    if (prob_[i] >= 1.0) alias_[i] = static_cast<uint32_t>(i);
}

size_t AliasTable::sample(Rng& rng) const {
  uint64_t r = rng.next();
  size_t i = static_cast<size_t>((r >> 32) * prob_.size() >> 32);
  double u = static_cast<double>(r & 0xffffffffULL) * 0x1.0p-32;
  return u < prob_[i] ? i : alias_[i];
}

namespace {

std::vector<double> weights_of(const SparseMeasure& mu) {
  if (mu.deficit > 0.0) throw DomainError("sampling needs a measure without deficit");
  std::vector<double> w;
  for (const auto& a : mu.atoms) w.push_back(a.second);
  return w;
}

// Lattice(1) jumps as plain integers, or empty when the fast path does not apply.
std::vector<int64_t> line_jumps(const SparseMeasure& mu) {
  const Group& g = *mu.group;
  std::vector<int64_t> j;
  if (g.kind() != Group::Kind::Lattice || g.dim() != 1) return j;
  for (const auto& a : mu.atoms) j.push_back(a.first.v[0]);
  return j;
}

}  // namespace

TrajectoryStats sample_trajectory(const SparseMeasure& mu, long n, const StreamKey& key) {
  if (n < 0) throw DomainError("negative step count");
  const Group& g = *mu.group;
  AliasTable table(weights_of(mu));
  Rng rng(key);
  absl::flat_hash_map<Element, long> lt;
  absl::flat_hash_map<Element, bool> seen;
  Element x = g.identity();
  seen[x] = true;
  for (long k = 1; k <= n; ++k) {
    x = g.multiply(x, mu.atoms[table.sample(rng)].first);
    ++lt[x];
    seen[x] = true;
  }
  TrajectoryStats s;
  s.n = n;
  s.endpoint = x;
  s.local_times.assign(lt.begin(), lt.end());
  std::sort(s.local_times.begin(), s.local_times.end());
  s.range = static_cast<long>(seen.size());
  return s;
}

LocalTimeFunctional LocalTimeFunctional::zero() {
  LocalTimeFunctional f;
  f.table = {0.0};
  f.descriptor = "zero";
  return f;
}

LocalTimeFunctional LocalTimeFunctional::range(double kappa, bool count_start) {
  LocalTimeFunctional f;
  f.kind_ = Kind::Range;
  f.kappa_ = kappa;
  f.table = {0.0, kappa};
  f.count_start = count_start;
  std::ostringstream o;
  o << "range(kappa=" << kappa << (count_start ? ", start=1" : "") << ")";
  f.descriptor = o.str();
  return f;
}

LocalTimeFunctional LocalTimeFunctional::power(double kappa, double gamma) {
  LocalTimeFunctional f;
  f.kind_ = Kind::Power;
  f.kappa_ = kappa;
  f.gamma_ = gamma;
  f.table = {0.0};
  std::ostringstream o;
  o << "power(kappa=" << kappa << ", gamma=" << gamma << ")";
  f.descriptor = o.str();
  return f;
}

LocalTimeFunctional LocalTimeFunctional::lamp(const SparseMeasure& nu) {
  if (!nu.symmetric || nu.deficit != 0.0) throw DomainError("lamp functional needs an exact symmetric measure");
  LocalTimeFunctional f;
  f.kind_ = Kind::Lamp;
  f.nu_ = std::make_shared<SparseMeasure>(nu);
  f.table = {0.0};
  f.descriptor = "lamp(nu=" + nu.descriptor + ")";
  return f;
}

void LocalTimeFunctional::ensure(long lmax) {
  if (static_cast<long>(table.size()) > lmax) return;
  size_t old = table.size();
  switch (kind_) {
    case Kind::Zero:
    case Kind::Range: return;  // constant beyond the table
    case Kind::Power:
      for (long l = static_cast<long>(old); l <= lmax; ++l) table.push_back(kappa_ * std::pow(static_cast<double>(l), gamma_));
      return;
    case Kind::Lamp: {
      // nu^(2l)(e) settles on finite lamp groups; stop once it is constant
      auto s = return_series(*nu_, static_cast<int>(lmax), TruncationPolicy::none(), ReturnMethod::Sparse);
      table.resize(1);
      for (long l = 1; l <= lmax; ++l) table.push_back(-std::log(s.at(static_cast<int>(l))));
      return;
    }
  }
}

double LocalTimeFunctional::operator()(long l) const {
  if (l < static_cast<long>(table.size())) return table[static_cast<size_t>(l)];
  if (kind_ == Kind::Power) return kappa_ * std::pow(static_cast<double>(l), gamma_);
  return table.back();
}

std::vector<FunctionalEstimate> functional_estimate(const SparseMeasure& mu, LocalTimeFunctional F,
                                                    const std::vector<long>& ns, long replicas, const StreamKey& key) {
  if (replicas < 2) throw DomainError("standard error needs at least 2 replicas");
  if (ns.empty()) return {};
  std::vector<long> grid = ns;
  std::sort(grid.begin(), grid.end());
  if (grid.front() < 0) throw DomainError("negative step count");
  long nmax = grid.back();
  F.ensure(nmax + 1);
  const Group& g = *mu.group;
  AliasTable table(weights_of(mu));
  auto jumps = line_jumps(mu);
  int64_t reach = 0;
  for (auto j : jumps) reach = std::max<int64_t>(reach, std::llabs(j));
  bool line = !jumps.empty() && static_cast<double>(reach) * static_cast<double>(nmax) < 5e7;
  size_t m = grid.size();
  std::vector<double> vals(static_cast<size_t>(replicas) * m);
  const long block = 16;
  parallel_for(static_cast<size_t>((replicas + block - 1) / block), [&](size_t b) {
    std::vector<int32_t> counts;
    std::vector<int64_t> touched;
    absl::flat_hash_map<Element, long> lt;
    for (long r = static_cast<long>(b) * block; r < std::min(replicas, static_cast<long>(b + 1) * block); ++r) {
      Rng rng({key.seed, key.experiment, static_cast<uint64_t>(r)});
      double S = 0.0;
      size_t j = 0;
      double* out = &vals[static_cast<size_t>(r) * m];
      if (line) {
        int64_t off = reach * nmax;
        if (counts.empty()) counts.assign(static_cast<size_t>(2 * off + 1), 0);
        int64_t x = 0;
        auto visit = [&](int64_t pos) {
          auto& c = counts[static_cast<size_t>(pos + off)];
          if (c == 0) touched.push_back(pos);
          S += F(c + 1) - F(c);
          ++c;
        };
        if (F.count_start) visit(0);
        for (long k = 0;; ++k) {
          while (j < m && grid[j] == k) out[j++] = std::exp(-S);
          if (j == m) break;
          x += jumps[table.sample(rng)];
          visit(x);
        }
        for (auto pos : touched) counts[static_cast<size_t>(pos + off)] = 0;
        touched.clear();
      } else {
        lt.clear();
        Element x = g.identity();
        auto visit = [&](const Element& pos) {
          long& c = lt[pos];
          S += F(c + 1) - F(c);
          ++c;
        };
        if (F.count_start) visit(x);
        for (long k = 0;; ++k) {
          while (j < m && grid[j] == k) out[j++] = std::exp(-S);
          if (j == m) break;
          x = g.multiply(x, mu.atoms[table.sample(rng)].first);
          visit(x);
        }
      }
    }
  });
  std::vector<FunctionalEstimate> res;
  for (size_t j = 0; j < m; ++j) {
    Accumulator s, s2;
    for (long r = 0; r < replicas; ++r) s.add(vals[static_cast<size_t>(r) * m + j]);
    double mean = s.value() / static_cast<double>(replicas);
    for (long r = 0; r < replicas; ++r) {
      double d = vals[static_cast<size_t>(r) * m + j] - mean;
      s2.add(d * d);
    }
    double var = s2.value() / static_cast<double>(replicas - 1);
    res.push_back({grid[j], mean, std::sqrt(var / static_cast<double>(replicas)), replicas, F.descriptor});
  }
  return res;
}

ReturnEstimate mc_return_estimate(const SparseMeasure& mu, long n, long replicas, const StreamKey& key) {
  if (replicas < 2) throw DomainError("standard error needs at least 2 replicas");
  if (n < 0) throw DomainError("negative step count");
  const Group& g = *mu.group;
  AliasTable table(weights_of(mu));
  std::vector<uint8_t> hit(static_cast<size_t>(replicas), 0);
  const long block = 64;
  parallel_for(static_cast<size_t>((replicas + block - 1) / block), [&](size_t b) {
    for (long r = static_cast<long>(b) * block; r < std::min(replicas, static_cast<long>(b + 1) * block); ++r) {
      Rng rng({key.seed, key.experiment, static_cast<uint64_t>(r)});
      Element x = g.identity();
      for (long k = 0; k < n; ++k) x = g.multiply(x, mu.atoms[table.sample(rng)].first);
      hit[static_cast<size_t>(r)] = g.is_identity(x) ? 1 : 0;
    }
  });
  long h = 0;
  for (auto v : hit) h += v;
  double p = static_cast<double>(h) / static_cast<double>(replicas);
  return {n, p, std::sqrt(p * (1.0 - p) / static_cast<double>(replicas)), replicas};
}

std::string to_csv(const std::vector<FunctionalEstimate>& rows) {
  std::ostringstream o;
  o.precision(17);
  o << "n,value,stderr,replicas,functional\n";
  for (const auto& r : rows) o << r.n << ',' << r.value << ',' << r.stderr_ << ',' << r.replicas << ",\"" << r.functional << "\"\n";
  return o.str();
}

}  // namespace rwlab
