#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rwlab/measure.hpp"

namespace rwlab {

// (seed, experiment, replica) names a stream; the draws depend on nothing else.
struct StreamKey {
  uint64_t seed = 0;
  uint64_t experiment = 0;
  uint64_t replica = 0;
};

// splitmix64 over a key-derived start; counter-based, so streams never share
// state and the scheduling of replicas is irrelevant.
class Rng {
 public:
  explicit Rng(const StreamKey& k);
  uint64_t next();
  double uniform();  // [0, 1), 53 bits

 private:
  uint64_t state_;
};

// Vose alias table over the atoms of a measure (weights renormalized).
class AliasTable {
 public:
  explicit AliasTable(const std::vector<double>& weights);
  size_t sample(Rng& rng) const;
  size_t size() const { return prob_.size(); }

 private:
  std::vector<double> prob_;
  std::vector<uint32_t> alias_;
};

struct TrajectoryStats {
  long n = 0;
  Element endpoint;
  // visits at times 1..n, sorted by element; sums to n
  std::vector<std::pair<Element, long>> local_times;
  long range = 1;  // distinct positions among X_0..X_n
};

TrajectoryStats sample_trajectory(const SparseMeasure& mu, long n, const StreamKey& key);

// F(l) on local times, tabulated for l = 0..lmax with F(0) = 0.
struct LocalTimeFunctional {
  std::vector<double> table;
  bool count_start = false;  // add the visit at time 0 (range including X_0)
  std::string descriptor;

  static LocalTimeFunctional zero();
  // kappa 1{l > 0}
  static LocalTimeFunctional range(double kappa, bool count_start);
  // kappa l^gamma
  static LocalTimeFunctional power(double kappa, double gamma);
  // -log nu^(2l)(e) on the lamp group
  static LocalTimeFunctional lamp(const SparseMeasure& nu);
  double operator()(long l) const;  // extends the table by its last value
  void ensure(long lmax);           // grow the table (lamp kind keeps its source)

 private:
  enum class Kind { Zero, Range, Power, Lamp } kind_ = Kind::Zero;
  double kappa_ = 0.0, gamma_ = 0.0;
  std::shared_ptr<const SparseMeasure> nu_;
};

struct FunctionalEstimate {
  long n = 0;
  double value = 0.0;
  double stderr_ = 0.0;
  long replicas = 0;
  std::string functional;
};

// E[exp(-sum_x F(l(n, x)))] at each n of the grid from the same trajectories.
std::vector<FunctionalEstimate> functional_estimate(const SparseMeasure& mu, LocalTimeFunctional F,
                                                    const std::vector<long>& ns, long replicas, const StreamKey& key);

struct ReturnEstimate {
  long n = 0;
  double value = 0.0;
  double stderr_ = 0.0;
  long replicas = 0;
};
// Frequency of X_n = e; useless for super-polynomially small probabilities.
ReturnEstimate mc_return_estimate(const SparseMeasure& mu, long n, long replicas, const StreamKey& key);

std::string to_csv(const std::vector<FunctionalEstimate>& rows);

}  // namespace rwlab
