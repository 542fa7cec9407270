#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rwlab/convolution.hpp"
#include "rwlab/mc.hpp"

namespace rwlab {

// Exact rational with normalized sign and lowest terms.
class Rational {
 public:
  Rational() = default;
  Rational(long long n, long long d = 1);
  // "0.8" -> 4/5, "3/4", "2"; ParseError otherwise.
  static Rational parse(std::string_view text);

  long long num() const { return n_; }
  long long den() const { return d_; }
  double value() const { return static_cast<double>(n_) / static_cast<double>(d_); }
  std::string str() const;

  friend Rational operator+(Rational a, Rational b);
  friend Rational operator-(Rational a, Rational b);
  friend Rational operator*(Rational a, Rational b);
  friend Rational operator/(Rational a, Rational b);
  friend bool operator==(Rational a, Rational b) { return a.n_ == b.n_ && a.d_ == b.d_; }
  friend bool operator<(Rational a, Rational b);

 private:
  long long n_ = 0, d_ = 1;
};

// Decay families:
//   polynomial  n^-beta (log n)^-eta
//   stretched   exp(-c n^gamma (log n)^delta)
//   slow        exp(-c n / log_[depth](n)^eps)
enum class DecayFamily { Polynomial, Stretched, Slow };
const char* to_string(DecayFamily f);

struct Prediction {
  DecayFamily family = DecayFamily::Polynomial;
  Rational beta, eta;
  Rational gamma, delta;
  int depth = 0;
  Rational eps;
  bool one_sided = false;  // only "decays no faster than" is known
  std::string rule;        // registered rule id
  std::string formula() const;
  // Slow forms of depth 1 are stretched with gamma = 1, delta = -eps.
  std::optional<Prediction> as_stretched() const;
};

struct PredictionRule {
  std::string id;
  std::string pattern;
  std::string formula;
};
const std::vector<PredictionRule>& prediction_rules();

// Pure lookup on descriptors; nullopt when no registered pattern matches.
std::optional<Prediction> predict(std::string_view group, std::string_view measure);
// exp(-sum F(l)) along the walk of the measure: the range and lamp
// functionals behave like the walk on a wreath product with finite lamps.
std::optional<Prediction> predict_functional(std::string_view group, std::string_view measure,
                                             std::string_view functional);

struct DecayPoint {
  double n = 0.0;
  double value = 0.0;
  double uncertainty = 0.0;  // deficit bound or standard error
};

struct FitOptions {
  double burn_in = 32;       // points with n below are dropped
  double n_max = 0;          // 0 = no upper cut
  size_t min_points = 8;
  double min_span = 4.0;     // n_max / n_min on the window
  double max_uncertainty = 0.1;
  double eta = 0.0;          // polynomial: fixed log power
  std::vector<double> delta_grid{0.0};  // stretched: scanned log powers
};

struct DecayFit {
  DecayFamily family = DecayFamily::Polynomial;
  double beta = 0.0, eta = 0.0;
  double gamma = 0.0, delta = 0.0;
  double log_c = 0.0;
  double residual = 0.0;  // RMS in the linearized coordinate
  double n_lo = 0.0, n_hi = 0.0;
  size_t points = 0;
};

// Throws FitRefused naming the violated precondition.
DecayFit fit_decay(const std::vector<DecayPoint>& pts, DecayFamily family, const FitOptions& opt = {});
DecayFit fit_decay(const ReturnSeries& s, DecayFamily family, const FitOptions& opt = {});
DecayFit fit_decay(const std::vector<FunctionalEstimate>& est, DecayFamily family, const FitOptions& opt = {});

enum class Verdict { Match, Inconclusive, Mismatch };
const char* to_string(Verdict v);
// Compares the leading exponent (beta or gamma). One-sided predictions only
// require the fit not to decay faster than the bound.
Verdict compare(const std::optional<Prediction>& pred, const std::optional<DecayFit>& fit, double tol);

enum class Task { ReturnSeries, Profile, McFunctional, Entropy };
const char* to_string(Task t);

// Flat key = value file; '#' starts a comment. Unknown keys are rejected.
struct ExperimentConfig {
  std::string name = "experiment";
  std::string group;
  std::string measure;
  Task task = Task::ReturnSeries;
  int N = 1024;
  std::string policy = "none";
  std::string method = "auto";
  std::string fit = "auto";  // auto | none | polynomial | stretched
  double burn_in = 32;
  double fit_max = 0;
  std::vector<double> delta_grid;  // empty: the predicted delta, else 0
  double tolerance = 0.05;
  double p = 2.0;
  std::string family = "balls";  // balls | boxes
  std::vector<double> volumes;
  long replicas = 1000;
  std::vector<long> ns;
  std::string functional = "range(kappa=1)";
  std::optional<uint64_t> seed;  // unset: the runner's fallback chain decides
  uint64_t experiment_id = 0;

  static ExperimentConfig parse(std::string_view text);
  std::string serialize() const;
  bool operator==(const ExperimentConfig& o) const;
};

struct RunResult {
  int exit_code = 0;
  std::vector<std::string> files;
  std::string error;
};

// Writes <name>.csv, <name>.json, <name>.txt and <name>.dat under out_dir,
// each through a temporary file and a rename. Exit codes: 0 ok, 2 refused
// or invalid input, 3 resource or numeric failure.
RunResult run(const ExperimentConfig& cfg, const std::string& out_dir);

LocalTimeFunctional parse_functional(std::string_view text);

}  // namespace rwlab
