#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "roqj/linalg.hpp"
#include "roqj/run_config.hpp"

namespace roqj {

struct Ensemble;
struct MeasurementRecord;

/// Matrix-element observable: population rho_ii, Re rho_ij or Im rho_ij.
/// Names are pop_<i>, re_<i>_<j>, im_<i>_<j> (zero-based indices).
struct Observable {
  enum class Kind { population, real_part, imag_part };
  Kind kind = Kind::population;
  int i = 0;
  int j = 0;

  static Observable parse(std::string_view name);
  std::string name() const;
  double value(const Vector& psi) const;
  double value(const Matrix& rho) const;
  void check_dimension(int n) const;
};

/// Numerically stable running mean/variance that can be merged (Chan et al.).
class RunningStats {
 public:
  void add(double x, double weight = 1.0);
  void merge(const RunningStats& other);
  double count() const { return count_; }
  double mean() const { return mean_; }
  double sample_variance() const;
  /// Sample standard deviation over sqrt(count); zero for fewer than two.
  double stderr_of_mean() const;

 private:
  double count_ = 0.0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct MeanStderr {
  double mean = 0.0;
  double stderr = 0.0;
};

/// Sample mean and sample-stddev / sqrt(N). Requires at least two samples.
MeanStderr observable_mean_stderr(std::span<const double> samples);

/// sum_k (N_k / N) |psi_k><psi_k|. Throws ValidationError for an empty
/// ensemble.
Matrix ensemble_average(const Ensemble& ensemble);

/// (1/2) ||a - b||_1 for Hermitian a, b.
double trace_distance(const Matrix& a, const Matrix& b);

/// Outcome of run(): ensemble-averaged states and observables at the sample
/// times, jump statistics and reverse-jump diagnostics.
struct SimulationResult {
  std::string model_name;
  RunConfig config;

  std::vector<double> times;
  std::vector<Matrix> averaged_states;
  std::vector<std::string> observable_names;
  std::vector<std::vector<double>> observable_means;   // [time][observable]
  std::vector<std::vector<double>> observable_stderr;  // [time][observable]

  std::vector<std::uint64_t> jump_histogram;  // forward jumps per channel index
  std::uint64_t forward_jumps = 0;
  std::uint64_t reverse_jumps = 0;

  // Weights are expected probability mass per ensemble member, summed over
  // steps (averaged over batches for the general engine).
  double forward_weight = 0.0;
  double reverse_weight = 0.0;
  double leaked_weight = 0.0;   // negative channels without a source class
  double clamped_weight = 0.0;  // reverse probability cut to keep p <= 1
  std::uint64_t unmatched_channels = 0;
  std::uint64_t ambiguous_matches = 0;

  std::size_t max_forward_channels = 0;  // distinct forward targets in any step
  std::size_t max_classes = 0;
  std::size_t batches = 1;

  std::vector<MeasurementRecord> records;         // per recorded trajectory
  std::vector<std::vector<Vector>> realizations;  // [trajectory][time]
  std::vector<std::string> warnings;

  double leaked_fraction() const;
};

}  // namespace roqj
