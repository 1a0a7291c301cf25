#include "roqj/analysis.hpp"

#include <charconv>
#include <cmath>

#include "roqj/engines.hpp"
#include "roqj/errors.hpp"

namespace roqj {

namespace {

int parse_index(std::string_view text, std::string_view whole) {
  int value = -1;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || value < 0) {
    throw ValidationError("malformed observable name '" + std::string(whole) + "'");
  }
  return value;
}

}  // namespace

Observable Observable::parse(std::string_view name) {
  Observable obs;
  auto split_pair = [&](std::string_view rest) {
    const auto sep = rest.find('_');
    if (sep == std::string_view::npos) throw ValidationError("malformed observable name '" + std::string(name) + "'");
    obs.i = parse_index(rest.substr(0, sep), name);
    obs.j = parse_index(rest.substr(sep + 1), name);
  };
  if (name.starts_with("pop_")) {
    obs.kind = Kind::population;
    obs.i = obs.j = parse_index(name.substr(4), name);
  } else if (name.starts_with("re_")) {
    obs.kind = Kind::real_part;
    split_pair(name.substr(3));
  } else if (name.starts_with("im_")) {
    obs.kind = Kind::imag_part;
    split_pair(name.substr(3));
  } else {
    throw ValidationError("unknown observable '" + std::string(name) + "' (expected pop_i, re_i_j or im_i_j)");
  }
  return obs;
}

std::string Observable::name() const {
  switch (kind) {
    case Kind::population:
      return "pop_" + std::to_string(i);
    case Kind::real_part:
      return "re_" + std::to_string(i) + "_" + std::to_string(j);
    case Kind::imag_part:
      return "im_" + std::to_string(i) + "_" + std::to_string(j);
  }
  return {};
}

void Observable::check_dimension(int n) const {
  if (i >= n || j >= n) throw ValidationError("observable " + name() + " exceeds dimension " + std::to_string(n));
}

double Observable::value(const Vector& psi) const {
  const Complex rho_ij = psi(i) * std::conj(psi(j));
  switch (kind) {
    case Kind::population:
      return std::norm(psi(i));
    case Kind::real_part:
      return rho_ij.real();
    case Kind::imag_part:
      return rho_ij.imag();
  }
  return 0.0;
}

double Observable::value(const Matrix& rho) const {
  switch (kind) {
    case Kind::population:
      return rho(i, i).real();
    case Kind::real_part:
      return rho(i, j).real();
    case Kind::imag_part:
      return rho(i, j).imag();
  }
  return 0.0;
}

void RunningStats::add(double x, double weight) {
  if (weight <= 0.0) return;
  const double new_count = count_ + weight;
  const double delta = x - mean_;
  mean_ += delta * weight / new_count;
  m2_ += weight * delta * (x - mean_);
  count_ = new_count;
}

void RunningStats::merge(const RunningStats& other) {
  if (other.count_ == 0.0) return;
  if (count_ == 0.0) {
    *this = other;
    return;
  }
  const double new_count = count_ + other.count_;
  const double delta = other.mean_ - mean_;
  mean_ += delta * other.count_ / new_count;
  m2_ += other.m2_ + delta * delta * count_ * other.count_ / new_count;
  count_ = new_count;
}

double RunningStats::sample_variance() const {
  if (count_ < 2.0) return 0.0;
  return std::max(0.0, m2_ / (count_ - 1.0));
}

double RunningStats::stderr_of_mean() const {
  if (count_ < 2.0) return 0.0;
  return std::sqrt(sample_variance() / count_);
}

MeanStderr observable_mean_stderr(std::span<const double> samples) {
  if (samples.size() < 2) throw ValidationError("standard error needs at least two samples");
  RunningStats stats;
  for (double x : samples) stats.add(x);
  return {stats.mean(), stats.stderr_of_mean()};
}

Matrix ensemble_average(const Ensemble& ensemble) {
  const std::uint64_t total = ensemble.total();
  if (ensemble.classes.empty() || total == 0) throw ValidationError("cannot average an empty ensemble");
  const Eigen::Index n = ensemble.classes.front().state.size();
  Matrix rho = Matrix::Zero(n, n);
  for (const auto& cls : ensemble.classes) {
    if (cls.count == 0) continue;
    if (cls.state.size() != n) throw DimensionError("ensemble classes have different dimensions");
    rho += (static_cast<double>(cls.count) / static_cast<double>(total)) * projector(cls.state);
  }
  return rho;
}

double trace_distance(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("trace distance of matrices of different size");
  return 0.5 * trace_norm(hermitian_part(a - b));
}

double SimulationResult::leaked_fraction() const {
  const double total = forward_weight + reverse_weight;
  return total > 0.0 ? (leaked_weight + clamped_weight) / total : 0.0;
}

}  // namespace roqj
