#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace telehmm {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidModelError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

/// Raised when a bin has zero probability under every state given the
/// preceding data. `bin()` is the 0-based bin index; `iteration()` is set
/// when the failure happened inside an EM iteration (1-based).
class ZeroLikelihoodError : public Error {
 public:
  explicit ZeroLikelihoodError(std::size_t bin, std::optional<std::size_t> iteration = {});
  std::size_t bin() const noexcept { return bin_; }
  std::optional<std::size_t> iteration() const noexcept { return iteration_; }

 private:
  std::size_t bin_;
  std::optional<std::size_t> iteration_;
};

// ---------------------------------------------------------------------------
// Dense row-major matrix
// ---------------------------------------------------------------------------

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Model and observations
// ---------------------------------------------------------------------------

/// Discrete-emission HMM over per-bin photon counts.
///
/// `transition(i, j)` is P(X_{t+1} = j | X_t = i) for one bin, `emission(i, s)`
/// is P(s | X = i) for s = 0 .. max_count, and `initial` is P(X_1).
struct ModelSpec {
  std::vector<double> initial;
  Matrix transition;
  Matrix emission;

  std::size_t n_states() const noexcept { return initial.size(); }
  std::size_t max_count() const noexcept { return emission.cols() == 0 ? 0 : emission.cols() - 1; }

  bool operator==(const ModelSpec&) const = default;
};

inline constexpr double kStochasticTolerance = 1e-12;

/// Throws InvalidModelError unless shapes agree, all entries lie in [0, 1]
/// and every distribution sums to one within `tol`.
void validate_model(const ModelSpec& model, double tol = kStochasticTolerance);

/// Mean count of each state's emission row.
std::vector<double> emission_means(const ModelSpec& model);

/// Relabels states: state `perm[i]` of the result is state `i` of `model`.
ModelSpec permute_states(const ModelSpec& model, std::span<const std::size_t> perm);

/// Reorders states by ascending emission mean (stable in state index).
/// `order`, if given, receives the original index of each new state.
ModelSpec canonicalize_states(const ModelSpec& model, std::vector<std::size_t>* order = nullptr);

/// Largest absolute difference over initial, transition and emission entries.
double max_parameter_change(const ModelSpec& a, const ModelSpec& b);

struct ObservationSequence {
  std::vector<std::uint32_t> counts;
  double bin_width = 50e-6;  // seconds

  std::size_t size() const noexcept { return counts.size(); }
  std::uint32_t max_observed() const noexcept;
};

/// Throws InputError if `obs` is empty or holds a count the model cannot emit.
void check_compatible(const ModelSpec& model, const ObservationSequence& obs);

/// Replaces every count above `max_count` with `max_count`; returns how many changed.
std::size_t clamp_counts(ObservationSequence& obs, std::uint32_t max_count);

}  // namespace telehmm
