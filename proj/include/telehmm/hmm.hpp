#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "telehmm/model.hpp"

namespace telehmm {

enum class PosteriorKind { filtered, smoothed };

/// Per-bin state probabilities. Row t of `probs` is P(X_t | s_1..s_t) for a
/// filtered trajectory and P(X_t | s_1..s_N) for a smoothed one.
/// `log_normalizers[t]` is the log of the forward scale constant at bin t,
/// i.e. log P(s_t | s_1..s_{t-1}); their sum is the data log-likelihood.
struct PosteriorTrajectory {
  PosteriorKind kind = PosteriorKind::filtered;
  Matrix probs;
  std::vector<double> log_normalizers;

  std::size_t size() const noexcept { return probs.rows(); }
  double log_likelihood() const;
};

/// xi(t, i, j) = P(X_t = i, X_{t+1} = j | s_1..s_N) for t = 0 .. N-2.
class PairwisePosterior {
 public:
  PairwisePosterior() = default;
  PairwisePosterior(std::size_t n_bins, std::size_t n_states)
      : steps_(n_bins == 0 ? 0 : n_bins - 1),
        n_states_(n_states),
        xi_(steps_ * n_states * n_states, 0.0) {}

  std::size_t steps() const noexcept { return steps_; }
  std::size_t n_states() const noexcept { return n_states_; }

  double& operator()(std::size_t t, std::size_t i, std::size_t j) {
    return xi_[(t * n_states_ + i) * n_states_ + j];
  }
  double operator()(std::size_t t, std::size_t i, std::size_t j) const {
    return xi_[(t * n_states_ + i) * n_states_ + j];
  }

 private:
  std::size_t steps_ = 0;
  std::size_t n_states_ = 0;
  std::vector<double> xi_;
};

struct SmoothResult {
  PosteriorTrajectory filtered;
  PosteriorTrajectory smoothed;
  PairwisePosterior pairwise;
};

// ---------------------------------------------------------------------------
// Filtering and smoothing
// ---------------------------------------------------------------------------

/// Normalized forward recursion. Bin 0 conditions `model.initial` on s_0;
/// every later bin propagates through the transition matrix first.
PosteriorTrajectory forward_filter(const ModelSpec& model, const ObservationSequence& obs);

/// Backward recursion scaled by the forward normalizers: row t holds
/// beta_t(i) / prod_{u > t} c_u, so row N-1 is all ones and
/// filtered(t, i) * scaled(t, i) is the smoothed posterior.
Matrix backward_pass(const ModelSpec& model, const ObservationSequence& obs,
                     std::span<const double> log_normalizers);

SmoothResult smooth(const ModelSpec& model, const ObservationSequence& obs);

double log_likelihood(const ModelSpec& model, const ObservationSequence& obs);

// ---------------------------------------------------------------------------
// Re-estimation
// ---------------------------------------------------------------------------

inline constexpr double kEmissionFloor = 1e-12;
inline constexpr double kDegenerateOccupancy = 1e-12;

/// Expected transition counts over accumulated occupancy of bins 0..N-2.
/// Rows of states whose occupancy is below kDegenerateOccupancy are copied
/// from `previous`.
Matrix reestimate_transitions(const PairwisePosterior& xi, const PosteriorTrajectory& smoothed,
                              const Matrix& previous);

/// Posterior-weighted count histogram per state over 0..max_count. Entries
/// are held at or above `floor` with the remaining mass rescaled to sum to 1.
/// Rows with degenerate occupancy are copied from `previous`.
Matrix reestimate_emissions(const PosteriorTrajectory& smoothed, const ObservationSequence& obs,
                            std::size_t max_count, const Matrix& previous,
                            double floor = kEmissionFloor);

std::vector<double> reestimate_initial(const PosteriorTrajectory& smoothed);

/// Maximizes sum_s weight[s] * log p[s] subject to p[s] >= floor and
/// sum p = 1. Returns false (leaving `row` untouched) when the weights are
/// all zero.
bool floored_normalize(std::span<const double> weights, double floor, std::span<double> row);

// ---------------------------------------------------------------------------
// Baum-Welch
// ---------------------------------------------------------------------------

struct BaumWelchOptions {
  double tol = 1e-9;
  std::size_t max_iter = 2000;
  double emission_floor = kEmissionFloor;
};

struct FitResult {
  ModelSpec model;
  /// Log-likelihood of the model entering each iteration.
  std::vector<double> loglik_trace;
  /// Log-likelihood of `model` itself.
  double log_likelihood = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  double final_delta = 0.0;
};

struct EmStep {
  ModelSpec next;
  double log_likelihood = 0.0;  // of the input model
};

/// One E-step plus M-step. Accumulates the same sufficient statistics as
/// smooth() followed by the reestimate_* functions without storing the
/// pairwise tensor.
EmStep em_step(const ModelSpec& model, const ObservationSequence& obs,
               double emission_floor = kEmissionFloor);

/// Iterates em_step until the largest parameter change drops below `tol`
/// or `max_iter` updates have run. A zero-likelihood failure is rethrown as
/// an Error naming the iteration.
FitResult baum_welch(const ModelSpec& model0, const ObservationSequence& obs,
                     const BaumWelchOptions& options = {});

// ---------------------------------------------------------------------------
// Prediction of a hidden bin
// ---------------------------------------------------------------------------

struct BinPrediction {
  std::size_t bin = 0;
  std::uint32_t observed = 0;
  /// Sum_i P(s | X_t = i) P(X_t = i | all bins except t).
  std::vector<double> full_record;
  /// Same mixture with P(X_t = i | bins before t).
  std::vector<double> forward_only;
  double log_score_full = 0.0;
  double log_score_forward = 0.0;
};

/// Runs filter and smoother with bin `t`'s emission factor replaced by one.
BinPrediction predict_bin(const ModelSpec& model, const ObservationSequence& obs, std::size_t t);

/// Predictions for many bins from a single forward-backward pass, using
/// P(X_t = i, s_{-t}) = P(X_t = i, s_1..s_{t-1}) beta_t(i).
std::vector<BinPrediction> predict_bins(const ModelSpec& model, const ObservationSequence& obs,
                                        std::span<const std::size_t> bins);

// ---------------------------------------------------------------------------
// Exhaustive reference
// ---------------------------------------------------------------------------

inline constexpr double kMaxBruteForcePaths = 1e7;

struct BruteForceResult {
  PosteriorTrajectory smoothed;  // log_normalizers left empty
  PairwisePosterior pairwise;
  double log_likelihood = 0.0;
};

/// Sums the full joint over every hidden path. Throws InputError when
/// n_states^N exceeds kMaxBruteForcePaths.
BruteForceResult brute_force_posterior(const ModelSpec& model, const ObservationSequence& obs);

}  // namespace telehmm
