#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "telehmm/hmm.hpp"

namespace telehmm {

// ---------------------------------------------------------------------------
// Fitting with restarts
// ---------------------------------------------------------------------------

struct FitOptions {
  std::size_t restarts = 5;
  std::uint64_t base_seed = 0;
  double tol = 1e-9;
  std::size_t max_iter = 2000;
  std::size_t workers = 1;
  /// Emission table width - 1; defaults to the largest observed count + 2.
  std::optional<std::size_t> max_count;
};

struct RestartOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  bool converged = false;
  std::size_t iterations = 0;
  double log_likelihood = 0.0;
  std::string error;
};

struct KStateFit {
  std::size_t k = 0;
  FitResult fit;  // best restart, states in ascending emission mean
  std::uint64_t seed = 0;
  std::vector<RestartOutcome> restarts;
};

std::size_t default_max_count(const ObservationSequence& obs);

/// Random starting point: uniform initial; transition rows 0.5 Dirichlet(1,
/// ..., 1) + 0.5 identity; per state i the global count histogram tilted by
/// exp(lambda (s - mean) / sd) with lambda ~ U(-1 + 2i/k, -1 + 2(i+1)/k),
/// then scaled entrywise by U(0.5, 1.5).
ModelSpec initial_guess(const ObservationSequence& obs, std::size_t k, std::size_t max_count,
                        std::uint64_t seed);

/// Runs Baum-Welch from `restarts` seeded starts (seed = base_seed + r) and
/// keeps the highest final log-likelihood, ties to the lowest seed.
KStateFit fit_k_states(const ObservationSequence& obs, std::size_t k, const FitOptions& options);

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

/// Free parameters: k - 1 (initial) + k (k - 1) (transition) + k M (emission).
std::size_t parameter_count(std::size_t k, std::size_t max_count);

struct ModelCandidate {
  std::string label;
  std::size_t n_states = 0;
  std::size_t max_count = 0;
  double log_likelihood = 0.0;
  std::vector<std::uint64_t> seeds;
  bool converged = true;
};

ModelCandidate candidate_from_fit(const KStateFit& fit);

struct ComparisonEntry {
  ModelCandidate candidate;
  std::size_t n_params = 0;
  double aic = 0.0;
  double bic = 0.0;
};

struct ModelComparison {
  std::size_t n_obs = 0;
  std::vector<ComparisonEntry> entries;
  /// Entry indices, best first; ties keep input order.
  std::vector<std::size_t> rank_aic;
  std::vector<std::size_t> rank_bic;
};

ModelComparison compare_models(std::span<const ModelCandidate> candidates, std::size_t n_obs);

// ---------------------------------------------------------------------------
// Physical labels
// ---------------------------------------------------------------------------

enum class Hyperfine { F3, F4 };

const char* to_string(Hyperfine h);

struct LabelPolicy {
  /// States with emission mean above this are high transmission. Without
  /// it only the state with the highest mean is.
  std::optional<double> mean_threshold;
};

struct StateLabeling {
  std::vector<std::size_t> order;  // state indices by ascending emission mean
  std::vector<Hyperfine> groups;   // per state index
  std::vector<std::string> warnings;
};

StateLabeling assign_labels(const ModelSpec& model, const LabelPolicy& policy = {});

struct AggregateTrajectory {
  std::vector<double> p_f3;
  std::vector<double> p_f4;
};

AggregateTrajectory aggregate_populations(const PosteriorTrajectory& posterior,
                                          const StateLabeling& labeling);

struct AggregateRates {
  double f3_to_f4 = 0.0;  // per second
  double f4_to_f3 = 0.0;
  std::vector<std::string> warnings;
};

/// Stationary distribution of a row-stochastic matrix, or nullopt when it
/// is not unique.
std::optional<std::vector<double>> stationary_distribution(const Matrix& transition);

/// Cross-group jump probability per bin, with source states weighted by
/// their stationary occupancy within the group, divided by the bin width.
AggregateRates rates_from_transitions(const ModelSpec& model, const StateLabeling& labeling,
                                      double bin_width);

/// Number of times the series moves from one side of `level` to the other
/// (values equal to the level count as above).
std::size_t count_level_crossings(std::span<const double> series, double level = 0.5);

}  // namespace telehmm
