#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unistd.h>
#include <vector>

#include "telehmm/hmm.hpp"
#include "telehmm/sim.hpp"

namespace telehmm::testing {

/// Dirichlet(1, ..., 1) row; with `zero_chance` > 0 some entries are forced
/// to exactly zero (at least one entry stays positive).
inline void random_row(Rng& rng, std::span<double> row, double zero_chance = 0.0) {
  double total = 0.0;
  for (double& v : row) {
    v = rng.uniform() < zero_chance ? 0.0 : rng.exponential();
    total += v;
  }
  if (total == 0.0) {
    row[rng.categorical(std::vector<double>(row.size(), 1.0))] = 1.0;
    return;
  }
  for (double& v : row) v /= total;
}

inline ModelSpec random_model(Rng& rng, std::size_t k, std::size_t max_count,
                              double zero_chance = 0.0) {
  ModelSpec m;
  m.initial.resize(k);
  random_row(rng, m.initial, zero_chance);
  m.transition = Matrix(k, k);
  m.emission = Matrix(k, max_count + 1);
  for (std::size_t i = 0; i < k; ++i) {
    random_row(rng, m.transition.row(i), zero_chance);
    random_row(rng, m.emission.row(i), zero_chance);
  }
  return m;
}

/// Observations drawn from the model itself, so they have positive likelihood.
inline ObservationSequence sample_obs(const ModelSpec& model, std::size_t n, std::uint64_t seed) {
  SimConfig cfg;
  cfg.model = model;
  cfg.n_bins = n;
  cfg.seed = seed;
  return simulate_chain(cfg).obs;
}

/// Filtered posteriors by exhaustive enumeration over each prefix.
inline Matrix oracle_filtered(const ModelSpec& model, const ObservationSequence& obs) {
  Matrix out(obs.size(), model.n_states());
  for (std::size_t t = 0; t < obs.size(); ++t) {
    ObservationSequence prefix = obs;
    prefix.counts.resize(t + 1);
    const auto bf = brute_force_posterior(model, prefix);
    for (std::size_t i = 0; i < model.n_states(); ++i) out(t, i) = bf.smoothed.probs(t, i);
  }
  return out;
}

/// Log-likelihood of each prefix s_0..s_t by enumeration.
inline std::vector<double> oracle_prefix_loglik(const ModelSpec& model,
                                                const ObservationSequence& obs) {
  std::vector<double> out;
  for (std::size_t t = 0; t < obs.size(); ++t) {
    ObservationSequence prefix = obs;
    prefix.counts.resize(t + 1);
    out.push_back(brute_force_posterior(model, prefix).log_likelihood);
  }
  return out;
}

/// Unscaled beta_t(i) = P(s_{t+1}..s_{N-1} | X_t = i), enumerating future paths.
inline Matrix oracle_beta(const ModelSpec& model, const ObservationSequence& obs) {
  const std::size_t k = model.n_states();
  const std::size_t n = obs.size();
  Matrix beta(n, k);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t len = n - t - 1;
    for (std::size_t i = 0; i < k; ++i) {
      std::vector<std::size_t> path(len, 0);
      double total = 0.0;
      while (true) {
        double p = 1.0;
        std::size_t prev = i;
        for (std::size_t u = 0; u < len; ++u) {
          p *= model.transition(prev, path[u]) * model.emission(path[u], obs.counts[t + 1 + u]);
          prev = path[u];
        }
        total += p;
        std::size_t d = 0;
        while (d < len && ++path[d] == k) path[d++] = 0;
        if (d == len) break;
      }
      beta(t, i) = total;
    }
  }
  return beta;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    d = std::max(d, std::abs(a[i] - b[i]));
  }
  return d;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  return max_abs_diff(a.data(), b.data());
}

inline double max_abs_diff(const PairwisePosterior& a, const PairwisePosterior& b) {
  if (a.steps() != b.steps() || a.n_states() != b.n_states()) return INFINITY;
  double d = 0.0;
  for (std::size_t t = 0; t < a.steps(); ++t) {
    for (std::size_t i = 0; i < a.n_states(); ++i) {
      for (std::size_t j = 0; j < a.n_states(); ++j) {
        d = std::max(d, std::abs(a(t, i, j) - b(t, i, j)));
      }
    }
  }
  return d;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("telehmm_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& name = "") const {
    return name.empty() ? path_.string() : (path_ / name).string();
  }

 private:
  std::filesystem::path path_;
};

}  // namespace telehmm::testing
