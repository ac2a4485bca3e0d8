#include "telehmm/select.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "telehmm/sim.hpp"

namespace telehmm {

std::size_t default_max_count(const ObservationSequence& obs) {
  return static_cast<std::size_t>(obs.max_observed()) + 2;
}

ModelSpec initial_guess(const ObservationSequence& obs, std::size_t k, std::size_t max_count,
                        std::uint64_t seed) {
  if (k < 1) throw InputError("need at least one state");
  if (obs.counts.empty()) throw InputError("observation sequence is empty");
  Rng rng(seed);

  std::vector<double> histogram(max_count + 1, 0.0);
  double mean = 0.0;
  double square = 0.0;
  for (std::uint32_t s : obs.counts) {
    if (s > max_count) throw InputError("count exceeds max_count");
    histogram[s] += 1.0;
    mean += s;
    square += static_cast<double>(s) * s;
  }
  const auto n = static_cast<double>(obs.size());
  mean /= n;
  const double sd = std::sqrt(std::max(0.0, square / n - mean * mean));

  ModelSpec model;
  model.initial.assign(k, 1.0 / static_cast<double>(k));
  model.transition = Matrix(k, k);
  model.emission = Matrix(k, max_count + 1);
  std::vector<double> weights(max_count + 1);
  for (std::size_t i = 0; i < k; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      model.transition(i, j) = rng.exponential();
      total += model.transition(i, j);
    }
    // Half Dirichlet row, half self-transition.
    for (std::size_t j = 0; j < k; ++j) {
      model.transition(i, j) = 0.5 * model.transition(i, j) / total + (i == j ? 0.5 : 0.0);
    }

    // State i gets a tilt from the i-th of k equal slices of (-1, 1) / sd,
    // so starting means are spread and ordered across the count range.
    const double slice =
        2.0 * (static_cast<double>(i) + rng.uniform()) / static_cast<double>(k) - 1.0;
    const double tilt = sd > 0.0 ? slice / sd : 0.0;
    for (std::size_t s = 0; s <= max_count; ++s) {
      weights[s] = histogram[s] * std::exp(tilt * (static_cast<double>(s) - mean)) *
                   (0.5 + rng.uniform());
    }
    floored_normalize(weights, kEmissionFloor, model.emission.row(i));
  }
  return model;
}

KStateFit fit_k_states(const ObservationSequence& obs, std::size_t k, const FitOptions& options) {
  if (k < 1) throw InputError("k must be at least 1");
  if (options.restarts < 1) throw InputError("restarts must be at least 1");
  const std::size_t max_count = options.max_count.value_or(default_max_count(obs));
  const BaumWelchOptions bw{options.tol, options.max_iter, kEmissionFloor};

  std::vector<RestartOutcome> outcomes(options.restarts);
  std::vector<std::optional<FitResult>> fits(options.restarts);

  auto run = [&](std::size_t r) {
    auto& out = outcomes[r];
    out.seed = options.base_seed + r;
    try {
      FitResult fit = baum_welch(initial_guess(obs, k, max_count, out.seed), obs, bw);
      out.ok = true;
      out.converged = fit.converged;
      out.iterations = fit.iterations;
      out.log_likelihood = fit.log_likelihood;
      fits[r] = std::move(fit);
    } catch (const Error& e) {
      out.error = e.what();
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, options.restarts);
  if (workers == 1) {
    for (std::size_t r = 0; r < options.restarts; ++r) run(r);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t r; (r = next.fetch_add(1)) < options.restarts;) run(r);
      });
    }
  }

  std::optional<std::size_t> best;
  for (std::size_t r = 0; r < options.restarts; ++r) {
    if (!outcomes[r].ok) continue;
    if (!best || outcomes[r].log_likelihood > outcomes[*best].log_likelihood) best = r;
  }
  if (!best) {
    throw Error("all " + std::to_string(options.restarts) + " restarts failed for k = " +
                std::to_string(k) + ": " + outcomes.front().error);
  }

  KStateFit result;
  result.k = k;
  result.seed = outcomes[*best].seed;
  result.fit = std::move(*fits[*best]);
  result.fit.model = canonicalize_states(result.fit.model);
  result.restarts = std::move(outcomes);
  return result;
}

// ---------------------------------------------------------------------------

std::size_t parameter_count(std::size_t k, std::size_t max_count) {
  return (k - 1) + k * (k - 1) + k * max_count;
}

ModelCandidate candidate_from_fit(const KStateFit& fit) {
  ModelCandidate c;
  c.label = "k=" + std::to_string(fit.k);
  c.n_states = fit.k;
  c.max_count = fit.fit.model.max_count();
  c.log_likelihood = fit.fit.log_likelihood;
  for (const auto& r : fit.restarts) c.seeds.push_back(r.seed);
  c.converged = fit.fit.converged;
  return c;
}

ModelComparison compare_models(std::span<const ModelCandidate> candidates, std::size_t n_obs) {
  if (candidates.size() < 2) throw InputError("comparison needs at least two fits");
  if (n_obs == 0) throw InputError("comparison needs a non-empty record");
  ModelComparison cmp;
  cmp.n_obs = n_obs;
  for (const auto& c : candidates) {
    ComparisonEntry e;
    e.candidate = c;
    e.n_params = parameter_count(c.n_states, c.max_count);
    const double p = static_cast<double>(e.n_params);
    e.aic = 2.0 * p - 2.0 * c.log_likelihood;
    e.bic = p * std::log(static_cast<double>(n_obs)) - 2.0 * c.log_likelihood;
    cmp.entries.push_back(std::move(e));
  }
  auto rank = [&](auto key) {
    std::vector<std::size_t> idx(cmp.entries.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return key(cmp.entries[a]) < key(cmp.entries[b]);
    });
    return idx;
  };
  cmp.rank_aic = rank([](const ComparisonEntry& e) { return e.aic; });
  cmp.rank_bic = rank([](const ComparisonEntry& e) { return e.bic; });
  return cmp;
}

// ---------------------------------------------------------------------------

const char* to_string(Hyperfine h) { return h == Hyperfine::F3 ? "F3" : "F4"; }

StateLabeling assign_labels(const ModelSpec& model, const LabelPolicy& policy) {
  validate_model(model);
  const auto means = emission_means(model);
  StateLabeling labeling;
  canonicalize_states(model, &labeling.order);

  for (std::size_t n = 1; n < labeling.order.size(); ++n) {
    if (means[labeling.order[n]] == means[labeling.order[n - 1]]) {
      labeling.warnings.push_back("states " + std::to_string(labeling.order[n - 1]) + " and " +
                                  std::to_string(labeling.order[n]) +
                                  " have equal emission means; ordered by index");
    }
  }

  labeling.groups.assign(model.n_states(), Hyperfine::F4);
  if (policy.mean_threshold) {
    for (std::size_t i = 0; i < model.n_states(); ++i) {
      if (means[i] > *policy.mean_threshold) labeling.groups[i] = Hyperfine::F3;
    }
  } else {
    labeling.groups[labeling.order.back()] = Hyperfine::F3;
  }
  return labeling;
}

AggregateTrajectory aggregate_populations(const PosteriorTrajectory& posterior,
                                          const StateLabeling& labeling) {
  if (labeling.groups.size() != posterior.probs.cols()) {
    throw InputError("labeling does not cover every state");
  }
  AggregateTrajectory agg;
  agg.p_f3.assign(posterior.size(), 0.0);
  agg.p_f4.assign(posterior.size(), 0.0);
  for (std::size_t t = 0; t < posterior.size(); ++t) {
    for (std::size_t i = 0; i < labeling.groups.size(); ++i) {
      (labeling.groups[i] == Hyperfine::F3 ? agg.p_f3 : agg.p_f4)[t] += posterior.probs(t, i);
    }
  }
  return agg;
}

std::optional<std::vector<double>> stationary_distribution(const Matrix& transition) {
  const auto k = static_cast<Eigen::Index>(transition.rows());
  // pi (A - I) = 0 and sum(pi) = 1, stacked as a (k + 1) x k system.
  Eigen::MatrixXd system(k + 1, k);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k + 1);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      system(j, i) = transition(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) -
                     (i == j ? 1.0 : 0.0);
    }
    system(k, i) = 1.0;
  }
  rhs(k) = 1.0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
  lu.setThreshold(1e-10);
  if (lu.rank() < k) return std::nullopt;
  Eigen::VectorXd pi = lu.solve(rhs);
  std::vector<double> out(static_cast<std::size_t>(k));
  double total = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    out[static_cast<std::size_t>(i)] = std::max(0.0, pi(i));
    total += out[static_cast<std::size_t>(i)];
  }
  for (double& v : out) v /= total;
  return out;
}

AggregateRates rates_from_transitions(const ModelSpec& model, const StateLabeling& labeling,
                                      double bin_width) {
  validate_model(model);
  if (!(bin_width > 0.0)) throw InputError("bin width must be positive");
  const std::size_t k = model.n_states();
  if (labeling.groups.size() != k) throw InputError("labeling does not cover every state");

  AggregateRates rates;
  auto cross_mass = [&] {
    double m = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        if (labeling.groups[i] != labeling.groups[j]) m += model.transition(i, j);
      }
    }
    return m;
  };

  const auto pi = stationary_distribution(model.transition);
  if (!pi) {
    if (cross_mass() == 0.0) {
      rates.warnings.push_back("chain has no unique stationary distribution and no cross-group "
                               "transitions; reporting zero rates");
      return rates;
    }
    throw Error("transition matrix is not ergodic: no unique stationary distribution");
  }

  auto group_rate = [&](Hyperfine from) {
    double weight = 0.0;
    double flow = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (labeling.groups[i] != from) continue;
      double out = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        if (labeling.groups[j] != from) out += model.transition(i, j);
      }
      weight += (*pi)[i];
      flow += (*pi)[i] * out;
    }
    if (!(weight > 0.0)) {
      if (std::any_of(labeling.groups.begin(), labeling.groups.end(),
                      [&](Hyperfine g) { return g == from; })) {
        rates.warnings.push_back(std::string("group ") + to_string(from) +
                                 " has zero stationary occupancy; reporting zero rate");
      }
      return 0.0;
    }
    return flow / weight / bin_width;
  };
  rates.f3_to_f4 = group_rate(Hyperfine::F3);
  rates.f4_to_f3 = group_rate(Hyperfine::F4);
  return rates;
}

std::size_t count_level_crossings(std::span<const double> series, double level) {
  std::size_t crossings = 0;
  for (std::size_t t = 1; t < series.size(); ++t) {
    if ((series[t - 1] >= level) != (series[t] >= level)) ++crossings;
  }
  return crossings;
}

}  // namespace telehmm
