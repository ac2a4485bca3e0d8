#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>

#include "invariants.hpp"
#include "telehmm/hmm.hpp"
#include "telehmm/select.hpp"
#include "telehmm/sim.hpp"

using namespace telehmm;
using namespace telehmm::testing;

namespace {

constexpr std::uint64_t kSimSeed = 2024;
constexpr std::uint64_t kFitSeed = 1;
constexpr std::size_t kRestarts = 5;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << (pass ? "PASS" : "FAIL") << "  [" << id << "] " << name << ": " << detail << std::endl;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double rel_err(double got, double want) { return std::abs(got - want) / std::abs(want); }

}  // namespace

int main() {
  // 1. Oracle equivalence.
  {
    const auto start = Clock::now();
    std::string first;
    std::size_t bad = 0;
    for (std::size_t c = 0; c < 100; ++c) {
      if (auto f = check_oracle_case(case_seed(1, c), 1e-12)) {
        if (!bad++) first = "case " + std::to_string(c) + ": " + *f;
      }
    }
    const double t = seconds_since(start);
    report(1, "oracle equivalence", bad == 0 && t < 10.0,
           fmt("%zu/100 models within 1e-12 of brute force, %.2f s (limit 10 s)%s", 100 - bad, t,
               first.empty() ? "" : ("; " + first).c_str()));
  }

  // 2. EM monotonicity.
  {
    const auto start = Clock::now();
    std::string first;
    std::size_t bad = 0;
    for (std::size_t c = 0; c < 50; ++c) {
      if (auto f = check_em_monotonicity_case(case_seed(2, c), 1000, 300, 1e-10)) {
        if (!bad++) first = "case " + std::to_string(c) + ": " + *f;
      }
    }
    const double t = seconds_since(start);
    report(2, "EM monotonicity", bad == 0 && t < 60.0,
           fmt("%zu/50 fits never dropped by 1e-10 or more, %.2f s (limit 60 s)%s", 50 - bad, t,
               first.empty() ? "" : ("; " + first).c_str()));
  }

  // 3. Recovery on 400 000 bins of the default model.
  const auto start3 = Clock::now();
  SimConfig sim_cfg;
  sim_cfg.model = default_paper_model();
  sim_cfg.n_bins = 400'000;
  sim_cfg.seed = kSimSeed;
  const SimResult sim = simulate_chain(sim_cfg);
  const ObservationSequence& obs = sim.obs;

  FitOptions fit_opt;
  fit_opt.restarts = kRestarts;
  fit_opt.base_seed = kFitSeed;
  const KStateFit k3 = fit_k_states(obs, 3, fit_opt);
  const double t3 = seconds_since(start3);
  const ModelSpec& m3 = k3.fit.model;
  {
    auto want_means = emission_means(sim_cfg.model);
    auto got_means = emission_means(m3);
    std::sort(want_means.begin(), want_means.end());
    std::sort(got_means.begin(), got_means.end());
    double worst_mean = 0.0;
    for (std::size_t i = 0; i < 3; ++i) worst_mean = std::max(worst_mean, rel_err(got_means[i], want_means[i]));

    const auto want = rates_from_transitions(sim_cfg.model, assign_labels(sim_cfg.model), obs.bin_width);
    const auto got = rates_from_transitions(m3, assign_labels(m3), obs.bin_width);
    const double worst_rate = std::max(rel_err(got.f3_to_f4, want.f3_to_f4), rel_err(got.f4_to_f3, want.f4_to_f3));
    report(3, "recovery on 400 000 bins", worst_mean < 0.15 && worst_rate < 0.20 && t3 < 600.0,
           fmt("means %.4f/%.4f/%.4f vs %.2f/%.2f/%.2f (max rel err %.3f, limit 0.15); "
               "F3->F4 %.1f vs %.1f /s, F4->F3 %.1f vs %.1f /s (max rel err %.3f, limit 0.20); %.0f s (limit 600 s)",
               got_means[0], got_means[1], got_means[2], want_means[0], want_means[1], want_means[2], worst_mean,
               got.f3_to_f4, want.f3_to_f4, got.f4_to_f3, want.f4_to_f3, worst_rate, t3));
  }

  // 4. Convergence tolerance.
  {
    std::size_t converged = 0;
    for (const auto& r : k3.restarts) converged += r.converged;
    report(4, "convergence tolerance", k3.fit.converged && k3.fit.final_delta < 1e-9 && k3.fit.iterations <= 2000,
           fmt("best restart (seed %llu) final max parameter change %.3g after %zu iterations "
               "(limits 1e-9, 2000); %zu/%zu restarts converged",
               static_cast<unsigned long long>(k3.seed), k3.fit.final_delta, k3.fit.iterations, converged,
               k3.restarts.size()));
  }

  // 5. Smoother versus filter against the simulated path.
  const SmoothResult post3 = smooth(m3, obs);
  const StateLabeling lab3 = assign_labels(m3);
  {
    const auto filt = aggregate_populations(post3.filtered, lab3);
    const auto smo = aggregate_populations(post3.smoothed, lab3);
    const auto truth_lab = assign_labels(sim_cfg.model);
    const std::size_t cf = count_level_crossings(filt.p_f4), cs = count_level_crossings(smo.p_f4);
    std::size_t ef = 0, es = 0;
    for (std::size_t t = 0; t < obs.size(); ++t) {
      const bool truth_f4 = truth_lab.groups[sim.states[t]] == Hyperfine::F4;
      ef += (filt.p_f4[t] >= 0.5) != truth_f4;
      es += (smo.p_f4[t] >= 0.5) != truth_f4;
    }
    const double n = static_cast<double>(obs.size());
    report(5, "smoother superiority (states)", cs < cf && es < ef,
           fmt("0.5-level crossings smoothed %zu vs filtered %zu; rounded assignment error %.5f vs %.5f", cs, cf,
               static_cast<double>(es) / n, static_cast<double>(ef) / n));
  }

  // 6. Smoother versus filter on held-out bins.
  {
    Rng rng(6);
    std::vector<std::size_t> bins(1000);
    for (auto& b : bins) b = static_cast<std::size_t>(rng.uniform() * static_cast<double>(obs.size()));
    const auto preds = predict_bins(m3, obs, bins);
    double full = 0.0, fwd = 0.0;
    for (const auto& p : preds) {
      full += p.log_score_full;
      fwd += p.log_score_forward;
    }
    full /= static_cast<double>(preds.size());
    fwd /= static_cast<double>(preds.size());
    report(6, "smoother superiority (prediction)", full >= fwd,
           fmt("mean log-score over 1000 hidden bins: full record %.6f, forward only %.6f", full, fwd));
  }

  // 7. k = 4 versus k = 3 aggregate trajectories.
  {
    const auto start = Clock::now();
    const KStateFit k4 = fit_k_states(obs, 4, fit_opt);
    auto means = emission_means(m3);
    std::sort(means.begin(), means.end());
    std::size_t gap = 0;
    for (std::size_t i = 1; i + 1 < means.size(); ++i) {
      if (means[i + 1] - means[i] > means[gap + 1] - means[gap]) gap = i;
    }
    const LabelPolicy policy{0.5 * (means[gap] + means[gap + 1])};
    const auto a3 = aggregate_populations(post3.smoothed, assign_labels(m3, policy));
    const auto a4 = aggregate_populations(smooth(k4.fit.model, obs).smoothed, assign_labels(k4.fit.model, policy));
    double diff = 0.0;
    for (std::size_t t = 0; t < obs.size(); ++t) diff += std::abs(a3.p_f3[t] - a4.p_f3[t]);
    diff /= static_cast<double>(obs.size());
    const auto m4 = emission_means(k4.fit.model);
    report(7, "robustness to k = 4", diff < 0.05,
           fmt("mean |dP_F3| = |dP_F4| = %.5f (limit 0.05); F3 threshold %.3f; k=4 means %.3f/%.3f/%.3f/%.3f, "
               "loglik %.1f vs %.1f, %s; %.0f s",
               diff, *policy.mean_threshold, m4[0], m4[1], m4[2], m4[3], k4.fit.log_likelihood, k3.fit.log_likelihood,
               k4.fit.converged ? "converged" : "not converged", seconds_since(start)));
  }

  // 8. Invariant suite.
  {
    const auto start = Clock::now();
    std::size_t passed = 0;
    std::ostringstream failed;
    const auto& suite = invariant_suite();
    std::uint64_t seed = 8000;
    for (const auto& inv : suite) {
      const auto r = inv.run(kInvariantCases, seed++);
      if (r.passed() && r.cases == kInvariantCases) {
        ++passed;
      } else {
        failed << "; " << inv.module << "/" << inv.name << " (" << r.failures << " failing, " << r.first_failure << ")";
      }
    }
    report(8, "invariant suite", passed == suite.size(),
           fmt("%zu/%zu invariants hold over %zu cases each, %.0f s", passed, suite.size(), kInvariantCases,
               seconds_since(start)) + failed.str());
  }

  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria fail") << std::endl;
  return failures == 0 ? 0 : 1;
}
