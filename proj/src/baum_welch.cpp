#include <cmath>
#include <utility>

#include "detail.hpp"
#include "telehmm/hmm.hpp"

namespace telehmm {

namespace {

// Backward sweep that folds each bin's smoothed and pairwise posteriors
// into the sufficient statistics. Kc = 0 means run-time sized.
template <std::size_t Kc>
void accumulate_statistics(std::size_t k_dyn, std::size_t n, const double* __restrict a,
                           const double* __restrict emis_by_count,
                           const std::uint32_t* __restrict counts, const double* __restrict alpha,
                           const double* __restrict scale, double* __restrict trans_counts,
                           double* __restrict emis_weights, double* __restrict occ_trans,
                           double* __restrict occ_all, double* __restrict initial) {
  const std::size_t k = Kc == 0 ? k_dyn : Kc;
  std::vector<double> buffer(4 * k + k * k);
  double* __restrict beta_next = buffer.data();
  double* __restrict beta_cur = beta_next + k;
  double* __restrict weight = beta_cur + k;
  double* __restrict p = weight + k;
  double* __restrict xi = p + k;
  for (std::size_t i = 0; i < k; ++i) beta_next[i] = 1.0;

  // Last bin: beta = 1, smoothed = filtered.
  for (std::size_t i = 0; i < k; ++i) {
    const double v = alpha[(n - 1) * k + i];
    emis_weights[counts[n - 1] * k + i] += v;
    occ_all[i] += v;
    if (n == 1) initial[i] = v;
  }

  for (std::size_t t = n - 1; t-- > 0;) {
    const double* __restrict e_next = emis_by_count + counts[t + 1] * k;
    const double* __restrict al = alpha + t * k;
    const double inv_scale = 1.0 / scale[t + 1];
    for (std::size_t j = 0; j < k; ++j) weight[j] = e_next[j] * beta_next[j] * inv_scale;
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double v = a[i * k + j] * weight[j];
        acc += v;
        xi[i * k + j] = al[i] * v;
      }
      beta_cur[i] = acc;
      total += al[i] * acc;
    }
    if (!(total > 0.0)) throw ZeroLikelihoodError(t);
    const double inv_total = 1.0 / total;
    double* __restrict ew = emis_weights + counts[t] * k;
    for (std::size_t i = 0; i < k; ++i) {
      p[i] = al[i] * beta_cur[i] * inv_total;
      occ_trans[i] += p[i];
      occ_all[i] += p[i];
      ew[i] += p[i];
    }
    if (t == 0) {
      for (std::size_t i = 0; i < k; ++i) initial[i] = p[i];
    }
    for (std::size_t ij = 0; ij < k * k; ++ij) trans_counts[ij] += xi[ij] * inv_total;
    for (std::size_t i = 0; i < k; ++i) beta_next[i] = beta_cur[i];
  }
}

}  // namespace

EmStep em_step(const ModelSpec& model, const ObservationSequence& obs, double emission_floor) {
  validate_model(model);
  check_compatible(model, obs);

  const std::size_t k = model.n_states();
  const std::size_t n = obs.size();
  const std::size_t width = model.emission.cols();
  auto table = detail::run_forward(model, obs, std::nullopt);

  std::vector<double> trans(k * k), emis_by_count(width * k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) trans[i * k + j] = model.transition(i, j);
    for (std::size_t s = 0; s < width; ++s) emis_by_count[s * k + i] = model.emission(i, s);
  }
  std::vector<double> trans_counts(k * k, 0.0), emis_weights(width * k, 0.0);
  std::vector<double> occ_trans(k, 0.0), occ_all(k, 0.0), initial(k);

  auto run = [&]<std::size_t Kc>() {
    accumulate_statistics<Kc>(k, n, trans.data(), emis_by_count.data(), obs.counts.data(),
                              table.alpha.data().data(), table.scale.data(), trans_counts.data(),
                              emis_weights.data(), occ_trans.data(), occ_all.data(),
                              initial.data());
  };
  switch (k) {
    case 1: run.template operator()<1>(); break;
    case 2: run.template operator()<2>(); break;
    case 3: run.template operator()<3>(); break;
    case 4: run.template operator()<4>(); break;
    default: run.template operator()<0>(); break;
  }

  EmStep step;
  step.log_likelihood = table.log_likelihood();
  step.next.initial = std::move(initial);
  step.next.transition = Matrix(k, k);
  step.next.emission = Matrix(k, width);
  for (std::size_t i = 0; i < k; ++i) {
    double row_total = 0.0;
    for (std::size_t j = 0; j < k; ++j) row_total += trans_counts[i * k + j];
    if (occ_trans[i] < kDegenerateOccupancy || !(row_total > 0.0)) {
      std::copy(model.transition.row(i).begin(), model.transition.row(i).end(),
                step.next.transition.row(i).begin());
    } else {
      for (std::size_t j = 0; j < k; ++j) {
        step.next.transition(i, j) = trans_counts[i * k + j] / row_total;
      }
    }
    std::vector<double> row_weights(width);
    for (std::size_t s = 0; s < width; ++s) row_weights[s] = emis_weights[s * k + i];
    if (occ_all[i] < kDegenerateOccupancy ||
        !floored_normalize(row_weights, emission_floor, step.next.emission.row(i))) {
      std::copy(model.emission.row(i).begin(), model.emission.row(i).end(),
                step.next.emission.row(i).begin());
    }
  }
  return step;
}

FitResult baum_welch(const ModelSpec& model0, const ObservationSequence& obs,
                     const BaumWelchOptions& options) {
  if (!(options.tol > 0.0)) throw InputError("tolerance must be positive");
  if (options.max_iter < 1) throw InputError("max_iter must be at least 1");
  validate_model(model0);
  check_compatible(model0, obs);

  FitResult fit;
  fit.model = model0;
  for (std::size_t it = 1; it <= options.max_iter; ++it) {
    EmStep step;
    try {
      step = em_step(fit.model, obs, options.emission_floor);
    } catch (const ZeroLikelihoodError& e) {
      throw ZeroLikelihoodError(e.bin(), it);
    }
    fit.loglik_trace.push_back(step.log_likelihood);
    fit.final_delta = max_parameter_change(fit.model, step.next);
    fit.model = std::move(step.next);
    fit.iterations = it;
    if (fit.final_delta < options.tol) {
      fit.converged = true;
      break;
    }
  }
  fit.log_likelihood = log_likelihood(fit.model, obs);
  return fit;
}

}  // namespace telehmm
