#include "telehmm/hmm.hpp"

#include <cmath>
#include <limits>
#include <optional>

#include "detail.hpp"

namespace telehmm {

double PosteriorTrajectory::log_likelihood() const {
  return detail::compensated_sum(log_normalizers);
}

namespace detail {

double compensated_sum(std::span<const double> values) {
  // Neumaier summation; the record can hold 10^6 terms.
  double sum = 0.0;
  double carry = 0.0;
  for (double v : values) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      carry += (sum - t) + v;
    } else {
      carry += (v - t) + sum;
    }
    sum = t;
  }
  return sum + carry;
}

std::vector<double> ForwardTable::log_scale() const {
  std::vector<double> out(scale.size());
  for (std::size_t t = 0; t < scale.size(); ++t) out[t] = std::log(scale[t]);
  return out;
}

double ForwardTable::log_likelihood() const {
  // Every c_t is a probability, so the running product only shrinks; take
  // its log before it can underflow.
  double total = 0.0;
  double product = 1.0;
  for (double c : scale) {
    if (c < 1e-100) {
      total += std::log(c);
      continue;
    }
    product *= c;
    if (product < 1e-200) {
      total += std::log(product);
      product = 1.0;
    }
  }
  return total + std::log(product);
}

namespace {

// Fixed-size instantiations let the compiler unroll the k x k products;
// Kc = 0 is the run-time sized fallback.
template <std::size_t Kc>
void forward_kernel(std::size_t k_dyn, std::size_t n, const double* __restrict a_t,
                    const double* __restrict emis_by_count, const std::uint32_t* __restrict counts,
                    double* __restrict alpha, double* __restrict scale, double* __restrict p,
                    std::optional<std::size_t> masked) {
  const std::size_t k = Kc == 0 ? k_dyn : Kc;
  for (std::size_t t = 0; t < n; ++t) {
    double* __restrict cur = alpha + t * k;
    if (t > 0) {
      const double* __restrict prev = cur - k;
      for (std::size_t i = 0; i < k; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) acc += a_t[i * k + j] * prev[j];
        p[i] = acc;
      }
    }
    const double* __restrict e = emis_by_count + counts[t] * k;
    double c = 0.0;
    if (masked && *masked == t) {
      for (std::size_t i = 0; i < k; ++i) c += (cur[i] = p[i]);
    } else {
      for (std::size_t i = 0; i < k; ++i) c += (cur[i] = p[i] * e[i]);
    }
    if (!(c > 0.0)) throw ZeroLikelihoodError(t);
    const double inv = 1.0 / c;
    for (std::size_t i = 0; i < k; ++i) cur[i] *= inv;
    scale[t] = c;
  }
}

}  // namespace

ForwardTable run_forward(const ModelSpec& model, const ObservationSequence& obs,
                         std::optional<std::size_t> masked) {
  const std::size_t k = model.n_states();
  const std::size_t n = obs.size();
  const std::size_t width = model.emission.cols();
  ForwardTable table{Matrix(n, k), std::vector<double>(n)};

  // Transposed transition matrix and emission table indexed by count, so
  // the inner loops read contiguous memory.
  std::vector<double> trans_t(k * k), emis_by_count(width * k), prior(model.initial);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) trans_t[i * k + j] = model.transition(j, i);
    for (std::size_t s = 0; s < width; ++s) emis_by_count[s * k + i] = model.emission(i, s);
  }
  auto run = [&]<std::size_t Kc>() {
    forward_kernel<Kc>(k, n, trans_t.data(), emis_by_count.data(), obs.counts.data(),
                       table.alpha.data().data(), table.scale.data(), prior.data(), masked);
  };
  switch (k) {
    case 1: run.template operator()<1>(); break;
    case 2: run.template operator()<2>(); break;
    case 3: run.template operator()<3>(); break;
    case 4: run.template operator()<4>(); break;
    default: run.template operator()<0>(); break;
  }
  return table;
}

Matrix run_backward(const ModelSpec& model, const ObservationSequence& obs,
                    std::span<const double> scale, std::optional<std::size_t> masked) {
  const std::size_t k = model.n_states();
  const std::size_t n = obs.size();
  Matrix beta(n, k);
  if (n == 0) return beta;
  for (std::size_t i = 0; i < k; ++i) beta(n - 1, i) = 1.0;

  std::vector<double> weight(k);
  for (std::size_t t = n - 1; t-- > 0;) {
    const std::size_t next = t + 1;
    if (!(scale[next] > 0.0) || !std::isfinite(scale[next])) throw ZeroLikelihoodError(next);
    const double inv_scale = 1.0 / scale[next];
    const bool hidden = masked && *masked == next;
    const std::uint32_t s = obs.counts[next];
    for (std::size_t j = 0; j < k; ++j) {
      const double e = hidden ? 1.0 : model.emission(j, s);
      weight[j] = e * beta(next, j) * inv_scale;
    }
    for (std::size_t i = 0; i < k; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += model.transition(i, j) * weight[j];
      beta(t, i) = acc;
    }
  }
  return beta;
}

Matrix combine(const Matrix& alpha, const Matrix& beta) {
  const std::size_t n = alpha.rows();
  const std::size_t k = alpha.cols();
  Matrix smoothed(n, k);
  if (n == 0) return smoothed;
  for (std::size_t t = 0; t + 1 < n; ++t) {
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      smoothed(t, i) = alpha(t, i) * beta(t, i);
      total += smoothed(t, i);
    }
    if (!(total > 0.0)) throw ZeroLikelihoodError(t);
    for (std::size_t i = 0; i < k; ++i) smoothed(t, i) /= total;
  }
  // beta is identically one at the last bin.
  for (std::size_t i = 0; i < k; ++i) smoothed(n - 1, i) = alpha(n - 1, i);
  return smoothed;
}

std::vector<double> mix_emissions(const ModelSpec& model, std::span<const double> weights) {
  std::vector<double> dist(model.emission.cols(), 0.0);
  for (std::size_t i = 0; i < model.n_states(); ++i) {
    auto row = model.emission.row(i);
    for (std::size_t s = 0; s < row.size(); ++s) dist[s] += weights[i] * row[s];
  }
  return dist;
}

}  // namespace detail

namespace {

void check_inputs(const ModelSpec& model, const ObservationSequence& obs) {
  validate_model(model);
  check_compatible(model, obs);
}

double log_or_neg_inf(double p) {
  return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
}

}  // namespace

PosteriorTrajectory forward_filter(const ModelSpec& model, const ObservationSequence& obs) {
  check_inputs(model, obs);
  auto table = detail::run_forward(model, obs, std::nullopt);
  auto log_scale = table.log_scale();
  return {PosteriorKind::filtered, std::move(table.alpha), std::move(log_scale)};
}

Matrix backward_pass(const ModelSpec& model, const ObservationSequence& obs,
                     std::span<const double> log_normalizers) {
  check_inputs(model, obs);
  if (log_normalizers.size() != obs.size()) {
    throw InputError("backward_pass needs one log normalizer per bin");
  }
  std::vector<double> scale(log_normalizers.size());
  for (std::size_t t = 0; t < scale.size(); ++t) scale[t] = std::exp(log_normalizers[t]);
  return detail::run_backward(model, obs, scale, std::nullopt);
}

SmoothResult smooth(const ModelSpec& model, const ObservationSequence& obs) {
  check_inputs(model, obs);
  auto table = detail::run_forward(model, obs, std::nullopt);
  Matrix beta = detail::run_backward(model, obs, table.scale, std::nullopt);
  auto log_scale = table.log_scale();

  const std::size_t n = obs.size();
  const std::size_t k = model.n_states();
  SmoothResult result;
  result.smoothed = {PosteriorKind::smoothed, detail::combine(table.alpha, beta), log_scale};

  result.pairwise = PairwisePosterior(n, k);
  for (std::size_t t = 0; t + 1 < n; ++t) {
    const std::uint32_t s = obs.counts[t + 1];
    const double inv_scale = 1.0 / table.scale[t + 1];
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const double v = table.alpha(t, i) * model.transition(i, j) * model.emission(j, s) *
                         beta(t + 1, j) * inv_scale;
        result.pairwise(t, i, j) = v;
        total += v;
      }
    }
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) result.pairwise(t, i, j) /= total;
    }
  }

  result.filtered = {PosteriorKind::filtered, std::move(table.alpha), std::move(log_scale)};
  return result;
}

double log_likelihood(const ModelSpec& model, const ObservationSequence& obs) {
  check_inputs(model, obs);
  return detail::run_forward(model, obs, std::nullopt).log_likelihood();
}

// ---------------------------------------------------------------------------

bool floored_normalize(std::span<const double> weights, double floor, std::span<double> row) {
  const std::size_t m = weights.size();
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) return false;
  if (floor * static_cast<double>(m) >= 1.0) {
    throw InvalidModelError("emission floor too large for the count range");
  }

  // Water-filling: clamped entries sit at the floor, the rest share the
  // remaining mass in proportion to their weights. Clamping only ever
  // raises the multiplier, so an entry once clamped stays clamped.
  std::vector<bool> clamped(m, false);
  std::size_t n_clamped = 0;
  double free_weight = total;
  for (bool changed = true; changed;) {
    changed = false;
    const double free_mass = 1.0 - floor * static_cast<double>(n_clamped);
    const double scale = free_mass / free_weight;
    for (std::size_t s = 0; s < m; ++s) {
      if (!clamped[s] && weights[s] * scale < floor) {
        clamped[s] = true;
        ++n_clamped;
        free_weight -= weights[s];
        changed = true;
      }
    }
  }
  const double scale = (1.0 - floor * static_cast<double>(n_clamped)) / free_weight;
  for (std::size_t s = 0; s < m; ++s) row[s] = clamped[s] ? floor : weights[s] * scale;
  return true;
}

Matrix reestimate_transitions(const PairwisePosterior& xi, const PosteriorTrajectory& smoothed,
                              const Matrix& previous) {
  const std::size_t k = xi.n_states();
  if (smoothed.probs.cols() != k || previous.rows() != k || previous.cols() != k ||
      smoothed.size() != xi.steps() + 1) {
    throw InputError("pairwise posterior, smoothed trajectory and transition matrix disagree");
  }
  Matrix counts(k, k);
  std::vector<double> occupancy(k, 0.0);
  for (std::size_t t = 0; t < xi.steps(); ++t) {
    for (std::size_t i = 0; i < k; ++i) {
      occupancy[i] += smoothed.probs(t, i);
      for (std::size_t j = 0; j < k; ++j) counts(i, j) += xi(t, i, j);
    }
  }
  Matrix next(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    double row_total = 0.0;
    for (std::size_t j = 0; j < k; ++j) row_total += counts(i, j);
    if (occupancy[i] < kDegenerateOccupancy || !(row_total > 0.0)) {
      std::copy(previous.row(i).begin(), previous.row(i).end(), next.row(i).begin());
      continue;
    }
    // sum_j xi(t, i, j) equals the smoothed occupancy; dividing by the row
    // total keeps the row exactly normalized in floating point.
    for (std::size_t j = 0; j < k; ++j) next(i, j) = counts(i, j) / row_total;
  }
  return next;
}

Matrix reestimate_emissions(const PosteriorTrajectory& smoothed, const ObservationSequence& obs,
                            std::size_t max_count, const Matrix& previous, double floor) {
  const std::size_t k = smoothed.probs.cols();
  if (smoothed.size() != obs.size() || previous.rows() != k || previous.cols() != max_count + 1) {
    throw InputError("smoothed trajectory, observations and emission matrix disagree");
  }
  Matrix weights(k, max_count + 1);
  std::vector<double> occupancy(k, 0.0);
  for (std::size_t t = 0; t < obs.size(); ++t) {
    const std::uint32_t s = obs.counts[t];
    if (s > max_count) throw InputError("count exceeds max_count at bin index " + std::to_string(t));
    for (std::size_t i = 0; i < k; ++i) {
      weights(i, s) += smoothed.probs(t, i);
      occupancy[i] += smoothed.probs(t, i);
    }
  }
  Matrix next(k, max_count + 1);
  for (std::size_t i = 0; i < k; ++i) {
    if (occupancy[i] < kDegenerateOccupancy || !floored_normalize(weights.row(i), floor, next.row(i))) {
      std::copy(previous.row(i).begin(), previous.row(i).end(), next.row(i).begin());
    }
  }
  return next;
}

std::vector<double> reestimate_initial(const PosteriorTrajectory& smoothed) {
  if (smoothed.size() == 0) throw InputError("empty posterior trajectory");
  auto first = smoothed.probs.row(0);
  return {first.begin(), first.end()};
}

// ---------------------------------------------------------------------------

BinPrediction predict_bin(const ModelSpec& model, const ObservationSequence& obs, std::size_t t) {
  check_inputs(model, obs);
  if (t >= obs.size()) {
    throw InputError("bin index " + std::to_string(t) + " out of range for " +
                     std::to_string(obs.size()) + " bins");
  }
  auto table = detail::run_forward(model, obs, t);
  Matrix beta = detail::run_backward(model, obs, table.scale, t);

  const std::size_t k = model.n_states();
  std::vector<double> prior(table.alpha.row(t).begin(), table.alpha.row(t).end());
  std::vector<double> posterior(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    posterior[i] = prior[i] * beta(t, i);
    total += posterior[i];
  }
  for (double& p : posterior) p /= total;

  BinPrediction out;
  out.bin = t;
  out.observed = obs.counts[t];
  out.full_record = detail::mix_emissions(model, posterior);
  out.forward_only = detail::mix_emissions(model, prior);
  out.log_score_full = log_or_neg_inf(out.full_record[out.observed]);
  out.log_score_forward = log_or_neg_inf(out.forward_only[out.observed]);
  return out;
}

std::vector<BinPrediction> predict_bins(const ModelSpec& model, const ObservationSequence& obs,
                                        std::span<const std::size_t> bins) {
  check_inputs(model, obs);
  for (std::size_t t : bins) {
    if (t >= obs.size()) throw InputError("bin index " + std::to_string(t) + " out of range");
  }
  auto table = detail::run_forward(model, obs, std::nullopt);
  Matrix beta = detail::run_backward(model, obs, table.scale, std::nullopt);

  const std::size_t k = model.n_states();
  std::vector<BinPrediction> out;
  out.reserve(bins.size());
  std::vector<double> prior(k), posterior(k);
  for (std::size_t t : bins) {
    if (t == 0) {
      prior = model.initial;
    } else {
      for (std::size_t i = 0; i < k; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) acc += table.alpha(t - 1, j) * model.transition(j, i);
        prior[i] = acc;
      }
    }
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      posterior[i] = prior[i] * beta(t, i);
      total += posterior[i];
    }
    for (double& p : posterior) p /= total;

    BinPrediction p;
    p.bin = t;
    p.observed = obs.counts[t];
    p.full_record = detail::mix_emissions(model, posterior);
    p.forward_only = detail::mix_emissions(model, prior);
    p.log_score_full = log_or_neg_inf(p.full_record[p.observed]);
    p.log_score_forward = log_or_neg_inf(p.forward_only[p.observed]);
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------

BruteForceResult brute_force_posterior(const ModelSpec& model, const ObservationSequence& obs) {
  check_inputs(model, obs);
  const std::size_t k = model.n_states();
  const std::size_t n = obs.size();
  if (std::pow(static_cast<double>(k), static_cast<double>(n)) > kMaxBruteForcePaths) {
    throw InputError("brute-force enumeration limited to " +
                     std::to_string(static_cast<long long>(kMaxBruteForcePaths)) + " paths");
  }

  Matrix marginal(n, k);
  PairwisePosterior pairwise(n, k);
  double total = 0.0;
  std::vector<std::size_t> path(n, 0);
  for (;;) {
    double joint = model.initial[path[0]] * model.emission(path[0], obs.counts[0]);
    for (std::size_t t = 1; t < n && joint > 0.0; ++t) {
      joint *= model.transition(path[t - 1], path[t]) * model.emission(path[t], obs.counts[t]);
    }
    if (joint > 0.0) {
      total += joint;
      for (std::size_t t = 0; t < n; ++t) marginal(t, path[t]) += joint;
      for (std::size_t t = 0; t + 1 < n; ++t) pairwise(t, path[t], path[t + 1]) += joint;
    }
    // Odometer increment, last bin fastest.
    std::size_t pos = n;
    while (pos > 0 && ++path[pos - 1] == k) path[--pos] = 0;
    if (pos == 0) break;
  }
  if (!(total > 0.0)) throw Error("observations have zero probability under the model");

  for (double& v : marginal.data()) v /= total;
  for (std::size_t t = 0; t + 1 < n; ++t) {
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) pairwise(t, i, j) /= total;
    }
  }
  BruteForceResult result;
  result.smoothed = {PosteriorKind::smoothed, std::move(marginal), {}};
  result.pairwise = std::move(pairwise);
  result.log_likelihood = std::log(total);
  return result;
}

}  // namespace telehmm
