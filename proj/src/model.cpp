#include "telehmm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace telehmm {

ZeroLikelihoodError::ZeroLikelihoodError(std::size_t bin, std::optional<std::size_t> iteration)
    : Error((iteration ? "EM iteration " + std::to_string(*iteration) + ": " : std::string{}) +
            "zero likelihood at bin index " + std::to_string(bin) +
            ": no state can emit the observed count given the preceding data"),
      bin_(bin),
      iteration_(iteration) {}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw InvalidModelError("ragged matrix rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

namespace {

void check_distribution(std::span<const double> p, double tol, const std::string& what) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidModelError(what + " has an entry outside [0, 1]");
    sum += v;
  }
  if (std::abs(sum - 1.0) > tol) {
    throw InvalidModelError(what + " sums to " + std::to_string(sum) + ", not 1");
  }
}

}  // namespace

void validate_model(const ModelSpec& model, double tol) {
  const std::size_t k = model.n_states();
  if (k == 0) throw InvalidModelError("model has no states");
  if (model.transition.rows() != k || model.transition.cols() != k) {
    throw InvalidModelError("transition matrix must be n_states x n_states");
  }
  if (model.emission.rows() != k || model.emission.cols() == 0) {
    throw InvalidModelError("emission matrix must be n_states x (max_count + 1)");
  }
  check_distribution(model.initial, tol, "initial distribution");
  for (std::size_t i = 0; i < k; ++i) {
    check_distribution(model.transition.row(i), tol, "transition row " + std::to_string(i));
    check_distribution(model.emission.row(i), tol, "emission row " + std::to_string(i));
  }
}

std::vector<double> emission_means(const ModelSpec& model) {
  std::vector<double> means(model.n_states(), 0.0);
  for (std::size_t i = 0; i < model.n_states(); ++i) {
    auto row = model.emission.row(i);
    for (std::size_t s = 0; s < row.size(); ++s) means[i] += static_cast<double>(s) * row[s];
  }
  return means;
}

ModelSpec permute_states(const ModelSpec& model, std::span<const std::size_t> perm) {
  const std::size_t k = model.n_states();
  if (perm.size() != k) throw InvalidModelError("permutation size does not match n_states");
  ModelSpec out;
  out.initial.assign(k, 0.0);
  out.transition = Matrix(k, k);
  out.emission = Matrix(k, model.emission.cols());
  for (std::size_t i = 0; i < k; ++i) {
    out.initial[perm[i]] = model.initial[i];
    for (std::size_t j = 0; j < k; ++j) out.transition(perm[i], perm[j]) = model.transition(i, j);
    std::copy(model.emission.row(i).begin(), model.emission.row(i).end(),
              out.emission.row(perm[i]).begin());
  }
  return out;
}

ModelSpec canonicalize_states(const ModelSpec& model, std::vector<std::size_t>* order) {
  const auto means = emission_means(model);
  std::vector<std::size_t> by_mean(model.n_states());
  std::iota(by_mean.begin(), by_mean.end(), std::size_t{0});
  std::stable_sort(by_mean.begin(), by_mean.end(),
                   [&](std::size_t a, std::size_t b) { return means[a] < means[b]; });
  // by_mean[new] = old; permute_states wants perm[old] = new.
  std::vector<std::size_t> perm(by_mean.size());
  for (std::size_t n = 0; n < by_mean.size(); ++n) perm[by_mean[n]] = n;
  if (order) *order = by_mean;
  return permute_states(model, perm);
}

double max_parameter_change(const ModelSpec& a, const ModelSpec& b) {
  if (a.n_states() != b.n_states() || a.emission.cols() != b.emission.cols()) {
    throw InvalidModelError("models have different shapes");
  }
  double delta = 0.0;
  auto scan = [&](const std::vector<double>& x, const std::vector<double>& y) {
    for (std::size_t i = 0; i < x.size(); ++i) delta = std::max(delta, std::abs(x[i] - y[i]));
  };
  scan(a.initial, b.initial);
  scan(a.transition.data(), b.transition.data());
  scan(a.emission.data(), b.emission.data());
  return delta;
}

std::uint32_t ObservationSequence::max_observed() const noexcept {
  return counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
}

void check_compatible(const ModelSpec& model, const ObservationSequence& obs) {
  if (obs.counts.empty()) throw InputError("observation sequence is empty");
  const std::size_t max_count = model.max_count();
  for (std::size_t t = 0; t < obs.counts.size(); ++t) {
    if (obs.counts[t] > max_count) {
      throw InputError("count " + std::to_string(obs.counts[t]) + " at bin index " +
                       std::to_string(t) + " exceeds the model's max_count " +
                       std::to_string(max_count));
    }
  }
}

std::size_t clamp_counts(ObservationSequence& obs, std::uint32_t max_count) {
  std::size_t changed = 0;
  for (auto& c : obs.counts) {
    if (c > max_count) {
      c = max_count;
      ++changed;
    }
  }
  return changed;
}

}  // namespace telehmm
