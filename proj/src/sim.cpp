#include "telehmm/sim.hpp"

#include <algorithm>
#include <cmath>

namespace telehmm {

std::size_t Rng::categorical(std::span<const double> probs) {
  double total = 0.0;
  for (double p : probs) total += p;
  const double u = uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

SimResult simulate_chain(const SimConfig& config) {
  validate_model(config.model);
  if (config.n_bins < 1) throw InputError("n_bins must be at least 1");
  const std::uint64_t width =
      config.emit_timestamps ? ticks_per_bin(config.bin_width, config.tick_resolution) : 0;

  Rng rng(config.seed);
  const ModelSpec& model = config.model;
  SimResult result;
  result.states.resize(config.n_bins);
  result.obs.bin_width = config.bin_width;
  result.obs.counts.resize(config.n_bins);

  std::size_t state = rng.categorical(model.initial);
  for (std::size_t t = 0; t < config.n_bins; ++t) {
    if (t > 0) state = rng.categorical(model.transition.row(state));
    result.states[t] = state;
    result.obs.counts[t] = static_cast<std::uint32_t>(rng.categorical(model.emission.row(state)));
  }

  if (config.emit_timestamps) {
    // Drawn after the chain so that counts do not depend on this flag.
    PhotonRecord record;
    record.tick_resolution = config.tick_resolution;
    std::vector<std::uint64_t> bin_ticks;
    for (std::size_t t = 0; t < config.n_bins; ++t) {
      bin_ticks.clear();
      for (std::uint32_t c = 0; c < result.obs.counts[t]; ++c) {
        const auto offset = static_cast<std::uint64_t>(rng.uniform() * static_cast<double>(width));
        bin_ticks.push_back(t * width + std::min(offset, width - 1));
      }
      std::sort(bin_ticks.begin(), bin_ticks.end());
      record.ticks.insert(record.ticks.end(), bin_ticks.begin(), bin_ticks.end());
    }
    result.timestamps = std::move(record);
  }
  return result;
}

std::vector<double> poisson_emission_table(double mean, std::size_t max_count) {
  if (!(mean >= 0.0)) throw InputError("Poisson mean must be non-negative");
  std::vector<double> row(max_count + 1, 0.0);
  double p = std::exp(-mean);
  double head = 0.0;
  for (std::size_t s = 0; s < max_count; ++s) {
    row[s] = p;
    head += p;
    p *= mean / static_cast<double>(s + 1);
  }
  row[max_count] = std::max(0.0, 1.0 - head);
  return row;
}

ModelSpec default_paper_model(const PaperModelOptions& o) {
  ModelSpec model;
  model.initial.assign(3, 1.0 / 3.0);
  model.transition = Matrix::from_rows({
      {1.0 - o.high_to_low, o.high_to_low / 2.0, o.high_to_low / 2.0},
      {o.low_to_high, 1.0 - o.low_to_high - o.low_mixing, o.low_mixing},
      {o.low_to_high, o.low_mixing, 1.0 - o.low_to_high - o.low_mixing},
  });
  model.emission = Matrix(3, o.max_count + 1);
  const double means[3] = {o.high_mean, o.low_mean_a, o.low_mean_b};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto row = poisson_emission_table(means[i], o.max_count);
    std::copy(row.begin(), row.end(), model.emission.row(i).begin());
  }
  validate_model(model);
  return model;
}

}  // namespace telehmm
