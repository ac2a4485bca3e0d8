#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "telehmm/ingest.hpp"
#include "telehmm/model.hpp"

namespace telehmm {

/// Seeded source of uniforms on top of mt19937_64. Sampling is done by
/// inverse CDF so results depend only on the engine's output sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Index drawn from `probs` (need not be normalized exactly).
  std::size_t categorical(std::span<const double> probs);

  /// Standard exponential variate.
  double exponential() { return -std::log1p(-uniform()); }

 private:
  std::mt19937_64 engine_;
};

struct SimConfig {
  ModelSpec model;
  std::size_t n_bins = 400'000;
  std::uint64_t seed = 0;
  bool emit_timestamps = false;
  double tick_resolution = kDefaultTickResolution;
  double bin_width = 50e-6;
};

struct SimResult {
  std::vector<std::size_t> states;
  ObservationSequence obs;
  std::optional<PhotonRecord> timestamps;
};

/// Samples X_1 from the initial distribution, each X_{t+1} from the
/// transition row of X_t and each count from the emission row of X_t.
/// With emit_timestamps, each bin's clicks are placed uniformly at random
/// ticks inside the bin.
SimResult simulate_chain(const SimConfig& config);

/// Poisson probabilities for 0 .. max_count - 1 with the upper tail folded
/// into max_count.
std::vector<double> poisson_emission_table(double mean, std::size_t max_count);

struct PaperModelOptions {
  double high_mean = 1.5;     // counts per 50 us bin, empty-cavity level
  double low_mean_a = 0.25;   // first low-transmission sub-state
  double low_mean_b = 0.5;    // second low-transmission sub-state
  double high_to_low = 0.004; // per bin, split evenly over the two low states
  double low_to_high = 0.003; // per bin, from each low state
  double low_mixing = 0.001;  // per bin, between the low states
  std::size_t max_count = 20;
};

/// Three-state telegraph model: state 0 is high transmission, states 1 and
/// 2 are low transmission. Poisson emissions and uniform initial.
ModelSpec default_paper_model(const PaperModelOptions& options = {});

}  // namespace telehmm
