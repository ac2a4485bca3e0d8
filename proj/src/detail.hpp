#pragma once

#include <optional>
#include <span>
#include <vector>

#include "telehmm/hmm.hpp"

namespace telehmm::detail {

struct ForwardTable {
  Matrix alpha;               // normalized per bin
  std::vector<double> scale;  // c_t = P(s_t | s_1..s_{t-1})

  std::vector<double> log_scale() const;
  /// log prod c_t, accumulated as mantissa and binary exponent.
  double log_likelihood() const;
};

double compensated_sum(std::span<const double> values);

// `masked` bin has its emission factor replaced by one.
ForwardTable run_forward(const ModelSpec& model, const ObservationSequence& obs,
                         std::optional<std::size_t> masked);

/// `scale` holds the forward constants c_t (not their logs).
Matrix run_backward(const ModelSpec& model, const ObservationSequence& obs,
                    std::span<const double> scale, std::optional<std::size_t> masked);

Matrix combine(const Matrix& alpha, const Matrix& beta);

std::vector<double> mix_emissions(const ModelSpec& model, std::span<const double> weights);

}  // namespace telehmm::detail
