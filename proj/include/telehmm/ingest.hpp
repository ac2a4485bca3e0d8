#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <vector>

#include "telehmm/model.hpp"

namespace telehmm {

inline constexpr double kDefaultTickResolution = 50e-9;  // seconds

/// Photon arrival times in detector ticks, non-decreasing.
struct PhotonRecord {
  std::vector<std::uint64_t> ticks;
  double tick_resolution = kDefaultTickResolution;
};

enum class TimestampFormat { text, binary };

/// Malformed input. `position()` is a 1-based line number for text input
/// and a byte offset for binary input.
class ParseError : public InputError {
 public:
  ParseError(const std::string& what, std::size_t position)
      : InputError(what), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// Timestamps out of order; `index()` is the first tick smaller than its
/// predecessor (0-based).
class OrderError : public InputError {
 public:
  OrderError(const std::string& what, std::size_t index) : InputError(what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Text: one decimal tick per line. Binary: contiguous little-endian
/// unsigned 64-bit words.
PhotonRecord parse_timestamps(std::istream& in, TimestampFormat format,
                              double tick_resolution = kDefaultTickResolution);

/// Time window [start_s, end_s) to bin.
struct Span {
  double start_s = 0.0;
  double end_s = 0.0;
};

/// Counts ticks in half-open bins [k W, (k+1) W) from the span start.
/// A trailing partial bin is dropped. Without a span the record covers
/// ticks 0 through its last tick.
ObservationSequence bin_counts(const PhotonRecord& record, double bin_width,
                               std::optional<Span> span = std::nullopt);

/// Sums adjacent groups of `factor` bins; a trailing partial group is dropped.
ObservationSequence rebin(const ObservationSequence& obs, std::size_t factor);

/// Bin width expressed in whole ticks; throws InputError if it is not an
/// integer multiple of the resolution.
std::uint64_t ticks_per_bin(double bin_width, double tick_resolution);

}  // namespace telehmm
