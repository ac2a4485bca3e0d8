#include "telehmm/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iterator>
#include <string>

namespace telehmm {

namespace {

std::vector<std::uint64_t> parse_text(std::istream& in) {
  std::vector<std::uint64_t> ticks;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::uint64_t value = 0;
    const char* first = line.data();
    const char* last = line.data() + line.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (line.empty() || ec != std::errc{} || ptr != last) {
      throw ParseError("malformed timestamp on line " + std::to_string(line_no) + ": '" + line + "'",
                       line_no);
    }
    ticks.push_back(value);
  }
  return ticks;
}

std::vector<std::uint64_t> parse_binary(std::istream& in) {
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() % 8 != 0) {
    const std::size_t offset = bytes.size() - bytes.size() % 8;
    throw ParseError("truncated 64-bit timestamp at byte offset " + std::to_string(offset), offset);
  }
  std::vector<std::uint64_t> ticks(bytes.size() / 8);
  for (std::size_t w = 0; w < ticks.size(); ++w) {
    std::uint64_t v = 0;
    for (int b = 7; b >= 0; --b) {
      v = (v << 8) | static_cast<unsigned char>(bytes[w * 8 + static_cast<std::size_t>(b)]);
    }
    ticks[w] = v;
  }
  return ticks;
}

}  // namespace

PhotonRecord parse_timestamps(std::istream& in, TimestampFormat format, double tick_resolution) {
  if (!(tick_resolution > 0.0)) throw InputError("tick resolution must be positive");
  PhotonRecord record;
  record.tick_resolution = tick_resolution;
  record.ticks = format == TimestampFormat::text ? parse_text(in) : parse_binary(in);
  auto it = std::is_sorted_until(record.ticks.begin(), record.ticks.end());
  if (it != record.ticks.end()) {
    const auto index = static_cast<std::size_t>(it - record.ticks.begin());
    throw OrderError("timestamps out of order at index " + std::to_string(index), index);
  }
  return record;
}

std::uint64_t ticks_per_bin(double bin_width, double tick_resolution) {
  if (!(bin_width > 0.0) || !(tick_resolution > 0.0)) {
    throw InputError("bin width and tick resolution must be positive");
  }
  const double ratio = bin_width / tick_resolution;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * rounded) {
    throw InputError("bin width " + std::to_string(bin_width) +
                     " s is not an integer multiple of the tick resolution");
  }
  return static_cast<std::uint64_t>(rounded);
}

ObservationSequence bin_counts(const PhotonRecord& record, double bin_width,
                               std::optional<Span> span) {
  const std::uint64_t width = ticks_per_bin(bin_width, record.tick_resolution);

  std::uint64_t start = 0;
  std::uint64_t n_bins = 0;
  if (span) {
    if (!(span->start_s >= 0.0) || !(span->end_s > span->start_s)) {
      throw InputError("span must satisfy 0 <= start < end");
    }
    const double start_ticks = span->start_s / record.tick_resolution;
    if (std::abs(start_ticks - std::round(start_ticks)) > 1e-9 * std::max(1.0, start_ticks)) {
      throw InputError("span start is not a whole number of ticks");
    }
    start = static_cast<std::uint64_t>(std::llround(start_ticks));
    const double length = (span->end_s - span->start_s) / record.tick_resolution;
    // Tolerate rounding in the seconds-to-ticks conversion.
    n_bins = static_cast<std::uint64_t>(std::floor(length / static_cast<double>(width) + 1e-9));
  } else if (!record.ticks.empty()) {
    n_bins = (record.ticks.back() + 1) / width;
  }

  ObservationSequence obs;
  obs.bin_width = static_cast<double>(width) * record.tick_resolution;
  obs.counts.assign(n_bins, 0);
  const std::uint64_t end = start + n_bins * width;
  auto first = std::lower_bound(record.ticks.begin(), record.ticks.end(), start);
  for (auto it = first; it != record.ticks.end() && *it < end; ++it) {
    ++obs.counts[(*it - start) / width];
  }
  return obs;
}

ObservationSequence rebin(const ObservationSequence& obs, std::size_t factor) {
  if (factor == 0) throw InputError("rebin factor must be at least 1");
  ObservationSequence out;
  out.bin_width = obs.bin_width * static_cast<double>(factor);
  const std::size_t n = obs.size() / factor;
  out.counts.assign(n, 0);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t u = 0; u < factor; ++u) out.counts[b] += obs.counts[b * factor + u];
  }
  return out;
}

}  // namespace telehmm
