#pragma once

#include <filesystem>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "telehmm/hmm.hpp"
#include "telehmm/ingest.hpp"
#include "telehmm/select.hpp"
#include "telehmm/sim.hpp"

namespace telehmm::io {

// Model files: {n_states, max_count, initial, transition, emission}.
// Distributions off by more than the model tolerance but at most 1e-6 are
// renormalized; anything worse is an InvalidModelError.
inline constexpr double kModelRenormalizeLimit = 1e-6;

nlohmann::json model_to_json(const ModelSpec& model);
ModelSpec model_from_json(const nlohmann::json& j);

/// SimConfig JSON: {model?, n_bins?, seed?, emit_timestamps?,
/// tick_resolution?, bin_width?}; a missing model means default_paper_model.
SimConfig sim_config_from_json(const nlohmann::json& j);

nlohmann::json comparison_to_json(const ModelComparison& cmp);

// CSV and timestamp writers return the file body; write_file_atomic puts it
// on disk.
std::string counts_csv(const ObservationSequence& obs);
ObservationSequence parse_counts_csv(std::istream& in, double bin_width);

/// `bin_index,time_s,state_0,...` with 9 significant digits.
std::string posterior_csv(const PosteriorTrajectory& posterior, double bin_width);
std::string aggregate_csv(const AggregateTrajectory& agg, double bin_width);
std::string states_csv(std::span<const std::size_t> states);
std::string loglik_trace_csv(const FitResult& fit);
std::string timestamps_text(const PhotonRecord& record);
std::string timestamps_binary(const PhotonRecord& record);

std::string read_file(const std::filesystem::path& path);

/// Writes through a temporary file in the same directory and renames it
/// into place. Refuses to replace an existing file unless `force`.
void write_file_atomic(const std::filesystem::path& path, const std::string& body, bool force);

}  // namespace telehmm::io
