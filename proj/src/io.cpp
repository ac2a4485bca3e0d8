#include "telehmm/io.hpp"

#include <unistd.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace telehmm::io {

using nlohmann::json;

namespace {

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::vector<double> renormalized(const json& j, const std::string& what) {
  if (!j.is_array()) throw InvalidModelError(what + " must be an array");
  std::vector<double> p;
  double sum = 0.0;
  for (const auto& v : j) {
    if (!v.is_number()) throw InvalidModelError(what + " holds a non-numeric entry");
    const double x = v.get<double>();
    if (!(x >= 0.0)) throw InvalidModelError(what + " holds a negative entry");
    p.push_back(x);
    sum += x;
  }
  if (p.empty()) throw InvalidModelError(what + " is empty");
  if (std::abs(sum - 1.0) > kModelRenormalizeLimit) {
    throw InvalidModelError(what + " sums to " + std::to_string(sum) + ", off by more than 1e-6");
  }
  // Distributions already valid as a ModelSpec are kept bit-for-bit.
  if (std::abs(sum - 1.0) > kStochasticTolerance) {
    for (double& x : p) x /= sum;
  }
  return p;
}

Matrix stochastic_matrix(const json& j, const std::string& what) {
  if (!j.is_array()) throw InvalidModelError(what + " must be an array of rows");
  std::vector<std::vector<double>> rows;
  for (std::size_t r = 0; r < j.size(); ++r) {
    rows.push_back(renormalized(j[r], what + " row " + std::to_string(r)));
  }
  return Matrix::from_rows(rows);
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  }
  return rows;
}

}  // namespace

json model_to_json(const ModelSpec& model) {
  return {
      {"n_states", model.n_states()},
      {"max_count", model.max_count()},
      {"initial", model.initial},
      {"transition", matrix_json(model.transition)},
      {"emission", matrix_json(model.emission)},
  };
}

ModelSpec model_from_json(const json& j) {
  try {
    ModelSpec model;
    model.initial = renormalized(j.at("initial"), "initial");
    model.transition = stochastic_matrix(j.at("transition"), "transition");
    model.emission = stochastic_matrix(j.at("emission"), "emission");
    const auto n_states = j.at("n_states").get<std::size_t>();
    const auto max_count = j.at("max_count").get<std::size_t>();
    if (n_states != model.n_states()) throw InvalidModelError("n_states does not match initial");
    if (max_count + 1 != model.emission.cols()) {
      throw InvalidModelError("max_count does not match emission row length");
    }
    validate_model(model);
    return model;
  } catch (const json::exception& e) {
    throw InvalidModelError(std::string("malformed model JSON: ") + e.what());
  }
}

SimConfig sim_config_from_json(const json& j) {
  try {
    SimConfig config;
    config.model = j.contains("model") ? model_from_json(j.at("model")) : default_paper_model();
    config.n_bins = j.value("n_bins", config.n_bins);
    config.seed = j.value("seed", config.seed);
    config.emit_timestamps = j.value("emit_timestamps", config.emit_timestamps);
    config.tick_resolution = j.value("tick_resolution", config.tick_resolution);
    config.bin_width = j.value("bin_width", config.bin_width);
    if (config.n_bins < 1) throw InputError("n_bins must be at least 1");
    return config;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed simulation config: ") + e.what());
  }
}

json comparison_to_json(const ModelComparison& cmp) {
  json entries = json::array();
  for (const auto& e : cmp.entries) {
    entries.push_back({
        {"label", e.candidate.label},
        {"n_states", e.candidate.n_states},
        {"max_count", e.candidate.max_count},
        {"log_likelihood", e.candidate.log_likelihood},
        {"n_params", e.n_params},
        {"aic", e.aic},
        {"bic", e.bic},
        {"seeds", e.candidate.seeds},
        {"converged", e.candidate.converged},
    });
  }
  auto labels = [&](const std::vector<std::size_t>& rank) {
    json out = json::array();
    for (std::size_t i : rank) out.push_back(cmp.entries[i].candidate.label);
    return out;
  };
  return {
      {"n_obs", cmp.n_obs},
      {"models", entries},
      {"ranking_aic", labels(cmp.rank_aic)},
      {"ranking_bic", labels(cmp.rank_bic)},
  };
}

// ---------------------------------------------------------------------------

std::string counts_csv(const ObservationSequence& obs) {
  std::string out = "bin_index,count\n";
  for (std::size_t t = 0; t < obs.size(); ++t) {
    out += std::to_string(t) + "," + std::to_string(obs.counts[t]) + "\n";
  }
  return out;
}

ObservationSequence parse_counts_csv(std::istream& in, double bin_width) {
  if (!(bin_width > 0.0)) throw InputError("bin width must be positive");
  ObservationSequence obs;
  obs.bin_width = bin_width;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "bin_index,count") {
        throw ParseError("counts CSV must start with header 'bin_index,count'", line_no);
      }
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.find(',');
    std::uint64_t index = 0;
    std::uint32_t count = 0;
    bool ok = comma != std::string::npos;
    if (ok) {
      auto r1 = std::from_chars(line.data(), line.data() + comma, index);
      auto r2 = std::from_chars(line.data() + comma + 1, line.data() + line.size(), count);
      ok = r1.ec == std::errc{} && r1.ptr == line.data() + comma && r2.ec == std::errc{} &&
           r2.ptr == line.data() + line.size();
    }
    if (!ok) throw ParseError("malformed counts line " + std::to_string(line_no), line_no);
    if (index != obs.counts.size()) {
      throw ParseError("bin_index out of sequence on line " + std::to_string(line_no), line_no);
    }
    obs.counts.push_back(count);
  }
  if (line_no == 0) throw ParseError("counts CSV is empty (missing header)", 1);
  return obs;
}

std::string posterior_csv(const PosteriorTrajectory& posterior, double bin_width) {
  std::string out = "bin_index,time_s";
  for (std::size_t i = 0; i < posterior.probs.cols(); ++i) out += ",state_" + std::to_string(i);
  out += "\n";
  for (std::size_t t = 0; t < posterior.size(); ++t) {
    out += std::to_string(t) + "," + fmt9(static_cast<double>(t) * bin_width);
    for (double p : posterior.probs.row(t)) out += "," + fmt9(p);
    out += "\n";
  }
  return out;
}

std::string aggregate_csv(const AggregateTrajectory& agg, double bin_width) {
  std::string out = "bin_index,time_s,P_F3,P_F4\n";
  for (std::size_t t = 0; t < agg.p_f3.size(); ++t) {
    out += std::to_string(t) + "," + fmt9(static_cast<double>(t) * bin_width) + "," +
           fmt9(agg.p_f3[t]) + "," + fmt9(agg.p_f4[t]) + "\n";
  }
  return out;
}

std::string states_csv(std::span<const std::size_t> states) {
  std::string out = "bin_index,state\n";
  for (std::size_t t = 0; t < states.size(); ++t) {
    out += std::to_string(t) + "," + std::to_string(states[t]) + "\n";
  }
  return out;
}

std::string loglik_trace_csv(const FitResult& fit) {
  std::string out = "iteration,log_likelihood\n";
  char buf[64];
  for (std::size_t i = 0; i < fit.loglik_trace.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i + 1, fit.loglik_trace[i]);
    out += buf;
  }
  return out;
}

std::string timestamps_text(const PhotonRecord& record) {
  std::string out;
  for (std::uint64_t t : record.ticks) out += std::to_string(t) + "\n";
  return out;
}

std::string timestamps_binary(const PhotonRecord& record) {
  std::string out(record.ticks.size() * 8, '\0');
  for (std::size_t w = 0; w < record.ticks.size(); ++w) {
    for (std::size_t b = 0; b < 8; ++b) {
      out[w * 8 + b] = static_cast<char>((record.ticks[w] >> (8 * b)) & 0xffu);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& body, bool force) {
  namespace fs = std::filesystem;
  if (fs::exists(path) && !force) {
    throw InputError("refusing to overwrite " + path.string() + " (use --force)");
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw InputError("failed writing " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

}  // namespace telehmm::io
