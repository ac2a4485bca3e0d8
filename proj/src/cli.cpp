#include "telehmm/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "telehmm/hmm.hpp"
#include "telehmm/ingest.hpp"
#include "telehmm/io.hpp"
#include "telehmm/select.hpp"
#include "telehmm/sim.hpp"

namespace telehmm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kDefaultBinWidth = 50e-6;

struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::optional<double> bin_width;
  double tol = 1e-9;
  std::size_t max_iter = 2000;
  std::string out_dir = ".";
  bool force = false;
  bool clamp = false;
  std::size_t workers = 1;

  // ingest
  std::string input;
  std::string format = "text";
  double tick_resolution = kDefaultTickResolution;
  std::optional<double> span_start;
  std::optional<double> span_end;

  // simulate
  std::string config_path;
  std::optional<std::size_t> n_bins;
  std::optional<bool> emit_timestamps;

  // fit / smooth / predict / compare
  std::string counts_path;
  std::vector<std::string> model_paths;
  std::vector<std::size_t> k_list{3};
  std::size_t restarts = 5;
  std::optional<std::size_t> max_count;
  std::optional<double> threshold;
  std::size_t bin = 0;

  double width() const { return bin_width.value_or(kDefaultBinWidth); }
  fs::path out(const std::string& name) const { return fs::path(out_dir) / name; }
  std::uint64_t require_seed(const char* command) const {
    if (!seed) throw InputError(std::string(command) + " is stochastic and needs --seed");
    return *seed;
  }
};

ObservationSequence load_counts(const RunConfig& cfg) {
  std::istringstream in(io::read_file(cfg.counts_path));
  return io::parse_counts_csv(in, cfg.width());
}

void apply_clamp(const RunConfig& cfg, ObservationSequence& obs, std::size_t max_count,
                 std::ostream& out) {
  if (!cfg.clamp) return;
  const std::size_t changed = clamp_counts(obs, static_cast<std::uint32_t>(max_count));
  if (changed > 0) out << "clamped " << changed << " bins to max_count " << max_count << "\n";
}

ModelSpec load_model(const std::string& path) {
  try {
    return io::model_from_json(json::parse(io::read_file(path)));
  } catch (const json::exception& e) {
    throw InvalidModelError(path + ": " + e.what());
  }
}

int cmd_ingest(const RunConfig& cfg, std::ostream& out) {
  const auto format = cfg.format == "binary" ? TimestampFormat::binary : TimestampFormat::text;
  std::ifstream in(cfg.input, std::ios::binary);
  if (!in) throw InputError("cannot open " + cfg.input);
  const PhotonRecord record = parse_timestamps(in, format, cfg.tick_resolution);

  std::optional<Span> span;
  if (cfg.span_end) span = Span{cfg.span_start.value_or(0.0), *cfg.span_end};
  const ObservationSequence obs = bin_counts(record, cfg.width(), span);
  io::write_file_atomic(cfg.out("counts.csv"), io::counts_csv(obs), cfg.force);

  std::uint64_t binned = 0;
  for (auto c : obs.counts) binned += c;
  const double duration = static_cast<double>(obs.size()) * obs.bin_width;
  out << "clicks: " << record.ticks.size() << " (binned: " << binned << ")\n"
      << "bins: " << obs.size() << " of " << obs.bin_width << " s\n"
      << "mean_rate_per_s: " << (duration > 0.0 ? static_cast<double>(binned) / duration : 0.0)
      << "\n";
  return 0;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  SimConfig config = cfg.config_path.empty()
                         ? io::sim_config_from_json(json::object())
                         : io::sim_config_from_json(json::parse(io::read_file(cfg.config_path)));
  config.seed = cfg.require_seed("simulate");
  if (cfg.n_bins) config.n_bins = *cfg.n_bins;
  if (cfg.bin_width) config.bin_width = *cfg.bin_width;
  if (cfg.emit_timestamps) config.emit_timestamps = *cfg.emit_timestamps;

  const SimResult sim = simulate_chain(config);
  io::write_file_atomic(cfg.out("counts.csv"), io::counts_csv(sim.obs), cfg.force);
  io::write_file_atomic(cfg.out("states.csv"), io::states_csv(sim.states), cfg.force);
  io::write_file_atomic(cfg.out("model.json"), io::model_to_json(config.model).dump(2) + "\n",
                        cfg.force);
  if (sim.timestamps) {
    if (cfg.format == "binary") {
      io::write_file_atomic(cfg.out("timestamps.bin"), io::timestamps_binary(*sim.timestamps),
                            cfg.force);
    } else {
      io::write_file_atomic(cfg.out("timestamps.txt"), io::timestamps_text(*sim.timestamps),
                            cfg.force);
    }
  }
  out << "simulated " << config.n_bins << " bins of " << config.bin_width << " s, seed "
      << config.seed << "\n";
  return 0;
}

int cmd_fit(const RunConfig& cfg, std::ostream& out) {
  ObservationSequence obs = load_counts(cfg);
  if (cfg.clamp) {
    if (!cfg.max_count) throw InputError("--clamp needs --max-count for fit");
    apply_clamp(cfg, obs, *cfg.max_count, out);
  }
  FitOptions options;
  options.restarts = cfg.restarts;
  options.base_seed = cfg.require_seed("fit");
  options.tol = cfg.tol;
  options.max_iter = cfg.max_iter;
  options.workers = cfg.workers;
  options.max_count = cfg.max_count;

  bool all_converged = true;
  std::vector<ModelCandidate> candidates;
  for (std::size_t k : cfg.k_list) {
    const KStateFit fit = fit_k_states(obs, k, options);
    const std::string tag = "k" + std::to_string(k);
    io::write_file_atomic(cfg.out("model_" + tag + ".json"),
                          io::model_to_json(fit.fit.model).dump(2) + "\n", cfg.force);
    io::write_file_atomic(cfg.out("loglik_" + tag + ".csv"), io::loglik_trace_csv(fit.fit),
                          cfg.force);
    out << "k=" << k << ": loglik " << fit.fit.log_likelihood << ", iterations "
        << fit.fit.iterations << ", final_delta " << fit.fit.final_delta << ", seed " << fit.seed
        << (fit.fit.converged ? ", converged" : ", NOT converged") << "\n";
    for (const auto& r : fit.restarts) {
      if (!r.ok) out << "  restart seed " << r.seed << " failed: " << r.error << "\n";
    }
    all_converged = all_converged && fit.fit.converged;
    candidates.push_back(candidate_from_fit(fit));
  }

  if (candidates.size() >= 2) {
    const ModelComparison cmp = compare_models(candidates, obs.size());
    io::write_file_atomic(cfg.out("comparison.json"), io::comparison_to_json(cmp).dump(2) + "\n",
                          cfg.force);
    out << "BIC ranking:";
    for (std::size_t i : cmp.rank_bic) out << " " << cmp.entries[i].candidate.label;
    out << "\n";
  } else {
    out << "single k requested; no comparison written\n";
  }

  if (!all_converged) {
    out << "not every fit reached tolerance " << cfg.tol << " within " << cfg.max_iter
        << " iterations\n";
    return 2;
  }
  return 0;
}

int cmd_smooth(const RunConfig& cfg, std::ostream& out) {
  if (cfg.model_paths.size() != 1) throw InputError("smooth takes exactly one --model");
  ObservationSequence obs = load_counts(cfg);
  const ModelSpec model = load_model(cfg.model_paths.front());
  apply_clamp(cfg, obs, model.max_count(), out);
  const SmoothResult result = smooth(model, obs);
  const StateLabeling labeling = assign_labels(model, LabelPolicy{cfg.threshold});
  const AggregateTrajectory agg = aggregate_populations(result.smoothed, labeling);
  const AggregateTrajectory agg_filtered = aggregate_populations(result.filtered, labeling);

  io::write_file_atomic(cfg.out("filtered.csv"), io::posterior_csv(result.filtered, obs.bin_width),
                        cfg.force);
  io::write_file_atomic(cfg.out("smoothed.csv"), io::posterior_csv(result.smoothed, obs.bin_width),
                        cfg.force);
  io::write_file_atomic(cfg.out("aggregated.csv"), io::aggregate_csv(agg, obs.bin_width), cfg.force);
  io::write_file_atomic(cfg.out("aggregated_filtered.csv"),
                        io::aggregate_csv(agg_filtered, obs.bin_width), cfg.force);

  for (const auto& w : labeling.warnings) out << "warning: " << w << "\n";
  out << "labels:";
  for (std::size_t i = 0; i < labeling.groups.size(); ++i) {
    out << " " << i << "=" << to_string(labeling.groups[i]);
  }
  out << "\nloglik: " << result.smoothed.log_likelihood() << "\n"
      << "F4 0.5-crossings filtered: " << count_level_crossings(agg_filtered.p_f4)
      << ", smoothed: " << count_level_crossings(agg.p_f4) << "\n";
  return 0;
}

int cmd_predict(const RunConfig& cfg, std::ostream& out) {
  if (cfg.model_paths.size() != 1) throw InputError("predict takes exactly one --model");
  ObservationSequence obs = load_counts(cfg);
  const ModelSpec model = load_model(cfg.model_paths.front());
  apply_clamp(cfg, obs, model.max_count(), out);
  const BinPrediction p = predict_bin(model, obs, cfg.bin);
  auto score = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  const json report = {
      {"bin_index", p.bin},
      {"observed_count", p.observed},
      {"full_record", p.full_record},
      {"forward_only", p.forward_only},
      {"log_score_full_record", score(p.log_score_full)},
      {"log_score_forward_only", score(p.log_score_forward)},
  };
  const std::string body = report.dump(2) + "\n";
  io::write_file_atomic(cfg.out("predict_bin" + std::to_string(p.bin) + ".json"), body, cfg.force);
  out << body;
  return 0;
}

int cmd_compare(const RunConfig& cfg, std::ostream& out) {
  if (cfg.model_paths.size() < 2) throw InputError("compare needs at least two --model files");
  const ObservationSequence raw = load_counts(cfg);
  std::vector<ModelCandidate> candidates;
  for (const auto& path : cfg.model_paths) {
    const ModelSpec model = load_model(path);
    ObservationSequence obs = raw;
    apply_clamp(cfg, obs, model.max_count(), out);
    ModelCandidate c;
    c.label = fs::path(path).filename().string();
    c.n_states = model.n_states();
    c.max_count = model.max_count();
    c.log_likelihood = log_likelihood(model, obs);

    const auto rates =
        rates_from_transitions(model, assign_labels(model, LabelPolicy{cfg.threshold}), obs.bin_width);
    out << c.label << ": F3->F4 " << rates.f3_to_f4 << " /s, F4->F3 " << rates.f4_to_f3 << " /s\n";
    for (const auto& w : rates.warnings) out << "warning: " << w << "\n";
    candidates.push_back(std::move(c));
  }
  const ModelComparison cmp = compare_models(candidates, raw.size());
  const std::string body = io::comparison_to_json(cmp).dump(2) + "\n";
  io::write_file_atomic(cfg.out("comparison.json"), body, cfg.force);
  out << body;
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"Hidden Markov analysis of photon-count telegraph signals"};
  app.require_subcommand(1);
  app.fallthrough();

  app.add_option("--seed", cfg.seed, "Seed for every random draw (required by simulate, fit)");
  app.add_option("--bin-width", cfg.bin_width, "Bin width in seconds (default 50e-6)")
      ->check(CLI::PositiveNumber);
  app.add_option("--tol", cfg.tol, "EM tolerance on the largest parameter change")
      ->check(CLI::PositiveNumber);
  app.add_option("--max-iter", cfg.max_iter, "EM iteration cap")->check(CLI::PositiveNumber);
  app.add_option("--out", cfg.out_dir, "Output directory");
  app.add_flag("--force", cfg.force, "Overwrite existing output files");
  app.add_flag("--clamp", cfg.clamp, "Clamp counts above the emission table instead of failing");
  app.add_option("--workers", cfg.workers, "Threads for EM restarts")->check(CLI::PositiveNumber);

  auto* ingest = app.add_subcommand("ingest", "Bin photon timestamps into counts.csv");
  ingest->add_option("--input", cfg.input, "Timestamp file")->required()->check(CLI::ExistingFile);
  ingest->add_option("--format", cfg.format, "text or binary")
      ->check(CLI::IsMember({"text", "binary"}));
  ingest->add_option("--tick-resolution", cfg.tick_resolution, "Seconds per tick")
      ->check(CLI::PositiveNumber);
  ingest->add_option("--span-start", cfg.span_start, "Start of the binned window (s)");
  ingest->add_option("--span-end", cfg.span_end, "End of the binned window (s)");

  auto* simulate = app.add_subcommand("simulate", "Sample a telegraph record from a model");
  simulate->add_option("--config", cfg.config_path, "SimConfig JSON")->check(CLI::ExistingFile);
  simulate->add_option("--n-bins", cfg.n_bins, "Override the number of bins");
  simulate->add_option("--timestamps", cfg.emit_timestamps, "Also write photon timestamps");
  simulate->add_option("--format", cfg.format, "Timestamp file format: text or binary")
      ->check(CLI::IsMember({"text", "binary"}));

  auto* fit = app.add_subcommand("fit", "Baum-Welch fits for one or more state counts");
  fit->add_option("--counts", cfg.counts_path, "counts.csv")->required()->check(CLI::ExistingFile);
  fit->add_option("--k", cfg.k_list, "State counts to fit")->delimiter(',');
  fit->add_option("--restarts", cfg.restarts, "Random restarts per k")->check(CLI::PositiveNumber);
  fit->add_option("--max-count", cfg.max_count, "Emission table size - 1");

  auto* smooth_cmd = app.add_subcommand("smooth", "Filtered, smoothed and F3/F4 trajectories");
  smooth_cmd->add_option("--counts", cfg.counts_path, "counts.csv")->required()->check(CLI::ExistingFile);
  smooth_cmd->add_option("--model", cfg.model_paths, "Model JSON")->required()->check(CLI::ExistingFile);
  smooth_cmd->add_option("--threshold", cfg.threshold, "Emission mean above which a state is F3");

  auto* predict = app.add_subcommand("predict", "Predict the count of one hidden bin");
  predict->add_option("--counts", cfg.counts_path, "counts.csv")->required()->check(CLI::ExistingFile);
  predict->add_option("--model", cfg.model_paths, "Model JSON")->required()->check(CLI::ExistingFile);
  predict->add_option("--bin", cfg.bin, "0-based bin index to hide")->required();

  auto* compare = app.add_subcommand("compare", "AIC/BIC comparison of fitted models");
  compare->add_option("--counts", cfg.counts_path, "counts.csv")->required()->check(CLI::ExistingFile);
  compare->add_option("--model", cfg.model_paths, "Model JSON (repeat)")->required()->check(CLI::ExistingFile);
  compare->add_option("--threshold", cfg.threshold, "Emission mean above which a state is F3");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*ingest) return cmd_ingest(cfg, out);
    if (*simulate) return cmd_simulate(cfg, out);
    if (*fit) return cmd_fit(cfg, out);
    if (*smooth_cmd) return cmd_smooth(cfg, out);
    if (*predict) return cmd_predict(cfg, out);
    if (*compare) return cmd_compare(cfg, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"telehmm"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace telehmm
