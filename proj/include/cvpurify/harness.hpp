#pragma once

// Experiment harness: reads a JSON config, evaluates the purification
// protocol over a (lambda, N) grid or reproduces the three-spectrum
// measurement picture, and writes deterministic CSV/JSON reports.
//
// Every analytic cell is cross-checked against the full symplectic
// pipeline; disagreement beyond 1e-10 is an internal consistency failure
// (exit code 4).  All randomness is derived from the master seed per cell
// and per trace, so outputs are byte-identical regardless of thread count.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cvpurify/core.hpp"
#include "cvpurify/protocol.hpp"
#include "cvpurify/sampler.hpp"
#include "cvpurify/spectrum.hpp"
#include "cvpurify/version.hpp"

namespace cvpurify {

enum class ExitCode : int { ok = 0, config_error = 2, io_error = 3, consistency_error = 4 };

struct ConfigError : std::runtime_error {
  std::vector<std::string> diagnostics;
  explicit ConfigError(std::vector<std::string> diags)
      : std::runtime_error(diags.empty() ? "invalid config" : diags.front()),
        diagnostics(std::move(diags)) {}
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConsistencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class RunMode { sweep, single, spectra };
enum class OutputFormat { csv, json, both };

struct MonteCarloSettings {
  std::size_t n_samples = 100000;
  std::optional<std::uint64_t> seed;  // defaults to streams derived from the master seed
};

struct ExperimentConfig {
  int schema_version = 1;
  RunMode mode = RunMode::sweep;
  std::vector<double> lambda_grid;
  std::vector<int> n_copies_list;
  CoherentAmplitude input{2.0, 0.0};
  DetectorModel detector;
  std::optional<GainReport> gains_override;
  std::optional<CoherentPrior> prior;
  std::string prior_note;  // records how the prior width was specified
  std::optional<MonteCarloSettings> monte_carlo;
  SidebandTraceConfig spectra;
  std::string output_path = "out";
  std::uint64_t seed = 1;
  OutputFormat format = OutputFormat::both;  // CLI-level switch, not part of the file schema
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline int line_of_offset(const std::string& text, std::size_t offset) {
  int line = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') ++line;
  }
  return line;
}

inline int line_of_key(const std::string& text, const std::string& key) {
  const auto pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) {
    return 0;
  }
  return line_of_offset(text, pos);
}

/// Collects schema/range diagnostics, each anchored to the line of the
/// offending key where the key exists in the file.
class ConfigValidator {
 public:
  ConfigValidator(const std::string& text, const std::string& filename)
      : text_(text), filename_(filename) {}

  void error(const std::string& key, const std::string& message) {
    const int line = line_of_key(text_, key);
    std::string anchor = filename_;
    if (line > 0) {
      anchor += ":" + std::to_string(line);
    }
    diagnostics_.push_back(anchor + ": " + key + ": " + message);
  }

  const std::vector<std::string>& diagnostics() const { return diagnostics_; }
  bool ok() const { return diagnostics_.empty(); }

 private:
  const std::string& text_;
  std::string filename_;
  std::vector<std::string> diagnostics_;
};

inline void check_known_keys(const nlohmann::json& obj, const std::vector<std::string>& known,
                             const std::string& scope, ConfigValidator& v) {
  for (const auto& item : obj.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      v.error(item.key(), "unknown key" + (scope.empty() ? "" : " in " + scope));
    }
  }
}

}  // namespace detail

/// Parses and validates a config document.  Throws ConfigError carrying
/// one diagnostic per problem found (all problems are reported, not just
/// the first).
inline ExperimentConfig parse_config_text(const std::string& text, const std::string& filename) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const int line = detail::line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ConfigError({filename + ":" + std::to_string(line) + ": JSON parse error: " + e.what()});
  }

  detail::ConfigValidator v(text, filename);
  ExperimentConfig cfg;

  if (!doc.is_object()) {
    throw ConfigError({filename + ":1: top level must be a JSON object"});
  }
  detail::check_known_keys(doc,
                           {"schema_version", "mode", "lambda_grid", "n_copies", "input",
                            "detector", "gains_override", "prior", "monte_carlo", "spectra",
                            "output_path", "seed"},
                           "", v);

  if (!doc.contains("schema_version") || !doc["schema_version"].is_number_integer()) {
    v.error("schema_version", "required integer field");
  } else if (doc["schema_version"].get<int>() != 1) {
    v.error("schema_version", "unsupported version " + doc["schema_version"].dump() +
                                  " (this build reads version 1)");
  }

  if (!doc.contains("mode") || !doc["mode"].is_string()) {
    v.error("mode", "required string field, one of \"sweep\", \"single\", \"spectra\"");
  } else {
    const std::string mode = doc["mode"].get<std::string>();
    if (mode == "sweep") {
      cfg.mode = RunMode::sweep;
    } else if (mode == "single") {
      cfg.mode = RunMode::single;
    } else if (mode == "spectra") {
      cfg.mode = RunMode::spectra;
    } else {
      v.error("mode", "unknown mode \"" + mode + "\"");
    }
  }

  if (!doc.contains("lambda_grid") || !doc["lambda_grid"].is_array() ||
      doc["lambda_grid"].empty()) {
    v.error("lambda_grid", "required non-empty array of noise variances");
  } else {
    for (const auto& item : doc["lambda_grid"]) {
      if (!item.is_number() || item.get<double>() < 0.0) {
        v.error("lambda_grid", "entries must be numbers >= 0 (got " + item.dump() + ")");
        break;
      }
      cfg.lambda_grid.push_back(item.get<double>());
    }
  }

  if (!doc.contains("n_copies") || !doc["n_copies"].is_array() || doc["n_copies"].empty()) {
    v.error("n_copies", "required non-empty array of copy counts");
  } else {
    for (const auto& item : doc["n_copies"]) {
      if (!item.is_number_integer() || item.get<int>() < 2) {
        v.error("n_copies", "entries must be integers >= 2 (got " + item.dump() + ")");
        break;
      }
      cfg.n_copies_list.push_back(item.get<int>());
    }
  }

  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned() && !doc["seed"].is_number_integer()) {
      v.error("seed", "must be a non-negative integer");
    } else if (doc["seed"].is_number_integer() && doc["seed"].get<long long>() < 0) {
      v.error("seed", "must be a non-negative integer");
    } else {
      cfg.seed = doc["seed"].get<std::uint64_t>();
    }
  }

  if (doc.contains("input")) {
    const auto& in = doc["input"];
    if (!in.is_object()) {
      v.error("input", "must be an object {x_mean, p_mean}");
    } else {
      detail::check_known_keys(in, {"x_mean", "p_mean"}, "input", v);
      cfg.input.x_mean = in.value("x_mean", 0.0);
      cfg.input.p_mean = in.value("p_mean", 0.0);
    }
  }

  if (doc.contains("detector")) {
    const auto& det = doc["detector"];
    if (!det.is_object()) {
      v.error("detector", "must be an object");
    } else {
      detail::check_known_keys(det, {"eta", "visibility", "electronic_noise"}, "detector", v);
      cfg.detector.eta = det.value("eta", 1.0);
      cfg.detector.visibility = det.value("visibility", 1.0);
      cfg.detector.electronic_noise = det.value("electronic_noise", 0.0);
      if (!(cfg.detector.eta > 0.0 && cfg.detector.eta <= 1.0)) {
        v.error("eta", "must lie in (0, 1], got " + detail::format_double(cfg.detector.eta));
      }
      if (!(cfg.detector.visibility >= 0.0 && cfg.detector.visibility <= 1.0)) {
        v.error("visibility",
                "must lie in [0, 1], got " + detail::format_double(cfg.detector.visibility));
      }
      if (cfg.detector.electronic_noise < 0.0) {
        v.error("electronic_noise", "must be >= 0");
      }
    }
  }

  if (doc.contains("gains_override")) {
    const auto& g = doc["gains_override"];
    if (!g.is_object() || !g.contains("g_x") || !g.contains("g_p")) {
      v.error("gains_override", "must be an object {g_x, g_p}");
    } else {
      detail::check_known_keys(g, {"g_x", "g_p"}, "gains_override", v);
      cfg.gains_override = GainReport{g["g_x"].get<double>(), g["g_p"].get<double>()};
    }
  }

  if (doc.contains("prior")) {
    const auto& p = doc["prior"];
    if (!p.is_object()) {
      v.error("prior", "must be an object");
    } else {
      detail::check_known_keys(
          p, {"center", "variance_per_quadrature", "photon_number_uncertainty",
              "uncertainty_convention"},
          "prior", v);
      CoherentAmplitude center;
      if (p.contains("center") && p["center"].is_object()) {
        center.x_mean = p["center"].value("x_mean", 0.0);
        center.p_mean = p["center"].value("p_mean", 0.0);
      }
      const bool has_width = p.contains("variance_per_quadrature");
      const bool has_photon = p.contains("photon_number_uncertainty");
      if (has_width == has_photon) {
        v.error("prior",
                "specify exactly one of variance_per_quadrature or photon_number_uncertainty");
      } else if (has_width) {
        const double s2 = p["variance_per_quadrature"].get<double>();
        if (s2 < 0.0) {
          v.error("variance_per_quadrature", "must be >= 0");
        } else {
          cfg.prior = CoherentPrior{center, s2};
          cfg.prior_note = "prior width given directly: variance_per_quadrature=" +
                           detail::format_double(s2);
        }
      } else {
        const double u = p["photon_number_uncertainty"].get<double>();
        std::string convention = p.value("uncertainty_convention", "variance");
        if (u < 0.0) {
          v.error("photon_number_uncertainty", "must be >= 0");
        } else if (convention != "variance" && convention != "stddev") {
          v.error("uncertainty_convention", "must be \"variance\" or \"stddev\"");
        } else {
          const auto conv = convention == "variance" ? PhotonUncertaintyConvention::variance
                                                     : PhotonUncertaintyConvention::stddev;
          cfg.prior = prior_from_photon_uncertainty(u, conv, center);
          cfg.prior_note = "photon_number_uncertainty=" + detail::format_double(u) +
                           " read as " + convention + " -> variance_per_quadrature=" +
                           detail::format_double(cfg.prior->variance_per_quadrature);
        }
      }
    }
  }

  if (doc.contains("monte_carlo")) {
    const auto& mc = doc["monte_carlo"];
    if (!mc.is_object()) {
      v.error("monte_carlo", "must be an object");
    } else {
      detail::check_known_keys(mc, {"n_samples", "seed"}, "monte_carlo", v);
      MonteCarloSettings settings;
      if (mc.contains("n_samples")) {
        if (!mc["n_samples"].is_number_integer() || mc["n_samples"].get<long long>() < 2) {
          v.error("n_samples", "must be an integer >= 2");
        } else {
          settings.n_samples = mc["n_samples"].get<std::size_t>();
        }
      }
      if (mc.contains("seed")) {
        settings.seed = mc["seed"].get<std::uint64_t>();
      }
      cfg.monte_carlo = settings;
    }
  }

  if (doc.contains("spectra")) {
    const auto& sp = doc["spectra"];
    if (!sp.is_object()) {
      v.error("spectra", "must be an object");
    } else {
      detail::check_known_keys(sp,
                               {"carrier_freq_hz", "span_hz", "rbw_hz", "n_traces",
                                "modulation_depth", "sample_rate_hz", "segments_per_trace"},
                               "spectra", v);
      cfg.spectra.carrier_freq = sp.value("carrier_freq_hz", cfg.spectra.carrier_freq);
      cfg.spectra.span = sp.value("span_hz", cfg.spectra.span);
      cfg.spectra.rbw = sp.value("rbw_hz", cfg.spectra.rbw);
      cfg.spectra.n_traces = sp.value("n_traces", cfg.spectra.n_traces);
      cfg.spectra.modulation_depth = sp.value("modulation_depth", cfg.spectra.modulation_depth);
      cfg.spectra.sample_rate = sp.value("sample_rate_hz", cfg.spectra.sample_rate);
      cfg.spectra.segments_per_trace =
          sp.value("segments_per_trace", cfg.spectra.segments_per_trace);
      try {
        cfg.spectra.validate();
      } catch (const std::invalid_argument& e) {
        v.error("spectra", e.what());
      }
    }
  }

  if (doc.contains("output_path")) {
    if (!doc["output_path"].is_string()) {
      v.error("output_path", "must be a string");
    } else {
      cfg.output_path = doc["output_path"].get<std::string>();
    }
  }

  if (cfg.mode == RunMode::single &&
      (cfg.lambda_grid.size() != 1 || cfg.n_copies_list.size() != 1)) {
    v.error("mode", "single mode requires exactly one lambda_grid entry and one n_copies entry");
  }

  if (!v.ok()) {
    throw ConfigError(v.diagnostics());
  }
  return cfg;
}

/// Loads a config file.  Missing/unreadable file -> IoError; invalid
/// content -> ConfigError.
inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open config file: " + path);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path);
}

struct ValidationResult {
  ExitCode code = ExitCode::ok;
  std::vector<std::string> diagnostics;
};

/// Non-throwing front end for the `validate` subcommand.
inline ValidationResult validate_config(const std::string& path) {
  try {
    (void)load_config(path);
    return {ExitCode::ok, {}};
  } catch (const ConfigError& e) {
    return {ExitCode::config_error, e.diagnostics};
  } catch (const IoError& e) {
    return {ExitCode::io_error, {e.what()}};
  }
}

struct Provenance {
  std::string library_version = version_string();
  std::uint64_t seed = 0;
  std::optional<std::size_t> n_samples;
  std::string prior_note;
};

struct RunReport {
  std::vector<FidelityReport> cells;
  Provenance provenance;
  double max_pipeline_deviation = 0.0;
  bool consistency_ok = true;
  bool sampled_within_3se = true;
};

namespace detail {

inline int thread_cap() {
  unsigned cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CVPURIFY_THREADS")) {
    char* end = nullptr;
    const unsigned long parsed = std::strtoul(env, &end, 10);
    if (end != env && parsed >= 1) {
      cap = static_cast<unsigned>(std::min<unsigned long>(parsed, 1024));
    }
  }
  return static_cast<int>(cap);
}

/// Runs fn(0..count-1) on up to thread_cap() workers.  The work must be
/// independent per index; the first exception, if any, is rethrown.
template <typename F>
void parallel_for(std::size_t count, F&& fn) {
  const int n_threads = static_cast<int>(std::min<std::size_t>(thread_cap(), count));
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (int t = 0; t < n_threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) {
      throw IoError("cannot create directory " + path.parent_path().string() + ": " +
                    ec.message());
    }
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot open " + tmp.string() + " for writing");
    }
    out << content;
    out.flush();
    if (!out) {
      throw IoError("write failed for " + tmp.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

inline std::string csv_field(const std::optional<double>& value) {
  return value ? format_double(*value) : std::string{};
}

inline const char* mode_name(RunMode mode) {
  switch (mode) {
    case RunMode::sweep: return "sweep";
    case RunMode::single: return "single";
    case RunMode::spectra: return "spectra";
  }
  return "?";
}

inline std::string report_csv(const RunReport& report, const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "# cvpurify " << report.provenance.library_version << " mode=" << mode_name(cfg.mode)
      << " seed=" << report.provenance.seed;
  if (report.provenance.n_samples) {
    out << " samples=" << *report.provenance.n_samples;
  }
  out << "\n";
  if (!report.provenance.prior_note.empty()) {
    out << "# " << report.provenance.prior_note << "\n";
  }
  const bool sampled = report.provenance.n_samples.has_value();
  out << "lambda,n_copies,f_before,f_after,f_classical,f_ave,g_x,g_p,var_after,method";
  if (sampled) {
    out << ",var_x_sampled,var_x_se,var_p_sampled,var_p_se";
  }
  out << "\n";
  for (const auto& cell : report.cells) {
    out << format_double(cell.lambda) << "," << cell.n_copies << ","
        << format_double(cell.f_before) << "," << format_double(cell.f_after) << ","
        << format_double(cell.f_classical) << "," << csv_field(cell.f_ave) << ","
        << format_double(cell.gains.g_x) << "," << format_double(cell.gains.g_p) << ","
        << format_double(cell.variance_after) << ","
        << (cell.method == FidelityReport::Method::sampled ? "sampled" : "analytic");
    if (sampled) {
      out << "," << csv_field(cell.sampled_variance_x) << "," << csv_field(cell.sampled_se_x)
          << "," << csv_field(cell.sampled_variance_p) << "," << csv_field(cell.sampled_se_p);
    }
    out << "\n";
  }
  return out.str();
}

inline nlohmann::json config_echo(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["schema_version"] = cfg.schema_version;
  j["mode"] = mode_name(cfg.mode);
  j["lambda_grid"] = cfg.lambda_grid;
  j["n_copies"] = cfg.n_copies_list;
  j["input"] = {{"x_mean", cfg.input.x_mean}, {"p_mean", cfg.input.p_mean}};
  j["detector"] = {{"eta", cfg.detector.eta},
                   {"visibility", cfg.detector.visibility},
                   {"electronic_noise", cfg.detector.electronic_noise}};
  if (cfg.gains_override) {
    j["gains_override"] = {{"g_x", cfg.gains_override->g_x}, {"g_p", cfg.gains_override->g_p}};
  }
  if (cfg.prior) {
    j["prior"] = {{"center",
                   {{"x_mean", cfg.prior->center.x_mean}, {"p_mean", cfg.prior->center.p_mean}}},
                  {"variance_per_quadrature", cfg.prior->variance_per_quadrature},
                  {"photon_number_std", cfg.prior->photon_number_std()}};
  }
  if (cfg.monte_carlo) {
    j["monte_carlo"] = {{"n_samples", cfg.monte_carlo->n_samples}};
  }
  if (cfg.mode == RunMode::spectra) {
    j["spectra"] = {{"carrier_freq_hz", cfg.spectra.carrier_freq},
                    {"span_hz", cfg.spectra.span},
                    {"rbw_hz", cfg.spectra.rbw},
                    {"n_traces", cfg.spectra.n_traces},
                    {"modulation_depth", cfg.spectra.modulation_depth},
                    {"sample_rate_hz", cfg.spectra.sample_rate},
                    {"segments_per_trace", cfg.spectra.segments_per_trace}};
  }
  j["seed"] = cfg.seed;
  j["output_path"] = cfg.output_path;
  return j;
}

inline nlohmann::json report_json(const RunReport& report, const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["config"] = config_echo(cfg);
  j["provenance"] = {{"library_version", report.provenance.library_version},
                     {"seed", report.provenance.seed}};
  if (report.provenance.n_samples) {
    j["provenance"]["n_samples"] = *report.provenance.n_samples;
  }
  if (!report.provenance.prior_note.empty()) {
    j["provenance"]["prior_note"] = report.provenance.prior_note;
  }
  j["consistency"] = {{"pipeline_vs_analytic_ok", report.consistency_ok},
                      {"max_pipeline_deviation", report.max_pipeline_deviation},
                      {"sampled_within_3se", report.sampled_within_3se}};
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& cell : report.cells) {
    nlohmann::json c;
    c["lambda"] = cell.lambda;
    c["n_copies"] = cell.n_copies;
    c["variance_before"] = cell.variance_before;
    c["variance_after"] = cell.variance_after;
    c["f_before"] = cell.f_before;
    c["f_after"] = cell.f_after;
    c["f_classical"] = cell.f_classical;
    c["classical_is_extension"] = cell.classical_is_extension;
    if (cell.f_ave) c["f_ave"] = *cell.f_ave;
    c["gains"] = {{"g_x", cell.gains.g_x}, {"g_p", cell.gains.g_p}};
    c["method"] = cell.method == FidelityReport::Method::sampled ? "sampled" : "analytic";
    if (cell.sampled_variance_x) {
      c["sampled"] = {{"variance_x", *cell.sampled_variance_x},
                      {"se_x", *cell.sampled_se_x},
                      {"variance_p", *cell.sampled_variance_p},
                      {"se_p", *cell.sampled_se_p}};
    }
    cells.push_back(std::move(c));
  }
  j["cells"] = std::move(cells);
  return j;
}

struct CellOutcome {
  FidelityReport report;
  double pipeline_deviation = 0.0;
  bool sampled_ok = true;
};

/// Evaluates one (lambda, N) cell: closed forms, the full symplectic
/// pipeline as a cross-check, and optionally a seeded Monte Carlo
/// measurement run mirroring the detector chain.
inline CellOutcome compute_cell(const ExperimentConfig& cfg, double lambda, int n_copies,
                                std::size_t cell_index) {
  CellOutcome outcome;
  FidelityReport& cell = outcome.report;
  cell.lambda = lambda;
  cell.n_copies = n_copies;
  cell.variance_before = purified_variance(lambda, 1);
  cell.variance_after = purified_variance(lambda, n_copies);
  cell.f_before = purified_fidelity(lambda, 1);
  cell.f_after = purified_fidelity(lambda, n_copies);
  const ClassicalBaseline classical = classical_baseline(lambda, n_copies);
  cell.f_classical = classical.fidelity;
  cell.classical_is_extension = classical.extension;

  // Matrix pipeline: N noisy copies through the beam-splitter network.
  GaussianState noisy = coherent_state(
      std::vector<CoherentAmplitude>(static_cast<std::size_t>(n_copies), cfg.input));
  for (int mode = 0; mode < n_copies; ++mode) {
    noisy = additive_noise(noisy, mode, NoiseChannel::symmetric(lambda));
  }
  const GaussianState purified = run_purification(noisy, build_purifier(n_copies));
  const auto out_cov = purified.mode_cov(0);
  const auto out_mean = purified.mode_mean(0);
  double deviation = std::max(std::abs(out_cov(0, 0) - cell.variance_after),
                              std::abs(out_cov(1, 1) - cell.variance_after));
  deviation = std::max(deviation, std::abs(out_mean(0) - cfg.input.x_mean));
  deviation = std::max(deviation, std::abs(out_mean(1) - cfg.input.p_mean));
  outcome.pipeline_deviation = deviation;

  if (cfg.gains_override) {
    cell.gains = *cfg.gains_override;
  } else if (cfg.detector.visibility < 1.0) {
    const double g = visibility_gain(n_copies, cfg.detector.visibility);
    cell.gains = {g, g};
  } else {
    cell.gains = {1.0, 1.0};
  }

  if (cfg.prior) {
    cell.f_ave =
        average_fidelity(*cfg.prior, cell.gains, cell.variance_after, cell.variance_after);
  }

  if (cfg.monte_carlo) {
    cell.method = FidelityReport::Method::sampled;
    const std::uint64_t master = cfg.monte_carlo->seed.value_or(cfg.seed);
    // Measurement chain: detector loss and dark noise, then homodyne.
    GaussianState detected = purified;
    if (cfg.detector.eta < 1.0) {
      detected = loss_channel(detected, 0, cfg.detector.eta);
    }
    if (cfg.detector.electronic_noise > 0.0) {
      detected = additive_noise(detected, 0,
                                NoiseChannel::symmetric(cfg.detector.electronic_noise));
    }
    const double half_pi = 1.57079632679489661923;
    const double thetas[2] = {0.0, half_pi};
    double corrected[2] = {0.0, 0.0};
    double corrected_se[2] = {0.0, 0.0};
    for (int q = 0; q < 2; ++q) {
      HomodyneConfig hc;
      hc.theta = thetas[q];
      hc.n_samples = cfg.monte_carlo->n_samples;
      hc.seed = derive_stream_seed(master, 2 * cell_index + static_cast<std::uint64_t>(q));
      const SampleStats stats = estimate_stats(sample_quadrature(detected, 0, hc));
      const double without_dark = stats.variance - cfg.detector.electronic_noise;
      corrected[q] = correct_efficiency(without_dark, cfg.detector.eta).value;
      corrected_se[q] = stats.se_variance / cfg.detector.eta;
      if (std::abs(corrected[q] - cell.variance_after) > 3.0 * corrected_se[q]) {
        outcome.sampled_ok = false;
      }
    }
    cell.sampled_variance_x = corrected[0];
    cell.sampled_se_x = corrected_se[0];
    cell.sampled_variance_p = corrected[1];
    cell.sampled_se_p = corrected_se[1];
  }
  return outcome;
}

}  // namespace detail

inline constexpr double kPipelineAgreementTol = 1e-10;

/// Evaluates the full (lambda, N) grid, writes <out>/sweep.csv and
/// <out>/sweep.json atomically, and returns the report.  Cells execute in
/// parallel (capped by CVPURIFY_THREADS); output order and bytes do not
/// depend on the thread count.
inline RunReport run_sweep(const ExperimentConfig& cfg, const std::string& basename = "sweep") {
  const std::size_t n_cells = cfg.lambda_grid.size() * cfg.n_copies_list.size();
  std::vector<detail::CellOutcome> outcomes(n_cells);
  detail::parallel_for(n_cells, [&](std::size_t i) {
    const std::size_t lambda_idx = i / cfg.n_copies_list.size();
    const std::size_t copies_idx = i % cfg.n_copies_list.size();
    outcomes[i] =
        detail::compute_cell(cfg, cfg.lambda_grid[lambda_idx], cfg.n_copies_list[copies_idx], i);
  });

  RunReport report;
  report.provenance.seed = cfg.seed;
  if (cfg.monte_carlo) {
    report.provenance.n_samples = cfg.monte_carlo->n_samples;
  }
  report.provenance.prior_note = cfg.prior_note;
  for (auto& outcome : outcomes) {
    report.max_pipeline_deviation =
        std::max(report.max_pipeline_deviation, outcome.pipeline_deviation);
    report.sampled_within_3se = report.sampled_within_3se && outcome.sampled_ok;
    report.cells.push_back(std::move(outcome.report));
  }
  report.consistency_ok = report.max_pipeline_deviation < kPipelineAgreementTol;
  if (!report.consistency_ok) {
    throw ConsistencyError("matrix pipeline deviates from closed forms by " +
                           detail::format_double(report.max_pipeline_deviation) +
                           " (tolerance 1e-10)");
  }

  namespace fs = std::filesystem;
  const fs::path out_dir(cfg.output_path);
  if (cfg.format != OutputFormat::json) {
    detail::atomic_write(out_dir / (basename + ".csv"), detail::report_csv(report, cfg));
  }
  if (cfg.format != OutputFormat::csv) {
    detail::atomic_write(out_dir / (basename + ".json"),
                         detail::report_json(report, cfg).dump(2) + "\n");
  }
  return report;
}

/// Single (lambda, N) run through the full pipeline; in addition to the
/// sweep outputs it writes per-angle sample statistics when Monte Carlo is
/// enabled (columns theta, mean, variance, se).
inline RunReport run_single(const ExperimentConfig& cfg) {
  RunReport report = run_sweep(cfg, "single");

  if (cfg.monte_carlo) {
    const double lambda = cfg.lambda_grid.front();
    const int n_copies = cfg.n_copies_list.front();
    GaussianState noisy = coherent_state(
        std::vector<CoherentAmplitude>(static_cast<std::size_t>(n_copies), cfg.input));
    for (int mode = 0; mode < n_copies; ++mode) {
      noisy = additive_noise(noisy, mode, NoiseChannel::symmetric(lambda));
    }
    GaussianState detected = run_purification(noisy, build_purifier(n_copies));
    if (cfg.detector.eta < 1.0) {
      detected = loss_channel(detected, 0, cfg.detector.eta);
    }
    if (cfg.detector.electronic_noise > 0.0) {
      detected = additive_noise(detected, 0,
                                NoiseChannel::symmetric(cfg.detector.electronic_noise));
    }
    const std::uint64_t master = cfg.monte_carlo->seed.value_or(cfg.seed);
    const double pi = 3.14159265358979323846;
    const double thetas[3] = {0.0, pi / 4.0, pi / 2.0};
    std::ostringstream out;
    out << "# cvpurify " << report.provenance.library_version << " single-run homodyne stats"
        << " seed=" << cfg.seed << " samples=" << cfg.monte_carlo->n_samples << "\n";
    out << "# se column is the standard error of the variance estimate\n";
    out << "theta,mean,variance,se\n";
    for (int k = 0; k < 3; ++k) {
      HomodyneConfig hc;
      hc.theta = thetas[k];
      hc.n_samples = cfg.monte_carlo->n_samples;
      hc.seed = derive_stream_seed(master, 1000 + static_cast<std::uint64_t>(k));
      const SampleStats stats = estimate_stats(sample_quadrature(detected, 0, hc));
      out << detail::format_double(thetas[k]) << "," << detail::format_double(stats.mean) << ","
          << detail::format_double(stats.variance) << ","
          << detail::format_double(stats.se_variance) << "\n";
    }
    detail::atomic_write(std::filesystem::path(cfg.output_path) / "single_stats.csv", out.str());
  }
  return report;
}

struct SpectraReport {
  SpectrumResult input;
  SpectrumResult corrupted;
  SpectrumResult purified;
  double floor_db_input = 0.0;
  double floor_db_corrupted = 0.0;
  double floor_db_purified = 0.0;
};

/// Reproduces the three-spectrum measurement picture for the first
/// (lambda, N) cell: pure input (floor 0 dB), corrupted copies
/// (10 log10(1 + lambda)) and purified output (10 log10(1 + lambda/N)),
/// with the modulation peak unchanged across all three.
inline SpectraReport run_spectra(const ExperimentConfig& cfg) {
  const double lambda = cfg.lambda_grid.front();
  const int n_copies = cfg.n_copies_list.front();

  const double variances[3] = {1.0, 1.0 + lambda,
                               purified_variance(lambda, n_copies)};
  const char* names[3] = {"input", "corrupted", "purified"};
  SpectraReport report;
  SpectrumResult* results[3] = {&report.input, &report.corrupted, &report.purified};

  for (int k = 0; k < 3; ++k) {
    SidebandTraceConfig trace_cfg = cfg.spectra;
    trace_cfg.noise_variance = variances[k];
    trace_cfg.seed = derive_stream_seed(cfg.seed, 7000 + static_cast<std::uint64_t>(k));
    *results[k] = averaged_spectrum(trace_cfg);

    std::ostringstream out;
    out << "# cvpurify " << version_string() << " spectrum " << names[k]
        << " lambda=" << detail::format_double(lambda) << " n_copies=" << n_copies
        << " noise_variance=" << detail::format_double(variances[k]) << " seed=" << cfg.seed
        << "\n";
    out << "freq_hz,power_db\n";
    for (std::size_t b = 0; b < results[k]->freqs.size(); ++b) {
      out << detail::format_double(results[k]->freqs[b]) << ","
          << detail::format_double(results[k]->power_db[b]) << "\n";
    }
    detail::atomic_write(std::filesystem::path(cfg.output_path) /
                             ("spectrum_" + std::string(names[k]) + ".csv"),
                         out.str());
  }

  report.floor_db_input = 10.0 * std::log10(report.input.estimated_noise_floor);
  report.floor_db_corrupted = 10.0 * std::log10(report.corrupted.estimated_noise_floor);
  report.floor_db_purified = 10.0 * std::log10(report.purified.estimated_noise_floor);

  nlohmann::json j;
  j["config"] = detail::config_echo(cfg);
  j["floors_db"] = {{"input", report.floor_db_input},
                    {"corrupted", report.floor_db_corrupted},
                    {"purified", report.floor_db_purified}};
  j["expected_floors_db"] = {{"input", 0.0},
                             {"corrupted", 10.0 * std::log10(1.0 + lambda)},
                             {"purified", 10.0 * std::log10(purified_variance(lambda, n_copies))}};
  j["peak_power"] = {{"input", report.input.estimated_peak_power},
                     {"corrupted", report.corrupted.estimated_peak_power},
                     {"purified", report.purified.estimated_peak_power}};
  detail::atomic_write(std::filesystem::path(cfg.output_path) / "spectra.json",
                       j.dump(2) + "\n");
  return report;
}

}  // namespace cvpurify
