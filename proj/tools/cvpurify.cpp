// Command-line front end: sweep / single / spectra / validate.
//
// Exit codes: 0 success, 2 config error, 3 I/O error, 4 internal
// consistency failure (closed forms vs. matrix pipeline).

#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cvpurify/cvpurify.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  std::string format = "both";
};

void add_common(CLI::App* cmd, CommonOptions& opts, bool run_options) {
  cmd->add_option("--config", opts.config_path, "config file (JSON)")->required();
  if (run_options) {
    cmd->add_option("--out", opts.out_dir, "output directory (overrides config output_path)");
    cmd->add_option("--seed", opts.seed, "master seed (overrides config seed)");
    cmd->add_option("--samples", opts.samples,
                    "Monte Carlo samples per quadrature (enables sampling if unset in config)");
    cmd->add_option("--format", opts.format, "csv | json | both")
        ->check(CLI::IsMember({"csv", "json", "both"}));
  }
}

cvpurify::ExperimentConfig load_with_overrides(const CommonOptions& opts) {
  cvpurify::ExperimentConfig cfg = cvpurify::load_config(opts.config_path);
  if (opts.out_dir) cfg.output_path = *opts.out_dir;
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.samples) {
    if (!cfg.monte_carlo) cfg.monte_carlo = cvpurify::MonteCarloSettings{};
    cfg.monte_carlo->n_samples = *opts.samples;
  }
  if (opts.format == "csv") cfg.format = cvpurify::OutputFormat::csv;
  if (opts.format == "json") cfg.format = cvpurify::OutputFormat::json;
  return cfg;
}

void print_cells(const cvpurify::RunReport& report) {
  for (const auto& cell : report.cells) {
    std::printf("lambda=%-6g N=%-3d F_before=%.4f F_after=%.4f F_classical=%.4f", cell.lambda,
                cell.n_copies, cell.f_before, cell.f_after, cell.f_classical);
    if (cell.f_ave) {
      std::printf(" F_ave=%.4f", *cell.f_ave);
    }
    std::printf("\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cvpurify: coherent-state purification simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cvpurify::version_string());

  CommonOptions sweep_opts, single_opts, spectra_opts, validate_opts;
  CLI::App* sweep = app.add_subcommand("sweep", "evaluate a (lambda, N) grid");
  CLI::App* single = app.add_subcommand("single", "full pipeline for one (lambda, N)");
  CLI::App* spectra = app.add_subcommand("spectra", "input/corrupted/purified sideband spectra");
  CLI::App* validate = app.add_subcommand("validate", "check a config file");
  add_common(sweep, sweep_opts, true);
  add_common(single, single_opts, true);
  add_common(spectra, spectra_opts, true);
  add_common(validate, validate_opts, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) {
      const auto result = cvpurify::validate_config(validate_opts.config_path);
      for (const auto& diag : result.diagnostics) {
        std::fprintf(stderr, "%s\n", diag.c_str());
      }
      if (result.code == cvpurify::ExitCode::ok) {
        std::printf("%s: ok\n", validate_opts.config_path.c_str());
      }
      return static_cast<int>(result.code);
    }

    if (sweep->parsed()) {
      const auto cfg = load_with_overrides(sweep_opts);
      const auto report = cvpurify::run_sweep(cfg);
      print_cells(report);
      std::printf("wrote %s (max pipeline deviation %.3g)\n", cfg.output_path.c_str(),
                  report.max_pipeline_deviation);
    } else if (single->parsed()) {
      auto cfg = load_with_overrides(single_opts);
      const auto report = cvpurify::run_single(cfg);
      print_cells(report);
      const auto& cell = report.cells.front();
      std::printf("variance: %.6g -> %.6g (gains g_x=%.4g g_p=%.4g)\n", cell.variance_before,
                  cell.variance_after, cell.gains.g_x, cell.gains.g_p);
      if (cell.sampled_variance_x) {
        std::printf("sampled variances (efficiency-corrected): x=%.4f+-%.4f p=%.4f+-%.4f\n",
                    *cell.sampled_variance_x, 3.0 * *cell.sampled_se_x, *cell.sampled_variance_p,
                    3.0 * *cell.sampled_se_p);
      }
    } else if (spectra->parsed()) {
      const auto cfg = load_with_overrides(spectra_opts);
      const auto report = cvpurify::run_spectra(cfg);
      std::printf("noise floors (dB re shot noise): input %.2f, corrupted %.2f, purified %.2f\n",
                  report.floor_db_input, report.floor_db_corrupted, report.floor_db_purified);
      std::printf("modulation peak power (vacuum units): %.4g / %.4g / %.4g\n",
                  report.input.estimated_peak_power, report.corrupted.estimated_peak_power,
                  report.purified.estimated_peak_power);
    }
    return 0;
  } catch (const cvpurify::ConfigError& e) {
    for (const auto& diag : e.diagnostics) {
      std::fprintf(stderr, "%s\n", diag.c_str());
    }
    return static_cast<int>(cvpurify::ExitCode::config_error);
  } catch (const cvpurify::IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return static_cast<int>(cvpurify::ExitCode::io_error);
  } catch (const cvpurify::ConsistencyError& e) {
    std::fprintf(stderr, "internal consistency failure: %s\n", e.what());
    return static_cast<int>(cvpurify::ExitCode::consistency_error);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
