#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cvpurify/harness.hpp"

using namespace cvpurify;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("cvpurify_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string basic_sweep_config(const std::string& out_dir) {
  return R"({
  "schema_version": 1,
  "mode": "sweep",
  "lambda_grid": [0, 7, 10],
  "n_copies": [2, 3],
  "input": {"x_mean": 2.0, "p_mean": 1.0},
  "seed": 20240515,
  "output_path": ")" + out_dir + R"("
})";
}

}  // namespace

TEST_CASE("valid config parses with defaults", "[harness]") {
  const auto cfg = parse_config_text(basic_sweep_config("out"), "test.json");
  REQUIRE(cfg.mode == RunMode::sweep);
  REQUIRE(cfg.lambda_grid == std::vector<double>{0.0, 7.0, 10.0});
  REQUIRE(cfg.n_copies_list == std::vector<int>{2, 3});
  REQUIRE(cfg.detector.eta == 1.0);
  REQUIRE(cfg.seed == 20240515);
  REQUIRE_FALSE(cfg.prior.has_value());
  REQUIRE_FALSE(cfg.monte_carlo.has_value());
}

TEST_CASE("config diagnostics name the offending field and line", "[harness]") {
  const std::string bad = R"({
  "schema_version": 1,
  "mode": "sweep",
  "lambda_grid": [0, -1],
  "n_copies": [2],
  "detector": {"visibility": 1.3}
})";
  try {
    parse_config_text(bad, "bad.json");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    REQUIRE(e.diagnostics.size() == 2);
    REQUIRE(e.diagnostics[0].find("lambda_grid") != std::string::npos);
    REQUIRE(e.diagnostics[0].find("bad.json:4") != std::string::npos);
    REQUIRE(e.diagnostics[1].find("visibility") != std::string::npos);
    REQUIRE(e.diagnostics[1].find("bad.json:6") != std::string::npos);
  }
}

TEST_CASE("config rejects structural problems", "[harness]") {
  REQUIRE_THROWS_AS(parse_config_text("{ not json", "x.json"), ConfigError);
  REQUIRE_THROWS_AS(parse_config_text(R"({"schema_version": 1, "mode": "sweep",
       "lambda_grid": [], "n_copies": [2]})",
                                      "x.json"),
                    ConfigError);
  REQUIRE_THROWS_AS(parse_config_text(R"({"schema_version": 1, "mode": "warp",
       "lambda_grid": [1], "n_copies": [2]})",
                                      "x.json"),
                    ConfigError);
  REQUIRE_THROWS_AS(parse_config_text(R"({"schema_version": 2, "mode": "sweep",
       "lambda_grid": [1], "n_copies": [2]})",
                                      "x.json"),
                    ConfigError);
  REQUIRE_THROWS_AS(parse_config_text(R"({"schema_version": 1, "mode": "sweep",
       "lambda_grid": [1], "n_copies": [1]})",
                                      "x.json"),
                    ConfigError);
  REQUIRE_THROWS_AS(parse_config_text(R"({"schema_version": 1, "mode": "sweep",
       "lambda_grid": [1], "n_copies": [2], "typo_field": 3})",
                                      "x.json"),
                    ConfigError);
  // single mode wants a 1x1 grid
  REQUIRE_THROWS_AS(parse_config_text(R"({"schema_version": 1, "mode": "single",
       "lambda_grid": [1, 2], "n_copies": [2]})",
                                      "x.json"),
                    ConfigError);
}

TEST_CASE("validate_config distinguishes I/O from schema problems", "[harness]") {
  const auto missing = validate_config("/nonexistent/config.json");
  REQUIRE(missing.code == ExitCode::io_error);
  REQUIRE_FALSE(missing.diagnostics.empty());

  const auto dir = fresh_dir("validate");
  const auto good_path = dir / "good.json";
  {
    std::ofstream out(good_path);
    out << basic_sweep_config((dir / "out").string());
  }
  REQUIRE(validate_config(good_path.string()).code == ExitCode::ok);

  const auto bad_path = dir / "bad.json";
  {
    std::ofstream out(bad_path);
    out << R"({"schema_version": 1, "mode": "sweep", "lambda_grid": [-3], "n_copies": [2]})";
  }
  const auto bad = validate_config(bad_path.string());
  REQUIRE(bad.code == ExitCode::config_error);
  REQUIRE(bad.diagnostics[0].find("lambda_grid") != std::string::npos);
}

TEST_CASE("sweep writes the worked-example row and cross-checks the pipeline", "[harness]") {
  const auto dir = fresh_dir("sweep");
  auto cfg = parse_config_text(basic_sweep_config((dir / "out").string()), "cfg.json");
  const auto report = run_sweep(cfg);

  REQUIRE(report.cells.size() == 6);
  REQUIRE(report.consistency_ok);
  REQUIRE(report.max_pipeline_deviation < 1e-10);

  // lambda = 7, N = 2 is cell index 2 (row-major over lambda, then N).
  const auto& cell = report.cells[2];
  REQUIRE(cell.lambda == 7.0);
  REQUIRE(cell.n_copies == 2);
  REQUIRE(cell.f_before == Approx(2.0 / 9.0).margin(1e-12));
  REQUIRE(cell.f_after == Approx(4.0 / 11.0).margin(1e-12));
  REQUIRE(cell.f_classical == Approx(4.0 / 13.0).margin(1e-12));
  REQUIRE(cell.variance_after == Approx(4.5).margin(1e-12));
  REQUIRE_FALSE(cell.f_ave.has_value());

  REQUIRE(fs::exists(dir / "out" / "sweep.csv"));
  REQUIRE(fs::exists(dir / "out" / "sweep.json"));
  const std::string csv = read_file(dir / "out" / "sweep.csv");
  REQUIRE(csv.find("lambda,n_copies,f_before,f_after,f_classical,f_ave,g_x,g_p,var_after,"
                   "method") != std::string::npos);
  REQUIRE(csv.find("7,2,0.2222222222,0.3636363636,0.3076923077,,1,1,4.5,analytic") !=
          std::string::npos);
}

TEST_CASE("identical config and seed give byte-identical outputs", "[harness]") {
  const auto dir = fresh_dir("det");
  std::string text = basic_sweep_config((dir / "out").string());
  const std::string mc_block = R"(,
  "monte_carlo": {"n_samples": 5000})";
  text.insert(text.rfind('\n', text.rfind('}') - 1), mc_block);
  const auto cfg = parse_config_text(text, "cfg.json");

  run_sweep(cfg);
  const std::string csv_first = read_file(dir / "out" / "sweep.csv");
  const std::string json_first = read_file(dir / "out" / "sweep.json");
  fs::remove_all(dir / "out");

  run_sweep(cfg);
  REQUIRE(read_file(dir / "out" / "sweep.csv") == csv_first);
  REQUIRE(read_file(dir / "out" / "sweep.json") == json_first);
  REQUIRE(csv_first.find("var_x_sampled,var_x_se,var_p_sampled,var_p_se") != std::string::npos);
}

TEST_CASE("thread cap does not change sweep bytes", "[harness]") {
  const auto dir_a = fresh_dir("thr_a");
  const auto dir_b = fresh_dir("thr_b");
  auto cfg_a = parse_config_text(basic_sweep_config((dir_a / "out").string()), "cfg.json");
  auto cfg_b = parse_config_text(basic_sweep_config((dir_b / "out").string()), "cfg.json");

  setenv("CVPURIFY_THREADS", "1", 1);
  run_sweep(cfg_a);
  setenv("CVPURIFY_THREADS", "8", 1);
  run_sweep(cfg_b);
  unsetenv("CVPURIFY_THREADS");

  REQUIRE(read_file(dir_a / "out" / "sweep.csv") == read_file(dir_b / "out" / "sweep.csv"));
}

TEST_CASE("single run reports the full pipeline with detector corrections", "[harness]") {
  const auto dir = fresh_dir("single");
  const std::string text = R"({
  "schema_version": 1,
  "mode": "single",
  "lambda_grid": [7],
  "n_copies": [2],
  "input": {"x_mean": 2.0, "p_mean": 1.0},
  "detector": {"eta": 0.8},
  "gains_override": {"g_x": 0.96, "g_p": 0.99},
  "prior": {"photon_number_uncertainty": 100, "uncertainty_convention": "variance"},
  "monte_carlo": {"n_samples": 100000},
  "seed": 91,
  "output_path": ")" + (dir / "out").string() + R"("
})";
  const auto cfg = parse_config_text(text, "single.json");
  REQUIRE(cfg.prior.has_value());
  REQUIRE(cfg.prior->variance_per_quadrature == Approx(20.0).margin(1e-9));

  const auto report = run_single(cfg);
  const auto& cell = report.cells.front();
  REQUIRE(cell.variance_after == Approx(4.5).margin(1e-12));
  REQUIRE(cell.f_after == Approx(4.0 / 11.0).margin(1e-12));
  REQUIRE(cell.gains.g_x == 0.96);
  REQUIRE(cell.gains.g_p == 0.99);
  REQUIRE(cell.f_ave.has_value());
  REQUIRE(*cell.f_ave == Approx(0.37).margin(0.01));
  REQUIRE(cell.method == FidelityReport::Method::sampled);

  // Efficiency-corrected sampled variances agree with the analytic 4.5.
  REQUIRE(cell.sampled_variance_x.has_value());
  REQUIRE(std::abs(*cell.sampled_variance_x - 4.5) < 3.0 * *cell.sampled_se_x);
  REQUIRE(std::abs(*cell.sampled_variance_p - 4.5) < 3.0 * *cell.sampled_se_p);
  REQUIRE(report.sampled_within_3se);

  REQUIRE(fs::exists(dir / "out" / "single.csv"));
  REQUIRE(fs::exists(dir / "out" / "single_stats.csv"));
  const std::string stats = read_file(dir / "out" / "single_stats.csv");
  REQUIRE(stats.find("theta,mean,variance,se") != std::string::npos);
  REQUIRE(report.provenance.prior_note.find("variance_per_quadrature=20") != std::string::npos);
}

TEST_CASE("ideal single run summarizes to the closed forms", "[harness]") {
  const auto dir = fresh_dir("single_ideal");
  const std::string text = R"({
  "schema_version": 1,
  "mode": "single",
  "lambda_grid": [0],
  "n_copies": [2],
  "seed": 5,
  "output_path": ")" + (dir / "out").string() + R"("
})";
  const auto report = run_single(parse_config_text(text, "cfg.json"));
  REQUIRE(report.cells.front().f_after == 1.0);
  REQUIRE(report.cells.front().f_before == 1.0);
  REQUIRE(report.cells.front().variance_after == 1.0);
}

TEST_CASE("visibility model fills the gains when no override is given", "[harness]") {
  const auto dir = fresh_dir("vis");
  const std::string text = R"({
  "schema_version": 1,
  "mode": "single",
  "lambda_grid": [7],
  "n_copies": [2],
  "detector": {"visibility": 0.97},
  "seed": 6,
  "output_path": ")" + (dir / "out").string() + R"("
})";
  const auto report = run_single(parse_config_text(text, "cfg.json"));
  REQUIRE(report.cells.front().gains.g_x == Approx(0.985).margin(1e-12));
  REQUIRE(report.cells.front().gains.g_p == Approx(0.985).margin(1e-12));
}

TEST_CASE("spectra mode reproduces the three noise floors", "[harness][statistical]") {
  const auto dir = fresh_dir("spectra");
  const std::string text = R"({
  "schema_version": 1,
  "mode": "spectra",
  "lambda_grid": [7],
  "n_copies": [2],
  "spectra": {"modulation_depth": 54.26},
  "seed": 314159,
  "output_path": ")" + (dir / "out").string() + R"("
})";
  const auto cfg = parse_config_text(text, "cfg.json");
  const auto report = run_spectra(cfg);
  REQUIRE(std::abs(report.floor_db_input - 0.0) < 0.5);
  REQUIRE(std::abs(report.floor_db_corrupted - 10.0 * std::log10(8.0)) < 0.5);
  REQUIRE(std::abs(report.floor_db_purified - 10.0 * std::log10(4.5)) < 0.5);
  for (const char* name : {"spectrum_input.csv", "spectrum_corrupted.csv",
                           "spectrum_purified.csv", "spectra.json"}) {
    REQUIRE(fs::exists(dir / "out" / name));
  }
  const std::string csv = read_file(dir / "out" / "spectrum_input.csv");
  REQUIRE(csv.find("freq_hz,power_db") != std::string::npos);
}

TEST_CASE("noiseless spectra sit at the shot-noise level", "[harness][statistical]") {
  const auto dir = fresh_dir("spectra0");
  const std::string text = R"({
  "schema_version": 1,
  "mode": "spectra",
  "lambda_grid": [0],
  "n_copies": [2],
  "spectra": {"modulation_depth": 54.26},
  "seed": 2718,
  "output_path": ")" + (dir / "out").string() + R"("
})";
  const auto report = run_spectra(parse_config_text(text, "cfg.json"));
  REQUIRE(std::abs(report.floor_db_input) < 0.5);
  REQUIRE(std::abs(report.floor_db_corrupted) < 0.5);
  REQUIRE(std::abs(report.floor_db_purified) < 0.5);
}

TEST_CASE("csv format flag suppresses the json twin", "[harness]") {
  const auto dir = fresh_dir("fmt");
  auto cfg = parse_config_text(basic_sweep_config((dir / "out").string()), "cfg.json");
  cfg.format = OutputFormat::csv;
  run_sweep(cfg);
  REQUIRE(fs::exists(dir / "out" / "sweep.csv"));
  REQUIRE_FALSE(fs::exists(dir / "out" / "sweep.json"));
}
