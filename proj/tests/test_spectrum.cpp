#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cvpurify/spectrum.hpp"

using namespace cvpurify;
using Catch::Approx;

namespace {

SidebandTraceConfig figure_config(double noise_variance, std::uint64_t seed) {
  SidebandTraceConfig cfg;
  cfg.carrier_freq = 15.0e6;
  cfg.span = 40.0e3;
  cfg.rbw = 3.0e3;
  cfg.n_traces = 10;
  cfg.modulation_depth = 2.0 * std::sqrt(736.0);  // ~736 photons
  cfg.noise_variance = noise_variance;
  cfg.sample_rate = 36.0e6;
  cfg.seed = seed;
  return cfg;
}

double to_db(double ratio) { return 10.0 * std::log10(ratio); }

}  // namespace

TEST_CASE("trace simulation is seeded and validates its config", "[spectrum]") {
  const auto cfg = figure_config(1.0, 5);
  const auto a = simulate_sideband_trace(cfg);
  const auto b = simulate_sideband_trace(cfg);
  REQUIRE(a == b);
  REQUIRE(a.size() == cfg.trace_length());

  SidebandTraceConfig nyquist = cfg;
  nyquist.sample_rate = 20.0e6;
  REQUIRE_THROWS_AS(simulate_sideband_trace(nyquist), std::invalid_argument);

  SidebandTraceConfig bad_rbw = cfg;
  bad_rbw.rbw = cfg.span;
  REQUIRE_THROWS_AS(simulate_sideband_trace(bad_rbw), std::invalid_argument);
}

TEST_CASE("power spectrum rejects a trace shorter than two segments", "[spectrum]") {
  const auto cfg = figure_config(1.0, 5);
  std::vector<double> short_trace(cfg.segment_length(), 0.0);
  REQUIRE_THROWS_AS(power_spectrum(short_trace, cfg), std::invalid_argument);
}

TEST_CASE("pure shot noise sits at 0 dB", "[spectrum][statistical]") {
  auto cfg = figure_config(1.0, 11);
  cfg.modulation_depth = 0.0;
  const auto spectrum = averaged_spectrum(cfg);
  REQUIRE(std::abs(to_db(spectrum.estimated_noise_floor)) < 0.3);
}

TEST_CASE("white-noise floor calibration across variances", "[spectrum][statistical]") {
  int tag = 0;
  for (double variance : {1.0, 4.5, 8.0}) {
    auto cfg = figure_config(variance, 100 + tag++);
    const auto spectrum = averaged_spectrum(cfg);
    const double floor_db = to_db(spectrum.estimated_noise_floor);
    REQUIRE(std::abs(floor_db - to_db(variance)) < 0.5);
  }
}

TEST_CASE("modulation peak is invariant under the noise level", "[spectrum][statistical]") {
  // Unity-gain purification changes the floor, never the peak.
  const auto input = averaged_spectrum(figure_config(1.0, 21));
  const auto corrupted = averaged_spectrum(figure_config(8.0, 22));
  const auto purified = averaged_spectrum(figure_config(4.5, 23));

  const double peak_db_input = to_db(input.estimated_peak_power);
  REQUIRE(std::abs(to_db(corrupted.estimated_peak_power) - peak_db_input) < 0.5);
  REQUIRE(std::abs(to_db(purified.estimated_peak_power) - peak_db_input) < 0.5);

  // And the peak estimate recovers the injected modulation power A^2/2.
  const double expected_power = 0.5 * 4.0 * 736.0;
  REQUIRE(input.estimated_peak_power == Approx(expected_power).epsilon(0.06));

  // Floors differ as the variances dictate.
  REQUIRE(to_db(corrupted.estimated_noise_floor) - to_db(input.estimated_noise_floor) ==
          Approx(9.03).margin(0.7));
  REQUIRE(to_db(corrupted.estimated_noise_floor) - to_db(purified.estimated_noise_floor) ==
          Approx(2.5).margin(0.7));
}

TEST_CASE("carrier-free trace shows no peak above the floor", "[spectrum][statistical]") {
  auto cfg = figure_config(1.0, 31);
  cfg.modulation_depth = 0.0;
  const auto spectrum = averaged_spectrum(cfg);
  // The integrated excess around the carrier is statistical residue only;
  // compare against the modulated case, five orders of magnitude larger.
  REQUIRE(spectrum.estimated_peak_power < 1.0);
}

TEST_CASE("spectrum bins cover the span around the carrier", "[spectrum]") {
  const auto cfg = figure_config(1.0, 41);
  const auto spectrum = averaged_spectrum(cfg);
  REQUIRE(spectrum.freqs.size() == spectrum.power_db.size());
  REQUIRE(spectrum.freqs.front() == Approx(cfg.carrier_freq - 6.0 * cfg.rbw));
  REQUIRE(spectrum.freqs.back() == Approx(cfg.carrier_freq + 6.0 * cfg.rbw));
}
