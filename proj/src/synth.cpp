#include <cmath>
#include <numbers>

#include "vrae/dataset.hpp"

namespace vrae::data {

double SynthConfig::highest_frequency_hz() const {
  double f = rotation_hz * harmonics;
  for (const auto& z : zones) f = std::max(f, rotation_hz + z.sideband_shift_hz);
  return f;
}

void SynthConfig::validate() const {
  if (!(rotation_hz > 0.0)) throw InvalidArgument("synth: rotation frequency must be positive");
  if (harmonics < 1) throw InvalidArgument("synth: need at least one harmonic");
  if (!(noise_std >= 0.0)) throw InvalidArgument("synth: noise std must be non-negative");
  if (!(steady_level >= 0.0)) throw InvalidArgument("synth: steady level must be non-negative");
  for (const auto& z : zones)
    if (z.sideband_shift_hz < 0.0 || z.sideband_gain < 0.0 || z.amplitude_gain < 0.0)
      throw InvalidArgument("synth: zone modulation coefficients must be non-negative");
  if (!(sample_rate_hz > 2.0 * highest_frequency_hz()))
    throw InvalidArgument("synth: sample rate must exceed twice the highest signal frequency (" +
                          std::to_string(highest_frequency_hz()) + " Hz)");
}

TimeSeriesRecord synthesize(const SynthConfig& config, const IceConfig& ice, Eigen::Index steps,
                            std::string sim_id) {
  config.validate();
  if (steps < 1) throw InvalidArgument("synthesize: need at least one time step");
  const ClassLabel zone = ice.label();
  const double mass = ice.zone1 + ice.zone2 + ice.zone3;

  constexpr double two_pi = 2.0 * std::numbers::pi;
  SeededRng rng(config.seed);
  const double rotor_phase = two_pi * rng.uniform();
  // Per-harmonic phase lags, shared by all blades of one turbine.
  std::vector<double> flap_lag(static_cast<std::size_t>(config.harmonics));
  std::vector<double> edge_lag(static_cast<std::size_t>(config.harmonics));
  for (int h = 0; h < config.harmonics; ++h) {
    flap_lag[static_cast<std::size_t>(h)] = 0.3 * rng.uniform();
    edge_lag[static_cast<std::size_t>(h)] = 0.3 * rng.uniform();
  }

  TimeSeriesRecord rec;
  rec.sim_id = std::move(sim_id);
  rec.config = ice;
  rec.feature_names = blade_acceleration_features();
  rec.values.resize(steps, 6);

  const ZoneModulation none{};
  const ZoneModulation& mod =
      zone == kNormal ? none : config.zones[static_cast<std::size_t>(zone - 1)];
  const double dt = 1.0 / config.sample_rate_hz;

  for (Eigen::Index t = 0; t < steps; ++t) {
    const double time = static_cast<double>(t) * dt;
    const double theta = two_pi * config.rotation_hz * time + rotor_phase;
    const double sideband_angle = two_pi * (config.rotation_hz + mod.sideband_shift_hz) * time;
    for (int blade = 0; blade < 3; ++blade) {
      const double azimuth = two_pi * blade / 3.0;
      double flap = config.steady_level, edge = config.steady_level;
      for (int h = 1; h <= config.harmonics; ++h) {
        const double arg = h * (theta + azimuth);
        flap += std::sin(arg + flap_lag[static_cast<std::size_t>(h - 1)]) / h;
        edge += 1.5 * std::cos(arg + edge_lag[static_cast<std::size_t>(h - 1)]) / h;
      }
      // The iced blade takes the full effect, its neighbours half.
      const double weight = blade == 0 ? 1.0 : 0.5;
      const double gain = 1.0 + mod.amplitude_gain * mass * weight;
      flap *= gain;
      edge *= gain;
      if (mass > 0.0) {
        const double sb = mod.sideband_gain * mass * weight;
        const double phase = sideband_angle + rotor_phase + mod.phase_coupling * azimuth;
        flap += sb * std::sin(phase);
        edge += sb * std::cos(phase);
      }
      rec.values(t, 2 * blade) = flap;
      rec.values(t, 2 * blade + 1) = edge;
    }
  }
  if (config.noise_std > 0.0)
    rec.values += config.noise_std * sample_standard_gaussian(rng, steps, 6);
  return rec;
}

}  // namespace vrae::data
