#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vrae/numerics.hpp"

namespace vrae::data {

/// Class tag carried by every window: 0 is normal, 1..3 is the iced zone.
using ClassLabel = int;
inline constexpr ClassLabel kNormal = 0;

/// The six blade accelerations used for training (flapwise x, edgewise y).
inline const std::vector<std::string>& blade_acceleration_features() {
  static const std::vector<std::string> names = {"Spn1ALxb1", "Spn1ALyb1", "Spn1ALxb2",
                                                 "Spn1ALyb2", "Spn1ALxb3", "Spn1ALyb3"};
  return names;
}

std::string class_name(ClassLabel label);

/// Ice mass in kilograms on each of the three blade zones, written "x-y-z".
struct IceConfig {
  double zone1 = 0.0;
  double zone2 = 0.0;
  double zone3 = 0.0;

  /// Parses "0.4-0.6-0.8". Rejects negative or malformed masses.
  static IceConfig parse(std::string_view text);
  std::string to_string() const;

  /// kNormal when ice-free, otherwise the index of the single iced zone.
  /// Throws DataError when more than one zone carries ice.
  ClassLabel label() const;

  bool operator==(const IceConfig&) const = default;
};

struct TimeSeriesRecord {
  std::string sim_id;
  IceConfig config;
  Matrix values;  // T x D
  std::vector<std::string> feature_names;

  Eigen::Index steps() const { return values.rows(); }
  Eigen::Index features() const { return values.cols(); }
};

/// Per-feature training range.
struct MinMaxScaler {
  Vector min;
  Vector max;

  Eigen::Index features() const { return min.size(); }
};

struct WindowedDataset {
  std::vector<Matrix> windows;  // each L x d
  std::vector<ClassLabel> labels;
  std::vector<std::string> sim_ids;  // source simulation of each window
  std::vector<std::string> feature_names;
  MinMaxScaler scaler;
  Eigen::Index window_length = 0;
  Eigen::Index stride = 0;

  std::size_t size() const { return windows.size(); }
  Eigen::Index features() const { return windows.empty() ? 0 : windows.front().cols(); }
  /// Distinct labels in ascending order.
  std::vector<ClassLabel> classes() const;
  /// Keeps only the windows whose index is listed, in that order.
  WindowedDataset subset(const std::vector<std::size_t>& indices) const;
};

// ---------------------------------------------------------------------------
// Synthetic turbine generator
// ---------------------------------------------------------------------------

/// How ice in one zone modulates the blade signals. The iced blade's
/// signal scales by (1 + amplitude_gain * mass) and its neighbours' by half
/// that gain; a side-band at rotation + sideband_shift_hz of strength
/// sideband_gain * mass (halved on the neighbours) is added, phase-coupled
/// by phase_coupling * blade azimuth.
struct ZoneModulation {
  double amplitude_gain = 0.0;
  double sideband_shift_hz = 0.0;
  double sideband_gain = 0.0;
  double phase_coupling = 0.0;
};

struct SynthConfig {
  double rotation_hz = 0.2;
  double sample_rate_hz = 200.0;
  int harmonics = 3;
  std::array<ZoneModulation, 3> zones = {
      ZoneModulation{1.05, 2.0, 1.0, 1.0},
      ZoneModulation{0.75, 3.0, 1.0, 0.5},
      ZoneModulation{0.45, 4.5, 1.0, 0.0},
  };
  double noise_std = 0.05;
  /// Constant (centripetal) part of every blade signal; scaled by the ice
  /// gain like the harmonics.
  double steady_level = 10.0;
  std::uint64_t seed = 0;

  /// Highest frequency any component of the generated signal can carry.
  double highest_frequency_hz() const;
  void validate() const;
};

/// Six-channel record (flap/edge acceleration per blade) of `steps` samples. Blade 1 carries
/// the ice; blades are 120 degrees apart in azimuth.
TimeSeriesRecord synthesize(const SynthConfig& config, const IceConfig& ice, Eigen::Index steps,
                            std::string sim_id = "synthetic");

// ---------------------------------------------------------------------------
// I/O
// ---------------------------------------------------------------------------

/// Sidecar file: one `sim_id,x-y-z` line per simulation.
std::map<std::string, IceConfig> load_metadata(const std::filesystem::path& path);
void write_metadata(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, IceConfig>>& entries);

/// Header row of feature names followed by one comma-separated row per step.
TimeSeriesRecord load_csv(const std::filesystem::path& path, std::string sim_id,
                          const IceConfig& config);
/// Looks the file stem up in the sidecar metadata.
TimeSeriesRecord load_csv(const std::filesystem::path& path,
                          const std::map<std::string, IceConfig>& metadata);
void write_csv(const TimeSeriesRecord& record, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

TimeSeriesRecord select_features(const TimeSeriesRecord& record,
                                 const std::vector<std::string>& names);

/// Range over every row of every grid (records or windows, T x D each).
MinMaxScaler fit_minmax(std::span<const Matrix> grids);
MinMaxScaler fit_minmax(std::span<const TimeSeriesRecord> records);

/// x -> 2 (x - min) / (max - min) - 1, saturated to [-1, 1]; constant
/// features map to 0.
Matrix apply_minmax(const Matrix& grid, const MinMaxScaler& scaler);
TimeSeriesRecord apply_minmax(const TimeSeriesRecord& record, const MinMaxScaler& scaler);

/// floor((T - L) / stride) + 1 windows starting at 0, stride, 2 stride, ...
std::vector<Matrix> window(const Matrix& values, Eigen::Index length, Eigen::Index stride);
std::vector<Matrix> window(const TimeSeriesRecord& record, Eigen::Index length,
                           Eigen::Index stride);

/// Windows every record (labels from each record's IceConfig), without scaling.
WindowedDataset make_windows(std::span<const TimeSeriesRecord> records, Eigen::Index length,
                             Eigen::Index stride);

/// Fits the scaler on `train` and applies it to both datasets in place.
MinMaxScaler scale_split(WindowedDataset& train, WindowedDataset& test);

/// Stratified shuffled partition. Each class contributes round-to-total
/// (largest remainder) of its windows to the training side.
std::pair<WindowedDataset, WindowedDataset> split(const WindowedDataset& dataset,
                                                  double train_fraction, std::uint64_t seed);

/// Uniform per-class subsample of exactly `per_class` windows.
WindowedDataset balance(const WindowedDataset& dataset, std::size_t per_class,
                        std::uint64_t seed);

/// Keeps only the listed classes.
WindowedDataset filter_classes(const WindowedDataset& dataset,
                               const std::vector<ClassLabel>& keep);

}  // namespace vrae::data
