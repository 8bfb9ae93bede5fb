#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "danet/model.hpp"

namespace danet {

class IngestError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Civil date-time at hour resolution, no timezone.
struct DateTime {
  int year;
  int month;  // 1..12
  int day;    // 1..31
  int hour;   // 0..23
};

std::int64_t hours_from_civil(const DateTime& dt);
DateTime civil_from_hours(std::int64_t h);
int weekday_of_hour(std::int64_t h);  // 0 = Monday
std::int64_t parse_timestamp(const std::string& s);
std::string format_timestamp(std::int64_t h);

/// One hourly observation; hour is hours since 1970-01-01T00:00.
struct SeriesRow {
  std::int64_t hour;
  double load;
  double temperature;
};

/// Half-open interval of hour indices.
struct HourRange {
  std::int64_t begin = 0;
  std::int64_t end = 0;

  bool contains(std::int64_t h) const { return h >= begin && h < end; }
  std::int64_t length() const { return end - begin; }
};

std::vector<SeriesRow> ingest_csv(const std::string& path);
void write_csv(const std::vector<SeriesRow>& rows, const std::string& path);

/// Synthetic hourly series: daily/weekly load sinusoids, a seasonal
/// temperature with daily swing, temperature-coupled load, Gaussian noise.
/// Closed form documented in the README. Starts on a Monday midnight.
std::vector<SeriesRow> synthesize_series(int days, std::uint64_t seed);

/// S[i] = loads[i+1] - loads[i]; expects exactly window+1 values (one extra
/// value preceding the window).
std::vector<double> compute_slope(const std::vector<double>& loads, std::size_t window = 48);

struct NormStats {
  double load_mean = 0, load_sd = 1;
  double temp_mean = 0, temp_sd = 1;

  static NormStats fit(const std::vector<SeriesRow>& rows, const HourRange& train_range);
  double norm_load(double mw) const { return (mw - load_mean) / load_sd; }
  double denorm_load(double z) const { return z * load_sd + load_mean; }
  double norm_temp(double deg) const { return (deg - temp_mean) / temp_sd; }
  bool operator==(const NormStats&) const = default;
};

/// train excludes the validation month: validation is the last month of the
/// original training period, carved out for monitoring.
struct SplitSpec {
  HourRange train;
  HourRange validation;
  HourRange test;

  static constexpr std::int64_t kValidationHours = 30 * 24;
  static SplitSpec make(const HourRange& train_period, const HourRange& test_range);
};

/// Number of history hours needed before the first forecastable hour:
/// 48-hour window plus one slope anchor.
constexpr std::int64_t kWarmupHours = 49;

struct FeatureBundle {
  std::array<double, 48> load;   // normalized, hours h-48..h-1
  std::array<double, 48> temp;   // normalized, aligned with load
  std::array<double, 48> slope;  // slope of normalized load
  std::array<double, 96> ls;     // interleaved [S_i, L_i]
  std::array<double, 7> weekday;
  std::array<double, 12> month;
  double target;         // normalized load at hour h
  double target_actual;  // megawatts
  std::int64_t target_hour;
};

struct BundleSet {
  std::vector<FeatureBundle> items;
  NormStats stats;
};

struct BundleSets {
  BundleSet train;
  BundleSet validation;
  BundleSet test;
};

BundleSet build_bundle_range(const std::vector<SeriesRow>& rows, const HourRange& range,
                             const NormStats& stats);
BundleSets build_bundles(const std::vector<SeriesRow>& rows, const SplitSpec& split,
                         const NormStats& stats);

/// Adds independent per-row Gaussian noise to load and temperature, only on
/// rows inside train_range.
std::vector<SeriesRow> perturb_training(const std::vector<SeriesRow>& rows, double load_sd,
                                        double temp_sd, std::uint64_t seed,
                                        const HourRange& train_range);

BatchInputs to_batch(const std::vector<FeatureBundle>& items,
                     const std::vector<std::size_t>& indices);
Tensor batch_targets(const std::vector<FeatureBundle>& items,
                     const std::vector<std::size_t>& indices);

}  // namespace danet
