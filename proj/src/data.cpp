#include "danet/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace danet {

namespace {

std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const int yoe = static_cast<int>(y - era * 400);
  const int doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const int doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + doe - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const int doe = static_cast<int>(z - era * 146097);
  const int yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int yy = static_cast<int>(yoe + era * 400);
  const int doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const int mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y = yy + (m <= 2);
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr double kTau = 6.283185307179586476925;

}  // namespace

std::int64_t hours_from_civil(const DateTime& dt) {
  return days_from_civil(dt.year, dt.month, dt.day) * 24 + dt.hour;
}

DateTime civil_from_hours(std::int64_t h) {
  std::int64_t days = h >= 0 ? h / 24 : (h - 23) / 24;
  DateTime dt;
  dt.hour = static_cast<int>(h - days * 24);
  civil_from_days(days, dt.year, dt.month, dt.day);
  return dt;
}

int weekday_of_hour(std::int64_t h) {
  std::int64_t days = h >= 0 ? h / 24 : (h - 23) / 24;
  // 1970-01-01 was a Thursday.
  return static_cast<int>(((days % 7) + 7 + 3) % 7);
}

std::int64_t parse_timestamp(const std::string& s) {
  int y, mo, d, hh, mi = 0, ss = 0;
  char sep;
  int n = std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &hh, &mi, &ss);
  if (n < 5 || (sep != 'T' && sep != ' '))
    throw IngestError("cannot parse timestamp '" + s + "'");
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || hh < 0 || hh > 23)
    throw IngestError("timestamp out of range: '" + s + "'");
  if (mi != 0 || ss != 0)
    throw IngestError("timestamp '" + s + "' is not at hour resolution");
  return hours_from_civil({y, mo, d, hh});
}

std::string format_timestamp(std::int64_t h) {
  DateTime dt = civil_from_hours(h);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:00:00", dt.year, dt.month, dt.day,
                dt.hour);
  return buf;
}

std::vector<SeriesRow> ingest_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IngestError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "timestamp,load,temperature")
    throw IngestError(path + ":1: expected header 'timestamp,load,temperature', got '" + line +
                      "'");
  std::vector<SeriesRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string ts, load_s, temp_s;
    if (!std::getline(ls, ts, ',') || !std::getline(ls, load_s, ',') ||
        !std::getline(ls, temp_s))
      throw IngestError(path + ":" + std::to_string(lineno) + ": expected 3 fields");
    SeriesRow row;
    try {
      row.hour = parse_timestamp(ts);
    } catch (const IngestError& e) {
      throw IngestError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    std::size_t pos = 0;
    try {
      row.load = std::stod(load_s, &pos);
      if (pos != load_s.size()) throw std::invalid_argument(load_s);
      row.temperature = std::stod(temp_s, &pos);
      if (pos != temp_s.size()) throw std::invalid_argument(temp_s);
    } catch (const std::exception&) {
      throw IngestError(path + ":" + std::to_string(lineno) + ": bad numeric field");
    }
    if (!(row.load > 0))
      throw IngestError(path + ":" + std::to_string(lineno) + ": load must be positive");
    if (!rows.empty()) {
      const std::int64_t expected = rows.back().hour + 1;
      if (row.hour == rows.back().hour)
        throw IngestError(path + ":" + std::to_string(lineno) + ": duplicate timestamp " +
                          format_timestamp(row.hour));
      if (row.hour != expected)
        throw IngestError(path + ":" + std::to_string(lineno) + ": missing hour " +
                          format_timestamp(expected));
    }
    rows.push_back(row);
  }
  return rows;
}

void write_csv(const std::vector<SeriesRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "timestamp,load,temperature\n";
  char buf[96];
  for (const SeriesRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f\n", format_timestamp(r.hour).c_str(), r.load,
                  r.temperature);
    out << buf;
  }
}

std::vector<SeriesRow> synthesize_series(int days, std::uint64_t seed) {
  if (days < 60) throw ContractError("synthesize_series: need at least 60 days");
  // 2021-01-04 is a Monday.
  const std::int64_t start = hours_from_civil({2021, 1, 4, 0});
  std::mt19937_64 rng(mix_seed(seed));
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<SeriesRow> rows;
  rows.reserve(static_cast<std::size_t>(days) * 24);
  for (std::int64_t t = 0; t < static_cast<std::int64_t>(days) * 24; ++t) {
    const double hod = static_cast<double>(t % 24);
    const double how = static_cast<double>(t % 168);
    const double day = static_cast<double>(t) / 24.0;
    const double temp_det = 12.0 - 10.0 * std::cos(kTau * day / 365.25) +
                            4.0 * std::sin(kTau * hod / 24.0 - 2.5);
    const double temp = temp_det + 0.8 * noise(rng);
    const double load = 1000.0 + 150.0 * std::sin(kTau * hod / 24.0 - 2.0) +
                        60.0 * std::sin(kTau * how / 168.0 + 0.7) + 2.5 * (temp - 12.0) +
                        4.0 * noise(rng);
    rows.push_back({start + t, load, temp});
  }
  return rows;
}

std::vector<double> compute_slope(const std::vector<double>& loads, std::size_t window) {
  if (loads.size() != window + 1)
    throw ContractError("compute_slope: expected " + std::to_string(window + 1) +
                        " values, got " + std::to_string(loads.size()));
  std::vector<double> s(window);
  for (std::size_t i = 0; i < window; ++i) s[i] = loads[i + 1] - loads[i];
  return s;
}

NormStats NormStats::fit(const std::vector<SeriesRow>& rows, const HourRange& train_range) {
  double lsum = 0, tsum = 0;
  std::int64_t n = 0;
  for (const SeriesRow& r : rows)
    if (train_range.contains(r.hour)) {
      lsum += r.load;
      tsum += r.temperature;
      ++n;
    }
  if (n < 2) throw ContractError("NormStats::fit: training range covers fewer than 2 rows");
  NormStats s;
  s.load_mean = lsum / static_cast<double>(n);
  s.temp_mean = tsum / static_cast<double>(n);
  double lvar = 0, tvar = 0;
  for (const SeriesRow& r : rows)
    if (train_range.contains(r.hour)) {
      lvar += (r.load - s.load_mean) * (r.load - s.load_mean);
      tvar += (r.temperature - s.temp_mean) * (r.temperature - s.temp_mean);
    }
  s.load_sd = std::sqrt(lvar / static_cast<double>(n));
  s.temp_sd = std::sqrt(tvar / static_cast<double>(n));
  if (!(s.load_sd > 0) || !(s.temp_sd > 0))
    throw ContractError("NormStats::fit: constant channel, sd must be positive");
  return s;
}

SplitSpec SplitSpec::make(const HourRange& train_period, const HourRange& test_range) {
  if (train_period.length() <= kValidationHours)
    throw ContractError("SplitSpec: training period shorter than the validation month");
  if (test_range.begin < train_period.end)
    throw ContractError("SplitSpec: test range overlaps training period");
  SplitSpec s;
  s.validation = {train_period.end - kValidationHours, train_period.end};
  s.train = {train_period.begin, s.validation.begin};
  s.test = test_range;
  return s;
}

BundleSet build_bundle_range(const std::vector<SeriesRow>& rows, const HourRange& range,
                             const NormStats& stats) {
  BundleSet out;
  out.stats = stats;
  if (range.length() <= 0) return out;
  if (rows.empty()) throw ContractError("build_bundles: no rows");
  const std::int64_t first = rows.front().hour;
  const std::int64_t last = rows.back().hour;
  if (range.begin - kWarmupHours < first || range.end - 1 > last)
    throw ContractError("build_bundles: rows must cover " + format_timestamp(range.begin) +
                        ".." + format_timestamp(range.end) + " plus a 49-hour warm-up prefix");
  out.items.reserve(static_cast<std::size_t>(range.length()));
  for (std::int64_t h = range.begin; h < range.end; ++h) {
    const std::size_t i = static_cast<std::size_t>(h - first);
    FeatureBundle b;
    b.target_hour = h;
    std::vector<double> window(49);
    for (std::size_t j = 0; j < 49; ++j) window[j] = stats.norm_load(rows[i - 49 + j].load);
    std::vector<double> slope = compute_slope(window);
    for (std::size_t j = 0; j < 48; ++j) {
      b.load[j] = window[j + 1];
      b.slope[j] = slope[j];
      b.temp[j] = stats.norm_temp(rows[i - 48 + j].temperature);
      b.ls[2 * j] = b.slope[j];
      b.ls[2 * j + 1] = b.load[j];
    }
    b.weekday.fill(0.0);
    b.month.fill(0.0);
    b.weekday[static_cast<std::size_t>(weekday_of_hour(h))] = 1.0;
    b.month[static_cast<std::size_t>(civil_from_hours(h).month - 1)] = 1.0;
    b.target = stats.norm_load(rows[i].load);
    b.target_actual = rows[i].load;
    out.items.push_back(b);
  }
  return out;
}

BundleSets build_bundles(const std::vector<SeriesRow>& rows, const SplitSpec& split,
                         const NormStats& stats) {
  BundleSets out;
  out.train = build_bundle_range(rows, split.train, stats);
  out.validation = build_bundle_range(rows, split.validation, stats);
  out.test = build_bundle_range(rows, split.test, stats);
  return out;
}

std::vector<SeriesRow> perturb_training(const std::vector<SeriesRow>& rows, double load_sd,
                                        double temp_sd, std::uint64_t seed,
                                        const HourRange& train_range) {
  if (load_sd < 0 || temp_sd < 0) throw ContractError("perturb_training: noise sd must be >= 0");
  std::vector<SeriesRow> out = rows;
  std::mt19937_64 load_rng(mix_seed(seed ^ 0x10adULL));
  std::mt19937_64 temp_rng(mix_seed(seed ^ 0x7e3fULL));
  std::normal_distribution<double> unit(0.0, 1.0);
  for (SeriesRow& r : out) {
    if (!train_range.contains(r.hour)) continue;
    if (load_sd > 0) r.load += load_sd * unit(load_rng);
    if (temp_sd > 0) r.temperature += temp_sd * unit(temp_rng);
  }
  return out;
}

BatchInputs to_batch(const std::vector<FeatureBundle>& items,
                     const std::vector<std::size_t>& indices) {
  const std::size_t n = indices.size();
  if (n == 0) throw ContractError("to_batch: empty batch");
  BatchInputs in;
  in.ls = Tensor({n, InputDims::lookback, InputDims::ls_cols, 1});
  in.temperature = Tensor({n, InputDims::lookback});
  in.calendar = Tensor({n, InputDims::calendar});
  for (std::size_t r = 0; r < n; ++r) {
    const FeatureBundle& b = items[indices[r]];
    std::copy(b.ls.begin(), b.ls.end(), in.ls.data.begin() + r * 96);
    std::copy(b.temp.begin(), b.temp.end(), in.temperature.data.begin() + r * 48);
    double* cal = in.calendar.data.data() + r * 19;
    std::copy(b.weekday.begin(), b.weekday.end(), cal);
    std::copy(b.month.begin(), b.month.end(), cal + 7);
  }
  return in;
}

Tensor batch_targets(const std::vector<FeatureBundle>& items,
                     const std::vector<std::size_t>& indices) {
  Tensor t({indices.size(), 1});
  for (std::size_t r = 0; r < indices.size(); ++r) t[r] = items[indices[r]].target;
  return t;
}

}  // namespace danet
