#include "tfd/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tfd/error.hpp"
#include "tfd/rng.hpp"

namespace tfd::datagen {

namespace {

// Rush-hour bump centers/widths in 5-minute intervals: 08:00 and 17:30.
constexpr double kAmCenter = 96.0, kAmWidth = 18.0;
constexpr double kPmCenter = 210.0, kPmWidth = 24.0;

double gaussian_bump(double t, double center, double width) {
  const double z = (t - center) / width;
  return std::exp(-0.5 * z * z);
}

TrafficDay copy_for_fault(const TrafficDay& day) {
  require(day.label == Label::kNormal, ErrorKind::Invalid,
          "fault injection: input day must be labeled normal");
  require(static_cast<int>(day.values.size()) == kSamplesPerDay, ErrorKind::Invalid,
          "fault injection: day must have 288 values");
  return day;
}

}  // namespace

TrafficDay synth_day(const DayProfile& profile, uint64_t seed) {
  require(std::isfinite(profile.base_volume) && std::isfinite(profile.am_peak) &&
              std::isfinite(profile.pm_peak) && std::isfinite(profile.noise_sd),
          ErrorKind::Invalid, "synth_day: profile parameters must be finite");
  require(profile.base_volume > 0, ErrorKind::Invalid,
          "synth_day: base_volume must be positive");
  require(profile.noise_sd >= 0, ErrorKind::Invalid,
          "synth_day: noise_sd must be non-negative");

  const double base_scale = profile.weekend ? 0.8 : 1.0;
  const double peak_scale = profile.weekend ? 0.3 : 1.0;
  Rng rng(seed);
  TrafficDay day;
  day.values.resize(kSamplesPerDay);
  for (int t = 0; t < kSamplesPerDay; ++t) {
    const double mean = profile.base_volume * base_scale +
                        peak_scale * (profile.am_peak * gaussian_bump(t, kAmCenter, kAmWidth) +
                                      profile.pm_peak * gaussian_bump(t, kPmCenter, kPmWidth));
    const double v = mean + profile.noise_sd * rng.normal();
    day.values[static_cast<size_t>(t)] = v > 0.0 ? v : 0.0;
  }
  return day;
}

TrafficDay inject_point_fault(const TrafficDay& day, uint64_t seed) {
  TrafficDay out = copy_for_fault(day);
  // Uniform without replacement: take the first 5 of a seeded permutation.
  Rng rng(seed);
  std::vector<int> idx(kSamplesPerDay);
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  std::vector<int> chosen(idx.begin(), idx.begin() + 5);
  std::sort(chosen.begin(), chosen.end());
  for (int i : chosen) out.values[static_cast<size_t>(i)] *= 0.6;
  out.label = Label::kFaulty;
  out.fault = FaultSpec{FaultKind::kPoint, 5, seed, std::move(chosen)};
  return out;
}

TrafficDay inject_block_fault(const TrafficDay& day, int k, uint64_t seed) {
  require(k >= 1 && k <= kSamplesPerDay, ErrorKind::Invalid,
          "block fault: k must be in [1, 288], got " + std::to_string(k));
  TrafficDay out = copy_for_fault(day);
  Rng rng(seed);
  const int start = static_cast<int>(rng.uniform_int(kSamplesPerDay - k + 1));
  std::vector<int> footprint(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    out.values[static_cast<size_t>(start + i)] *= 0.6;
    footprint[static_cast<size_t>(i)] = start + i;
  }
  out.label = Label::kFaulty;
  out.fault = FaultSpec{FaultKind::kBlock, k, seed, std::move(footprint)};
  return out;
}

TrafficDay inject_nonresponsive_fault(const TrafficDay& day, int k, uint64_t seed) {
  require(k >= 1 && k <= kSamplesPerDay, ErrorKind::Invalid,
          "nonresponsive fault: k must be in [1, 288], got " + std::to_string(k));
  TrafficDay out = copy_for_fault(day);
  Rng rng(seed);
  const int start = static_cast<int>(rng.uniform_int(kSamplesPerDay - k + 1));
  std::vector<int> footprint(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    out.values[static_cast<size_t>(start + i)] = 0.0;
    footprint[static_cast<size_t>(i)] = start + i;
  }
  out.label = Label::kFaulty;
  out.fault = FaultSpec{FaultKind::kNonresponsive, k, seed, std::move(footprint)};
  return out;
}

namespace {

DayProfile station_profile(uint64_t master_seed, int station) {
  Rng rng(seed_combine(master_seed, 0x73746174696f6eULL + static_cast<uint64_t>(station)));
  DayProfile p;
  p.base_volume = 40.0 + 80.0 * rng.uniform();
  p.am_peak = 80.0 + 120.0 * rng.uniform();
  p.pm_peak = 80.0 + 120.0 * rng.uniform();
  p.noise_sd = 4.0 + 6.0 * rng.uniform();
  return p;
}

// One freshly generated normal day; the global counter keeps (station, day)
// pairs unique across all three datasets.
TrafficDay fresh_day(const DatasetConfig& cfg, int64_t counter) {
  const int station = static_cast<int>(counter % cfg.n_stations);
  DayProfile p = station_profile(cfg.seed, station);
  p.weekend = (counter / cfg.n_stations) % 7 >= 5;
  TrafficDay day = synth_day(p, seed_combine(cfg.seed, mix64(static_cast<uint64_t>(counter))));
  day.station_id = station;
  day.day_index = counter;
  return day;
}

TrafficDay make_faulty(const DatasetConfig& cfg, TrafficDay day, Rng& kind_rng) {
  const uint64_t fault_seed =
      seed_combine(cfg.seed, mix64(static_cast<uint64_t>(day.day_index)) ^ 0xfau);
  const double u = kind_rng.uniform();
  const int k = kind_rng.uniform() < 0.5 ? 5 : 10;
  if (u < cfg.fault_mix.point) return inject_point_fault(day, fault_seed);
  if (u < cfg.fault_mix.point + cfg.fault_mix.block)
    return inject_block_fault(day, k, fault_seed);
  return inject_nonresponsive_fault(day, k, fault_seed);
}

}  // namespace

Datasets build_datasets(const DatasetConfig& cfg) {
  require(cfg.n_positive >= 0 && cfg.n_negative >= 0 && cfg.n_mixed_normal >= 0 &&
              cfg.n_mixed_faulty >= 0,
          ErrorKind::Config, "build_datasets: dataset sizes must be non-negative");
  require(cfg.n_stations > 0, ErrorKind::Config,
          "build_datasets: n_stations must be positive");
  const FaultMix& fm = cfg.fault_mix;
  require(fm.point >= 0 && fm.block >= 0 && fm.nonresponsive >= 0 &&
              std::abs(fm.point + fm.block + fm.nonresponsive - 1.0) <= 1e-9,
          ErrorKind::Config,
          "build_datasets: fault_mix proportions must be non-negative and sum to 1");

  Datasets out;
  int64_t counter = 0;
  Rng kind_rng(seed_combine(cfg.seed, 0x6b696e64u));

  out.positive.reserve(static_cast<size_t>(cfg.n_positive));
  for (int64_t i = 0; i < cfg.n_positive; ++i)
    out.positive.push_back(fresh_day(cfg, counter++));

  out.negative.reserve(static_cast<size_t>(cfg.n_negative));
  for (int64_t i = 0; i < cfg.n_negative; ++i)
    out.negative.push_back(make_faulty(cfg, fresh_day(cfg, counter++), kind_rng));

  out.mixed.reserve(static_cast<size_t>(cfg.n_mixed_normal + cfg.n_mixed_faulty));
  for (int64_t i = 0; i < cfg.n_mixed_normal; ++i)
    out.mixed.push_back(fresh_day(cfg, counter++));
  for (int64_t i = 0; i < cfg.n_mixed_faulty; ++i)
    out.mixed.push_back(make_faulty(cfg, fresh_day(cfg, counter++), kind_rng));
  return out;
}

std::array<std::vector<int64_t>, 3> split_indices(int64_t n, uint64_t seed) {
  require(n > 0, ErrorKind::Invalid, "split: empty input");
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), int64_t{0});
  Rng rng(seed);
  rng.shuffle(idx);
  const int64_t n_val = n / 5;   // 20%
  const int64_t n_test = n / 5;  // 20%
  const int64_t n_train = n - n_val - n_test;
  std::array<std::vector<int64_t>, 3> parts;
  parts[0].assign(idx.begin(), idx.begin() + n_train);
  parts[1].assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  parts[2].assign(idx.begin() + n_train + n_val, idx.end());
  return parts;
}

DatasetSplit split_dataset(const std::vector<TrafficDay>& days, uint64_t seed) {
  const auto parts = split_indices(static_cast<int64_t>(days.size()), seed);
  DatasetSplit split;
  split.seed = seed;
  for (int64_t i : parts[0]) split.train.push_back(days[static_cast<size_t>(i)]);
  for (int64_t i : parts[1]) split.validation.push_back(days[static_cast<size_t>(i)]);
  for (int64_t i : parts[2]) split.test.push_back(days[static_cast<size_t>(i)]);
  return split;
}

const char* label_name(Label label) {
  return label == Label::kNormal ? "normal" : "faulty";
}

const char* fault_kind_name(FaultKind kind) {
  switch (kind) {
    case FaultKind::kNone: return "none";
    case FaultKind::kPoint: return "point";
    case FaultKind::kBlock: return "block";
    case FaultKind::kNonresponsive: return "nonresponsive";
  }
  return "none";
}

namespace {

FaultKind fault_kind_from(const std::string& name) {
  if (name == "none") return FaultKind::kNone;
  if (name == "point") return FaultKind::kPoint;
  if (name == "block") return FaultKind::kBlock;
  if (name == "nonresponsive") return FaultKind::kNonresponsive;
  fail(ErrorKind::Format, "unknown fault kind '" + name + "'");
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, const std::string& context) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc{} && res.ptr == s.data() + s.size(), ErrorKind::Format,
          "bad numeric field '" + std::string(s) + "' in " + context);
  return v;
}

int64_t parse_int(std::string_view s, const std::string& context) {
  int64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc{} && res.ptr == s.data() + s.size(), ErrorKind::Format,
          "bad integer field '" + std::string(s) + "' in " + context);
  return v;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  size_t start = 0;
  while (true) {
    const size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string csv_header() {
  std::string h = "station_id,day_index,label,fault_kind,fault_k";
  for (int i = 0; i < kSamplesPerDay; ++i) h += ",v" + std::to_string(i);
  return h;
}

}  // namespace

void write_days_csv(const std::string& path, const std::vector<TrafficDay>& days) {
  std::ofstream f(path);
  require(f.good(), ErrorKind::Io, "cannot open '" + path + "' for writing");
  f << csv_header() << "\n";
  for (const TrafficDay& d : days) {
    require(static_cast<int>(d.values.size()) == kSamplesPerDay, ErrorKind::Invalid,
            "write_days_csv: day must have 288 values");
    f << d.station_id << ',' << d.day_index << ',' << label_name(d.label) << ','
      << fault_kind_name(d.fault ? d.fault->kind : FaultKind::kNone) << ','
      << (d.fault ? d.fault->k : 0);
    for (double v : d.values) f << ',' << format_double(v);
    f << '\n';
  }
  require(f.good(), ErrorKind::Io, "write failed for '" + path + "'");
}

std::vector<TrafficDay> read_days_csv(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), ErrorKind::Io, "cannot open '" + path + "' for reading");
  std::string line;
  require(static_cast<bool>(std::getline(f, line)), ErrorKind::Format,
          "'" + path + "' is empty");
  require(line == csv_header(), ErrorKind::Format,
          "'" + path + "' has an unexpected header");
  std::vector<TrafficDay> days;
  int64_t row = 1;
  while (std::getline(f, line)) {
    ++row;
    if (line.empty()) continue;
    const std::string context = path + " row " + std::to_string(row);
    const auto fields = split_fields(line);
    require(static_cast<int>(fields.size()) == 5 + kSamplesPerDay, ErrorKind::Format,
            context + ": expected " + std::to_string(5 + kSamplesPerDay) +
                " fields, got " + std::to_string(fields.size()));
    TrafficDay d;
    d.station_id = static_cast<int>(parse_int(fields[0], context));
    d.day_index = parse_int(fields[1], context);
    const std::string label(fields[2]);
    require(label == "normal" || label == "faulty", ErrorKind::Format,
            context + ": unknown label '" + label + "'");
    d.label = label == "normal" ? Label::kNormal : Label::kFaulty;
    const FaultKind kind = fault_kind_from(std::string(fields[3]));
    const int k = static_cast<int>(parse_int(fields[4], context));
    if (kind != FaultKind::kNone) d.fault = FaultSpec{kind, k, 0, {}};
    d.values.resize(kSamplesPerDay);
    for (int i = 0; i < kSamplesPerDay; ++i)
      d.values[static_cast<size_t>(i)] = parse_double(fields[static_cast<size_t>(5 + i)], context);
    days.push_back(std::move(d));
  }
  return days;
}

}  // namespace tfd::datagen
