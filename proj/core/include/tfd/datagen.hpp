#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

// Synthetic daily traffic-volume series plus the three fault injectors
// (point, block, nonresponsive) and dataset assembly.

namespace tfd::datagen {

inline constexpr int kSamplesPerDay = 288;  // 24h of 5-minute intervals

enum class Label { kNormal, kFaulty };

enum class FaultKind { kNone, kPoint, kBlock, kNonresponsive };

struct FaultSpec {
  FaultKind kind = FaultKind::kNone;
  int k = 0;                   // affected interval count
  uint64_t seed = 0;
  std::vector<int> footprint;  // affected indices, ascending
};

struct TrafficDay {
  int station_id = 0;
  int64_t day_index = 0;
  std::vector<double> values;  // 288 non-negative counts
  Label label = Label::kNormal;
  std::optional<FaultSpec> fault;
};

struct DayProfile {
  double base_volume = 80.0;  // overnight floor, vehicles / 5 min
  double am_peak = 150.0;     // morning-rush bump height
  double pm_peak = 170.0;     // evening-rush bump height
  double noise_sd = 6.0;
  bool weekend = false;
};

// Baseline plus two Gaussian rush-hour bumps plus i.i.d. noise, clamped at 0.
// Weekends damp the baseline to 0.8x and the bumps to 0.3x.
TrafficDay synth_day(const DayProfile& profile, uint64_t seed);

// Five distinct uniformly chosen intervals scaled by 0.6.
TrafficDay inject_point_fault(const TrafficDay& day, uint64_t seed);

// One contiguous run of k intervals scaled by 0.6; start uniform in [0, 288-k].
TrafficDay inject_block_fault(const TrafficDay& day, int k, uint64_t seed);

// One contiguous run of k intervals set to 0.
TrafficDay inject_nonresponsive_fault(const TrafficDay& day, int k, uint64_t seed);

struct FaultMix {
  double point = 1.0 / 3.0;
  double block = 1.0 / 3.0;
  double nonresponsive = 1.0 / 3.0;
};

struct DatasetConfig {
  int64_t n_positive = 4000;
  int64_t n_negative = 2000;
  int64_t n_mixed_normal = 2000;
  int64_t n_mixed_faulty = 2000;
  FaultMix fault_mix;
  int n_stations = 24;
  uint64_t seed = 0;
};

struct Datasets {
  std::vector<TrafficDay> positive;  // only Normal days
  std::vector<TrafficDay> negative;  // only Faulty days, from fresh normals
  std::vector<TrafficDay> mixed;     // both labels
};

// Every day is freshly generated with a globally unique day_index, so the
// three datasets are disjoint by construction.
Datasets build_datasets(const DatasetConfig& config);

struct DatasetSplit {
  std::vector<TrafficDay> train;
  std::vector<TrafficDay> validation;
  std::vector<TrafficDay> test;
  uint64_t seed = 0;
};

// Seeded-shuffle index partition, 60/20/20 with remainders going to train.
std::array<std::vector<int64_t>, 3> split_indices(int64_t n, uint64_t seed);

DatasetSplit split_dataset(const std::vector<TrafficDay>& days, uint64_t seed);

// CSV persistence, header `station_id,day_index,label,fault_kind,fault_k,v0..v287`.
// Values round-trip exactly (shortest-exact decimal form).
void write_days_csv(const std::string& path, const std::vector<TrafficDay>& days);
std::vector<TrafficDay> read_days_csv(const std::string& path);

const char* label_name(Label label);
const char* fault_kind_name(FaultKind kind);

}  // namespace tfd::datagen
