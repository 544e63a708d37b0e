#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace stpp {

// Spatial domain: continuous coordinates in R^D or one of N discrete
// location ids. Temporal marks sequences with no spatial component at all
// (interchange format for times-only generators; models reject it).
struct SpaceSpec {
  enum class Kind { Continuous, Discrete, Temporal };
  Kind kind = Kind::Continuous;
  int dim = 2;           // D, continuous only (1..3)
  int num_locations = 0; // N, discrete only (>= 2)

  static SpaceSpec continuous(int d);
  static SpaceSpec discrete(int n);
  static SpaceSpec temporal();
  bool is_discrete() const { return kind == Kind::Discrete; }
  bool is_temporal() const { return kind == Kind::Temporal; }
  // Coordinate count of a spatial value: D for continuous, 0 otherwise.
  int coord_dim() const { return kind == Kind::Continuous ? dim : 0; }
  bool operator==(const SpaceSpec&) const = default;
};

struct Event {
  double t = 0.0;
  std::vector<double> coords;  // continuous
  int location_id = -1;        // discrete
};

struct EventSequence {
  std::int64_t id = 0;
  double window_start = 0.0;
  double window_end = 0.0;
  std::vector<Event> events;

  std::size_t size() const { return events.size(); }
};

void validate_sequence(const EventSequence& seq, const SpaceSpec& space);

// tau_1 is anchored to window_start; tau_i = t_i - t_{i-1} afterwards.
std::vector<double> intervals(const EventSequence& seq);

// z-score statistics, computed from the training split only (population std).
struct NormalizationStats {
  double time_interval_mean = 0.0;
  double time_interval_std = 1.0;
  std::vector<double> space_mean;  // continuous only
  std::vector<double> space_std;

  double norm_tau(double tau) const { return (tau - time_interval_mean) / time_interval_std; }
  double denorm_tau(double z) const { return z * time_interval_std + time_interval_mean; }
  std::vector<double> norm_space(const std::vector<double>& s) const;
  std::vector<double> denorm_space(const std::vector<double>& z) const;
  // Encoder time axis: window-relative, scaled so typical event spacings are O(1).
  double encoder_time(double t, double window_start) const {
    return (t - window_start) / time_interval_std;
  }
};

struct Dataset {
  SpaceSpec space;
  std::vector<EventSequence> train;
  std::vector<EventSequence> val;
  std::vector<EventSequence> test;
  NormalizationStats stats;

  const std::vector<EventSequence>& split(const std::string& name) const;
};

NormalizationStats compute_stats(const std::vector<EventSequence>& train, const SpaceSpec& space);

enum class DatasetFormat { Auto, Csv, Json };

// Csv form: a directory with manifest.json, {train,val,test}.csv and
// {train,val,test}.windows.csv. Json form: a single self-contained file.
Dataset load_dataset(const std::string& path, DatasetFormat format = DatasetFormat::Auto);
void save_dataset(const Dataset& ds, const std::string& dir);
void save_dataset_json(const Dataset& ds, const std::string& file);

// Single-split helpers used by the directory layout.
std::vector<EventSequence> load_sequences_csv(const std::string& events_file,
                                              const std::string& windows_file,
                                              const SpaceSpec& space);
void save_sequences_csv(const std::vector<EventSequence>& seqs, const SpaceSpec& space,
                        const std::string& events_file, const std::string& windows_file);

std::string format_double(double v);  // shortest exact round-trip text

}  // namespace stpp
