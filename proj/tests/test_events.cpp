#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "stpp/events.hpp"
#include "stpp/simulate.hpp"

using namespace stpp;
namespace fs = std::filesystem;

namespace {

EventSequence seq_from_times(std::vector<double> times, double w0, double w1) {
  EventSequence s;
  s.window_start = w0;
  s.window_end = w1;
  for (double t : times) s.events.push_back({t, {0.0, 0.0}, -1});
  return s;
}

fs::path tmpdir() {
  const fs::path p = fs::temp_directory_path() / "stpp_events_test";
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("intervals definition and boundaries") {
  CHECK(intervals(seq_from_times({1, 3, 6}, 0, 10)) == std::vector<double>{1, 2, 3});
  CHECK(intervals(seq_from_times({5}, 5, 9)) == std::vector<double>{0});
  CHECK(intervals(seq_from_times({0.5, 0.5}, 0, 1)) == std::vector<double>{0.5, 0});
}

TEST_CASE("intervals sum to span") {
  EventSequence s = seq_from_times({0.7, 1.1, 2.9, 4.0}, 0.2, 5.0);
  double total = 0.0;
  for (double tau : intervals(s)) {
    CHECK(tau >= 0.0);
    total += tau;
  }
  CHECK(total == doctest::Approx(4.0 - 0.2));
}

TEST_CASE("sequence validation rejects non-monotone times naming the sequence") {
  EventSequence s = seq_from_times({2.0, 1.0}, 0, 5);
  s.id = 42;
  CHECK_THROWS_WITH_AS(validate_sequence(s, SpaceSpec::continuous(2)),
                       doctest::Contains("sequence 42"), std::invalid_argument);
}

TEST_CASE("normalization matches population formula") {
  Dataset ds;
  ds.space = SpaceSpec::continuous(2);
  EventSequence s = seq_from_times({1, 3, 6}, 0, 10);  // intervals 1,2,3
  ds.train = {s};
  NormalizationStats st = compute_stats(ds.train, ds.space);
  CHECK(st.time_interval_mean == doctest::Approx(2.0));
  CHECK(st.time_interval_std == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(st.norm_tau(1.0) == doctest::Approx(-1.2247448713915890).epsilon(1e-9));
  CHECK(st.norm_tau(2.0) == doctest::Approx(0.0));
  CHECK(st.norm_tau(3.0) == doctest::Approx(1.2247448713915890).epsilon(1e-9));
  // round trip
  CHECK(st.denorm_tau(st.norm_tau(1.7)) == doctest::Approx(1.7).epsilon(1e-12));
}

TEST_CASE("constant feature clamps std to one and normalizes to zero") {
  EventSequence s;
  s.window_start = 0;
  s.window_end = 10;
  s.events = {{1.0, {5.0, 5.0}, -1}, {2.0, {5.0, 5.0}, -1}};
  NormalizationStats st = compute_stats({s}, SpaceSpec::continuous(2));
  CHECK(st.space_std[0] == 1.0);
  CHECK(st.norm_space({5.0, 5.0})[0] == 0.0);
}

TEST_CASE("csv loader reports malformed rows with line numbers") {
  const fs::path dir = tmpdir();
  {
    std::ofstream e(dir / "bad.csv");
    e << "seq_id,t,s1,s2\n0,1.0,0,0\n0,nope,1,1\n";
    std::ofstream w(dir / "bad.windows.csv");
    w << "seq_id,window_start,window_end\n0,0,10\n";
  }
  CHECK_THROWS_WITH_AS(load_sequences_csv((dir / "bad.csv").string(),
                                          (dir / "bad.windows.csv").string(),
                                          SpaceSpec::continuous(2)),
                       doctest::Contains(":3"), std::runtime_error);
}

TEST_CASE("csv loader rejects decreasing times naming the sequence") {
  const fs::path dir = tmpdir();
  {
    std::ofstream e(dir / "dec.csv");
    e << "seq_id,t,s1,s2\n7,2.0,0,0\n7,1.0,1,1\n";
    std::ofstream w(dir / "dec.windows.csv");
    w << "seq_id,window_start,window_end\n7,0,10\n";
  }
  CHECK_THROWS_WITH_AS(load_sequences_csv((dir / "dec.csv").string(),
                                          (dir / "dec.windows.csv").string(),
                                          SpaceSpec::continuous(2)),
                       doctest::Contains("sequence 7"), std::invalid_argument);
}

TEST_CASE("minimal two-row file loads one sequence") {
  const fs::path dir = tmpdir();
  {
    std::ofstream e(dir / "mini.csv");
    e << "seq_id,t,s1,s2\n0,1.0,0,0\n0,2.0,1,1\n";
    std::ofstream w(dir / "mini.windows.csv");
    w << "seq_id,window_start,window_end\n0,0,10\n";
  }
  auto seqs = load_sequences_csv((dir / "mini.csv").string(), (dir / "mini.windows.csv").string(),
                                 SpaceSpec::continuous(2));
  REQUIRE(seqs.size() == 1);
  CHECK(seqs[0].size() == 2);
  CHECK(seqs[0].events[1].coords == std::vector<double>{1.0, 1.0});
}

TEST_CASE("dataset round-trips through csv and json identically") {
  HawkesGmmParams p;
  p.temporal = {0.5, {{0.8, 1.6}}, 12.0};
  p.spatial = GmmSpatialParams::single_gaussian_default();
  Dataset ds;
  ds.space = SpaceSpec::continuous(2);
  for (int i = 0; i < 5; ++i) {
    EventSequence s = simulate_hawkes_gmm(p, 100 + i);
    if (s.events.empty()) continue;
    s.id = i;
    ds.train.push_back(s);
  }
  ds.val = ds.train;
  ds.test = ds.train;
  ds.stats = compute_stats(ds.train, ds.space);

  const fs::path dir = tmpdir() / "roundtrip";
  save_dataset(ds, dir.string());
  Dataset back = load_dataset(dir.string());
  REQUIRE(back.train.size() == ds.train.size());
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    CHECK(back.train[i].id == ds.train[i].id);
    CHECK(back.train[i].window_start == ds.train[i].window_start);
    CHECK(back.train[i].window_end == ds.train[i].window_end);
    REQUIRE(back.train[i].size() == ds.train[i].size());
    for (std::size_t j = 0; j < ds.train[i].size(); ++j) {
      CHECK(back.train[i].events[j].t == ds.train[i].events[j].t);  // exact
      CHECK(back.train[i].events[j].coords == ds.train[i].events[j].coords);
    }
  }

  const fs::path jf = tmpdir() / "roundtrip.json";
  save_dataset_json(ds, jf.string());
  Dataset jback = load_dataset(jf.string());
  REQUIRE(jback.train.size() == ds.train.size());
  for (std::size_t i = 0; i < ds.train.size(); ++i)
    for (std::size_t j = 0; j < ds.train[i].size(); ++j)
      CHECK(jback.train[i].events[j].t == ds.train[i].events[j].t);

  // parse -> serialize -> parse is identity
  const fs::path dir2 = tmpdir() / "roundtrip2";
  save_dataset(back, dir2.string());
  Dataset again = load_dataset(dir2.string());
  for (std::size_t i = 0; i < back.train.size(); ++i)
    for (std::size_t j = 0; j < back.train[i].size(); ++j)
      CHECK(again.train[i].events[j].t == back.train[i].events[j].t);
}

TEST_CASE("stats never incorporate val or test data") {
  Dataset ds;
  ds.space = SpaceSpec::continuous(2);
  ds.train = {seq_from_times({1, 2, 3}, 0, 10)};
  ds.val = {seq_from_times({100, 200}, 0, 1000)};
  ds.test = {seq_from_times({500}, 0, 1000)};
  NormalizationStats st = compute_stats(ds.train, ds.space);
  NormalizationStats train_only = compute_stats({ds.train[0]}, ds.space);
  CHECK(st.time_interval_mean == train_only.time_interval_mean);
  CHECK(st.time_interval_std == train_only.time_interval_std);
}

TEST_CASE("temporal-only sequences round-trip") {
  Dataset ds;
  ds.space = SpaceSpec::temporal();
  EventSequence s;
  s.window_start = 0;
  s.window_end = 5;
  s.events = {{1.25, {}, -1}, {4.75, {}, -1}};
  ds.train = {s};
  ds.val = {s};
  ds.test = {s};
  const fs::path dir = tmpdir() / "temporal";
  save_dataset(ds, dir.string());
  Dataset back = load_dataset(dir.string());
  CHECK(back.space.is_temporal());
  CHECK(back.train[0].events[1].t == 4.75);
}
