#include "stpp/events.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace stpp {

namespace fs = std::filesystem;
using nlohmann::json;

SpaceSpec SpaceSpec::continuous(int d) {
  if (d < 1 || d > 3) throw std::invalid_argument("SpaceSpec: continuous dimension must be 1..3");
  SpaceSpec s;
  s.kind = Kind::Continuous;
  s.dim = d;
  s.num_locations = 0;
  return s;
}

SpaceSpec SpaceSpec::discrete(int n) {
  if (n < 2) throw std::invalid_argument("SpaceSpec: need at least 2 discrete locations");
  SpaceSpec s;
  s.kind = Kind::Discrete;
  s.dim = 0;
  s.num_locations = n;
  return s;
}

SpaceSpec SpaceSpec::temporal() {
  SpaceSpec s;
  s.kind = Kind::Temporal;
  s.dim = 0;
  s.num_locations = 0;
  return s;
}

void validate_sequence(const EventSequence& seq, const SpaceSpec& space) {
  const std::string tag = "sequence " + std::to_string(seq.id);
  if (seq.events.empty()) throw std::invalid_argument(tag + ": empty (length must be >= 1)");
  if (!(seq.window_start <= seq.events.front().t))
    throw std::invalid_argument(tag + ": first event precedes window_start");
  if (!(seq.events.back().t <= seq.window_end))
    throw std::invalid_argument(tag + ": last event exceeds window_end");
  double prev = seq.events.front().t;
  for (std::size_t i = 0; i < seq.events.size(); ++i) {
    const Event& e = seq.events[i];
    if (!std::isfinite(e.t)) throw std::invalid_argument(tag + ": non-finite timestamp");
    if (e.t < prev) throw std::invalid_argument(tag + ": timestamps decrease at event " +
                                                std::to_string(i));
    prev = e.t;
    if (space.is_temporal()) {
      // no spatial payload
    } else if (space.is_discrete()) {
      if (e.location_id < 0 || e.location_id >= space.num_locations)
        throw std::invalid_argument(tag + ": location id out of range at event " +
                                    std::to_string(i));
    } else {
      if (static_cast<int>(e.coords.size()) != space.dim)
        throw std::invalid_argument(tag + ": coordinate dimension mismatch at event " +
                                    std::to_string(i));
      for (double c : e.coords)
        if (!std::isfinite(c))
          throw std::invalid_argument(tag + ": non-finite coordinate at event " +
                                      std::to_string(i));
    }
  }
}

std::vector<double> intervals(const EventSequence& seq) {
  std::vector<double> out;
  out.reserve(seq.events.size());
  double prev = seq.window_start;
  for (const Event& e : seq.events) {
    out.push_back(e.t - prev);
    prev = e.t;
  }
  return out;
}

std::vector<double> NormalizationStats::norm_space(const std::vector<double>& s) const {
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = (s[i] - space_mean[i]) / space_std[i];
  return out;
}

std::vector<double> NormalizationStats::denorm_space(const std::vector<double>& z) const {
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] * space_std[i] + space_mean[i];
  return out;
}

namespace {

// population std; degenerate (0) stds are clamped to 1 with a warning
double finalize_std(double sum_sq, double mean, std::size_t n, const char* what) {
  double var = sum_sq / static_cast<double>(n) - mean * mean;
  if (var < 0.0) var = 0.0;
  const double sd = std::sqrt(var);
  if (sd <= 0.0) {
    std::cerr << "warning: " << what << " has zero std; clamping to 1\n";
    return 1.0;
  }
  return sd;
}

}  // namespace

NormalizationStats compute_stats(const std::vector<EventSequence>& train,
                                 const SpaceSpec& space) {
  if (train.empty()) throw std::invalid_argument("compute_stats: empty training split");
  NormalizationStats st;
  std::size_t n = 0;
  double tsum = 0.0, tsq = 0.0;
  const int d = space.coord_dim();
  std::vector<double> ssum(d, 0.0), ssq(d, 0.0);
  for (const EventSequence& seq : train) {
    for (double tau : intervals(seq)) {
      tsum += tau;
      tsq += tau * tau;
    }
    if (!space.is_discrete()) {
      for (const Event& e : seq.events)
        for (int j = 0; j < d; ++j) {
          ssum[j] += e.coords[j];
          ssq[j] += e.coords[j] * e.coords[j];
        }
    }
    n += seq.events.size();
  }
  st.time_interval_mean = tsum / static_cast<double>(n);
  st.time_interval_std = finalize_std(tsq, st.time_interval_mean, n, "time interval");
  if (!space.is_discrete()) {
    st.space_mean.resize(d);
    st.space_std.resize(d);
    for (int j = 0; j < d; ++j) {
      st.space_mean[j] = ssum[j] / static_cast<double>(n);
      st.space_std[j] = finalize_std(ssq[j], st.space_mean[j], n, "space coordinate");
    }
  }
  return st;
}

const std::vector<EventSequence>& Dataset::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw std::invalid_argument("unknown split: " + name);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// --- CSV --------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& file, int line_no) {
  double v;
  const char* b = s.data();
  const char* e = b + s.size();
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e)
    throw std::runtime_error(file + ":" + std::to_string(line_no) + ": malformed number '" + s +
                             "'");
  return v;
}

std::int64_t parse_int(const std::string& s, const std::string& file, int line_no) {
  std::int64_t v;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::runtime_error(file + ":" + std::to_string(line_no) + ": malformed integer '" + s +
                             "'");
  return v;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);  // binary: byte-stable output
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  return f;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  return f;
}

}  // namespace

std::vector<EventSequence> load_sequences_csv(const std::string& events_file,
                                              const std::string& windows_file,
                                              const SpaceSpec& space) {
  // windows first: seq_id,window_start,window_end
  struct Window {
    double start, end;
  };
  std::vector<std::pair<std::int64_t, Window>> windows;
  {
    auto f = open_in(windows_file);
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
      ++line_no;
      if (line.empty()) continue;
      if (line_no == 1) continue;  // header
      auto cells = split_csv_line(line);
      if (cells.size() != 3)
        throw std::runtime_error(windows_file + ":" + std::to_string(line_no) +
                                 ": expected 3 columns");
      windows.push_back({parse_int(cells[0], windows_file, line_no),
                         {parse_double(cells[1], windows_file, line_no),
                          parse_double(cells[2], windows_file, line_no)}});
    }
  }

  const int expected_cols = space.is_temporal() ? 2 : 2 + (space.is_discrete() ? 1 : space.dim);
  std::vector<EventSequence> seqs;
  {
    auto f = open_in(events_file);
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
      ++line_no;
      if (line.empty()) continue;
      if (line_no == 1) continue;  // header
      auto cells = split_csv_line(line);
      if (static_cast<int>(cells.size()) != expected_cols)
        throw std::runtime_error(events_file + ":" + std::to_string(line_no) + ": expected " +
                                 std::to_string(expected_cols) + " columns, got " +
                                 std::to_string(cells.size()));
      const std::int64_t sid = parse_int(cells[0], events_file, line_no);
      Event ev;
      ev.t = parse_double(cells[1], events_file, line_no);
      if (space.is_discrete()) {
        ev.location_id = static_cast<int>(parse_int(cells[2], events_file, line_no));
      } else if (!space.is_temporal()) {
        for (int j = 0; j < space.dim; ++j)
          ev.coords.push_back(parse_double(cells[2 + j], events_file, line_no));
      }
      if (seqs.empty() || seqs.back().id != sid) {
        EventSequence s;
        s.id = sid;
        seqs.push_back(std::move(s));
      }
      seqs.back().events.push_back(std::move(ev));
    }
  }

  for (EventSequence& s : seqs) {
    bool found = false;
    for (const auto& [sid, w] : windows)
      if (sid == s.id) {
        s.window_start = w.start;
        s.window_end = w.end;
        found = true;
        break;
      }
    if (!found)
      throw std::runtime_error(windows_file + ": no window for sequence " + std::to_string(s.id));
    validate_sequence(s, space);
  }
  return seqs;
}

void save_sequences_csv(const std::vector<EventSequence>& seqs, const SpaceSpec& space,
                        const std::string& events_file, const std::string& windows_file) {
  auto ef = open_out(events_file);
  ef << "seq_id,t";
  if (space.is_discrete()) {
    ef << ",loc_id";
  } else if (!space.is_temporal()) {
    for (int j = 1; j <= space.dim; ++j) ef << ",s" << j;
  }
  ef << "\n";
  for (const EventSequence& s : seqs)
    for (const Event& e : s.events) {
      ef << s.id << "," << format_double(e.t);
      if (space.is_discrete()) {
        ef << "," << e.location_id;
      } else if (!space.is_temporal()) {
        for (double c : e.coords) ef << "," << format_double(c);
      }
      ef << "\n";
    }

  auto wf = open_out(windows_file);
  wf << "seq_id,window_start,window_end\n";
  for (const EventSequence& s : seqs)
    wf << s.id << "," << format_double(s.window_start) << "," << format_double(s.window_end)
       << "\n";
}

// --- JSON -------------------------------------------------------------------

namespace {

json space_to_json(const SpaceSpec& s) {
  if (s.is_discrete()) return {{"kind", "discrete"}, {"num_locations", s.num_locations}};
  if (s.is_temporal()) return {{"kind", "temporal"}};
  return {{"kind", "continuous"}, {"dim", s.dim}};
}

SpaceSpec space_from_json(const json& j) {
  const std::string kind = j.at("kind");
  if (kind == "discrete") return SpaceSpec::discrete(j.at("num_locations"));
  if (kind == "continuous") return SpaceSpec::continuous(j.at("dim"));
  if (kind == "temporal") return SpaceSpec::temporal();
  throw std::runtime_error("unknown space kind: " + kind);
}

json split_to_json(const std::vector<EventSequence>& seqs, const SpaceSpec& space) {
  json arr = json::array();
  for (const EventSequence& s : seqs) {
    json ev = json::array();
    for (const Event& e : s.events) {
      if (space.is_discrete())
        ev.push_back({{"t", e.t}, {"loc", e.location_id}});
      else if (space.is_temporal())
        ev.push_back({{"t", e.t}});
      else
        ev.push_back({{"t", e.t}, {"s", e.coords}});
    }
    arr.push_back({{"seq_id", s.id},
                   {"window", {s.window_start, s.window_end}},
                   {"events", std::move(ev)}});
  }
  return arr;
}

std::vector<EventSequence> split_from_json(const json& arr, const SpaceSpec& space) {
  std::vector<EventSequence> out;
  for (const json& js : arr) {
    EventSequence s;
    s.id = js.at("seq_id");
    s.window_start = js.at("window")[0];
    s.window_end = js.at("window")[1];
    for (const json& je : js.at("events")) {
      Event e;
      e.t = je.at("t");
      if (space.is_discrete())
        e.location_id = je.at("loc");
      else if (!space.is_temporal())
        e.coords = je.at("s").get<std::vector<double>>();
      s.events.push_back(std::move(e));
    }
    validate_sequence(s, space);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

void save_dataset_json(const Dataset& ds, const std::string& file) {
  json j{{"space", space_to_json(ds.space)},
         {"train", split_to_json(ds.train, ds.space)},
         {"val", split_to_json(ds.val, ds.space)},
         {"test", split_to_json(ds.test, ds.space)}};
  auto f = open_out(file);
  f << j.dump(1) << "\n";
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  const auto base = fs::path(dir);
  save_sequences_csv(ds.train, ds.space, (base / "train.csv").string(),
                     (base / "train.windows.csv").string());
  save_sequences_csv(ds.val, ds.space, (base / "val.csv").string(),
                     (base / "val.windows.csv").string());
  save_sequences_csv(ds.test, ds.space, (base / "test.csv").string(),
                     (base / "test.windows.csv").string());
  json manifest{{"space", space_to_json(ds.space)},
                {"files",
                 {{"train", "train.csv"}, {"val", "val.csv"}, {"test", "test.csv"}}}};
  auto f = open_out((base / "manifest.json").string());
  f << manifest.dump(1) << "\n";
}

Dataset load_dataset(const std::string& path, DatasetFormat format) {
  if (format == DatasetFormat::Auto)
    format = fs::is_directory(path) ? DatasetFormat::Csv : DatasetFormat::Json;

  Dataset ds;
  if (format == DatasetFormat::Json) {
    auto f = open_in(path);
    json j;
    f >> j;
    ds.space = space_from_json(j.at("space"));
    ds.train = split_from_json(j.at("train"), ds.space);
    ds.val = split_from_json(j.at("val"), ds.space);
    ds.test = split_from_json(j.at("test"), ds.space);
  } else {
    const auto base = fs::path(path);
    auto mf = open_in((base / "manifest.json").string());
    json manifest;
    mf >> manifest;
    ds.space = space_from_json(manifest.at("space"));
    ds.train = load_sequences_csv((base / "train.csv").string(),
                                  (base / "train.windows.csv").string(), ds.space);
    ds.val = load_sequences_csv((base / "val.csv").string(),
                                (base / "val.windows.csv").string(), ds.space);
    ds.test = load_sequences_csv((base / "test.csv").string(),
                                 (base / "test.windows.csv").string(), ds.space);
  }
  ds.stats = compute_stats(ds.train, ds.space);
  return ds;
}

}  // namespace stpp
