#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "btloc/cli/session.hpp"
#include "btloc/metrics/logs.hpp"
#include "btloc/metrics/report.hpp"
#include "btloc/sim/recording.hpp"
#include "btloc/sim/survey.hpp"

namespace btloc::cli {

namespace fs = std::filesystem;

struct RunConfig {
  std::string scenario_path;
  std::string map_path;
  std::string tree_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool trace = false;
  bool record = false;
  std::string replay_path;
  std::string control_path;
};

/// Thrown for unusable user input (exit code 1).
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

/// Session options encoded in a scenario's "localisation" block.
inline SessionOptions options_from_scenario(const sim::Scenario& sc) {
  SessionOptions opt;
  opt.system = beh::system_config_from_json(sc.localisation);
  opt.tick_period = sc.localisation.value("tick_period", 0.5);
  opt.start = sc.start;
  opt.duration = sim::scenario_duration(sc, sim::Route(sc.start, sc.route));
  if (sc.localisation.contains("tree")) {
    const auto& t = sc.localisation.at("tree");
    opt.tree_config.backup_gps = t.value("backup_gps", true);
    opt.tree_config.main_lidar = t.value("main_lidar", true);
    opt.tree_config.main_gps = t.value("main_gps", true);
    opt.tree_config.manual_reset = t.value("manual_reset", true);
    opt.tree_config.gps_context_gate = t.value("gps_context_gate", true);
  }
  return opt;
}

struct RunArtifacts {
  SessionResult session;
  metrics::RunReport report;
  nlohmann::json config;
};

inline std::string report_text(const metrics::RunReport& r) { return metrics::to_json(r).dump(2) + "\n"; }

/// Executes one run and, when `cfg.out_dir` is set, writes the run directory.
inline RunArtifacts execute_run(const RunConfig& cfg) {
  if (!cfg.replay_path.empty() && !cfg.scenario_path.empty()) {
    throw InputError("--replay and --scenario are mutually exclusive");
  }
  if (cfg.replay_path.empty() && cfg.scenario_path.empty()) throw InputError("need --scenario or --replay");

  sim::World world;
  if (!cfg.replay_path.empty()) {
    sim::Recording rec;
    try {
      rec = sim::read_recording(cfg.replay_path);
    } catch (const std::exception& e) {
      throw InputError(e.what());
    }
    world.scenario = rec.scenario;
    world.truth = std::move(rec.truth);
    world.measurements = std::move(rec.measurements);
    world.map = sim::generate_map(world.scenario);
  } else {
    sim::Scenario sc;
    try {
      sc = sim::load_scenario(cfg.scenario_path);
      if (cfg.seed) sc.seed = *cfg.seed;
      world = sim::build_world(sc);
    } catch (const std::exception& e) {
      throw InputError(e.what());
    }
  }
  const sim::Scenario& sc = world.scenario;

  mapdb::MapDatabase map;
  if (!cfg.map_path.empty()) {
    try {
      map = mapdb::map_from_json(read_json_file(cfg.map_path));
    } catch (const InputError&) {
      throw;
    } catch (const std::exception& e) {
      throw InputError(cfg.map_path + ": " + e.what());
    }
  } else {
    map = sim::build_default_map(world);
  }

  SessionOptions opt;
  try {
    opt = options_from_scenario(sc);
  } catch (const std::exception& e) {
    throw InputError(std::string("localisation block: ") + e.what());
  }
  if (!cfg.tree_path.empty()) opt.tree = read_json_file(cfg.tree_path);
  opt.control_path = cfg.control_path;

  std::ofstream trace;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    if (cfg.trace) {
      trace.open(fs::path(cfg.out_dir) / "trace.jsonl");
      opt.trace = &trace;
    }
  }

  RunArtifacts out;
  try {
    out.session = run_session(world.measurements, &world.truth, map, opt);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  out.report = metrics::compute_report(out.session.ticks, out.session.events, out.session.stats);
  out.config = {{"scenario", sim::to_json(sc)},
                {"seed", sc.seed},
                {"map", cfg.map_path.empty() ? "survey" : cfg.map_path},
                {"tree", opt.tree ? *opt.tree : nlohmann::json("built-in")},
                {"system", beh::to_json(opt.system)},
                {"tick_period", opt.tick_period},
                {"replay", cfg.replay_path}};

  if (!cfg.out_dir.empty()) {
    const fs::path dir(cfg.out_dir);
    write_text(dir / "config.json", out.config.dump(2) + "\n");
    write_text(dir / "scenario.json", sim::to_json(sc).dump(2) + "\n");
    mapdb::save_map(map, (dir / "map.json").string());
    metrics::write_jsonl((dir / "events.jsonl").string(), out.session.events);
    metrics::write_jsonl((dir / "stats.jsonl").string(), out.session.stats);
    metrics::write_jsonl((dir / "ticks.jsonl").string(), out.session.ticks);
    metrics::write_jsonl((dir / "location_log.jsonl").string(), out.session.location_log);
    write_text(dir / "report.json", report_text(out.report));
    write_text(dir / "trajectory.geojson", metrics::export_geojson(out.session.ticks).dump() + "\n");
    write_text(dir / "timing.json", metrics::to_json(out.session.timing).dump(2) + "\n");
    write_text(dir / "timing_tick.csv", metrics::histogram_csv(out.session.timing.tick_ms));
    write_text(dir / "timing_lidar.csv", metrics::histogram_csv(out.session.timing.lidar_ms));
    write_text(dir / "timing_gps.csv", metrics::histogram_csv(out.session.timing.gps_ms));
    if (cfg.record) sim::write_recording((dir / "measurements.jsonl").string(), sc, world.truth, world.measurements);
  }
  return out;
}

/// Recomputes the report of a run directory from its logs.
inline metrics::RunReport recompute_report(const std::string& run_dir) {
  const fs::path dir(run_dir);
  try {
    const auto ticks = metrics::read_jsonl((dir / "ticks.jsonl").string(), metrics::tick_from_json);
    const auto events = metrics::read_jsonl((dir / "events.jsonl").string(), beh::event_from_json);
    const auto stats = metrics::read_jsonl((dir / "stats.jsonl").string(), metrics::stats_from_json);
    return metrics::compute_report(ticks, events, stats);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
}

/// Location model from run location logs plus a feature layer.
inline mapdb::MapDatabase build_map_from_logs(const std::vector<std::string>& log_paths,
                                              const mapdb::FeatureLayer& features) {
  std::vector<mapdb::RunLog> logs;
  std::size_t samples = 0;
  for (const auto& p : log_paths) {
    try {
      logs.push_back(metrics::read_jsonl(p, metrics::location_sample_from_json));
    } catch (const std::exception& e) {
      throw InputError(e.what());
    }
    samples += logs.back().size();
  }
  if (samples == 0) throw InputError("map build: no samples in the given logs");
  return mapdb::MapDatabase{features, mapdb::build_location_model(logs)};
}

}  // namespace btloc::cli
