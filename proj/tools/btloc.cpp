#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "btloc/cli/app.hpp"
#include "btloc/core/log.hpp"

using namespace btloc;

namespace {

int finish_run(const cli::RunConfig& cfg) {
  const auto run = cli::execute_run(cfg);
  const auto& r = run.report;
  std::cout << "ticks " << run.session.ticks.size() << ", switches " << r.switch_count << ", recoveries "
            << r.recovery_count << "\n";
  for (const auto& [m, p] : r.distance_pct) std::cout << "  " << est::to_string(m) << " " << p << " %\n";
  if (!cfg.out_dir.empty()) std::cout << "artifacts in " << cfg.out_dir << "\n";
  if (run.session.main_lost) {
    std::cerr << "main filter ended LOST\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Behavior-tree supervised localisation: simulate, run, replay and report"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log behavior decisions to stderr");

  cli::RunConfig run_cfg;
  std::uint64_t seed = 0;
  auto* run = app.add_subcommand("run", "Run a scenario (or replay a measurement log) through the behavior tree");
  auto* scen_opt = run->add_option("--scenario", run_cfg.scenario_path, "Scenario JSON file");
  auto* replay_opt = run->add_option("--replay", run_cfg.replay_path, "Measurement log written by --record");
  scen_opt->excludes(replay_opt);
  run->add_option("--map", run_cfg.map_path, "Map file; built from a survey pass over the scenario when omitted");
  run->add_option("--tree", run_cfg.tree_path, "Behavior tree definition (JSON); built-in experiment tree when omitted");
  auto* seed_opt = run->add_option("--seed", seed, "Override the scenario's measurement noise seed");
  run->add_option("--out", run_cfg.out_dir, "Output directory for the run artifacts");
  run->add_flag("--trace", run_cfg.trace, "Write a per-node tick trace (trace.jsonl)");
  run->add_flag("--record", run_cfg.record, "Write the measurement stream (measurements.jsonl)");
  run->add_option("--control", run_cfg.control_path,
                  "Control file polled every tick: 'reset <x> <y> <heading_deg>' or 'reinit' per line");

  cli::RunConfig replay_cfg;
  auto* replay = app.add_subcommand("replay", "Re-run a recorded measurement log");
  replay->add_option("log", replay_cfg.replay_path, "Measurement log")->required();
  replay->add_option("--map", replay_cfg.map_path, "Map file");
  replay->add_option("--tree", replay_cfg.tree_path, "Behavior tree definition (JSON)");
  replay->add_option("--out", replay_cfg.out_dir, "Output directory");
  replay->add_flag("--trace", replay_cfg.trace, "Write a per-node tick trace");

  std::string report_dir, report_out;
  auto* report = app.add_subcommand("report", "Recompute a run report from its logs");
  report->add_option("run_dir", report_dir, "Run directory")->required();
  report->add_option("--out", report_out, "Write the report here instead of stdout");

  auto* map = app.add_subcommand("map", "Map database tools");
  map->require_subcommand(1);
  std::vector<std::string> logs;
  std::string map_out, map_scenario, map_features;
  auto* build = map->add_subcommand("build", "Build a map from run location logs (location_log.jsonl)");
  build->add_option("logs", logs, "Location logs")->required();
  build->add_option("--out", map_out, "Output map file")->required();
  auto* fs_opt = build->add_option("--scenario", map_scenario, "Take the feature layer from this scenario");
  build->add_option("--features", map_features, "Take the feature layer from this map file")->excludes(fs_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  log::set_level(verbose ? log::Level::Info : log::Level::Warn);

  try {
    if (*run) {
      if (*seed_opt) run_cfg.seed = seed;
      return finish_run(run_cfg);
    }
    if (*replay) return finish_run(replay_cfg);
    if (*report) {
      const std::string text = cli::report_text(cli::recompute_report(report_dir));
      if (report_out.empty()) {
        std::cout << text;
      } else {
        cli::write_text(report_out, text);
      }
      return 0;
    }
    if (*build) {
      mapdb::FeatureLayer features;
      if (!map_scenario.empty()) {
        features = sim::generate_map(sim::load_scenario(map_scenario));
      } else if (!map_features.empty()) {
        features = mapdb::map_from_json(cli::read_json_file(map_features)).features;
      }
      const auto db = cli::build_map_from_logs(logs, features);
      mapdb::save_map(db, map_out);
      std::cout << db.location.cells().size() << " cells, " << db.features.size() << " features -> " << map_out
                << "\n";
      return 0;
    }
  } catch (const cli::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
