// cpfusion: run collective-perception scenarios, emit CSV metrics, and poke at
// the message codec. Exit codes: 0 success, 1 domain error (e.g. a payload
// that fails to decode), 2 usage or I/O error.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cpf/cpm.hpp"
#include "cpf/metrics.hpp"
#include "cpf/scenario_io.hpp"
#include "cpf/sim.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomainError = 1;
constexpr int kExitUsage = 2;

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

LogLevel log_level_from_env() {
  const char* value = std::getenv("CPFUSION_LOG");
  if (value == nullptr) return LogLevel::Error;
  const std::string text(value);
  if (text == "debug") return LogLevel::Debug;
  if (text == "info") return LogLevel::Info;
  if (text == "error" || text.empty()) return LogLevel::Error;
  std::cerr << "cpfusion: ignoring unknown CPFUSION_LOG value \"" << text << "\"\n";
  return LogLevel::Error;
}

LogLevel g_log_level = LogLevel::Error;

void log_info(const std::string& message) {
  if (g_log_level >= LogLevel::Info) std::cerr << "[info] " << message << '\n';
}

void log_debug(const std::string& message) {
  if (g_log_level >= LogLevel::Debug) std::cerr << "[debug] " << message << '\n';
}

std::string fmt(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.6g", value);
  return buffer;
}

// The station whose records the per-pedestrian summary scores: the
// lowest-numbered vehicle, falling back to the lowest-numbered station.
std::uint32_t eval_station_id(const cpf::sim::Scenario& scenario) {
  std::optional<std::uint32_t> best;
  for (const cpf::sim::StationSpec& station : scenario.stations) {
    if (station.station_type != cpf::cpm::StationType::Vehicle) continue;
    if (!best || station.station_id < *best) best = station.station_id;
  }
  if (best) return *best;
  std::uint32_t lowest = scenario.stations.front().station_id;
  for (const cpf::sim::StationSpec& station : scenario.stations) {
    lowest = std::min(lowest, station.station_id);
  }
  return lowest;
}

void write_file(const fs::path& path, const std::string& label,
                const std::function<void(std::ostream&)>& writer) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  writer(out);
  if (!out) throw std::runtime_error("write to " + path.string() + " failed");
  log_info("wrote " + label + ": " + path.string());
}

// Runs a validated scenario and writes every output under out_dir. Shared by
// `run` and `grid`.
int run_and_report(const cpf::sim::Scenario& scenario, const std::string& out_dir) {
  const std::vector<cpf::sim::TickRecord> records = cpf::sim::run_scenario(scenario);
  const std::uint32_t eval_station = eval_station_id(scenario);
  const cpf::metrics::RunSummary summary =
      cpf::metrics::summarize(records, scenario.pedestrians.size(), eval_station);

  fs::create_directories(fs::path(out_dir) / "plotdata");
  write_file(fs::path(out_dir) / "scenario.json", "scenario", [&](std::ostream& out) {
    out << cpf::sim::scenario_to_json_text(scenario);
  });
  write_file(fs::path(out_dir) / "ticks.csv", "tick records", [&](std::ostream& out) {
    cpf::metrics::write_ticks_csv(out, records);
  });
  write_file(fs::path(out_dir) / "summary.csv", "summary", [&](std::ostream& out) {
    cpf::metrics::write_summary_csv(out, summary);
  });
  write_file(fs::path(out_dir) / "nees.csv", "consistency", [&](std::ostream& out) {
    cpf::metrics::write_nees_csv(out, summary);
  });
  for (const cpf::sim::StationSpec& station : scenario.stations) {
    const fs::path path = fs::path(out_dir) / "plotdata" /
                          ("traces_station_" + std::to_string(station.station_id) + ".csv");
    write_file(path, "uncertainty traces", [&](std::ostream& out) {
      cpf::metrics::write_trace_csv(out, records, station.station_id);
    });
  }

  std::cout << "scenario: " << (scenario.name.empty() ? "(unnamed)" : scenario.name)
            << "  ticks: " << records.size() << "  stations: " << scenario.stations.size()
            << "  pedestrians: " << scenario.pedestrians.size() << "\n";
  std::cout << "evaluation station: " << summary.eval_station_id << "\n";
  std::cout << "pedestrian  std_x     std_y     mean_error  ticks_tracked\n";
  for (const cpf::metrics::PedestrianStat& stat : summary.pedestrians) {
    std::printf("%-11zu %-9s %-9s %-11s %zu\n", stat.pedestrian, fmt(stat.std_x).c_str(),
                fmt(stat.std_y).c_str(), fmt(stat.mean_error).c_str(), stat.ticks_tracked);
  }
  std::cout << "station  mean_nees\n";
  for (const cpf::metrics::StationStat& stat : summary.stations) {
    std::printf("%-8u %s\n", stat.station_id, fmt(stat.mean_nees).c_str());
  }
  std::cout << "outputs in " << out_dir << "\n";
  return kExitOk;
}

// Duration override expressed in ticks, applied before validation.
void apply_tick_override(cpf::sim::Scenario& scenario, std::optional<std::size_t> ticks) {
  if (!ticks) return;
  scenario.duration = static_cast<double>(*ticks) / scenario.tick_rate;
}

int cmd_run(const std::string& scenario_path, std::optional<std::uint64_t> seed,
            std::optional<std::size_t> ticks, const std::string& out_dir) {
  cpf::sim::Scenario scenario = cpf::sim::load_scenario(scenario_path);
  if (seed) scenario.rng_seed = *seed;
  apply_tick_override(scenario, ticks);
  scenario.validate();
  log_debug("loaded scenario \"" + scenario.name + "\" from " + scenario_path);
  return run_and_report(scenario, out_dir);
}

int cmd_grid(const std::string& configuration, std::uint64_t seed,
             std::optional<std::size_t> ticks, const std::string& out_dir) {
  if (configuration != "A" && configuration != "B") {
    throw std::runtime_error("--config must be A or B, got \"" + configuration + "\"");
  }
  cpf::sim::Scenario scenario = cpf::sim::build_coverage_grid_scenario(configuration[0], seed);
  apply_tick_override(scenario, ticks);
  scenario.validate();
  return run_and_report(scenario, out_dir);
}

int cmd_export(const std::string& which, std::uint64_t seed, const std::string& out_path) {
  cpf::sim::Scenario scenario;
  if (which == "grid-a") {
    scenario = cpf::sim::build_coverage_grid_scenario('A', seed);
  } else if (which == "grid-b") {
    scenario = cpf::sim::build_coverage_grid_scenario('B', seed);
  } else if (which == "crossing") {
    scenario = cpf::sim::build_occlusion_scenario(seed);
  } else {
    throw std::runtime_error("unknown scenario \"" + which +
                             "\" (expected grid-a, grid-b, or crossing)");
  }
  cpf::sim::save_scenario(out_path, scenario);
  std::cout << "wrote " << out_path << "\n";
  return kExitOk;
}

const char* decode_error_kind_name(cpf::cpm::DecodeError::Kind kind) {
  using Kind = cpf::cpm::DecodeError::Kind;
  switch (kind) {
    case Kind::Truncated: return "truncated";
    case Kind::UnsupportedVersion: return "unsupported-version";
    case Kind::MalformedCovariance: return "malformed-covariance";
    case Kind::MalformedField: return "malformed-field";
  }
  return "unknown";
}

void print_cpm(const cpf::cpm::Cpm& message) {
  using namespace cpf::cpm;
  std::cout << "station_id: " << message.station_id << "\n";
  std::cout << "protocol_version: " << static_cast<int>(message.protocol_version) << "\n";
  std::cout << "generation_time: " << message.generation_time << " ms\n";
  const ManagementContainer& mgmt = message.management;
  std::cout << "management: type="
            << (mgmt.station_type == StationType::Vehicle ? "vehicle" : "roadside_unit")
            << " pose=(" << fmt(mgmt.reference_pose.x) << ", " << fmt(mgmt.reference_pose.y)
            << ", " << fmt(mgmt.reference_pose.theta) << ") pos_std=("
            << fmt(std::sqrt(mgmt.reference_pose.cov(0, 0))) << ", "
            << fmt(std::sqrt(mgmt.reference_pose.cov(1, 1))) << ") heading_std="
            << fmt(std::sqrt(mgmt.reference_pose.cov(2, 2))) << "\n";
  if (message.station_data) {
    std::cout << "station_data: heading=" << fmt(message.station_data->heading)
              << " speed=" << fmt(message.station_data->speed)
              << " length=" << fmt(message.station_data->length)
              << " width=" << fmt(message.station_data->width) << "\n";
  }
  for (const SensorInfoContainer& sensor : message.sensors) {
    const char* type = sensor.sensor_type == SensorType::Lidar    ? "lidar"
                       : sensor.sensor_type == SensorType::Camera ? "camera"
                                                                  : "fused";
    std::cout << "sensor[" << static_cast<int>(sensor.sensor_id) << "]: type=" << type;
    if (sensor.area.shape == DetectionArea::Shape::Circle) {
      std::cout << " area=circle center=(" << fmt(sensor.area.center.x()) << ", "
                << fmt(sensor.area.center.y()) << ") radius=" << fmt(sensor.area.radius);
    } else {
      std::cout << " area=sector center=(" << fmt(sensor.area.center.x()) << ", "
                << fmt(sensor.area.center.y()) << ") radius=" << fmt(sensor.area.radius)
                << " bearings=[" << fmt(sensor.area.start_bearing) << ", "
                << fmt(sensor.area.end_bearing) << "]";
    }
    std::cout << "\n";
  }
  for (std::size_t i = 0; i < message.perceived_objects.size(); ++i) {
    const PerceivedObjectContainer& object = message.perceived_objects[i];
    const char* kind =
        object.abstraction == ObjectAbstraction::Track ? "track" : "detection";
    const char* type = object.object_type == ObjectType::Pedestrian ? "pedestrian"
                       : object.object_type == ObjectType::Vehicle  ? "vehicle"
                                                                    : "unknown";
    std::cout << "object[" << i << "]: id=" << object.object_id << " kind=" << kind
              << " type=" << type << " mean=(";
    for (Eigen::Index k = 0; k < object.mean.size(); ++k) {
      std::cout << (k == 0 ? "" : ", ") << fmt(object.mean(k));
    }
    std::cout << ") cov_diag=(";
    for (Eigen::Index k = 0; k < object.cov.rows(); ++k) {
      std::cout << (k == 0 ? "" : ", ") << fmt(object.cov(k, k));
    }
    std::cout << ")\n";
  }
  if (!message.free_space.empty()) {
    std::cout << "free_space: " << message.free_space.size() << " blob(s)\n";
  }
}

int cmd_cpm_inspect(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "cpfusion: cannot open " << path << "\n";
    return kExitUsage;
  }
  std::vector<std::uint8_t> payload((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
  const cpf::cpm::DecodeResult result = cpf::cpm::decode(payload);
  if (!cpf::cpm::ok(result)) {
    const cpf::cpm::DecodeError& err = cpf::cpm::error(result);
    std::cerr << "decode error (" << decode_error_kind_name(err.kind) << "): " << err.detail
              << "\n";
    return kExitDomainError;
  }
  std::cout << "payload: " << payload.size() << " bytes\n";
  print_cpm(cpf::cpm::value(result));
  return kExitOk;
}

// A fully populated message whose encoding seeds the mutation strategies.
cpf::cpm::Cpm fuzz_seed_message() {
  using namespace cpf::cpm;
  Cpm message;
  message.station_id = 42;
  message.generation_time = 123456;
  message.management.station_type = StationType::Vehicle;
  message.management.reference_pose = {1.5, -2.25, 0.3, Eigen::Matrix3d::Identity() * 0.04};
  message.station_data = StationDataContainer{0.3, 4.5, 4.2, 1.8};
  SensorInfoContainer sensor;
  sensor.sensor_id = 0;
  sensor.sensor_type = SensorType::Fused;
  sensor.area.shape = DetectionArea::Shape::Circle;
  sensor.area.center = {0.5, 0.0};
  sensor.area.radius = 30.0;
  message.sensors.push_back(sensor);
  PerceivedObjectContainer object;
  object.object_id = 7;
  object.abstraction = ObjectAbstraction::Track;
  object.mean = Eigen::Vector4d{10.0, -3.0, 1.0, 0.5};
  Eigen::Matrix4d cov = Eigen::Matrix4d::Identity() * 0.2;
  cov(0, 1) = cov(1, 0) = 0.05;
  object.cov = cov;
  object.object_type = ObjectType::Pedestrian;
  message.perceived_objects.push_back(object);
  return message;
}

int cmd_cpm_fuzz(std::size_t cases, std::uint64_t seed) {
  using cpf::cpm::DecodeError;
  const std::vector<std::uint8_t> valid = cpf::cpm::encode(fuzz_seed_message());
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> byte_dist(0, 255);

  std::size_t ok_count = 0;
  std::size_t crash_count = 0;
  std::size_t error_counts[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < cases; ++i) {
    std::vector<std::uint8_t> payload;
    const std::uint64_t strategy = rng() % 3;
    if (strategy == 0) {
      // Uniformly random bytes.
      const std::size_t length = rng() % 512;
      payload.resize(length);
      for (std::uint8_t& b : payload) b = static_cast<std::uint8_t>(byte_dist(rng));
    } else if (strategy == 1) {
      // Mutate a valid payload in up to 8 places.
      payload = valid;
      const std::size_t flips = 1 + rng() % 8;
      for (std::size_t f = 0; f < flips; ++f) {
        payload[rng() % payload.size()] = static_cast<std::uint8_t>(byte_dist(rng));
      }
    } else {
      // Truncate (or extend) a valid payload.
      payload = valid;
      payload.resize(rng() % (valid.size() + 16));
      for (std::size_t k = valid.size(); k < payload.size(); ++k) {
        payload[k] = static_cast<std::uint8_t>(byte_dist(rng));
      }
    }
    try {
      const cpf::cpm::DecodeResult result = cpf::cpm::decode(payload);
      if (cpf::cpm::ok(result)) {
        ++ok_count;
      } else {
        ++error_counts[static_cast<std::size_t>(cpf::cpm::error(result).kind)];
      }
    } catch (...) {
      ++crash_count;  // decode is specified total; any escape is a defect
    }
  }

  std::cout << "cases=" << cases << " ok=" << ok_count
            << " truncated=" << error_counts[static_cast<std::size_t>(DecodeError::Kind::Truncated)]
            << " unsupported_version="
            << error_counts[static_cast<std::size_t>(DecodeError::Kind::UnsupportedVersion)]
            << " malformed_covariance="
            << error_counts[static_cast<std::size_t>(DecodeError::Kind::MalformedCovariance)]
            << " malformed_field="
            << error_counts[static_cast<std::size_t>(DecodeError::Kind::MalformedField)]
            << " crashes=" << crash_count << "\n";
  return crash_count == 0 ? kExitOk : kExitDomainError;
}

}  // namespace

int main(int argc, char** argv) {
  g_log_level = log_level_from_env();

  CLI::App app{"Collective-perception track fusion: simulator, metrics, and codec tools"};
  app.require_subcommand(1);

  // run
  std::string scenario_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed_override;
  std::optional<std::size_t> tick_override;
  CLI::App* run = app.add_subcommand("run", "Run a scenario file and write CSV metrics");
  run->add_option("--scenario", scenario_path, "Scenario JSON file")->required();
  run->add_option("--seed", seed_override, "Override the scenario RNG seed");
  run->add_option("--ticks", tick_override, "Override the scenario length in ticks");
  run->add_option("--out", out_dir, "Output directory (default: out)");

  // grid
  std::string grid_config;
  std::uint64_t grid_seed = 1;
  std::string grid_out = "out";
  std::optional<std::size_t> grid_ticks;
  CLI::App* grid =
      app.add_subcommand("grid", "Run the built-in nine-pedestrian coverage-grid scenario");
  grid->add_option("--config", grid_config, "Roadside-unit sharing mode: A (tracks) or B (detections)")
      ->required();
  grid->add_option("--seed", grid_seed, "RNG seed (default: 1)");
  grid->add_option("--ticks", grid_ticks, "Override the scenario length in ticks");
  grid->add_option("--out", grid_out, "Output directory (default: out)");

  // export
  std::string export_name;
  std::uint64_t export_seed = 1;
  std::string export_out = "scenario.json";
  CLI::App* exporter =
      app.add_subcommand("export", "Write a built-in scenario (grid-a, grid-b, crossing) to JSON");
  exporter->add_option("name", export_name, "Built-in scenario name")->required();
  exporter->add_option("--seed", export_seed, "RNG seed to embed (default: 1)");
  exporter->add_option("--out", export_out, "Output file (default: scenario.json)");

  // cpm
  CLI::App* cpm = app.add_subcommand("cpm", "Message codec utilities");
  cpm->require_subcommand(1);
  std::string inspect_path;
  CLI::App* inspect = cpm->add_subcommand("inspect", "Decode a payload file and print it");
  inspect->add_option("file", inspect_path, "Payload file")->required();
  std::size_t fuzz_cases = 100000;
  std::uint64_t fuzz_seed = 1;
  CLI::App* fuzz = cpm->add_subcommand("fuzz", "Feed random payloads to the decoder");
  fuzz->add_option("--cases", fuzz_cases, "Number of payloads (default: 100000)");
  fuzz->add_option("--seed", fuzz_seed, "RNG seed (default: 1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (run->parsed()) return cmd_run(scenario_path, seed_override, tick_override, out_dir);
    if (grid->parsed()) return cmd_grid(grid_config, grid_seed, grid_ticks, grid_out);
    if (exporter->parsed()) return cmd_export(export_name, export_seed, export_out);
    if (cpm->parsed()) {
      if (inspect->parsed()) return cmd_cpm_inspect(inspect_path);
      if (fuzz->parsed()) return cmd_cpm_fuzz(fuzz_cases, fuzz_seed);
    }
  } catch (const std::exception& e) {
    std::cerr << "cpfusion: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
