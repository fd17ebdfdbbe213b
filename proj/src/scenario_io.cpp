#include "cpf/scenario_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace cpf::sim {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& what) {
  throw std::runtime_error("scenario: " + what);
}

// Fetches a required key, failing with the key path instead of a bare
// exception from the JSON library.
const json& require(const json& node, const char* key, const char* context) {
  if (!node.is_object() || !node.contains(key)) {
    fail(std::string(context) + ": missing required key \"" + key + "\"");
  }
  return node.at(key);
}

double require_number(const json& node, const char* key, const char* context) {
  const json& value = require(node, key, context);
  if (!value.is_number()) {
    fail(std::string(context) + "." + key + ": expected a number");
  }
  return value.get<double>();
}

cpm::StationType station_type_from_string(const std::string& text) {
  if (text == "vehicle") return cpm::StationType::Vehicle;
  if (text == "roadside_unit") return cpm::StationType::RoadsideUnit;
  fail("station_type must be \"vehicle\" or \"roadside_unit\", got \"" + text + "\"");
}

std::string station_type_to_string(cpm::StationType type) {
  return type == cpm::StationType::Vehicle ? "vehicle" : "roadside_unit";
}

ShareMode share_mode_from_string(const std::string& text) {
  if (text == "tracks") return ShareMode::Tracks;
  if (text == "detections") return ShareMode::Detections;
  fail("share_mode must be \"tracks\" or \"detections\", got \"" + text + "\"");
}

std::string share_mode_to_string(ShareMode mode) {
  return mode == ShareMode::Tracks ? "tracks" : "detections";
}

Eigen::Vector2d vector2_from_json(const json& node, const char* context) {
  if (!node.is_array() || node.size() != 2 || !node[0].is_number() || !node[1].is_number()) {
    fail(std::string(context) + ": expected [x, y]");
  }
  return {node[0].get<double>(), node[1].get<double>()};
}

StationSpec station_from_json(const json& node) {
  StationSpec spec;
  spec.station_id = require(node, "station_id", "station").get<std::uint32_t>();
  spec.station_type =
      station_type_from_string(require(node, "station_type", "station").get<std::string>());
  const json& waypoints = require(node, "waypoints", "station");
  if (!waypoints.is_array()) fail("station.waypoints: expected an array");
  for (const json& wp : waypoints) {
    spec.waypoints.push_back({require_number(wp, "time", "waypoint"),
                              require_number(wp, "x", "waypoint"),
                              require_number(wp, "y", "waypoint"),
                              require_number(wp, "theta", "waypoint")});
  }
  spec.localization_position_std =
      require_number(node, "localization_position_std", "station");
  spec.localization_heading_std =
      require_number(node, "localization_heading_std", "station");
  spec.sensor_range = require_number(node, "sensor_range", "station");
  spec.sensor_noise_std = require_number(node, "sensor_noise_std", "station");
  spec.detection_probability = node.value("detection_probability", 0.99);
  spec.share_mode =
      share_mode_from_string(require(node, "share_mode", "station").get<std::string>());
  return spec;
}

json station_to_json(const StationSpec& spec) {
  json waypoints = json::array();
  for (const TimedPose& wp : spec.waypoints) {
    waypoints.push_back({{"time", wp.time}, {"x", wp.x}, {"y", wp.y}, {"theta", wp.theta}});
  }
  return {{"station_id", spec.station_id},
          {"station_type", station_type_to_string(spec.station_type)},
          {"waypoints", std::move(waypoints)},
          {"localization_position_std", spec.localization_position_std},
          {"localization_heading_std", spec.localization_heading_std},
          {"sensor_range", spec.sensor_range},
          {"sensor_noise_std", spec.sensor_noise_std},
          {"detection_probability", spec.detection_probability},
          {"share_mode", share_mode_to_string(spec.share_mode)}};
}

PedestrianSpec pedestrian_from_json(const json& node) {
  PedestrianSpec spec;
  spec.initial_position =
      vector2_from_json(require(node, "initial_position", "pedestrian"), "pedestrian.initial_position");
  const json& profile = require(node, "velocity_profile", "pedestrian");
  if (!profile.is_array()) fail("pedestrian.velocity_profile: expected an array");
  for (const json& segment : profile) {
    spec.velocity_profile.push_back(
        {require_number(segment, "start_time", "velocity segment"),
         vector2_from_json(require(segment, "velocity", "velocity segment"),
                           "velocity segment.velocity")});
  }
  spec.process_noise_std = require_number(node, "process_noise_std", "pedestrian");
  return spec;
}

json pedestrian_to_json(const PedestrianSpec& spec) {
  json profile = json::array();
  for (const VelocitySegment& segment : spec.velocity_profile) {
    profile.push_back({{"start_time", segment.start_time},
                       {"velocity", {segment.velocity.x(), segment.velocity.y()}}});
  }
  return {{"initial_position", {spec.initial_position.x(), spec.initial_position.y()}},
          {"velocity_profile", std::move(profile)},
          {"process_noise_std", spec.process_noise_std}};
}

TrackerSettings tracker_from_json(const json& node) {
  TrackerSettings settings;
  settings.process_noise_velocity_std =
      node.value("process_noise_velocity_std", settings.process_noise_velocity_std);
  settings.clutter_density = node.value("clutter_density", settings.clutter_density);
  settings.birth_weight = node.value("birth_weight", settings.birth_weight);
  settings.birth_velocity_std = node.value("birth_velocity_std", settings.birth_velocity_std);
  settings.prune_threshold = node.value("prune_threshold", settings.prune_threshold);
  settings.merge_mahalanobis_threshold =
      node.value("merge_mahalanobis_threshold", settings.merge_mahalanobis_threshold);
  settings.alias_conflict_merge_distance =
      node.value("alias_conflict_merge_distance", settings.alias_conflict_merge_distance);
  settings.merge_distance_floor =
      node.value("merge_distance_floor", settings.merge_distance_floor);
  settings.max_tracks = node.value("max_tracks", settings.max_tracks);
  settings.confirm_weight = node.value("confirm_weight", settings.confirm_weight);
  settings.survival_probability =
      node.value("survival_probability", settings.survival_probability);
  settings.fusion_gate_mahalanobis2 =
      node.value("fusion_gate_mahalanobis2", settings.fusion_gate_mahalanobis2);
  return settings;
}

json tracker_to_json(const TrackerSettings& settings) {
  return {{"process_noise_velocity_std", settings.process_noise_velocity_std},
          {"clutter_density", settings.clutter_density},
          {"birth_weight", settings.birth_weight},
          {"birth_velocity_std", settings.birth_velocity_std},
          {"prune_threshold", settings.prune_threshold},
          {"merge_mahalanobis_threshold", settings.merge_mahalanobis_threshold},
          {"alias_conflict_merge_distance", settings.alias_conflict_merge_distance},
          {"merge_distance_floor", settings.merge_distance_floor},
          {"max_tracks", settings.max_tracks},
          {"confirm_weight", settings.confirm_weight},
          {"survival_probability", settings.survival_probability},
          {"fusion_gate_mahalanobis2", settings.fusion_gate_mahalanobis2}};
}

Scenario scenario_from_json(const json& doc) {
  if (!doc.is_object()) fail("top level: expected an object");
  Scenario scenario;
  scenario.name = doc.value("name", std::string{});
  scenario.duration = require_number(doc, "duration", "top level");
  scenario.tick_rate = require_number(doc, "tick_rate", "top level");
  scenario.rng_seed = require(doc, "rng_seed", "top level").get<std::uint64_t>();

  const json& stations = require(doc, "stations", "top level");
  if (!stations.is_array()) fail("stations: expected an array");
  for (const json& node : stations) scenario.stations.push_back(station_from_json(node));

  const json& pedestrians = require(doc, "pedestrians", "top level");
  if (!pedestrians.is_array()) fail("pedestrians: expected an array");
  for (const json& node : pedestrians) {
    scenario.pedestrians.push_back(pedestrian_from_json(node));
  }

  const json& topology = require(doc, "topology", "top level");
  if (!topology.is_array()) fail("topology: expected an array");
  for (const json& node : topology) {
    scenario.topology.push_back({require(node, "from", "link").get<std::uint32_t>(),
                                 require(node, "to", "link").get<std::uint32_t>()});
  }

  if (doc.contains("occlusions")) {
    const json& occlusions = doc.at("occlusions");
    if (!occlusions.is_array()) fail("occlusions: expected an array");
    for (const json& node : occlusions) {
      scenario.occlusions.push_back(
          {require(node, "station_id", "occlusion").get<std::uint32_t>(),
           require(node, "pedestrian", "occlusion").get<std::size_t>(),
           require_number(node, "start_time", "occlusion"),
           require_number(node, "end_time", "occlusion")});
    }
  }

  if (doc.contains("tracker")) scenario.tracker = tracker_from_json(doc.at("tracker"));
  return scenario;
}

json scenario_to_json(const Scenario& scenario) {
  json stations = json::array();
  for (const StationSpec& spec : scenario.stations) stations.push_back(station_to_json(spec));
  json pedestrians = json::array();
  for (const PedestrianSpec& spec : scenario.pedestrians) {
    pedestrians.push_back(pedestrian_to_json(spec));
  }
  json topology = json::array();
  for (const Link& link : scenario.topology) {
    topology.push_back({{"from", link.from_station}, {"to", link.to_station}});
  }
  json occlusions = json::array();
  for (const OcclusionWindow& window : scenario.occlusions) {
    occlusions.push_back({{"station_id", window.station_id},
                          {"pedestrian", window.pedestrian},
                          {"start_time", window.start_time},
                          {"end_time", window.end_time}});
  }
  return {{"name", scenario.name},
          {"duration", scenario.duration},
          {"tick_rate", scenario.tick_rate},
          {"rng_seed", scenario.rng_seed},
          {"stations", std::move(stations)},
          {"pedestrians", std::move(pedestrians)},
          {"topology", std::move(topology)},
          {"occlusions", std::move(occlusions)},
          {"tracker", tracker_to_json(scenario.tracker)}};
}

}  // namespace

Scenario scenario_from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(std::string("invalid JSON: ") + e.what());
  }
  Scenario scenario;
  try {
    scenario = scenario_from_json(doc);
  } catch (const json::exception& e) {
    // Type errors from the JSON library (e.g. a string where a number belongs).
    fail(std::string("malformed document: ") + e.what());
  }
  scenario.validate();
  return scenario;
}

std::string scenario_to_json_text(const Scenario& scenario) {
  return scenario_to_json(scenario).dump(2) + "\n";
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open \"" + path + "\" for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return scenario_from_json_text(buffer.str());
}

void save_scenario(const std::string& path, const Scenario& scenario) {
  std::ofstream out(path);
  if (!out) fail("cannot open \"" + path + "\" for writing");
  out << scenario_to_json_text(scenario);
  if (!out) fail("write to \"" + path + "\" failed");
}

}  // namespace cpf::sim
