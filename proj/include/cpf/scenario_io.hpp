#pragma once

#include <string>

#include "cpf/sim.hpp"

namespace cpf::sim {

// JSON scenario files. The document mirrors Scenario field-for-field:
//
// {
//   "name": "...", "duration": 10.0, "tick_rate": 10.0, "rng_seed": 1,
//   "stations": [{"station_id": 1, "station_type": "vehicle"|"roadside_unit",
//                 "waypoints": [{"time": 0, "x": 0, "y": 0, "theta": 0}],
//                 "localization_position_std": 0.25,
//                 "localization_heading_std": 0.00872665,
//                 "sensor_range": 30.0, "sensor_noise_std": 0.2,
//                 "detection_probability": 0.9,
//                 "share_mode": "tracks"|"detections"}],
//   "pedestrians": [{"initial_position": [x, y],
//                    "velocity_profile": [{"start_time": 0, "velocity": [vx, vy]}],
//                    "process_noise_std": 1.0}],
//   "topology": [{"from": 1, "to": 2}],
//   "occlusions": [{"station_id": 1, "pedestrian": 0, "start_time": 0, "end_time": 6}],
//   "tracker": { ...TrackerSettings fields, all optional... }
// }
//
// "occlusions", "tracker", "name" and per-field tracker keys are optional;
// everything else is required. Loaded scenarios are validated.

// Parses and validates a scenario document. Throws std::runtime_error with a
// diagnostic for unreadable/ill-formed documents and std::invalid_argument
// (from Scenario::validate) for semantically invalid ones.
[[nodiscard]] Scenario scenario_from_json_text(const std::string& text);

[[nodiscard]] std::string scenario_to_json_text(const Scenario& scenario);

// File wrappers around the two functions above.
[[nodiscard]] Scenario load_scenario(const std::string& path);
void save_scenario(const std::string& path, const Scenario& scenario);

}  // namespace cpf::sim
