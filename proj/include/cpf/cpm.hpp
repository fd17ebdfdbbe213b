#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "cpf/geometry.hpp"
#include "cpf/tracker.hpp"

namespace cpf::cpm {

// Compact little-endian wire format for collective-perception messages.
//
// Layout: header = magic "CPM1" | protocol_version u8 | station_id u32 |
// generation_time u64 | container_count u8; then `container_count` containers,
// each tag u8 | length u16 | body. Unknown tags are skipped via their length
// prefix so the format can grow. Positions quantize to 0.01 m (i32), angles to
// 0.0001 rad (i16, wrapped to (-pi, pi]), speeds and dimensions to 0.01 m/s /
// 0.01 m (u16), per-axis pose standard deviations to 0.005 m-or-rad (u16, one
// LSB minimum). Perceived-object covariances travel as the lower triangle in
// 32-bit floats with the diagonal floored at (0.005)^2 — the smallest
// uncertainty the format can claim. The reference pose carries per-axis
// standard deviations only; its cross-correlations are not transmitted.

inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr char kMagic[4] = {'C', 'P', 'M', '1'};

inline constexpr double kPositionLsb = 0.01;   // m
inline constexpr double kAngleLsb = 1e-4;      // rad
inline constexpr double kSpeedLsb = 0.01;      // m/s
inline constexpr double kDimensionLsb = 0.01;  // m
inline constexpr double kStdLsb = 0.005;       // m or rad
inline constexpr double kMinStd = 0.005;       // floor for transmitted std-devs

inline constexpr std::size_t kMaxPerceivedObjects = 128;
inline constexpr std::size_t kMaxSensors = 8;

// Container tags on the wire.
inline constexpr std::uint8_t kTagManagement = 1;
inline constexpr std::uint8_t kTagStationData = 2;
inline constexpr std::uint8_t kTagSensorInfo = 3;
inline constexpr std::uint8_t kTagPerceivedObject = 4;
inline constexpr std::uint8_t kTagFreeSpace = 5;

enum class StationType : std::uint8_t { Vehicle = 0, RoadsideUnit = 1 };
enum class SensorType : std::uint8_t { Lidar = 0, Camera = 1, Fused = 2 };
enum class ObjectAbstraction : std::uint8_t { Detection = 0, Track = 1 };
enum class ObjectType : std::uint8_t { Pedestrian = 0, Vehicle = 1, Unknown = 2 };

// Station type plus the transmitter's reference pose (position, heading, and
// per-axis uncertainty) — present in every message.
struct ManagementContainer {
  StationType station_type = StationType::Vehicle;
  geom::Pose2D reference_pose;
};

// Kinematics and footprint of the transmitting station.
struct StationDataContainer {
  double heading = 0.0;  // rad
  double speed = 0.0;    // m/s, >= 0
  double length = 0.0;   // m, > 0
  double width = 0.0;    // m, > 0
};

// Circular or sector-shaped detection area in the transmitter's frame.
struct DetectionArea {
  enum class Shape : std::uint8_t { Circle = 0, Sector = 1 };
  Shape shape = Shape::Circle;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();  // offset from reference pose, m
  double radius = 0.0;                               // m, > 0
  double start_bearing = 0.0;                        // rad, sector only
  double end_bearing = 0.0;                          // rad, sector only
};

struct SensorInfoContainer {
  std::uint8_t sensor_id = 0;
  SensorType sensor_type = SensorType::Lidar;
  DetectionArea area;
};

// One shared object: either a raw sensor detection (position only) or a full
// track (position + velocity). Means and covariances are in the transmitter's
// frame; detections must be two-dimensional.
struct PerceivedObjectContainer {
  std::uint16_t object_id = 0;
  ObjectAbstraction abstraction = ObjectAbstraction::Track;
  Eigen::VectorXd mean;  // (x, y) or (x, y, vx, vy)
  Eigen::MatrixXd cov;   // matching square covariance
  ObjectType object_type = ObjectType::Unknown;
};

struct Cpm {
  std::uint8_t protocol_version = kProtocolVersion;
  std::uint32_t station_id = 0;
  std::uint64_t generation_time = 0;  // ms
  ManagementContainer management;
  std::optional<StationDataContainer> station_data;
  std::vector<SensorInfoContainer> sensors;                // <= kMaxSensors
  std::vector<PerceivedObjectContainer> perceived_objects; // <= kMaxPerceivedObjects
  std::vector<std::vector<std::uint8_t>> free_space;       // opaque blobs, passed through
};

// Thrown by encode() when a value cannot be represented on the wire; the
// message names the offending field.
class EncodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Returned (never thrown) by decode() for malformed payloads.
struct DecodeError {
  enum class Kind : std::uint8_t {
    Truncated,            // payload ends before the declared structure
    UnsupportedVersion,   // bad magic or unknown protocol version
    MalformedCovariance,  // dequantized covariance not positive semi-definite
    MalformedField,       // any other invariant violation
  };
  Kind kind;
  std::string detail;
};

using DecodeResult = std::variant<Cpm, DecodeError>;

// Serializes to the wire format above. Deterministic: equal messages produce
// byte-identical payloads. Throws EncodeError when a value is out of range.
[[nodiscard]] std::vector<std::uint8_t> encode(const Cpm& message);

// Total parser: any byte string yields either a Cpm or a DecodeError. Bytes
// past the declared container list are ignored.
[[nodiscard]] DecodeResult decode(std::span<const std::uint8_t> payload);

// Convenience accessors for DecodeResult.
[[nodiscard]] inline bool ok(const DecodeResult& r) { return std::holds_alternative<Cpm>(r); }
[[nodiscard]] inline const Cpm& value(const DecodeResult& r) { return std::get<Cpm>(r); }
[[nodiscard]] inline const DecodeError& error(const DecodeResult& r) {
  return std::get<DecodeError>(r);
}

// Header fields and pass-through containers for the message builders below.
struct CpmBuildOptions {
  std::uint32_t station_id = 0;
  std::uint64_t generation_time = 0;
  StationType station_type = StationType::Vehicle;
  ObjectType object_type = ObjectType::Pedestrian;
  std::optional<StationDataContainer> station_data;
  std::vector<SensorInfoContainer> sensors;
};

struct CpmBuildResult {
  Cpm cpm;
  bool truncated = false;  // true when the object list was cut at the cap
};

// Packages confirmed tracks (weight >= config.confirm_weight) as track-level
// perceived objects, heaviest first; object ids are the low 16 bits of each
// local id. Keeps the kMaxPerceivedObjects heaviest and flags truncation.
[[nodiscard]] CpmBuildResult tracks_to_cpm(std::span<const tracking::LocalTrack> tracks,
                                           const geom::Pose2D& pose,
                                           const tracking::TrackerConfig& config,
                                           const CpmBuildOptions& options);

// Packages raw detections as detection-level perceived objects in input order;
// object ids are list indices. Keeps the first kMaxPerceivedObjects.
[[nodiscard]] CpmBuildResult detections_to_cpm(std::span<const tracking::Detection> detections,
                                               const geom::Pose2D& pose,
                                               const CpmBuildOptions& options);

}  // namespace cpf::cpm
