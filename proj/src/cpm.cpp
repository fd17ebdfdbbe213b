#include "cpf/cpm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

namespace cpf::cpm {

namespace {

// ---------------------------------------------------------------------------
// Little-endian primitives.

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
}

void put_i16(std::vector<std::uint8_t>& out, std::int16_t v) {
  put_u16(out, static_cast<std::uint16_t>(v));
}

void put_i32(std::vector<std::uint8_t>& out, std::int32_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

// ---------------------------------------------------------------------------
// Quantization. Every helper throws EncodeError naming the field so callers
// can tell which value fell outside the representable range.

[[noreturn]] void out_of_range(const std::string& field) {
  throw EncodeError("encode: " + field + " out of quantization range");
}

long long scaled(double value, double lsb, const std::string& field) {
  if (!std::isfinite(value)) {
    out_of_range(field);
  }
  return std::llround(value / lsb);
}

std::int32_t quantize_i32(double value, double lsb, const std::string& field) {
  const long long q = scaled(value, lsb, field);
  if (q < std::numeric_limits<std::int32_t>::min() ||
      q > std::numeric_limits<std::int32_t>::max()) {
    out_of_range(field);
  }
  return static_cast<std::int32_t>(q);
}

std::int16_t quantize_i16(double value, double lsb, const std::string& field) {
  const long long q = scaled(value, lsb, field);
  if (q < std::numeric_limits<std::int16_t>::min() ||
      q > std::numeric_limits<std::int16_t>::max()) {
    out_of_range(field);
  }
  return static_cast<std::int16_t>(q);
}

std::uint16_t quantize_u16(double value, double lsb, const std::string& field) {
  const long long q = scaled(value, lsb, field);
  if (q < 0 || q > std::numeric_limits<std::uint16_t>::max()) {
    out_of_range(field);
  }
  return static_cast<std::uint16_t>(q);
}

std::uint32_t quantize_u32(double value, double lsb, const std::string& field) {
  const long long q = scaled(value, lsb, field);
  if (q < 0 || q > std::numeric_limits<std::uint32_t>::max()) {
    out_of_range(field);
  }
  return static_cast<std::uint32_t>(q);
}

std::int16_t quantize_angle(double value, const std::string& field) {
  if (!std::isfinite(value)) {
    out_of_range(field);
  }
  return quantize_i16(geom::normalize_angle(value), kAngleLsb, field);
}

// Standard deviations are clamped to one LSB from below: the wire format
// cannot claim less than kMinStd of uncertainty.
std::uint16_t quantize_std(double variance, const std::string& field) {
  if (!std::isfinite(variance) || variance < 0.0) {
    out_of_range(field);
  }
  const long long q = std::llround(std::sqrt(variance) / kStdLsb);
  if (q > std::numeric_limits<std::uint16_t>::max()) {
    out_of_range(field);
  }
  return static_cast<std::uint16_t>(std::max(q, 1LL));
}

float quantize_f32(double value, const std::string& field) {
  if (!std::isfinite(value)) {
    out_of_range(field);
  }
  const float f = static_cast<float>(value);
  if (!std::isfinite(f)) {
    out_of_range(field);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Body encoders. Each writes one container body; the caller wraps it with the
// tag/length prefix.

void encode_management(std::vector<std::uint8_t>& out, const ManagementContainer& c) {
  const geom::Pose2D& pose = c.reference_pose;
  put_u8(out, static_cast<std::uint8_t>(c.station_type));
  put_i32(out, quantize_i32(pose.x, kPositionLsb, "reference pose x"));
  put_i32(out, quantize_i32(pose.y, kPositionLsb, "reference pose y"));
  put_i16(out, quantize_angle(pose.theta, "reference pose heading"));
  put_u16(out, quantize_std(pose.cov(0, 0), "reference pose x std"));
  put_u16(out, quantize_std(pose.cov(1, 1), "reference pose y std"));
  put_u16(out, quantize_std(pose.cov(2, 2), "reference pose heading std"));
}

void encode_station_data(std::vector<std::uint8_t>& out, const StationDataContainer& c) {
  put_i16(out, quantize_angle(c.heading, "station heading"));
  put_u16(out, quantize_u16(c.speed, kSpeedLsb, "station speed"));
  const std::uint16_t length = quantize_u16(c.length, kDimensionLsb, "station length");
  const std::uint16_t width = quantize_u16(c.width, kDimensionLsb, "station width");
  if (length == 0 || width == 0) {
    out_of_range("station dimensions");
  }
  put_u16(out, length);
  put_u16(out, width);
}

void encode_sensor_info(std::vector<std::uint8_t>& out, const SensorInfoContainer& c) {
  put_u8(out, c.sensor_id);
  put_u8(out, static_cast<std::uint8_t>(c.sensor_type));
  put_u8(out, static_cast<std::uint8_t>(c.area.shape));
  put_i32(out, quantize_i32(c.area.center.x(), kPositionLsb, "sensor area center x"));
  put_i32(out, quantize_i32(c.area.center.y(), kPositionLsb, "sensor area center y"));
  const std::uint32_t radius = quantize_u32(c.area.radius, kPositionLsb, "sensor area radius");
  if (radius == 0) {
    out_of_range("sensor area radius");
  }
  put_u32(out, radius);
  if (c.area.shape == DetectionArea::Shape::Sector) {
    put_i16(out, quantize_angle(c.area.start_bearing, "sensor area start bearing"));
    put_i16(out, quantize_angle(c.area.end_bearing, "sensor area end bearing"));
  }
}

void encode_perceived_object(std::vector<std::uint8_t>& out, const PerceivedObjectContainer& c) {
  const Eigen::Index n = c.mean.size();
  if (n != 2 && n != 4) {
    throw EncodeError("encode: perceived object mean must be (x, y) or (x, y, vx, vy)");
  }
  if (c.abstraction == ObjectAbstraction::Detection && n != 2) {
    throw EncodeError("encode: detection-level perceived object must carry a 2-d mean");
  }
  if (c.cov.rows() != n || c.cov.cols() != n || !geom::is_valid_covariance(c.cov)) {
    throw EncodeError("encode: perceived object covariance invalid");
  }
  put_u8(out, n == 4 ? 0x01 : 0x00);  // bit0: velocity present
  put_u16(out, c.object_id);
  put_u8(out, static_cast<std::uint8_t>(c.abstraction));
  put_i32(out, quantize_i32(c.mean(0), kPositionLsb, "perceived object x"));
  put_i32(out, quantize_i32(c.mean(1), kPositionLsb, "perceived object y"));
  if (n == 4) {
    put_i16(out, quantize_i16(c.mean(2), kSpeedLsb, "perceived object vx"));
    put_i16(out, quantize_i16(c.mean(3), kSpeedLsb, "perceived object vy"));
  }
  // Lower triangle, row-major; the diagonal cannot drop below the format's
  // minimum representable variance.
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      double entry = c.cov(i, j);
      if (i == j) {
        entry = std::max(entry, kMinStd * kMinStd);
      }
      put_f32(out, quantize_f32(entry, "perceived object covariance"));
    }
  }
  put_u8(out, static_cast<std::uint8_t>(c.object_type));
}

void append_container(std::vector<std::uint8_t>& out, std::uint8_t tag,
                      const std::vector<std::uint8_t>& body) {
  if (body.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw EncodeError("encode: container body exceeds 65535 bytes");
  }
  put_u8(out, tag);
  put_u16(out, static_cast<std::uint16_t>(body.size()));
  out.insert(out.end(), body.begin(), body.end());
}

// ---------------------------------------------------------------------------
// Decoding. Reads go through a bounds-checked cursor; failures raise an
// internal exception that decode() converts into the returned DecodeError, so
// the parser body can stay linear.

struct DecodeFailure {
  DecodeError error;
};

[[noreturn]] void fail(DecodeError::Kind kind, std::string detail) {
  throw DecodeFailure{{kind, std::move(detail)}};
}

class Cursor {
 public:
  Cursor(std::span<const std::uint8_t> data, DecodeError::Kind underflow_kind, std::string where)
      : data_(data), underflow_kind_(underflow_kind), where_(std::move(where)) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (data_.size() - pos_ < n) {
      fail(underflow_kind_, where_);
    }
    auto slice = data_.subspan(pos_, n);
    pos_ += n;
    return slice;
  }

  std::uint8_t u8() { return take(1)[0]; }

  std::uint16_t u16() {
    auto b = take(2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }

  std::uint32_t u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
      v = (v << 8) | b[static_cast<std::size_t>(i)];
    }
    return v;
  }

  std::uint64_t u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
      v = (v << 8) | b[static_cast<std::size_t>(i)];
    }
    return v;
  }

  std::int16_t i16() { return static_cast<std::int16_t>(u16()); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  DecodeError::Kind underflow_kind_;
  std::string where_;
};

Cursor body_cursor(std::span<const std::uint8_t> body, const char* container) {
  return Cursor(body, DecodeError::Kind::MalformedField,
                std::string(container) + " container body too short");
}

ManagementContainer decode_management(std::span<const std::uint8_t> body) {
  Cursor c = body_cursor(body, "management");
  ManagementContainer out;
  const std::uint8_t type = c.u8();
  if (type > static_cast<std::uint8_t>(StationType::RoadsideUnit)) {
    fail(DecodeError::Kind::MalformedField, "management: unknown station type");
  }
  out.station_type = static_cast<StationType>(type);
  out.reference_pose.x = c.i32() * kPositionLsb;
  out.reference_pose.y = c.i32() * kPositionLsb;
  out.reference_pose.theta = geom::normalize_angle(c.i16() * kAngleLsb);
  out.reference_pose.cov.setZero();
  for (int axis = 0; axis < 3; ++axis) {
    const double sigma = std::max<std::uint16_t>(c.u16(), 1) * kStdLsb;
    out.reference_pose.cov(axis, axis) = sigma * sigma;
  }
  return out;
}

StationDataContainer decode_station_data(std::span<const std::uint8_t> body) {
  Cursor c = body_cursor(body, "station data");
  StationDataContainer out;
  out.heading = geom::normalize_angle(c.i16() * kAngleLsb);
  out.speed = c.u16() * kSpeedLsb;
  out.length = c.u16() * kDimensionLsb;
  out.width = c.u16() * kDimensionLsb;
  if (out.length <= 0.0 || out.width <= 0.0) {
    fail(DecodeError::Kind::MalformedField, "station data: dimensions must be positive");
  }
  return out;
}

SensorInfoContainer decode_sensor_info(std::span<const std::uint8_t> body) {
  Cursor c = body_cursor(body, "sensor info");
  SensorInfoContainer out;
  out.sensor_id = c.u8();
  const std::uint8_t type = c.u8();
  if (type > static_cast<std::uint8_t>(SensorType::Fused)) {
    fail(DecodeError::Kind::MalformedField, "sensor info: unknown sensor type");
  }
  out.sensor_type = static_cast<SensorType>(type);
  const std::uint8_t shape = c.u8();
  if (shape > static_cast<std::uint8_t>(DetectionArea::Shape::Sector)) {
    fail(DecodeError::Kind::MalformedField, "sensor info: unknown detection area shape");
  }
  out.area.shape = static_cast<DetectionArea::Shape>(shape);
  out.area.center.x() = c.i32() * kPositionLsb;
  out.area.center.y() = c.i32() * kPositionLsb;
  const std::uint32_t radius = c.u32();
  if (radius == 0) {
    fail(DecodeError::Kind::MalformedField, "sensor info: detection radius must be positive");
  }
  out.area.radius = radius * kPositionLsb;
  if (out.area.shape == DetectionArea::Shape::Sector) {
    out.area.start_bearing = geom::normalize_angle(c.i16() * kAngleLsb);
    out.area.end_bearing = geom::normalize_angle(c.i16() * kAngleLsb);
  }
  return out;
}

PerceivedObjectContainer decode_perceived_object(std::span<const std::uint8_t> body) {
  Cursor c = body_cursor(body, "perceived object");
  PerceivedObjectContainer out;
  const std::uint8_t flags = c.u8();
  if ((flags & ~0x01) != 0) {
    fail(DecodeError::Kind::MalformedField, "perceived object: unknown flag bits");
  }
  const Eigen::Index n = (flags & 0x01) ? 4 : 2;
  out.object_id = c.u16();
  const std::uint8_t abstraction = c.u8();
  if (abstraction > static_cast<std::uint8_t>(ObjectAbstraction::Track)) {
    fail(DecodeError::Kind::MalformedField, "perceived object: unknown abstraction");
  }
  out.abstraction = static_cast<ObjectAbstraction>(abstraction);
  if (out.abstraction == ObjectAbstraction::Detection && n != 2) {
    fail(DecodeError::Kind::MalformedField,
         "perceived object: detection abstraction cannot carry velocity");
  }
  out.mean.resize(n);
  out.mean(0) = c.i32() * kPositionLsb;
  out.mean(1) = c.i32() * kPositionLsb;
  if (n == 4) {
    out.mean(2) = c.i16() * kSpeedLsb;
    out.mean(3) = c.i16() * kSpeedLsb;
  }
  out.cov.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double entry = c.f32();
      out.cov(i, j) = entry;
      out.cov(j, i) = entry;
    }
  }
  if (!geom::is_valid_covariance(out.cov)) {
    fail(DecodeError::Kind::MalformedCovariance,
         "perceived object: covariance not positive semi-definite");
  }
  const std::uint8_t type = c.u8();
  if (type > static_cast<std::uint8_t>(ObjectType::Unknown)) {
    fail(DecodeError::Kind::MalformedField, "perceived object: unknown object type");
  }
  out.object_type = static_cast<ObjectType>(type);
  return out;
}

Cpm decode_or_fail(std::span<const std::uint8_t> payload) {
  Cursor header(payload, DecodeError::Kind::Truncated, "header");
  const auto magic = header.take(4);
  if (!std::equal(magic.begin(), magic.end(), reinterpret_cast<const std::uint8_t*>(kMagic))) {
    fail(DecodeError::Kind::UnsupportedVersion, "bad magic");
  }
  Cpm out;
  out.protocol_version = header.u8();
  if (out.protocol_version != kProtocolVersion) {
    fail(DecodeError::Kind::UnsupportedVersion,
         "unknown protocol version " + std::to_string(out.protocol_version));
  }
  out.station_id = header.u32();
  out.generation_time = header.u64();
  const std::uint8_t container_count = header.u8();

  bool have_management = false;
  for (std::uint8_t i = 0; i < container_count; ++i) {
    const std::uint8_t tag = header.u8();
    const std::uint16_t length = header.u16();
    const auto body = header.take(length);
    switch (tag) {
      case kTagManagement:
        if (have_management) {
          fail(DecodeError::Kind::MalformedField, "duplicate management container");
        }
        out.management = decode_management(body);
        have_management = true;
        break;
      case kTagStationData:
        if (out.station_data) {
          fail(DecodeError::Kind::MalformedField, "duplicate station data container");
        }
        out.station_data = decode_station_data(body);
        break;
      case kTagSensorInfo:
        if (out.sensors.size() >= kMaxSensors) {
          fail(DecodeError::Kind::MalformedField, "more than 8 sensor info containers");
        }
        out.sensors.push_back(decode_sensor_info(body));
        break;
      case kTagPerceivedObject:
        if (out.perceived_objects.size() >= kMaxPerceivedObjects) {
          fail(DecodeError::Kind::MalformedField, "more than 128 perceived object containers");
        }
        out.perceived_objects.push_back(decode_perceived_object(body));
        break;
      case kTagFreeSpace:
        out.free_space.emplace_back(body.begin(), body.end());
        break;
      default:
        break;  // unknown container type: skipped via its length prefix
    }
  }
  if (!have_management) {
    fail(DecodeError::Kind::MalformedField, "missing management container");
  }
  return out;
}

PerceivedObjectContainer object_from_track(const tracking::LocalTrack& track,
                                           ObjectType object_type) {
  PerceivedObjectContainer obj;
  obj.object_id = static_cast<std::uint16_t>(track.local_id & 0xffff);
  obj.abstraction = ObjectAbstraction::Track;
  obj.mean = track.mean;
  obj.cov = track.cov;
  obj.object_type = object_type;
  return obj;
}

Cpm cpm_shell(const geom::Pose2D& pose, const CpmBuildOptions& options) {
  Cpm cpm;
  cpm.station_id = options.station_id;
  cpm.generation_time = options.generation_time;
  cpm.management.station_type = options.station_type;
  cpm.management.reference_pose = pose;
  cpm.station_data = options.station_data;
  cpm.sensors = options.sensors;
  return cpm;
}

}  // namespace

std::vector<std::uint8_t> encode(const Cpm& message) {
  if (message.protocol_version != kProtocolVersion) {
    throw EncodeError("encode: unsupported protocol version");
  }
  if (message.sensors.size() > kMaxSensors) {
    throw EncodeError("encode: more than 8 sensor info containers");
  }
  if (message.perceived_objects.size() > kMaxPerceivedObjects) {
    throw EncodeError("encode: more than 128 perceived object containers");
  }
  const std::size_t container_count = 1 + (message.station_data ? 1 : 0) +
                                      message.sensors.size() + message.perceived_objects.size() +
                                      message.free_space.size();
  if (container_count > 255) {
    throw EncodeError("encode: more than 255 containers");
  }

  std::vector<std::uint8_t> out;
  out.reserve(64);
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u8(out, message.protocol_version);
  put_u32(out, message.station_id);
  put_u64(out, message.generation_time);
  put_u8(out, static_cast<std::uint8_t>(container_count));

  std::vector<std::uint8_t> body;
  auto emit = [&](std::uint8_t tag, auto&& fill) {
    body.clear();
    fill(body);
    append_container(out, tag, body);
  };

  emit(kTagManagement, [&](auto& b) { encode_management(b, message.management); });
  if (message.station_data) {
    emit(kTagStationData, [&](auto& b) { encode_station_data(b, *message.station_data); });
  }
  for (const SensorInfoContainer& sensor : message.sensors) {
    emit(kTagSensorInfo, [&](auto& b) { encode_sensor_info(b, sensor); });
  }
  for (const PerceivedObjectContainer& object : message.perceived_objects) {
    emit(kTagPerceivedObject, [&](auto& b) { encode_perceived_object(b, object); });
  }
  for (const std::vector<std::uint8_t>& blob : message.free_space) {
    append_container(out, kTagFreeSpace, blob);
  }
  return out;
}

DecodeResult decode(std::span<const std::uint8_t> payload) {
  try {
    return decode_or_fail(payload);
  } catch (const DecodeFailure& failure) {
    return failure.error;
  } catch (const std::exception& e) {
    return DecodeError{DecodeError::Kind::MalformedField, e.what()};
  }
}

CpmBuildResult tracks_to_cpm(std::span<const tracking::LocalTrack> tracks,
                             const geom::Pose2D& pose, const tracking::TrackerConfig& config,
                             const CpmBuildOptions& options) {
  std::vector<const tracking::LocalTrack*> confirmed;
  for (const tracking::LocalTrack& track : tracks) {
    if (track.weight >= config.confirm_weight) {
      confirmed.push_back(&track);
    }
  }
  std::stable_sort(confirmed.begin(), confirmed.end(),
                   [](const tracking::LocalTrack* a, const tracking::LocalTrack* b) {
                     if (a->weight != b->weight) {
                       return a->weight > b->weight;
                     }
                     return a->local_id < b->local_id;
                   });

  CpmBuildResult result;
  result.cpm = cpm_shell(pose, options);
  result.truncated = confirmed.size() > kMaxPerceivedObjects;
  if (result.truncated) {
    confirmed.resize(kMaxPerceivedObjects);
  }
  result.cpm.perceived_objects.reserve(confirmed.size());
  for (const tracking::LocalTrack* track : confirmed) {
    result.cpm.perceived_objects.push_back(object_from_track(*track, options.object_type));
  }
  return result;
}

CpmBuildResult detections_to_cpm(std::span<const tracking::Detection> detections,
                                 const geom::Pose2D& pose, const CpmBuildOptions& options) {
  CpmBuildResult result;
  result.cpm = cpm_shell(pose, options);
  result.truncated = detections.size() > kMaxPerceivedObjects;
  const std::size_t count = std::min(detections.size(), kMaxPerceivedObjects);
  result.cpm.perceived_objects.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    PerceivedObjectContainer obj;
    obj.object_id = static_cast<std::uint16_t>(i);
    obj.abstraction = ObjectAbstraction::Detection;
    obj.mean = detections[i].mean;
    obj.cov = detections[i].cov;
    obj.object_type = options.object_type;
    result.cpm.perceived_objects.push_back(std::move(obj));
  }
  return result;
}

}  // namespace cpf::cpm
