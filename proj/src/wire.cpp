#include "dba/wire.hpp"

#include "dba/bsmc_io.hpp"
#include "dba/byte_io.hpp"
#include "dba/errors.hpp"

namespace dba {
namespace {

constexpr char kMagic[] = "DBA1";

void put_f64s(ByteWriter& w, std::span<const double> v) {
  w.u64(v.size());
  w.f64s(v);
}

void put_u32s(ByteWriter& w, std::span<const std::uint32_t> v) {
  w.u64(v.size());
  w.u32s(v);
}

std::size_t get_count(ByteReader& r, std::size_t element_size) {
  const auto n = r.u64();
  if (n > r.remaining() / element_size) r.fail("element count exceeds payload");
  return static_cast<std::size_t>(n);
}

std::vector<double> get_f64s(ByteReader& r) { return r.f64s(get_count(r, 8)); }
std::vector<std::uint32_t> get_u32s(ByteReader& r) { return r.u32s(get_count(r, 4)); }

CameraModel get_model(ByteReader& r) {
  const auto c = r.u8();
  if (c != 9 && c != 11) r.fail("unknown camera model " + std::to_string(c));
  return static_cast<CameraModel>(c);
}

bool get_flag(ByteReader& r) {
  const auto v = r.u8();
  if (v > 1) r.fail("flag byte must be 0 or 1");
  return v == 1;
}

void expect_type(const Frame& f, MessageType t) {
  if (f.type != t) {
    throw ProtocolError(std::string("expected ") + message_type_name(t) + " message, got " +
                        message_type_name(f.type));
  }
}

void expect_end(const ByteReader& r) {
  if (r.remaining() != 0) r.fail("trailing bytes in payload");
}

Frame make(MessageType t, ByteWriter& w) { return Frame{t, w.take()}; }

}  // namespace

const char* message_type_name(MessageType t) {
  switch (t) {
    case MessageType::kTiePointGroup: return "TiePointGroup";
    case MessageType::kPoseBroadcast: return "PoseBroadcast";
    case MessageType::kSubRcsEnvelope: return "SubRcsEnvelope";
    case MessageType::kDeltaXc: return "DeltaXc";
    case MessageType::kStop: return "Stop";
    case MessageType::kError: return "Error";
    case MessageType::kTrialCost: return "TrialCost";
    case MessageType::kGroupPoints: return "GroupPoints";
  }
  return "Unknown";
}

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  ByteWriter w;
  w.tag(kMagic);
  w.u8(static_cast<std::uint8_t>(frame.type));
  w.u64(frame.payload.size());
  w.bytes(frame.payload);
  const auto crc = crc32(w.buffer());
  w.u32(crc);
  return w.take();
}

FrameHeader decode_frame_header(std::span<const std::uint8_t> header) {
  ByteReader r(header);
  r.expect_tag(kMagic);
  const auto type = r.u8();
  if (type == 0 || type > kMaxMessageType) {
    throw CorruptStream("unknown message type " + std::to_string(type), 4);
  }
  const auto size = r.u64();
  if (size > kMaxPayloadSize) throw CorruptStream("payload length too large", 5);
  return {static_cast<MessageType>(type), size};
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFrameHeaderSize + kFrameTrailerSize) {
    throw CorruptStream("truncated frame", bytes.size());
  }
  const auto header = decode_frame_header(bytes.first(kFrameHeaderSize));
  const auto expected = kFrameHeaderSize + header.payload_size + kFrameTrailerSize;
  if (bytes.size() < expected) throw CorruptStream("truncated frame", bytes.size());
  if (bytes.size() > expected) throw CorruptStream("trailing bytes after frame", expected);
  const auto body = bytes.first(expected - kFrameTrailerSize);
  ByteReader tail(bytes.subspan(body.size()), body.size());
  if (tail.u32() != crc32(body)) throw CorruptStream("frame CRC mismatch", body.size());
  Frame f;
  f.type = header.type;
  f.payload.assign(body.begin() + kFrameHeaderSize, body.end());
  return f;
}

Frame encode(const TiePointGroupMsg& m) {
  ByteWriter w;
  w.u32(m.group_id);
  w.u8(static_cast<std::uint8_t>(m.model));
  w.u8(m.shared_intrinsics ? 1 : 0);
  w.f64(m.huber_scale);
  w.u32(m.total_cameras);
  put_u32s(w, m.camera_ids);
  put_u32s(w, m.camera_intrinsics);
  put_u32s(w, m.point_ids);
  w.u64(m.points.size());
  for (const auto& p : m.points) {
    for (int k = 0; k < 3; ++k) w.f64(p.position[k]);
  }
  w.u64(m.observations.size());
  for (const auto& o : m.observations) {
    w.u32(o.local_camera);
    w.u32(o.local_point);
    w.f64(o.pixel.x());
    w.f64(o.pixel.y());
  }
  return make(MessageType::kTiePointGroup, w);
}

TiePointGroupMsg decode_tie_point_group(const Frame& f) {
  expect_type(f, MessageType::kTiePointGroup);
  ByteReader r(f.payload, kFrameHeaderSize);
  TiePointGroupMsg m;
  m.group_id = r.u32();
  m.model = get_model(r);
  m.shared_intrinsics = get_flag(r);
  m.huber_scale = r.f64();
  m.total_cameras = r.u32();
  m.camera_ids = get_u32s(r);
  m.camera_intrinsics = get_u32s(r);
  m.point_ids = get_u32s(r);
  m.points.resize(get_count(r, 24));
  for (auto& p : m.points) {
    for (int k = 0; k < 3; ++k) p.position[k] = r.f64();
  }
  m.observations.resize(get_count(r, 24));
  for (auto& o : m.observations) {
    o.local_camera = r.u32();
    o.local_point = r.u32();
    o.pixel.x() = r.f64();
    o.pixel.y() = r.f64();
    if (o.local_camera >= m.camera_ids.size() || o.local_point >= m.points.size()) {
      r.fail("observation index out of range");
    }
  }
  expect_end(r);
  if (m.point_ids.size() != m.points.size()) {
    throw CorruptStream("point id count differs from point count", kFrameHeaderSize);
  }
  if (m.shared_intrinsics && m.camera_intrinsics.size() != m.camera_ids.size()) {
    throw CorruptStream("missing intrinsics group per camera", kFrameHeaderSize);
  }
  return m;
}

Frame encode(const PoseBroadcastMsg& m) {
  ByteWriter w;
  w.u32(m.iteration);
  w.f64(m.lambda);
  w.u8(m.commit_trial ? 1 : 0);
  w.u8(static_cast<std::uint8_t>(m.model));
  put_f64s(w, m.poses);
  put_f64s(w, m.intrinsics);
  return make(MessageType::kPoseBroadcast, w);
}

PoseBroadcastMsg decode_pose_broadcast(const Frame& f) {
  expect_type(f, MessageType::kPoseBroadcast);
  ByteReader r(f.payload, kFrameHeaderSize);
  PoseBroadcastMsg m;
  m.iteration = r.u32();
  m.lambda = r.f64();
  m.commit_trial = get_flag(r);
  m.model = get_model(r);
  m.poses = get_f64s(r);
  m.intrinsics = get_f64s(r);
  expect_end(r);
  const auto width = static_cast<std::size_t>(camera_size(m.model) - kPoseSize);
  if (m.poses.size() % kPoseSize != 0 || m.intrinsics.size() % width != 0) {
    throw CorruptStream("camera parameter arrays have the wrong length", kFrameHeaderSize);
  }
  return m;
}

Frame encode(const SubRcsEnvelopeMsg& m) {
  ByteWriter w;
  w.u32(m.group_id);
  w.u32(m.iteration);
  w.u32(m.skipped_observations);
  w.f64(m.cost);
  put_u32s(w, m.excluded_points);
  put_u32s(w, m.local_to_global);
  put_f64s(w, m.rhs);
  put_f64s(w, m.jtj_diag);
  const auto bsmc = serialize(m.matrix, &m.annotation);
  w.u64(bsmc.size());
  w.bytes(bsmc);
  return make(MessageType::kSubRcsEnvelope, w);
}

SubRcsEnvelopeMsg decode_sub_rcs_envelope(const Frame& f) {
  expect_type(f, MessageType::kSubRcsEnvelope);
  ByteReader r(f.payload, kFrameHeaderSize);
  SubRcsEnvelopeMsg m;
  m.group_id = r.u32();
  m.iteration = r.u32();
  m.skipped_observations = r.u32();
  m.cost = r.f64();
  m.excluded_points = get_u32s(r);
  m.local_to_global = get_u32s(r);
  m.rhs = get_f64s(r);
  m.jtj_diag = get_f64s(r);
  const auto n = get_count(r, 1);
  const auto at = r.offset();
  auto decoded = deserialize(r.bytes(n), at);
  expect_end(r);
  if (!decoded.annotation) throw CorruptStream("sub-RCS without global-id annotation", at);
  m.matrix = std::move(decoded.matrix);
  m.annotation = std::move(*decoded.annotation);
  const auto& layout = m.matrix.layout();
  if (m.local_to_global.size() != layout.num_blocks() ||
      m.rhs.size() != layout.total_dim() || m.jtj_diag.size() != layout.total_dim()) {
    throw CorruptStream("envelope vectors do not match the sub-RCS layout", at);
  }
  return m;
}

Frame encode(const DeltaXcMsg& m) {
  ByteWriter w;
  w.u32(m.iteration);
  put_f64s(w, m.delta);
  return make(MessageType::kDeltaXc, w);
}

DeltaXcMsg decode_delta_xc(const Frame& f) {
  expect_type(f, MessageType::kDeltaXc);
  ByteReader r(f.payload, kFrameHeaderSize);
  DeltaXcMsg m;
  m.iteration = r.u32();
  m.delta = get_f64s(r);
  expect_end(r);
  return m;
}

Frame encode(const TrialCostMsg& m) {
  ByteWriter w;
  w.u32(m.group_id);
  w.u32(m.iteration);
  w.f64(m.cost);
  w.f64(m.point_step_squared_norm);
  return make(MessageType::kTrialCost, w);
}

TrialCostMsg decode_trial_cost(const Frame& f) {
  expect_type(f, MessageType::kTrialCost);
  ByteReader r(f.payload, kFrameHeaderSize);
  TrialCostMsg m;
  m.group_id = r.u32();
  m.iteration = r.u32();
  m.cost = r.f64();
  m.point_step_squared_norm = r.f64();
  expect_end(r);
  return m;
}

Frame encode(const StopMsg& m) {
  ByteWriter w;
  w.u8(m.commit_trial ? 1 : 0);
  return make(MessageType::kStop, w);
}

StopMsg decode_stop(const Frame& f) {
  expect_type(f, MessageType::kStop);
  ByteReader r(f.payload, kFrameHeaderSize);
  StopMsg m;
  m.commit_trial = get_flag(r);
  expect_end(r);
  return m;
}

Frame encode(const GroupPointsMsg& m) {
  ByteWriter w;
  w.u32(m.group_id);
  put_f64s(w, m.positions);
  return make(MessageType::kGroupPoints, w);
}

GroupPointsMsg decode_group_points(const Frame& f) {
  expect_type(f, MessageType::kGroupPoints);
  ByteReader r(f.payload, kFrameHeaderSize);
  GroupPointsMsg m;
  m.group_id = r.u32();
  m.positions = get_f64s(r);
  expect_end(r);
  if (m.positions.size() % 3 != 0) {
    throw CorruptStream("point positions not a multiple of 3", kFrameHeaderSize);
  }
  return m;
}

Frame encode(const ErrorMsg& m) {
  ByteWriter w;
  w.string(m.message);
  return make(MessageType::kError, w);
}

ErrorMsg decode_error(const Frame& f) {
  expect_type(f, MessageType::kError);
  ByteReader r(f.payload, kFrameHeaderSize);
  ErrorMsg m;
  m.message = r.string();
  expect_end(r);
  return m;
}

}  // namespace dba
