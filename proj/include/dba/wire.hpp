#pragma once

// Wire protocol between the main node and workers (little-endian):
//
//   frame = "DBA1" | type u8 | payload length u64 | payload | CRC32
//
// The CRC covers every preceding byte of the frame. The same encoding is used
// by the in-memory channels and by TCP sockets.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dba/bsmc.hpp"
#include "dba/geometry.hpp"

namespace dba {

enum class MessageType : std::uint8_t {
  kTiePointGroup = 1,
  kPoseBroadcast = 2,
  kSubRcsEnvelope = 3,
  kDeltaXc = 4,
  kStop = 5,
  kError = 6,
  kTrialCost = 7,    // worker -> main: cost of the candidate state of a group
  kGroupPoints = 8,  // worker -> main: final point positions after Stop
};
inline constexpr std::uint8_t kMaxMessageType = 8;
const char* message_type_name(MessageType t);

inline constexpr std::size_t kFrameHeaderSize = 13;  // magic + type + length
inline constexpr std::size_t kFrameTrailerSize = 4;  // CRC32
inline constexpr std::uint64_t kMaxPayloadSize = std::uint64_t{1} << 36;

struct Frame {
  MessageType type = MessageType::kError;
  std::vector<std::uint8_t> payload;
};

std::vector<std::uint8_t> encode_frame(const Frame& frame);

struct FrameHeader {
  MessageType type;
  std::uint64_t payload_size;
};
/// Validates magic, type and length. Throws CorruptStream.
FrameHeader decode_frame_header(std::span<const std::uint8_t> header);

/// Decodes one complete frame; trailing bytes are an error.
Frame decode_frame(std::span<const std::uint8_t> bytes);

/// A group of points with their observations, sent once per run.
struct TiePointGroupMsg {
  std::uint32_t group_id = 0;
  CameraModel model = CameraModel::kBal9;
  bool shared_intrinsics = false;
  double huber_scale = 0.0;
  std::uint32_t total_cameras = 0;  // cameras of the whole problem
  std::vector<std::uint32_t> camera_ids;            // involved, ascending
  std::vector<std::uint32_t> camera_intrinsics;     // shared mode: global group per camera
  std::vector<std::uint32_t> point_ids;             // ascending
  std::vector<Point3D> points;
  struct Obs {
    std::uint32_t local_camera;
    std::uint32_t local_point;
    Eigen::Vector2d pixel;
  };
  std::vector<Obs> observations;  // grouped by point, in problem order
};

/// Current camera state, sent every iteration. `commit_trial` resolves the
/// candidate of the previous iteration on the workers.
struct PoseBroadcastMsg {
  std::uint32_t iteration = 0;
  double lambda = 0.0;
  bool commit_trial = false;
  CameraModel model = CameraModel::kBal9;
  std::vector<double> poses;       // 6 per camera
  std::vector<double> intrinsics;  // (c - 6) per intrinsics entry
};

/// Sub-RCS of one group over its dense local block ids.
struct SubRcsEnvelopeMsg {
  std::uint32_t group_id = 0;
  std::uint32_t iteration = 0;
  std::uint32_t skipped_observations = 0;
  double cost = 0.0;
  std::vector<std::uint32_t> excluded_points;  // global point ids
  std::vector<std::uint32_t> local_to_global;  // block map, ascending
  std::vector<double> rhs;
  std::vector<double> jtj_diag;
  BsmcMatrix matrix;
  GlobalIdAnnotation annotation;
};

struct DeltaXcMsg {
  std::uint32_t iteration = 0;
  std::vector<double> delta;
};

struct TrialCostMsg {
  std::uint32_t group_id = 0;
  std::uint32_t iteration = 0;
  double cost = 0.0;
  double point_step_squared_norm = 0.0;
};

struct StopMsg {
  bool commit_trial = false;
};

struct GroupPointsMsg {
  std::uint32_t group_id = 0;
  std::vector<double> positions;  // 3 per point of the group
};

struct ErrorMsg {
  std::string message;
};

Frame encode(const TiePointGroupMsg& m);
Frame encode(const PoseBroadcastMsg& m);
Frame encode(const SubRcsEnvelopeMsg& m);
Frame encode(const DeltaXcMsg& m);
Frame encode(const TrialCostMsg& m);
Frame encode(const StopMsg& m);
Frame encode(const GroupPointsMsg& m);
Frame encode(const ErrorMsg& m);

/// Each decoder checks the frame type and throws ProtocolError on mismatch,
/// CorruptStream on malformed payloads.
TiePointGroupMsg decode_tie_point_group(const Frame& f);
PoseBroadcastMsg decode_pose_broadcast(const Frame& f);
SubRcsEnvelopeMsg decode_sub_rcs_envelope(const Frame& f);
DeltaXcMsg decode_delta_xc(const Frame& f);
TrialCostMsg decode_trial_cost(const Frame& f);
StopMsg decode_stop(const Frame& f);
GroupPointsMsg decode_group_points(const Frame& f);
ErrorMsg decode_error(const Frame& f);

}  // namespace dba
