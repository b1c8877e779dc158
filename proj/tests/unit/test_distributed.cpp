#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <thread>

#include "dba/backends.hpp"
#include "dba/errors.hpp"
#include "dba/partition.hpp"
#include "dba/transport.hpp"
#include "dba/wire.hpp"
#include "dba/worker.hpp"
#include "test_support.hpp"

namespace dba {
namespace {

using testing::random_problem;
using testing::RandomProblemSpec;
using testing::relative_frobenius;

std::vector<std::uint32_t> all_points(const BaProblem& p) {
  std::vector<std::uint32_t> ids(p.num_points());
  std::iota(ids.begin(), ids.end(), 0u);
  return ids;
}

double rel_vec(const std::vector<double>& a, const std::vector<double>& b) {
  return testing::relative_error(a, b);
}

// ---- partition ----

TEST(Partition, Examples) {
  EXPECT_EQ(partition_points(10, 2).group_sizes(), (std::vector<std::size_t>{5, 5}));
  EXPECT_EQ(partition_points(10, 3).group_sizes(), (std::vector<std::size_t>{4, 3, 3}));
  const auto p = partition_points(7, 10);
  EXPECT_EQ(p.n_groups, 7u);
  EXPECT_EQ(p.group_sizes(), std::vector<std::size_t>(7, 1));
}

TEST(Partition, EveryPointOnceAndBalanced) {
  for (std::size_t n : {1u, 13u, 100u, 1001u}) {
    for (std::uint32_t g : {1u, 2u, 3u, 8u, 64u}) {
      const auto p = partition_points(n, g);
      ASSERT_EQ(p.assignment.size(), n);
      std::vector<std::size_t> seen(n, 0);
      for (const auto& grp : p.groups()) {
        EXPECT_TRUE(std::is_sorted(grp.begin(), grp.end()));
        for (auto id : grp) ++seen[id];
      }
      EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](auto c) { return c == 1; }));
      const auto sizes = p.group_sizes();
      const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
      EXPECT_LE(*hi - *lo, 1u);
    }
  }
}

TEST(Partition, StatsCoverInvolvedCameras) {
  std::mt19937_64 rng(101);
  const auto p = random_problem(rng, {});
  const auto part = partition_points(p, 3);
  const auto stats = partition_stats(p, part);
  ASSERT_EQ(stats.size(), 3u);
  std::size_t obs = 0;
  for (const auto& s : stats) obs += s.observations;
  EXPECT_EQ(obs, p.observations.size());
}

// ---- wire ----

TEST(Wire, FrameRoundTripAndCorruption) {
  Frame f{MessageType::kDeltaXc, {1, 2, 3, 4, 5}};
  const auto bytes = encode_frame(f);
  ASSERT_EQ(bytes.size(), kFrameHeaderSize + 5 + kFrameTrailerSize);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "DBA1");
  const auto back = decode_frame(bytes);
  EXPECT_EQ(back.type, f.type);
  EXPECT_EQ(back.payload, f.payload);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    auto bad = bytes;
    bad[i] ^= 0x01;
    EXPECT_THROW(decode_frame(bad), CorruptStream) << i;
  }
  EXPECT_THROW(decode_frame(std::span(bytes).first(bytes.size() - 1)), CorruptStream);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_frame(extra), CorruptStream);
}

TEST(Wire, UnknownTypeRejected) {
  auto bytes = encode_frame({MessageType::kStop, {}});
  bytes[4] = 99;
  EXPECT_THROW(decode_frame_header(std::span(bytes).first(kFrameHeaderSize)), CorruptStream);
}

TEST(Wire, MessagesRoundTrip) {
  std::mt19937_64 rng(102);
  RandomProblemSpec spec;
  spec.model = CameraModel::kFull11;
  spec.intrinsics_groups = 2;
  const auto p = random_problem(rng, spec);
  const std::vector<std::uint32_t> ids{1, 4, 7};
  const auto tp = make_tie_point_group(p, 3, ids, 1.5);
  const auto tp2 = decode_tie_point_group(decode_frame(encode_frame(encode(tp))));
  EXPECT_EQ(tp2.group_id, 3u);
  EXPECT_EQ(tp2.model, CameraModel::kFull11);
  EXPECT_TRUE(tp2.shared_intrinsics);
  EXPECT_EQ(tp2.huber_scale, 1.5);
  EXPECT_EQ(tp2.camera_ids, tp.camera_ids);
  EXPECT_EQ(tp2.camera_intrinsics, tp.camera_intrinsics);
  EXPECT_EQ(tp2.point_ids, ids);
  ASSERT_EQ(tp2.observations.size(), tp.observations.size());
  for (std::size_t i = 0; i < tp.observations.size(); ++i) {
    EXPECT_EQ(tp2.observations[i].pixel, tp.observations[i].pixel);
    EXPECT_EQ(tp2.observations[i].local_camera, tp.observations[i].local_camera);
  }

  const auto pb = make_pose_broadcast(p, 5, 0.01, true);
  EXPECT_EQ(pb.poses.size(), 6 * p.num_cameras());
  EXPECT_EQ(pb.intrinsics.size(), 5 * p.intrinsics.size());
  const auto pb2 = decode_pose_broadcast(encode(pb));
  EXPECT_EQ(pb2.poses, pb.poses);
  EXPECT_EQ(pb2.intrinsics, pb.intrinsics);
  EXPECT_TRUE(pb2.commit_trial);
  EXPECT_EQ(pb2.iteration, 5u);

  const auto env = worker_form_subrcs(tp, pb);
  const auto env2 = decode_sub_rcs_envelope(encode(env));
  EXPECT_TRUE(env2.matrix == env.matrix);
  EXPECT_EQ(env2.annotation, env.annotation);
  EXPECT_EQ(env2.rhs, env.rhs);
  EXPECT_EQ(env2.jtj_diag, env.jtj_diag);
  EXPECT_EQ(env2.local_to_global, env.local_to_global);
  EXPECT_EQ(env2.cost, env.cost);

  const DeltaXcMsg d{4, {1.0, -2.0}};
  EXPECT_EQ(decode_delta_xc(encode(d)).delta, d.delta);
  const TrialCostMsg tc{2, 9, 3.5, 0.25};
  const auto tc2 = decode_trial_cost(encode(tc));
  EXPECT_EQ(tc2.cost, 3.5);
  EXPECT_EQ(tc2.group_id, 2u);
  EXPECT_TRUE(decode_stop(encode(StopMsg{true})).commit_trial);
  EXPECT_EQ(decode_error(encode(ErrorMsg{"boom"})).message, "boom");
  const GroupPointsMsg gp{1, {1, 2, 3}};
  EXPECT_EQ(decode_group_points(encode(gp)).positions, gp.positions);
  EXPECT_THROW(decode_stop(encode(d)), ProtocolError);
}

TEST(Wire, TruncatedPayloadRejected) {
  std::mt19937_64 rng(103);
  const auto p = random_problem(rng, {});
  auto f = encode(make_pose_broadcast(p, 0, 1.0, false));
  f.payload.resize(f.payload.size() / 2);
  EXPECT_THROW(decode_pose_broadcast(f), CorruptStream);
}

// ---- transport ----

TEST(Transport, EndpointParsing) {
  const auto e = parse_endpoint("10.0.0.1:7000");
  EXPECT_EQ(e.host, "10.0.0.1");
  EXPECT_EQ(e.port, 7000);
  EXPECT_THROW(parse_endpoint("nohost"), std::invalid_argument);
  EXPECT_THROW(parse_endpoint("h:99999"), std::invalid_argument);
  const auto list = parse_endpoint_list("a:1, b:2\n# comment c:3\n  d:4");
  ASSERT_EQ(list.size(), 3u);
  EXPECT_EQ(list[2].to_string(), "d:4");
}

TEST(Transport, MemoryChannel) {
  auto [a, b] = make_memory_channel_pair();
  a->send({MessageType::kStop, {7}});
  const auto f = b->receive();
  EXPECT_EQ(f.payload, std::vector<std::uint8_t>{7});
  EXPECT_THROW(b->receive(std::chrono::milliseconds(10)), ReceiveTimeout);
  a->close();
  EXPECT_THROW(b->receive(), WorkerDisconnected);
}

TEST(Transport, TcpRoundTrip) {
  TcpListener listener({"127.0.0.1", 0});
  std::thread server([&] {
    auto ch = listener.accept();
    auto f = ch->receive();
    f.payload.push_back(42);
    ch->send(f);
    ch->close();
  });
  auto client = connect_tcp({"127.0.0.1", listener.port()}, std::chrono::seconds(5));
  std::vector<std::uint8_t> big(1 << 20);
  std::iota(big.begin(), big.end(), 0);
  client->send({MessageType::kDeltaXc, big});
  const auto back = client->receive(std::chrono::seconds(10));
  server.join();
  ASSERT_EQ(back.payload.size(), big.size() + 1);
  EXPECT_EQ(back.payload.back(), 42);
  EXPECT_THROW(client->receive(std::chrono::seconds(5)), WorkerDisconnected);
}

// ---- worker and aggregation ----

TEST(Worker, LocalRemapOfTwoCameras) {
  std::mt19937_64 rng(104);
  RandomProblemSpec spec;
  spec.cameras = 50;
  spec.points = 60;
  auto p = random_problem(rng, spec);
  // Point 0 seen only by cameras 7 and 42.
  std::vector<Observation> obs;
  for (const auto& o : p.observations) {
    if (o.point_id != 0) obs.push_back(o);
  }
  for (std::uint32_t c : {42u, 7u}) {
    obs.push_back({c, 0, project(p.poses[c], p.intrinsics_of(c), p.points[0])});
  }
  p.observations = obs;
  p.finalize();
  const std::vector<std::uint32_t> ids{0};
  const auto env = worker_form_subrcs(make_tie_point_group(p, 0, ids),
                                      make_pose_broadcast(p, 0, 1e-3, false));
  EXPECT_EQ(env.matrix.layout().num_blocks(), 2u);
  EXPECT_EQ(env.local_to_global, (std::vector<std::uint32_t>{7, 42}));
  const auto k = env.matrix.find(0, 1);
  ASSERT_TRUE(k);
  EXPECT_EQ(env.annotation.col_row[*k], (std::pair<std::uint32_t, std::uint32_t>{42, 7}));
}

std::vector<SubRcsEnvelopeMsg> envelopes_for(const BaProblem& p, std::uint32_t n_groups,
                                             std::uint32_t iteration, double lambda) {
  const auto part = partition_points(p, n_groups);
  const auto groups = part.groups();
  const auto poses = make_pose_broadcast(p, iteration, lambda, false);
  std::vector<SubRcsEnvelopeMsg> out;
  for (std::uint32_t g = 0; g < part.n_groups; ++g) {
    out.push_back(worker_form_subrcs(make_tie_point_group(p, g, groups[g]), poses));
  }
  return out;
}

class Exactness : public ::testing::TestWithParam<std::tuple<CameraModel, std::uint32_t>> {};

TEST_P(Exactness, AggregateEqualsSerial) {
  const auto [model, shared] = GetParam();
  std::mt19937_64 rng(105);
  for (int t = 0; t < 5; ++t) {
    RandomProblemSpec spec;
    spec.cameras = 8 + 3 * t;
    spec.points = 100 + 50 * t;
    spec.model = model;
    spec.intrinsics_groups = shared;
    const auto p = random_problem(rng, spec);
    const ParameterLayout layout(p);
    const BlockLayout bl(layout.block_sizes());
    const auto serial = form_rcs_contribution(p, layout, all_points(p), 1e-3);
    for (std::uint32_t g : {1u, 2u, 4u, 8u}) {
      const auto agg = aggregate(envelopes_for(p, g, 3, 1e-3), bl, std::min<std::uint32_t>(g, p.num_points()), 3);
      EXPECT_LE(relative_frobenius(agg.r.to_dense(), serial.r.to_dense()), 1e-12) << g;
      EXPECT_LE(rel_vec(agg.b, serial.b), 1e-12);
      EXPECT_LE(rel_vec(agg.jtj_diag, serial.jtj_diag), 1e-12);
      EXPECT_NEAR(agg.cost, serial.cost, 1e-12 * serial.cost);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Layouts, Exactness,
                         ::testing::Values(std::make_tuple(CameraModel::kBal9, 0u),
                                           std::make_tuple(CameraModel::kFull11, 0u),
                                           std::make_tuple(CameraModel::kFull11, 2u)));

TEST(Aggregate, SingleEnvelopeIsItsExpansion) {
  std::mt19937_64 rng(106);
  const auto p = random_problem(rng, {});
  const ParameterLayout layout(p);
  const BlockLayout bl(layout.block_sizes());
  auto envs = envelopes_for(p, 1, 0, 1e-2);
  auto expanded = BsmcMatrix::from_structure(bl, {});
  merge_add(expanded, envs[0].matrix, &envs[0].annotation);
  const auto agg = aggregate(envs, bl, 1, 0);
  EXPECT_EQ(agg.r.to_dense(), expanded.to_dense());
}

TEST(Aggregate, ArrivalOrderDoesNotMatter) {
  std::mt19937_64 rng(107);
  RandomProblemSpec spec;
  spec.cameras = 12;
  spec.points = 200;
  const auto p = random_problem(rng, spec);
  const BlockLayout bl(ParameterLayout(p).block_sizes());
  auto envs = envelopes_for(p, 6, 1, 1e-3);
  const auto ref = aggregate(envs, bl, 6, 1);
  for (int k = 0; k < 5; ++k) {
    std::shuffle(envs.begin(), envs.end(), rng);
    const auto agg = aggregate(envs, bl, 6, 1);
    // Merged in ascending group id whatever the arrival order.
    EXPECT_TRUE(agg.r == ref.r);
    EXPECT_EQ(agg.b, ref.b);
  }
}

TEST(Aggregate, Errors) {
  std::mt19937_64 rng(108);
  const auto p = random_problem(rng, {});
  const BlockLayout bl(ParameterLayout(p).block_sizes());
  auto envs = envelopes_for(p, 4, 2, 1e-3);
  auto missing = envs;
  missing.erase(missing.begin() + 1);
  try {
    aggregate(missing, bl, 4, 2);
    FAIL();
  } catch (const MissingGroup& e) {
    EXPECT_EQ(e.missing(), std::vector<std::uint32_t>{1});
  }
  EXPECT_THROW(aggregate(envs, bl, 4, 3), IterationMismatch);
  auto dup = envs;
  dup.push_back(envs[0]);
  EXPECT_THROW(aggregate(dup, bl, 4, 2), ProtocolError);
  auto unknown = envs;
  unknown[0].group_id = 9;
  EXPECT_THROW(aggregate(unknown, bl, 4, 2), ProtocolError);
}

// ---- backends ----

TEST(Backend, InProcessAndSocketLinearizeMatchSerial) {
  std::mt19937_64 rng(109);
  RandomProblemSpec spec;
  spec.cameras = 15;
  spec.points = 300;
  auto p = random_problem(rng, spec);
  const ParameterLayout layout(p);
  const auto serial = form_rcs_contribution(p, layout, all_points(p), 1e-3);
  for (std::uint32_t g : {1u, 2u, 4u, 8u}) {
    DistributedOptions opt;
    opt.n_groups = g;
    auto a = DistributedBackend::in_process(p, 3, opt);
    const auto ra = a->linearize(0, 1e-3);
    EXPECT_LE(relative_frobenius(ra.r.to_dense(), serial.r.to_dense()), 1e-12);
    EXPECT_LE(rel_vec(ra.b, serial.b), 1e-12);
    a->finish(p);
    auto s = DistributedBackend::loopback_sockets(p, 2, opt);
    const auto rs = s->linearize(0, 1e-3);
    EXPECT_TRUE(rs.r == ra.r);
    EXPECT_EQ(rs.b, ra.b);
    s->finish(p);
  }
}

BaProblem noisy_problem(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RandomProblemSpec spec;
  spec.cameras = 12;
  spec.points = 250;
  auto p = random_problem(rng, spec);
  std::normal_distribution<double> g(0.0, 0.05);
  for (auto& pt : p.points) pt.position += Eigen::Vector3d(g(rng), g(rng), g(rng));
  return p;
}

TEST(Backend, OneWorkerMatchesSerialCostSequence) {
  auto p = noisy_problem(110);
  auto q = p;
  const auto serial = lm_solve(p, LmConfig{});
  RuntimeOptions rt;
  rt.mode = RuntimeMode::kThreads;
  rt.workers = 1;
  const auto dist = run_solve(q, LmConfig{}, rt);
  const auto a = serial.accepted_costs(), b = dist.trace.accepted_costs();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i], a[i], 1e-8 * a[i]);
  for (std::size_t k = 0; k < p.num_points(); ++k) {
    EXPECT_LE((p.points[k].position - q.points[k].position).norm(), 1e-6);
  }
}

TEST(Backend, FourSocketWorkersMatchSerialRms) {
  auto p = noisy_problem(111);
  auto q = p;
  const auto serial = lm_solve(p, LmConfig{});
  RuntimeOptions rt;
  rt.mode = RuntimeMode::kSockets;
  rt.workers = 4;
  rt.groups = 7;
  const auto dist = run_solve(q, LmConfig{}, rt);
  EXPECT_NEAR(dist.trace.final_rms, serial.final_rms, 1e-6 * serial.final_rms);
  EXPECT_NEAR(rms_pixels(q), dist.trace.final_rms, 1e-9 * dist.trace.final_rms);
}

TEST(Backend, RerunsAreBitIdentical) {
  auto p = noisy_problem(112);
  auto q = p;
  RuntimeOptions rt;
  rt.mode = RuntimeMode::kThreads;
  rt.workers = 3;
  rt.threads_per_worker = 2;
  const auto a = run_solve(p, LmConfig{}, rt);
  const auto b = run_solve(q, LmConfig{}, rt);
  EXPECT_EQ(a.trace.accepted_costs(), b.trace.accepted_costs());
  for (std::size_t k = 0; k < p.num_points(); ++k) {
    EXPECT_EQ(p.points[k].position, q.points[k].position);
  }
}

TEST(Backend, MessageAccounting) {
  auto p = noisy_problem(113);
  RuntimeOptions rt;
  rt.mode = RuntimeMode::kThreads;
  rt.workers = 3;
  rt.groups = 5;
  const auto out = run_solve(p, LmConfig{}, rt);
  const auto iters = out.trace.iterations.size();
  const auto& s = out.stats;
  EXPECT_EQ(out.groups, 5u);
  EXPECT_EQ(s[MessageType::kTiePointGroup].count, 5u);  // once per run
  EXPECT_EQ(s[MessageType::kPoseBroadcast].count, 3u * iters);
  EXPECT_EQ(s[MessageType::kSubRcsEnvelope].count, 5u * iters);
  EXPECT_EQ(s[MessageType::kDeltaXc].count, 3u * iters);
  EXPECT_EQ(s[MessageType::kTrialCost].count, 5u * iters);
  EXPECT_EQ(s[MessageType::kStop].count, 3u);
  EXPECT_EQ(s[MessageType::kGroupPoints].count, 5u);
  EXPECT_GT(s[MessageType::kTiePointGroup].bytes, 0u);
  EXPECT_EQ(s.total_bytes(), std::accumulate(s.by_type.begin(), s.by_type.end(), std::uint64_t{0},
                                             [](auto acc, const auto& e) { return acc + e.bytes; }));
}

TEST(Backend, WorkerFailureAbortsRun) {
  auto p = noisy_problem(114);
  DistributedOptions opt;
  opt.receive_timeout = std::chrono::seconds(20);
  WorkerOptions w;
  w.fail_after_frames = 3;  // dies during the first iteration's trial
  auto backend = DistributedBackend::in_process(p, 2, opt, w);
  EXPECT_THROW(lm_solve(*backend, p, LmConfig{}), WorkerDisconnected);
}

TEST(Backend, SocketWorkerFailureAbortsRun) {
  auto p = noisy_problem(115);
  DistributedOptions opt;
  opt.receive_timeout = std::chrono::seconds(20);
  WorkerOptions w;
  w.fail_after_frames = 2;
  auto backend = DistributedBackend::loopback_sockets(p, 2, opt, w);
  EXPECT_THROW(lm_solve(*backend, p, LmConfig{}), WorkerDisconnected);
}

TEST(Backend, ExternalWorkerOverTcp) {
  auto p = noisy_problem(116);
  auto q = p;
  TcpListener listener({"127.0.0.1", 0});
  std::thread worker([&] {
    auto ch = listener.accept();
    serve_worker(*ch);
  });
  RuntimeOptions rt;
  rt.mode = RuntimeMode::kSockets;
  rt.endpoints = {{"127.0.0.1", listener.port()}};
  rt.workers = 1;
  const auto dist = run_solve(p, LmConfig{}, rt);
  worker.join();
  const auto serial = lm_solve(q, LmConfig{});
  EXPECT_NEAR(dist.trace.final_rms, serial.final_rms, 1e-6 * serial.final_rms);
}

TEST(Runtime, ModeNames) {
  EXPECT_EQ(parse_runtime_mode("threads"), RuntimeMode::kThreads);
  EXPECT_STREQ(runtime_mode_name(RuntimeMode::kSockets), "sockets");
  EXPECT_THROW(parse_runtime_mode("mpi"), std::invalid_argument);
}

}  // namespace
}  // namespace dba
