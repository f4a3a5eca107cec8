#include <gtest/gtest.h>

#include <algorithm>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "btloc/pipeline/modules.hpp"
#include "btloc/pipeline/serialization.hpp"

using namespace btloc;
using namespace btloc::pipe;

namespace {

/// Records every payload it receives and forwards it on "out".
class Relay : public Module {
 public:
  Relay(std::string n, Layer l, PortType in, PortType out, std::vector<std::string>* log)
      : layer_(l), in_(in), out_(out), log_(log) {
    name = std::move(n);
  }
  Layer layer() const override { return layer_; }
  std::string type_name() const override { return "relay"; }
  std::vector<PortSpec> inputs() const override { return {{"in", in_}}; }
  std::vector<PortSpec> outputs() const override {
    if (layer_ == Layer::Sink) return {};
    return {{"out", out_}};
  }
  void process(const std::string&, const Payload& p, const Emit& emit) override {
    log_->push_back(name);
    if (on_process) on_process();
    if (layer_ != Layer::Sink) emit("out", p);
  }
  std::function<void()> on_process;

 private:
  Layer layer_;
  PortType in_, out_;
  std::vector<std::string>* log_;
};

class Thrower : public Module {
 public:
  explicit Thrower(Layer l) : layer_(l) { name = "thrower"; }
  Layer layer() const override { return layer_; }
  std::string type_name() const override { return "thrower"; }
  std::vector<PortSpec> inputs() const override { return {{"in", PortType::RawMeasurement}}; }
  std::vector<PortSpec> outputs() const override { return {{"out", PortType::Observation}}; }
  void process(const std::string&, const Payload&, const Emit&) override { throw std::runtime_error("boom"); }

 private:
  Layer layer_;
};

Measurement gps_at(double t, Vec2 p, GpsStatus st = GpsStatus::Fix) {
  return Measurement{Timestamp::from_seconds(t), GpsFix{p, st, Mat2::Identity() * 2.25}};
}

Measurement encoder_at(double t, double v) { return Measurement{Timestamp::from_seconds(t), EncoderSpeed{v, 0.05}}; }
Measurement gyro_at(double t, double w) { return Measurement{Timestamp::from_seconds(t), GyroYawRate{w, 0.002}}; }

/// Source -> GPS model -> EKF -> stats recorder, plus motion.
struct GpsRig {
  PipelineGraph g;
  std::shared_ptr<SourceModule> gps_src = std::make_shared<SourceModule>("gps", 2);
  std::shared_ptr<SourceModule> enc_src = std::make_shared<SourceModule>("encoder", 0);
  std::shared_ptr<SourceModule> gyro_src = std::make_shared<SourceModule>("gyro", 1);
  std::shared_ptr<GpsObservationModel> model = std::make_shared<GpsObservationModel>();
  std::shared_ptr<MotionModel> motion = std::make_shared<MotionModel>();
  std::shared_ptr<EkfKernel> ekf = std::make_shared<EkfKernel>("main");
  std::shared_ptr<StatsRecorder> stats = std::make_shared<StatsRecorder>();

  GpsRig() {
    for (auto m : std::vector<std::shared_ptr<Module>>{gps_src, enc_src, gyro_src, model, motion, ekf, stats}) {
      g.add_module(m);
    }
    ekf->initialize(Pose2D(0, 0, 0), Covariance3::Identity(), Timestamp{});
  }

  std::vector<Connection> edges() const {
    return {{gps_src->id, "out", model->id, "fix"},        {model->id, "obs", ekf->id, "observation"},
            {ekf->id, "stats", stats->id, "stats"},        {enc_src->id, "out", motion->id, "encoder"},
            {gyro_src->id, "out", motion->id, "gyro"},     {motion->id, "motion", ekf->id, "motion"}};
  }
  void connect_all() {
    for (const auto& c : edges()) g.connect(c);
  }
  void feed(const Measurement& m) {
    if (m.holds<GpsFix>()) g.dispatch(gps_src->id, m);
    if (m.holds<EncoderSpeed>()) g.dispatch(enc_src->id, m);
    if (m.holds<GyroYawRate>()) g.dispatch(gyro_src->id, m);
  }
};

}  // namespace

TEST(Connect, GpsChainReachesKernelExactlyOnce) {
  GpsRig rig;
  rig.connect_all();
  rig.feed(gps_at(1.0, Vec2(0.1, 0.1)));
  ASSERT_EQ(rig.stats->records().size(), 1u);
  EXPECT_EQ(rig.stats->records()[0].outcome, est::Outcome::Accepted);
  EXPECT_EQ(rig.stats->records()[0].filter, "main");
}

TEST(Connect, TypeMismatchRejected) {
  GpsRig rig;
  EXPECT_THROW(rig.g.connect({rig.model->id, "obs", rig.ekf->id, "motion"}), std::invalid_argument);
}

TEST(Connect, UnknownPortsAndModulesRejected) {
  GpsRig rig;
  EXPECT_THROW(rig.g.connect({rig.model->id, "nope", rig.ekf->id, "observation"}), std::invalid_argument);
  EXPECT_THROW(rig.g.connect({999, "out", rig.ekf->id, "observation"}), std::invalid_argument);
}

TEST(Connect, LayerOrderEnforced) {
  std::vector<std::string> log;
  PipelineGraph g;
  auto src = std::make_shared<Relay>("src", Layer::Source, PortType::RawMeasurement, PortType::Observation, &log);
  auto kernel = std::make_shared<Relay>("k", Layer::Kernel, PortType::Observation, PortType::UpdateStats, &log);
  auto model = std::make_shared<Relay>("m", Layer::Model, PortType::UpdateStats, PortType::RawMeasurement, &log);
  auto motion_src = std::make_shared<Relay>("ms", Layer::Source, PortType::RawMeasurement, PortType::MotionInput, &log);
  auto motion_kernel = std::make_shared<Relay>("mk", Layer::Kernel, PortType::MotionInput, PortType::UpdateStats, &log);
  for (auto m : std::vector<std::shared_ptr<Module>>{src, kernel, model, motion_src, motion_kernel}) g.add_module(m);
  // Source -> Kernel is only legal for motion inputs.
  EXPECT_THROW(g.connect({src->id, "out", kernel->id, "in"}), std::invalid_argument);
  EXPECT_TRUE(g.connect({motion_src->id, "out", motion_kernel->id, "in"}));
  // Backwards edge (would also close a loop) is refused.
  EXPECT_THROW(g.connect({kernel->id, "out", model->id, "in"}), std::invalid_argument);
  EXPECT_TRUE(g.acyclic());
}

TEST(Connect, DuplicateIsNoOpWithWarning) {
  int warnings = 0;
  log::set_sink([&](log::Level l, const std::string&) { warnings += l == log::Level::Warn; });
  GpsRig rig;
  rig.connect_all();
  EXPECT_FALSE(rig.g.connect(rig.edges()[0]));
  log::set_sink(nullptr);
  EXPECT_EQ(warnings, 1);
  rig.feed(gps_at(1.0, Vec2(0.1, 0.1)));
  EXPECT_EQ(rig.stats->records().size(), 1u);
}

TEST(Connect, FanOutDeliversInSubscriptionOrder) {
  std::vector<std::string> log;
  PipelineGraph g;
  auto k = std::make_shared<Relay>("k", Layer::Kernel, PortType::Observation, PortType::UpdateStats, &log);
  auto s1 = std::make_shared<Relay>("s1", Layer::Sink, PortType::UpdateStats, PortType::UpdateStats, &log);
  auto s2 = std::make_shared<Relay>("s2", Layer::Sink, PortType::UpdateStats, PortType::UpdateStats, &log);
  g.add_module(k);
  g.add_module(s1);
  g.add_module(s2);
  g.connect({k->id, "out", s2->id, "in"});
  g.connect({k->id, "out", s1->id, "in"});
  g.dispatch(k->id, est::UpdateStats{});
  g.dispatch(k->id, est::UpdateStats{});
  EXPECT_EQ(log, (std::vector<std::string>{"k", "s2", "s1", "k", "s2", "s1"}));
}

TEST(Dispatch, DepthFirstOrder) {
  std::vector<std::string> log;
  PipelineGraph g;
  auto a = std::make_shared<Relay>("A", Layer::Source, PortType::RawMeasurement, PortType::RawMeasurement, &log);
  auto b = std::make_shared<Relay>("B", Layer::Model, PortType::RawMeasurement, PortType::Observation, &log);
  auto c = std::make_shared<Relay>("C", Layer::Kernel, PortType::Observation, PortType::UpdateStats, &log);
  auto d = std::make_shared<Relay>("D", Layer::Model, PortType::RawMeasurement, PortType::Observation, &log);
  for (auto m : std::vector<std::shared_ptr<Module>>{a, b, c, d}) g.add_module(m);
  g.connect({a->id, "out", b->id, "in"});
  g.connect({b->id, "out", c->id, "in"});
  g.connect({a->id, "out", d->id, "in"});
  g.dispatch(a->id, Measurement{});
  EXPECT_EQ(log, (std::vector<std::string>{"A", "B", "C", "D"}));
}

TEST(Dispatch, EmptySubscriberListIsNoOp) {
  std::vector<std::string> log;
  PipelineGraph g;
  auto a = std::make_shared<Relay>("A", Layer::Source, PortType::RawMeasurement, PortType::RawMeasurement, &log);
  g.add_module(a);
  g.dispatch(a->id, Measurement{});
  EXPECT_EQ(log, std::vector<std::string>{"A"});
  EXPECT_THROW(g.dispatch(42, Measurement{}), std::invalid_argument);
}

TEST(Disconnect, StopsDeliveryOnThatEdgeOnly) {
  std::vector<std::string> log;
  PipelineGraph g;
  auto k = std::make_shared<Relay>("k", Layer::Kernel, PortType::Observation, PortType::UpdateStats, &log);
  auto s1 = std::make_shared<Relay>("s1", Layer::Sink, PortType::UpdateStats, PortType::UpdateStats, &log);
  auto s2 = std::make_shared<Relay>("s2", Layer::Sink, PortType::UpdateStats, PortType::UpdateStats, &log);
  for (auto m : std::vector<std::shared_ptr<Module>>{k, s1, s2}) g.add_module(m);
  g.connect({k->id, "out", s1->id, "in"});
  g.connect({k->id, "out", s2->id, "in"});
  g.disconnect({k->id, "out", s1->id, "in"});
  g.dispatch(k->id, est::UpdateStats{});
  EXPECT_EQ(log, (std::vector<std::string>{"k", "s2"}));
  g.disconnect({k->id, "out", s2->id, "in"});
  log.clear();
  g.dispatch(k->id, est::UpdateStats{});
  EXPECT_EQ(log, std::vector<std::string>{"k"});
  EXPECT_THROW(g.disconnect({k->id, "out", s2->id, "in"}), std::invalid_argument);
}

TEST(Disconnect, MidDispatchAffectsOnlyNextEmission) {
  std::vector<std::string> log;
  PipelineGraph g;
  auto k = std::make_shared<Relay>("k", Layer::Kernel, PortType::Observation, PortType::UpdateStats, &log);
  auto s1 = std::make_shared<Relay>("s1", Layer::Sink, PortType::UpdateStats, PortType::UpdateStats, &log);
  auto s2 = std::make_shared<Relay>("s2", Layer::Sink, PortType::UpdateStats, PortType::UpdateStats, &log);
  for (auto m : std::vector<std::shared_ptr<Module>>{k, s1, s2}) g.add_module(m);
  g.connect({k->id, "out", s1->id, "in"});
  g.connect({k->id, "out", s2->id, "in"});
  bool once = false;
  s1->on_process = [&] {
    if (!once) {
      once = true;
      g.disconnect({k->id, "out", s2->id, "in"});
    }
  };
  g.dispatch(k->id, est::UpdateStats{});
  EXPECT_EQ(log, (std::vector<std::string>{"k", "s1", "s2"}));
  log.clear();
  g.dispatch(k->id, est::UpdateStats{});
  EXPECT_EQ(log, (std::vector<std::string>{"k", "s1"}));
}

TEST(Dispatch, ModelFailureIsDroppedAndSiblingsStillServed) {
  std::vector<std::string> log;
  log::set_level(log::Level::Off);
  PipelineGraph g;
  auto a = std::make_shared<Relay>("A", Layer::Source, PortType::RawMeasurement, PortType::RawMeasurement, &log);
  auto t = std::make_shared<Thrower>(Layer::Model);
  auto d = std::make_shared<Relay>("D", Layer::Model, PortType::RawMeasurement, PortType::Observation, &log);
  for (auto m : std::vector<std::shared_ptr<Module>>{a, t, d}) g.add_module(m);
  g.connect({a->id, "out", t->id, "in"});
  g.connect({a->id, "out", d->id, "in"});
  EXPECT_NO_THROW(g.dispatch(a->id, Measurement{}));
  log::set_level(log::Level::Warn);
  EXPECT_EQ(log, (std::vector<std::string>{"A", "D"}));
}

TEST(Kernel, UninitializedFilterReportsNotConverged) {
  GpsRig rig;
  rig.ekf = std::make_shared<EkfKernel>("other");
  rig.ekf->id = 0;
  rig.g.add_module(rig.ekf);
  rig.connect_all();
  rig.feed(gps_at(1.0, Vec2(0, 0)));
  ASSERT_EQ(rig.stats->records().size(), 1u);
  EXPECT_EQ(rig.stats->records()[0].outcome, est::Outcome::NotConverged);
  EXPECT_FALSE(rig.stats->records()[0].mahalanobis.has_value());
}

TEST(Kernel, OneStatsRecordPerObservation) {
  GpsRig rig;
  rig.connect_all();
  int n = 0;
  for (int i = 1; i <= 50; ++i) {
    rig.feed(encoder_at(i * 0.1, 1.0));
    if (i % 10 == 0) {
      rig.feed(gps_at(i * 0.1, Vec2(i * 0.1, 0.0), i % 20 == 0 ? GpsStatus::NoFix : GpsStatus::Fix));
      ++n;
    }
  }
  ASSERT_EQ(static_cast<int>(rig.stats->records().size()), n);
  for (const auto& s : rig.stats->records()) {
    const bool decided = s.outcome == est::Outcome::Accepted || s.outcome == est::Outcome::Rejected;
    EXPECT_EQ(s.mahalanobis.has_value(), decided);
  }
}

TEST(Kernel, MotionUsesZeroOrderHoldOfGyro) {
  GpsRig rig;
  rig.connect_all();
  rig.feed(gyro_at(0.0, 0.5));
  rig.feed(encoder_at(0.0, 2.0));
  rig.feed(gyro_at(0.05, 100.0));
  rig.feed(gyro_at(0.1, 0.0));
  rig.feed(encoder_at(0.1, 2.0));
  // The step from 0.0 to 0.1 used the pair captured at 0.0: v=2, w=0.5.
  EXPECT_NEAR(rig.ekf->state().pose.heading, 0.05, 1e-12);
  EXPECT_NEAR(rig.ekf->state().pose.x, 0.2, 1e-12);
}

TEST(Dispatch, InterleavedStreamsKeepPerSourceOrder) {
  GpsRig rig;
  rig.connect_all();
  auto traj = std::make_shared<TrajectoryRecorder>();
  rig.g.add_module(traj);
  rig.g.connect({rig.ekf->id, "state", traj->id, "state"});
  for (int i = 0; i <= 100; ++i) {
    rig.feed(encoder_at(i * 0.1, 1.0));
    if (i % 10 == 0) rig.feed(gps_at(i * 0.1, Vec2(i * 0.1, 0)));
  }
  const auto& st = rig.stats->records();
  for (std::size_t i = 1; i < st.size(); ++i) ASSERT_LT(st[i - 1].stamp, st[i].stamp);
  const auto& tr = traj->states();
  for (std::size_t i = 1; i < tr.size(); ++i) ASSERT_LE(tr[i - 1].stamp, tr[i].stamp);
}

TEST(Rewiring, ConnectOrderDoesNotChangeResults) {
  std::vector<Measurement> stream;
  for (int i = 0; i <= 100; ++i) {
    stream.push_back(gyro_at(i * 0.1, 0.05));
    stream.push_back(encoder_at(i * 0.1, 3.0));
    if (i % 10 == 5) stream.push_back(gps_at(i * 0.1, Vec2(i * 0.3, i * 0.01)));
  }
  std::vector<std::size_t> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  std::optional<nlohmann::json> reference;
  int permutations = 0;
  do {
    GpsRig rig;
    const auto edges = rig.edges();
    for (std::size_t i : perm) rig.g.connect(edges[i]);
    for (const auto& m : stream) rig.feed(m);
    nlohmann::json out = nlohmann::json::array();
    for (const auto& s : rig.stats->records()) out.push_back({s.stamp.micros, s.innovation, s.pose.x, s.pose.y});
    out.push_back({rig.ekf->state().pose.x, rig.ekf->state().pose.y, rig.ekf->state().pose.heading});
    if (!reference) reference = out;
    ASSERT_EQ(out, *reference);
    ++permutations;
  } while (std::next_permutation(perm.begin(), perm.end()) && permutations < 120);
}

TEST(Topology, DumpAndReload) {
  GpsRig rig;
  rig.connect_all();
  const auto dump = dump_topology(rig.g);
  PipelineGraph g2;
  load_topology(g2, dump, [](const nlohmann::json& rec) -> std::shared_ptr<Module> {
    const auto type = rec.at("type").get<std::string>();
    if (type == "source") return std::make_shared<SourceModule>("", rec.at("config").at("stream").get<std::size_t>());
    if (type == "gps_model") return std::make_shared<GpsObservationModel>();
    if (type == "motion_model") return std::make_shared<MotionModel>();
    if (type == "ekf") return std::make_shared<EkfKernel>(rec.at("name").get<std::string>());
    if (type == "stats_recorder") return std::make_shared<StatsRecorder>();
    return nullptr;
  });
  EXPECT_EQ(dump_topology(g2), dump);
  EXPECT_EQ(g2.connections(), rig.g.connections());
}

TEST(Topology, RemoveModuleDropsItsEdges) {
  GpsRig rig;
  rig.connect_all();
  rig.g.remove_module(rig.model->id);
  for (const auto& c : rig.g.connections()) {
    EXPECT_NE(c.from, rig.model->id);
    EXPECT_NE(c.to, rig.model->id);
  }
  EXPECT_NO_THROW(rig.feed(gps_at(1.0, Vec2(0, 0))));
  EXPECT_TRUE(rig.stats->records().empty());
}

TEST(BlackboardPublisher, PostsStateAndAppendsStats) {
  bt::Blackboard bb;
  GpsRig rig;
  auto pub = std::make_shared<BlackboardPublisher>(bb);
  rig.g.add_module(pub);
  rig.connect_all();
  rig.g.connect({rig.ekf->id, "stats", pub->id, "stats"});
  rig.g.connect({rig.ekf->id, "state", pub->id, "state"});
  rig.feed(gps_at(1.0, Vec2(0.2, 0)));
  rig.feed(gps_at(2.0, Vec2(0.2, 0)));
  EXPECT_FALSE(bb.contains("main/state"));
  bb.refresh();
  EXPECT_EQ(bb.list<est::UpdateStats>("main/stats").size(), 2u);
  ASSERT_NE(bb.get<StateEstimate>("main/state"), nullptr);
  EXPECT_EQ(bb.get<StateEstimate>("main/state")->stamp, Timestamp::from_seconds(2.0));
}
