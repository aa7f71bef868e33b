#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "gazectl/controller.hpp"
#include "support/controller_check.hpp"

using namespace gazectl;

namespace {

constexpr double kDt = 1.0 / 24.0;

SceneFrame empty2d(std::int64_t tick) {
    SceneFrame f;
    f.variant = Variant::TwoD;
    f.tick = tick;
    f.t_s = static_cast<double>(tick) * kDt;
    return f;
}

SceneFrame lone_waver(std::int64_t tick, int slot, double angle) {
    auto f = empty2d(tick);
    auto& p = f.people2d[static_cast<std::size_t>(slot)];
    p.present = true;
    p.distance_m = 2.0;
    p.waving = true;
    p.angle_deg = angle;
    return f;
}

std::unique_ptr<Predictor> oracle(Variant v = Variant::TwoD) {
    GazerPersona p;
    p.temperature = 0;
    return std::make_unique<OraclePredictor>(p, v);
}

std::unique_ptr<Predictor> baseline() {
    HeuristicWeights h;
    h.w = GazerPersona{}.cue_weights;
    h.alpha = 0.3;
    h.w_box = 0.8;
    return std::make_unique<BaselinePredictor>(h, Variant::TwoD);
}

/// Fresh random probabilities every tick: maximal flicker for the hysteresis check.
class JitterPredictor final : public Predictor {
   public:
    explicit JitterPredictor(std::uint64_t seed) : rng_(seed) {}
    Variant variant() const override { return Variant::TwoD; }
    std::vector<double> predict(std::span<const float>, const SceneFrame&) override {
        std::vector<double> p(5);
        double total = 0;
        for (auto& v : p) total += v = std::exponential_distribution<double>(1.0)(rng_);
        for (auto& v : p) v /= total;
        return p;
    }
    std::unique_ptr<Predictor> clone() const override { return std::make_unique<JitterPredictor>(*this); }
    std::string describe() const override { return "jitter"; }

   private:
    std::mt19937_64 rng_;
};

std::string log_of(std::span<const GazeCommand> cmds) {
    std::ostringstream os;
    write_command_log(os, cmds);
    return os.str();
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::IoError;
}

}  // namespace

TEST(Controller, EmptySceneStaysStraightAhead) {
    Controller ctl(Variant::TwoD, {}, oracle());
    for (int t = 0; t < 40; ++t) {
        const auto c = ctl.step(empty2d(t), kDt);
        EXPECT_FALSE(c.target.has_value());
        EXPECT_EQ(c.pan_deg, 0.0);
        EXPECT_EQ(c.pan_rate_dps, 0.0);
        EXPECT_EQ(c.probs.size(), 5u);
    }
}

TEST(Controller, WarmupHoldsUntilWindowFills) {
    ControllerPolicy pol;
    pol.m = 10;
    Controller ctl(Variant::TwoD, pol, oracle());
    for (int t = 0; t < 9; ++t) {
        const auto c = ctl.step(lone_waver(t, 1, -30), kDt);
        EXPECT_FALSE(c.target.has_value()) << t;
        EXPECT_EQ(c.pan_deg, 0.0);
    }
    EXPECT_EQ(ctl.step(lone_waver(9, 1, -30), kDt).target, std::optional<Label>(1));
}

TEST(Controller, ConvergesToLoneWaver) {
    Controller ctl(Variant::TwoD, {}, oracle());
    GazeCommand last;
    for (int t = 0; t < 24 + 6; ++t) last = ctl.step(lone_waver(t, 2, -30), kDt);
    EXPECT_EQ(last.target, std::optional<Label>(2));
    EXPECT_EQ(last.pan_deg, -30.0);
    EXPECT_NEAR(last.probs[2], 1.0, 1e-12);
}

TEST(Controller, JumpMovesFiveDegreesPerTick) {
    ControllerPolicy pol;
    pol.m = 1;
    pol.warmup_target_deg = 60;
    Controller ctl(Variant::TwoD, pol, oracle());
    auto c = ctl.step(lone_waver(0, 0, 60), kDt);
    ASSERT_EQ(c.pan_deg, 60.0);
    double prev = 60;
    for (int k = 1; k <= 24; ++k) {
        c = ctl.step(lone_waver(k, 3, -60), kDt);
        EXPECT_EQ(c.target, std::optional<Label>(3));
        EXPECT_NEAR(prev - c.pan_deg, 5.0, 1e-9) << "tick " << k;
        EXPECT_NEAR(c.pan_rate_dps, -120.0, 1e-6);
        if (k < 24) {
            EXPECT_GT(c.pan_deg, -60.0);
        }
        prev = c.pan_deg;
    }
    EXPECT_EQ(c.pan_deg, -60.0);
    c = ctl.step(lone_waver(25, 3, -60), kDt);
    EXPECT_EQ(c.pan_rate_dps, 0.0);
}

TEST(Controller, HysteresisBlocksSmallAdvantageUntilDwell) {
    ControllerPolicy pol;
    pol.m = 1;
    pol.switch_margin = 0.5;
    pol.min_dwell_s = 0.5;
    Controller ctl(Variant::TwoD, pol, oracle());
    auto two = [](std::int64_t t, bool second_wins) {
        auto f = lone_waver(t, 0, -20);
        f.people2d[1] = f.people2d[0];
        f.people2d[1].angle_deg = 20;
        f.people2d[second_wins ? 1 : 0].talking = true;
        return f;
    };
    EXPECT_EQ(ctl.step(two(0, false), kDt).target, std::optional<Label>(0));
    // Person 1 now scores higher but not by the margin: the switch waits for 0.5 s of dwell.
    int switched_at = -1;
    for (int t = 1; t < 30 && switched_at < 0; ++t)
        if (ctl.step(two(t, true), kDt).target == std::optional<Label>(1)) switched_at = t;
    EXPECT_EQ(switched_at, 12);
}

TEST(Controller, MarginSwitchesImmediately) {
    ControllerPolicy pol;
    pol.m = 1;
    pol.min_dwell_s = 100;
    Controller ctl(Variant::TwoD, pol, oracle());
    ctl.step(lone_waver(0, 0, -20), kDt);
    auto f = lone_waver(1, 0, -20);
    f.people2d[0].waving = false;
    f.people2d[1] = lone_waver(1, 1, 20).people2d[1];
    f.people2d[1].pointing = true;
    EXPECT_EQ(ctl.step(f, kDt).target, std::optional<Label>(1));
}

TEST(Controller, InvariantsOverFullReplay) {
    const auto tl = canonical_timeline(Variant::TwoD);
    for (int which = 0; which < 2; ++which) {
        Controller ctl(Variant::TwoD, {}, which == 0 ? oracle() : baseline());
        TimelineSource src(tl);
        const auto run = run_stream(ctl, src);
        ASSERT_EQ(run.commands.size(), tl.frames.size());
        const auto rep = check::check_invariants(tl.frames, run.commands, ctl.policy(), kDt);
        EXPECT_TRUE(rep.ok()) << rep.violations.front();
        EXPECT_GT(rep.switches, 100u) << which;
        EXPECT_LE(rep.max_step_deg, 5.0 + 1e-9);
        EXPECT_EQ(run.latency.ticks, tl.frames.size());
    }
}

TEST(Controller, InvariantsUnderFlickeringPredictions) {
    const auto tl = canonical_timeline(Variant::TwoD);
    ControllerPolicy pol;
    pol.switch_margin = 0.3;
    Controller ctl(Variant::TwoD, pol, std::make_unique<JitterPredictor>(7));
    TimelineSource src(tl);
    const auto run = run_stream(ctl, src);
    const auto rep = check::check_invariants(tl.frames, run.commands, pol, kDt);
    EXPECT_TRUE(rep.ok()) << rep.violations.front();
    EXPECT_GT(rep.early_switches, 1000u);
    EXPECT_GT(rep.switches, rep.early_switches);
}

TEST(Controller, CheckerCatchesViolations) {
    ControllerPolicy pol;
    std::vector<SceneFrame> frames{lone_waver(0, 0, 10), lone_waver(1, 0, 10)};
    frames[1].people2d[1] = lone_waver(1, 1, 20).people2d[1];
    std::vector<GazeCommand> cmds(2);
    cmds[0].target = 0;
    cmds[0].probs = {0.6, 0.4, 0, 0, 0};
    cmds[1].target = 1;
    cmds[1].probs = {0.48, 0.52, 0, 0, 0};
    cmds[1].pan_deg = 20;
    const auto rep = check::check_invariants(frames, cmds, pol, kDt);
    EXPECT_EQ(rep.violations.size(), 2u);
}

TEST(Controller, DeterministicCommandLogs) {
    const auto tl = canonical_timeline(Variant::ThreeD);
    auto model = SequenceModel<float>::build(LstmConfig{8, 18, 3, 16, 1}, 5);
    ControllerPolicy pol;
    pol.m = 8;
    std::string logs[2];
    for (auto& log : logs) {
        Controller ctl(Variant::ThreeD, pol, std::make_unique<ModelPredictor>(model, Variant::ThreeD));
        TimelineSource src(tl);
        log = log_of(run_stream(ctl, src).commands);
    }
    EXPECT_EQ(logs[0], logs[1]);
    EXPECT_EQ(std::count(logs[0].begin(), logs[0].end(), '\n'), 15000);
}

TEST(Controller, ProbabilitiesDependOnlyOnWindow) {
    auto model = SequenceModel<float>::build(LstmConfig{4, 28, 5, 8, 1}, 3);
    ControllerPolicy pol;
    pol.m = 4;
    Controller a(Variant::TwoD, pol, std::make_unique<ModelPredictor>(model, Variant::TwoD));
    Controller b = a;
    const auto tl = canonical_timeline(Variant::TwoD);
    for (int t = 0; t < 50; ++t) a.step(tl.frames[static_cast<std::size_t>(t)], kDt);
    for (int t = 900; t < 907; ++t) b.step(tl.frames[static_cast<std::size_t>(t)], kDt);
    GazeCommand ca, cb;
    for (int t = 3000; t < 3004; ++t) {
        ca = a.step(tl.frames[static_cast<std::size_t>(t)], kDt);
        cb = b.step(tl.frames[static_cast<std::size_t>(t)], kDt);
    }
    EXPECT_EQ(ca.probs, cb.probs);
}

TEST(Controller, CopiesAreIndependent) {
    Controller a(Variant::TwoD, {}, oracle());
    for (int t = 0; t < 40; ++t) a.step(lone_waver(t, 0, 40), kDt);
    Controller b = a;
    for (int t = 40; t < 80; ++t) b.step(lone_waver(t, 1, -40), kDt);
    EXPECT_EQ(a.pan_deg(), 40.0);
    EXPECT_EQ(b.pan_deg(), -40.0);
    b.reset();
    EXPECT_EQ(b.pan_deg(), 0.0);
    EXPECT_FALSE(b.target().has_value());
}

TEST(Controller, Errors) {
    Controller ctl(Variant::TwoD, {}, oracle());
    EXPECT_EQ(code_of([&] { ctl.step(empty2d(0), 0.0); }), ErrorCode::OutOfRange);
    SceneFrame f3;
    f3.variant = Variant::ThreeD;
    EXPECT_EQ(code_of([&] { ctl.step(f3, kDt); }), ErrorCode::VariantMismatch);
    EXPECT_EQ(code_of([&] { Controller(Variant::TwoD, {}, oracle(Variant::ThreeD)); }), ErrorCode::VariantMismatch);
    auto model = SequenceModel<float>::build(LstmConfig{4, 28, 5, 8, 1}, 3);
    EXPECT_EQ(code_of([&] { ModelPredictor(model, Variant::ThreeD); }), ErrorCode::VariantMismatch);
    EXPECT_EQ(code_of([&] { Controller(Variant::TwoD, {}, std::make_unique<ModelPredictor>(model, Variant::TwoD)); }),
              ErrorCode::InvalidConfig);
    const auto tl = canonical_timeline(Variant::ThreeD);
    TimelineSource src(tl);
    EXPECT_EQ(code_of([&] { run_stream(ctl, src); }), ErrorCode::VariantMismatch);
}

TEST(Policy, JsonOverridesAndValidation) {
    const auto p = policy_from_json(nlohmann::json::parse(R"({"switch_margin":0.3,"m":12})"));
    EXPECT_EQ(p.m, 12);
    EXPECT_EQ(p.switch_margin, 0.3);
    EXPECT_EQ(p.min_dwell_s, 0.5);
    EXPECT_EQ(policy_from_json(to_json(p)).m, 12);
    EXPECT_THROW(policy_from_json(nlohmann::json::parse(R"({"max_pan_rate_dps":0})")), Error);
    EXPECT_THROW(policy_from_json(nlohmann::json::parse(R"({"m":"x"})")), Error);
}

TEST(Stream, TFramesGiveTCommandsAndLatency) {
    const auto specs = enumerate_situations_2d();
    const auto tl = compile_timeline({specs[0], specs[50]}, 24);
    auto model = SequenceModel<float>::build(LstmConfig{24, 28, 5, 64, 2}, 1);
    Controller ctl(Variant::TwoD, {}, std::make_unique<ModelPredictor>(model, Variant::TwoD));
    TimelineSource src(tl);
    std::size_t seen = 0;
    StreamOptions opt;
    opt.on_command = [&](const GazeCommand&) { ++seen; };
    const auto run = run_stream(ctl, src, opt);
    EXPECT_EQ(run.commands.size(), tl.frames.size());
    EXPECT_EQ(seen, tl.frames.size());
    EXPECT_LT(run.latency.p99_ms, 1000.0 / 24.0);
    EXPECT_LE(run.latency.p99_ms, run.latency.max_ms);
    for (std::size_t i = 0; i < tl.frames.size(); ++i) EXPECT_EQ(run.commands[i].tick, tl.frames[i].tick);
}

TEST(Stream, LatencyStatsOnKnownSample) {
    std::vector<double> ms(100);
    for (int i = 0; i < 100; ++i) ms[static_cast<std::size_t>(i)] = i + 1;
    const auto s = latency_stats(ms);
    EXPECT_DOUBLE_EQ(s.mean_ms, 50.5);
    EXPECT_DOUBLE_EQ(s.p99_ms, 99.0);
    EXPECT_DOUBLE_EQ(s.max_ms, 100.0);
}
