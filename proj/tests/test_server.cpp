#include <gtest/gtest.h>

#include <filesystem>

#include "gazectl/server.hpp"
#include "support/session_client.hpp"

using namespace gazectl;
using check::SessionClient;
using nlohmann::json;

namespace {

std::unique_ptr<Predictor> oracle() {
    GazerPersona p;
    p.temperature = 0;
    return std::make_unique<OraclePredictor>(p, Variant::TwoD);
}

ServeConfig fast_config(double time_scale = 10.0) {
    ServeConfig cfg;
    cfg.port = 0;
    cfg.time_scale = time_scale;
    cfg.record_dir = std::filesystem::temp_directory_path().string();
    return cfg;
}

json waver(int slot, double angle, bool box = false) {
    json chars = json::array();
    for (int i = 0; i < 4; ++i)
        chars.push_back(i == slot ? json{{"present", true}, {"distance_m", 2.0}, {"waving", true}, {"angle_deg", angle}} : json{{"present", false}});
    return {{"characters", chars}, {"box", box}};
}

bool gaze_on(const json& m, int slot, double angle) {
    if (m.at("type") != "gaze") return false;
    const auto& p = m.at("payload");
    return p.at("target") == slot && std::abs(p.at("pan_deg").get<double>() - angle) < 1e-9;
}

}  // namespace

TEST(Session, HelloReturnsReady) {
    Server server(fast_config(), oracle());
    const int port = server.start();
    SessionClient c(port);
    ASSERT_TRUE(c.connected());
    const auto seq = c.send("hello", {{"variant", "2d"}});
    const auto m = c.next();
    ASSERT_TRUE(m);
    EXPECT_EQ((*m)["type"], "ready");
    EXPECT_EQ((*m)["re"], seq);
    const auto& p = (*m)["payload"];
    EXPECT_EQ(p["variant"], "2d");
    EXPECT_EQ(p["m"], 24);
    EXPECT_EQ(p["labels"].size(), 5u);
    EXPECT_NEAR(p["tick_s"].get<double>(), 1.0 / 24, 1e-12);
    EXPECT_EQ(p["protocol_version"], kProtocolVersion);
}

TEST(Session, ErrorsKeepTheConnection) {
    Server server(fast_config(), oracle());
    SessionClient c(server.start());
    auto seq = c.send("scene_update", waver(0, 10));
    auto m = c.next();
    ASSERT_TRUE(m);
    EXPECT_EQ((*m)["type"], "error");
    EXPECT_EQ((*m)["re"], seq);

    c.send("hello");
    ASSERT_TRUE(c.wait_type("ready"));
    seq = c.send("dance");
    m = c.next();
    ASSERT_TRUE(m);
    EXPECT_EQ((*m)["type"], "error");
    EXPECT_EQ((*m)["re"], seq);
    EXPECT_EQ((*m)["payload"]["code"], "SchemaError");

    c.send_raw("{not json\n");
    m = c.next();
    ASSERT_TRUE(m);
    EXPECT_EQ((*m)["type"], "error");
    EXPECT_TRUE((*m)["re"].is_null());

    c.send_raw(R"({"type":"hello","seq":1})" "\n");
    m = c.next();
    ASSERT_TRUE(m);
    EXPECT_EQ((*m)["type"], "error");
    EXPECT_NE((*m)["payload"]["message"].get<std::string>().find("does not increase"), std::string::npos);

    seq = c.send("set_policy", {{"switch_margin", 2.0}});
    m = c.next();
    ASSERT_TRUE(m);
    EXPECT_EQ((*m)["payload"]["code"], "InvalidConfig");
    seq = c.send("scene_update", {{"characters", json::array({json{{"present", true}, {"angle_deg", 300}}})}});
    m = c.next();
    ASSERT_TRUE(m);
    EXPECT_EQ((*m)["type"], "error");
    EXPECT_EQ((*m)["re"], seq);

    seq = c.send("set_policy", {{"switch_margin", 0.2}});
    m = c.next();
    ASSERT_TRUE(m);
    EXPECT_EQ((*m)["type"], "ready");
    EXPECT_EQ((*m)["payload"]["policy"]["switch_margin"], 0.2);
    EXPECT_TRUE(c.server_seq_increasing());
}

TEST(Session, VariantMismatchOnHello) {
    Server server(fast_config(), oracle());
    SessionClient c(server.start());
    c.send("hello", {{"variant", "3d"}});
    const auto m = c.next();
    ASSERT_TRUE(m);
    EXPECT_EQ((*m)["payload"]["code"], "VariantMismatch");
}

TEST(Session, GazeConvergesToLoneWaver) {
    Server server(fast_config(), oracle());
    SessionClient c(server.start());
    c.send("hello");
    ASSERT_TRUE(c.wait_type("ready"));
    const auto seq = c.send("scene_update", waver(1, -30));
    const auto m = c.wait_for([](const json& m) { return gaze_on(m, 1, -30); });
    ASSERT_TRUE(m);
    EXPECT_EQ((*m)["re"], seq);
    EXPECT_EQ((*m)["payload"]["target_name"], label_names(Variant::TwoD)[1]);
    EXPECT_GE((*m)["payload"]["tick"].get<int>(), 24);
    EXPECT_TRUE(c.server_seq_increasing());
}

TEST(Session, ZeroOrderHoldKeepsTicking) {
    Server server(fast_config(20.0), oracle());
    SessionClient c(server.start());
    c.send("hello");
    ASSERT_TRUE(c.wait_type("ready"));
    c.send("scene_update", waver(0, 15));
    int gazes = 0;
    std::int64_t last_tick = -1;
    bool consecutive = true;
    while (gazes < 60) {
        const auto m = c.wait_type("gaze", 2000);
        ASSERT_TRUE(m);
        const auto t = (*m)["payload"]["tick"].get<std::int64_t>();
        consecutive &= t == last_tick + 1;
        last_tick = t;
        ++gazes;
    }
    EXPECT_TRUE(consecutive);
}

TEST(Session, SessionsAreIsolated) {
    Server server(fast_config(), oracle());
    const int port = server.start();
    SessionClient a(port), b(port);
    a.send("hello");
    b.send("hello");
    const auto ra = a.wait_type("ready");
    const auto rb = b.wait_type("ready");
    ASSERT_TRUE(ra && rb);
    EXPECT_NE((*ra)["payload"]["session"], (*rb)["payload"]["session"]);
    a.send("scene_update", waver(0, 40));
    b.send("scene_update", waver(3, -40));
    EXPECT_TRUE(a.wait_for([](const json& m) { return gaze_on(m, 0, 40); }));
    EXPECT_TRUE(b.wait_for([](const json& m) { return gaze_on(m, 3, -40); }));
}

TEST(Session, RecordingRoundTripsThroughValidation) {
    Server server(fast_config(40.0), oracle());
    SessionClient c(server.start());
    c.send("hello");
    ASSERT_TRUE(c.wait_type("ready"));
    const auto path = (std::filesystem::temp_directory_path() / "gazectl_session_record.jsonl").string();
    c.send("start_record", {{"path", path}});
    const auto r = c.wait_type("ready");
    ASSERT_TRUE(r);
    EXPECT_EQ((*r)["payload"]["recording"], true);
    // About 30 s of session time: six scenes, the last three with operator gaze labels.
    for (int s = 0; s < 6; ++s) {
        auto scene = waver(s % 4, -40.0 + 15 * s, true);
        if (s >= 3) scene["gaze"] = 4;
        c.send("scene_update", scene);
        int seen = 0;
        while (seen < 120) {
            ASSERT_TRUE(c.wait_type("gaze", 2000));
            ++seen;
        }
    }
    const auto seq = c.send("stop_record");
    const auto saved = c.wait_type("record_saved");
    ASSERT_TRUE(saved);
    EXPECT_EQ((*saved)["re"], seq);
    EXPECT_GE((*saved)["payload"]["frames"].get<int>(), 720);
    EXPECT_EQ((*saved)["payload"]["path"], path);
    const auto d = load_dataset(path);
    EXPECT_EQ(d.size(), (*saved)["payload"]["examples"].get<std::size_t>());
    EXPECT_GT(d.size(), 600u);
    EXPECT_EQ(d.m(), 24);
    const auto prov = json::parse(d.meta().provenance);
    EXPECT_EQ(prov["labels"], "mixed");
    EXPECT_GT(prov["machine_generated_frames"].get<int>(), 0);
    EXPECT_GE(d.situation_ids().size(), 5u);
    std::size_t box = 0;
    for (std::size_t i = 0; i < d.size(); ++i) box += d.label(i) == 4 ? 1 : 0;
    EXPECT_GT(box, 300u);
    std::filesystem::remove(path);
}

TEST(Server, PortBusy) {
    Server a(fast_config(), oracle());
    const int port = a.start();
    auto cfg = fast_config();
    cfg.port = port;
    Server b(cfg, oracle());
    try {
        b.start();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::PortBusy);
    }
}

TEST(Server, ModelWindowOverridesPolicy) {
    auto model = SequenceModel<float>::build(LstmConfig{6, 28, 5, 8, 1}, 1);
    Server server(fast_config(), std::make_unique<ModelPredictor>(model, Variant::TwoD));
    SessionClient c(server.start());
    c.send("hello");
    const auto r = c.wait_type("ready");
    ASSERT_TRUE(r);
    EXPECT_EQ((*r)["payload"]["m"], 6);
    EXPECT_EQ((*r)["payload"]["predictor"], "lstm m=6");
}
