#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gazectl/baselines.hpp"
#include "gazectl/error.hpp"
#include "gazectl/features.hpp"
#include "gazectl/models.hpp"
#include "gazectl/oracle.hpp"
#include "gazectl/scene.hpp"

namespace gazectl {

struct ControllerPolicy {
    int m = 24;
    double min_dwell_s = 0.5;
    double switch_margin = 0.1;
    double max_pan_rate_dps = 120.0;
    double warmup_target_deg = 0.0;

    void validate() const {
        if (m < 1) throw Error(ErrorCode::InvalidConfig, "m must be >= 1");
        if (!(min_dwell_s >= 0)) throw Error(ErrorCode::InvalidConfig, "min_dwell_s must be >= 0");
        if (!(switch_margin >= 0 && switch_margin <= 1)) throw Error(ErrorCode::InvalidConfig, "switch_margin must be in [0, 1]");
        if (!(max_pan_rate_dps > 0)) throw Error(ErrorCode::InvalidConfig, "max_pan_rate_dps must be > 0");
        if (!(std::abs(warmup_target_deg) <= 90)) throw Error(ErrorCode::InvalidConfig, "warmup_target_deg must be within [-90, 90]");
    }
};

inline nlohmann::json to_json(const ControllerPolicy& p) {
    return {{"m", p.m},
            {"min_dwell_s", p.min_dwell_s},
            {"switch_margin", p.switch_margin},
            {"max_pan_rate_dps", p.max_pan_rate_dps},
            {"warmup_target_deg", p.warmup_target_deg}};
}

/// Overrides the fields present in `j`; the rest keep `base`'s values.
inline ControllerPolicy policy_from_json(const nlohmann::json& j, ControllerPolicy base = {}) {
    try {
        base.m = j.value("m", base.m);
        base.min_dwell_s = j.value("min_dwell_s", base.min_dwell_s);
        base.switch_margin = j.value("switch_margin", base.switch_margin);
        base.max_pan_rate_dps = j.value("max_pan_rate_dps", base.max_pan_rate_dps);
        base.warmup_target_deg = j.value("warmup_target_deg", base.warmup_target_deg);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("policy: ") + e.what());
    }
    base.validate();
    return base;
}

struct GazeCommand {
    std::int64_t tick = 0;
    double t_s = 0;
    std::optional<Label> target;
    double pan_deg = 0;
    double pan_rate_dps = 0;
    std::vector<double> probs;

    bool operator==(const GazeCommand&) const = default;
};

inline nlohmann::json to_json(const GazeCommand& c) {
    return {{"tick", c.tick},
            {"t_s", c.t_s},
            {"target", c.target ? nlohmann::json(*c.target) : nlohmann::json(nullptr)},
            {"pan_deg", c.pan_deg},
            {"pan_rate_dps", c.pan_rate_dps},
            {"probs", c.probs}};
}

// ---------------------------------------------------------------------------
// Predictors

/// Maps the current window to per-label probabilities.
class Predictor {
   public:
    virtual ~Predictor() = default;
    virtual Variant variant() const = 0;
    /// Frames the predictor reads; 0 when any window length works.
    virtual int window_length() const { return 0; }
    /// `window` holds m normalized frames, oldest first; `latest` is the newest raw frame.
    virtual std::vector<double> predict(std::span<const float> window, const SceneFrame& latest) = 0;
    virtual std::unique_ptr<Predictor> clone() const = 0;
    virtual std::string describe() const = 0;
};

class ModelPredictor final : public Predictor {
   public:
    ModelPredictor(SequenceModel<float> model, Variant v) : model_(std::move(model)), variant_(v) {
        if (model_.L() != feature_width(v) || model_.C() != label_count(v))
            throw Error(ErrorCode::VariantMismatch, "model (L=" + std::to_string(model_.L()) + ", C=" + std::to_string(model_.C()) +
                                                        ") does not fit the " + to_string(v) + " variant");
    }

    Variant variant() const override { return variant_; }
    int window_length() const override { return model_.m(); }

    std::vector<double> predict(std::span<const float> window, const SceneFrame&) override {
        const auto out = model_.predict(nc::Tensor<float>({1, window.size()}, window));
        return {out.data.begin(), out.data.end()};
    }

    std::unique_ptr<Predictor> clone() const override { return std::make_unique<ModelPredictor>(*this); }
    std::string describe() const override { return to_string(model_.architecture()) + " m=" + std::to_string(model_.m()); }

   private:
    SequenceModel<float> model_;
    Variant variant_;
};

namespace detail {

/// Positive scores scaled to sum to one; absent labels (negative scores) get zero.
inline std::vector<double> normalize_scores(const std::vector<double>& scores) {
    std::vector<double> p(scores.size(), 0.0);
    double total = 0;
    int available = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (scores[i] >= 0) {
            total += scores[i];
            ++available;
        }
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] < 0) continue;
        p[i] = total > 0 ? scores[i] / total : 1.0 / available;
    }
    return p;
}

}  // namespace detail

/// Effective-attention baseline on the newest frame.
class BaselinePredictor final : public Predictor {
   public:
    BaselinePredictor(HeuristicWeights h, Variant v) : h_(std::move(h)), variant_(v) { h_.validate(); }

    Variant variant() const override { return variant_; }

    std::vector<double> predict(std::span<const float>, const SceneFrame& latest) override {
        if (latest.present_count() == 0 && !(latest.variant == Variant::TwoD && latest.box_present))
            return std::vector<double>(static_cast<std::size_t>(label_count(variant_)), 0.0);
        return detail::normalize_scores(ea_score(latest, h_));
    }

    std::unique_ptr<Predictor> clone() const override { return std::make_unique<BaselinePredictor>(*this); }
    std::string describe() const override { return "baseline " + to_string(h_.kind); }

   private:
    HeuristicWeights h_;
    Variant variant_;
};

/// Planted gazer salience on the newest frame.
class OraclePredictor final : public Predictor {
   public:
    OraclePredictor(GazerPersona p, Variant v) : p_(std::move(p)), variant_(v) { p_.validate(); }

    Variant variant() const override { return variant_; }

    std::vector<double> predict(std::span<const float>, const SceneFrame& latest) override {
        return detail::normalize_scores(label_saliences(latest, p_));
    }

    std::unique_ptr<Predictor> clone() const override { return std::make_unique<OraclePredictor>(*this); }
    std::string describe() const override { return "oracle " + to_string(p_.form); }

   private:
    GazerPersona p_;
    Variant variant_;
};

// ---------------------------------------------------------------------------
// Controller

/// Sliding-window gaze loop: encode, predict, hysteresis, rate-limited pan.
class Controller {
   public:
    Controller(Variant v, ControllerPolicy policy, std::unique_ptr<Predictor> predictor, Normalization norm = {})
        : variant_(v), policy_(policy), predictor_(std::move(predictor)), norm_(norm) {
        if (!predictor_) throw Error(ErrorCode::InvalidConfig, "controller needs a predictor");
        if (predictor_->variant() != v)
            throw Error(ErrorCode::VariantMismatch, "predictor is " + to_string(predictor_->variant()) + ", controller " + to_string(v));
        set_policy(policy);
        pan_deg_ = goal_deg_ = policy_.warmup_target_deg;
    }

    Controller(const Controller& o)
        : variant_(o.variant_), policy_(o.policy_), predictor_(o.predictor_->clone()), norm_(o.norm_), ring_(o.ring_),
          head_(o.head_), filled_(o.filled_), target_(o.target_), dwell_s_(o.dwell_s_), pan_deg_(o.pan_deg_), goal_deg_(o.goal_deg_) {}

    Variant variant() const { return variant_; }
    const ControllerPolicy& policy() const { return policy_; }
    const Predictor& predictor() const { return *predictor_; }
    double pan_deg() const { return pan_deg_; }
    std::optional<Label> target() const { return target_; }

    /// Changing m clears the window; pan and target carry over.
    void set_policy(const ControllerPolicy& p) {
        p.validate();
        const int need = predictor_->window_length();
        if (need != 0 && need != p.m)
            throw Error(ErrorCode::InvalidConfig, "policy m=" + std::to_string(p.m) + " but the predictor reads " + std::to_string(need) + " frames");
        const bool resize = p.m != policy_.m || ring_.empty();
        policy_ = p;
        if (resize) {
            ring_.assign(static_cast<std::size_t>(p.m * feature_width(variant_)), 0.0f);
            head_ = 0;
            filled_ = 0;
        }
    }

    GazeCommand step(const SceneFrame& frame, double dt) {
        if (!(dt > 0)) throw Error(ErrorCode::OutOfRange, "dt must be > 0");
        if (frame.variant != variant_)
            throw Error(ErrorCode::VariantMismatch, "frame is " + to_string(frame.variant) + ", controller " + to_string(variant_));
        push(frame);
        dwell_s_ += dt;

        GazeCommand cmd;
        cmd.tick = frame.tick;
        cmd.t_s = frame.t_s;
        const auto C = static_cast<std::size_t>(label_count(variant_));
        if (filled_ < policy_.m) {
            cmd.probs.assign(C, 0.0);
            change_target(std::nullopt);
            goal_deg_ = policy_.warmup_target_deg;
        } else {
            cmd.probs = predictor_->predict(window(), frame);
            if (cmd.probs.size() != C)
                throw Error(ErrorCode::ShapeMismatch, "predictor returned " + std::to_string(cmd.probs.size()) + " probabilities");
            decide(frame, cmd.probs);
        }
        cmd.target = target_;
        const double before = pan_deg_;
        const double max_step = policy_.max_pan_rate_dps * dt;
        const double delta = goal_deg_ - pan_deg_;
        // Snap within rounding of a full step so exact multiples land exactly.
        pan_deg_ = std::abs(delta) <= max_step * (1 + 1e-12) ? goal_deg_ : pan_deg_ + std::copysign(max_step, delta);
        cmd.pan_deg = pan_deg_;
        cmd.pan_rate_dps = (pan_deg_ - before) / dt;
        return cmd;
    }

    /// Forgets the window, target and dwell; pan returns to the warmup angle.
    void reset() {
        std::fill(ring_.begin(), ring_.end(), 0.0f);
        head_ = 0;
        filled_ = 0;
        target_.reset();
        dwell_s_ = 0;
        pan_deg_ = goal_deg_ = policy_.warmup_target_deg;
    }

    /// The buffered frames, oldest first (m*L floats).
    std::span<const float> window() {
        const auto L = static_cast<std::size_t>(feature_width(variant_));
        const auto m = static_cast<std::size_t>(policy_.m);
        scratch_.resize(m * L);
        for (std::size_t t = 0; t < m; ++t) {
            const std::size_t slot = (static_cast<std::size_t>(head_) + t) % m;
            std::copy_n(ring_.begin() + static_cast<std::ptrdiff_t>(slot * L), L, scratch_.begin() + static_cast<std::ptrdiff_t>(t * L));
        }
        return scratch_;
    }

   private:
    void push(const SceneFrame& frame) {
        const auto ff = encode_frame(frame, true, norm_);
        const auto L = static_cast<std::size_t>(feature_width(variant_));
        const auto m = policy_.m;
        std::transform(ff.values.begin(), ff.values.end(), ring_.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(head_) * L),
                       [](double x) { return static_cast<float>(x); });
        head_ = (head_ + 1) % m;
        filled_ = std::min(filled_ + 1, m);
    }

    void change_target(std::optional<Label> t) {
        if (t == target_) return;
        target_ = t;
        dwell_s_ = 0;
    }

    void decide(const SceneFrame& frame, const std::vector<double>& probs) {
        std::optional<Label> top;
        for (int l = 0; l < static_cast<int>(probs.size()); ++l)
            if (detail::label_available(frame, l) && (!top || probs[static_cast<std::size_t>(l)] > probs[static_cast<std::size_t>(*top)])) top = l;
        if (!top) {
            change_target(std::nullopt);
            goal_deg_ = policy_.warmup_target_deg;
            return;
        }
        if (*top != target_) {
            const bool current_here = target_ && detail::label_available(frame, *target_);
            const double current_p = current_here ? probs[static_cast<std::size_t>(*target_)] : 0.0;
            const bool margin = probs[static_cast<std::size_t>(*top)] - current_p >= policy_.switch_margin;
            if (!target_ || margin || dwell_s_ >= policy_.min_dwell_s) change_target(top);
        }
        // A target that just left keeps the head where it was last seen.
        if (target_ && detail::label_available(frame, *target_)) goal_deg_ = detail::label_angle(frame, *target_);
    }

    Variant variant_;
    ControllerPolicy policy_;
    std::unique_ptr<Predictor> predictor_;
    Normalization norm_;
    std::vector<float> ring_;
    std::vector<float> scratch_;
    int head_ = 0;
    int filled_ = 0;
    std::optional<Label> target_;
    double dwell_s_ = 0;
    double pan_deg_ = 0;
    double goal_deg_ = 0;
};

// ---------------------------------------------------------------------------
// Streams

class FrameSource {
   public:
    virtual ~FrameSource() = default;
    virtual Variant variant() const = 0;
    virtual int fps() const = 0;
    /// Next frame; throws SourceEnded when exhausted.
    virtual SceneFrame next() = 0;
};

class TimelineSource final : public FrameSource {
   public:
    explicit TimelineSource(const Timeline& tl) : tl_(tl) {}
    Variant variant() const override { return tl_.variant; }
    int fps() const override { return tl_.fps; }
    SceneFrame next() override {
        if (pos_ >= tl_.frames.size()) throw Error(ErrorCode::SourceEnded, "timeline ended after " + std::to_string(pos_) + " frames");
        return tl_.frames[pos_++];
    }

   private:
    const Timeline& tl_;
    std::size_t pos_ = 0;
};

struct LatencyStats {
    std::size_t ticks = 0;
    double mean_ms = 0;
    double p99_ms = 0;
    double max_ms = 0;
};

inline LatencyStats latency_stats(std::vector<double> ms) {
    LatencyStats s;
    s.ticks = ms.size();
    if (ms.empty()) return s;
    double sum = 0;
    for (double x : ms) sum += x;
    s.mean_ms = sum / static_cast<double>(ms.size());
    std::sort(ms.begin(), ms.end());
    s.max_ms = ms.back();
    s.p99_ms = ms[std::min(ms.size() - 1, static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(ms.size()))) - 1)];
    return s;
}

inline nlohmann::json to_json(const LatencyStats& s) {
    return {{"ticks", s.ticks}, {"mean_ms", s.mean_ms}, {"p99_ms", s.p99_ms}, {"max_ms", s.max_ms}};
}

struct StreamOptions {
    /// Pace ticks to the wall clock at the source frame rate.
    bool realtime = false;
    std::function<void(const GazeCommand&)> on_command;
};

struct StreamResult {
    std::vector<GazeCommand> commands;
    std::vector<double> step_ms;
    LatencyStats latency;
};

/// Steps the controller once per source frame until the source ends.
inline StreamResult run_stream(Controller& ctl, FrameSource& src, const StreamOptions& opt = {}) {
    if (src.variant() != ctl.variant())
        throw Error(ErrorCode::VariantMismatch, "source is " + to_string(src.variant()) + ", controller " + to_string(ctl.variant()));
    using clock = std::chrono::steady_clock;
    const double dt = 1.0 / src.fps();
    const auto start = clock::now();
    StreamResult out;
    for (std::int64_t k = 0;; ++k) {
        SceneFrame frame;
        try {
            frame = src.next();
        } catch (const Error& e) {
            if (e.code() != ErrorCode::SourceEnded) throw;
            break;
        }
        if (opt.realtime) std::this_thread::sleep_until(start + std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(k * dt)));
        const auto t0 = clock::now();
        auto cmd = ctl.step(frame, dt);
        out.step_ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - t0).count());
        if (opt.on_command) opt.on_command(cmd);
        out.commands.push_back(std::move(cmd));
    }
    out.latency = latency_stats(out.step_ms);
    return out;
}

inline void write_command_log(std::ostream& out, std::span<const GazeCommand> cmds) {
    for (const auto& c : cmds) out << to_json(c).dump() << '\n';
}

}  // namespace gazectl
