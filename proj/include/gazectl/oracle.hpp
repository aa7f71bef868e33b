#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gazectl/cues.hpp"
#include "gazectl/error.hpp"
#include "gazectl/features.hpp"
#include "gazectl/scene.hpp"

namespace gazectl {

enum class AttentionForm { Product, Sum };

inline std::string to_string(AttentionForm f) { return f == AttentionForm::Product ? "product" : "sum"; }

inline AttentionForm parse_form(const std::string& s) {
    if (s == "product") return AttentionForm::Product;
    if (s == "sum") return AttentionForm::Sum;
    throw Error(ErrorCode::SchemaError, "unknown attention form '" + s + "'");
}

/// A synthetic participant. Attention to a person is a cue-weight product (or sum) times
/// exp(-distance_decay * r) * exp(-theta^2 / (2 angle_width^2)); the box draws a constant.
struct GazerPersona {
    std::array<double, kCueCount> cue_weights{3.0, 2.5, 2.0, 2.2, 1.6, 1.3, 1.8, 1.4};
    double box_weight = 0.8;
    double distance_decay = 0.3;
    double angle_width_deg = 45.0;
    double p_stay = 0.0;
    double noise_rate = 0.0;
    int latency_ticks = 0;
    /// 0 picks the arg-max target every tick.
    double temperature = 0.3;
    AttentionForm form = AttentionForm::Product;
    std::uint64_t seed = 0;

    double weight(Cue c) const { return cue_weights[static_cast<std::size_t>(c)]; }

    void validate() const {
        for (double w : cue_weights)
            if (!(w > 0.0)) throw Error(ErrorCode::InvalidConfig, "cue weights must be > 0");
        if (!(box_weight > 0.0)) throw Error(ErrorCode::InvalidConfig, "box weight must be > 0");
        if (!(distance_decay >= 0.0)) throw Error(ErrorCode::InvalidConfig, "distance decay must be >= 0");
        if (!(angle_width_deg > 0.0)) throw Error(ErrorCode::InvalidConfig, "angle width must be > 0");
        if (!(p_stay >= 0.0 && p_stay < 1.0)) throw Error(ErrorCode::InvalidConfig, "p_stay must be in [0,1)");
        if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) throw Error(ErrorCode::InvalidConfig, "noise_rate must be in [0,1]");
        if (latency_ticks < 0) throw Error(ErrorCode::InvalidConfig, "latency must be >= 0");
        if (!(temperature >= 0.0)) throw Error(ErrorCode::InvalidConfig, "temperature must be >= 0");
    }
};

inline nlohmann::json to_json(const GazerPersona& p) {
    nlohmann::json w = nlohmann::json::object();
    for (int i = 0; i < kCueCount; ++i)
        w[std::string(kCueNames[static_cast<std::size_t>(i)])] = p.cue_weights[static_cast<std::size_t>(i)];
    return {{"cue_weights", w},
            {"box_weight", p.box_weight},
            {"distance_decay", p.distance_decay},
            {"angle_width_deg", p.angle_width_deg},
            {"p_stay", p.p_stay},
            {"noise_rate", p.noise_rate},
            {"latency_ticks", p.latency_ticks},
            {"temperature", p.temperature},
            {"form", to_string(p.form)},
            {"seed", p.seed}};
}

inline GazerPersona persona_from_json(const nlohmann::json& j) {
    GazerPersona p;
    if (j.contains("cue_weights"))
        for (const auto& [name, value] : j.at("cue_weights").items())
            p.cue_weights[static_cast<std::size_t>(parse_cue(name))] = value.get<double>();
    p.box_weight = j.value("box_weight", p.box_weight);
    p.distance_decay = j.value("distance_decay", p.distance_decay);
    p.angle_width_deg = j.value("angle_width_deg", p.angle_width_deg);
    p.p_stay = j.value("p_stay", p.p_stay);
    p.noise_rate = j.value("noise_rate", p.noise_rate);
    p.latency_ticks = j.value("latency_ticks", p.latency_ticks);
    p.temperature = j.value("temperature", p.temperature);
    p.form = parse_form(j.value("form", std::string("product")));
    p.seed = j.value("seed", p.seed);
    p.validate();
    return p;
}

namespace detail {

inline double cue_term(CueSet cues, const GazerPersona& p) {
    double acc = p.form == AttentionForm::Product ? 1.0 : 0.0;
    for (int i = 0; i < kCueCount; ++i) {
        if (!has_cue(cues, static_cast<Cue>(i))) continue;
        if (p.form == AttentionForm::Product)
            acc *= p.cue_weights[static_cast<std::size_t>(i)];
        else
            acc += p.cue_weights[static_cast<std::size_t>(i)];
    }
    return acc;
}

}  // namespace detail

inline double salience(CueSet cues, double distance_m, double angle_deg, const GazerPersona& p) {
    const double sigma = p.angle_width_deg;
    return detail::cue_term(cues, p) * std::exp(-p.distance_decay * distance_m) *
           std::exp(-(angle_deg * angle_deg) / (2.0 * sigma * sigma));
}

inline double salience(const CharacterState2D& target, const GazerPersona& p) {
    if (!target.present) throw Error(ErrorCode::AbsentTarget, "salience of an absent character");
    return salience(active_cues(target), target.distance_m, target.angle_deg, p);
}

inline double salience(const CharacterState3D& target, const GazerPersona& p) {
    if (!target.present) throw Error(ErrorCode::AbsentTarget, "salience of an absent character");
    return salience(active_cues(target), target.distance_m, target.angle_deg, p);
}

/// Salience of every label in `frame`; absent people get -1 (never chosen).
inline std::vector<double> label_saliences(const SceneFrame& frame, const GazerPersona& p) {
    std::vector<double> s(static_cast<std::size_t>(label_count(frame.variant)), -1.0);
    for (int i = 0; i < frame.capacity(); ++i) {
        if (!frame.present(i)) continue;
        s[static_cast<std::size_t>(i)] = salience(active_cues(frame, i), frame.distance(i), frame.angle(i), p);
    }
    if (frame.variant == Variant::TwoD && frame.box_present) s[kBoxLabel] = p.box_weight;
    return s;
}

/// Lowest index wins ties; kNoise when nothing is available.
inline Label argmax_label(std::span<const double> scores) {
    Label best = kNoise;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (scores[i] >= 0.0 && (best == kNoise || scores[i] > scores[static_cast<std::size_t>(best)]))
            best = static_cast<Label>(i);
    return best;
}

struct GazeTrace {
    std::vector<GazeSample> samples;
    std::vector<Label> truth;
};

namespace detail {

inline bool label_available(const SceneFrame& f, Label l) {
    if (l == kNoise) return false;
    if (f.variant == Variant::TwoD && l == kBoxLabel) return f.box_present;
    return f.present(l);
}

inline double label_angle(const SceneFrame& f, Label l) { return l == kBoxLabel && f.variant == Variant::TwoD ? 0.0 : f.angle(l); }

}  // namespace detail

/// One synthetic participant watching `timeline`. Draws a fixed number of random numbers
/// per tick so traces are reproducible from the persona seed alone.
inline GazeTrace simulate_gazer(const Timeline& timeline, const GazerPersona& persona, const GazeGeometry& geo = {}) {
    persona.validate();
    std::mt19937_64 rng(persona.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    GazeTrace trace;
    trace.samples.reserve(timeline.frames.size());
    trace.truth.reserve(timeline.frames.size());
    std::vector<Label> decisions;
    decisions.reserve(timeline.frames.size());
    Label previous = kNoise;

    for (const auto& frame : timeline.frames) {
        const double u_stay = unit(rng);
        const double u_pick = unit(rng);
        const double u_noise = unit(rng);
        const double j1 = unit(rng) * 2.0 - 1.0;
        const double j2 = unit(rng) * 2.0 - 1.0;
        const double t = frame.t_s;

        const auto scores = label_saliences(frame, persona);
        Label desired = kNoise;
        if (previous != kNoise && detail::label_available(frame, previous) && u_stay < persona.p_stay) {
            desired = previous;
        } else if (persona.temperature == 0.0) {
            desired = argmax_label(scores);
        } else {
            double max_log = -std::numeric_limits<double>::infinity();
            for (double s : scores)
                if (s > 0.0) max_log = std::max(max_log, std::log(s));
            std::vector<double> weights(scores.size(), 0.0);
            double total = 0.0;
            for (std::size_t i = 0; i < scores.size(); ++i) {
                if (scores[i] > 0.0) weights[i] = std::exp((std::log(scores[i]) - max_log) / persona.temperature);
                total += weights[i];
            }
            if (total == 0.0) {
                // nothing salient: uniform over what is on stage
                for (std::size_t i = 0; i < scores.size(); ++i) weights[i] = scores[i] >= 0.0 ? 1.0 : 0.0;
                total = std::accumulate(weights.begin(), weights.end(), 0.0);
            }
            if (total > 0.0) {
                double acc = 0.0;
                const double pick = u_pick * total;
                for (std::size_t i = 0; i < weights.size(); ++i) {
                    if (weights[i] == 0.0) continue;
                    acc += weights[i];
                    desired = static_cast<Label>(i);
                    if (pick < acc) break;
                }
            }
        }
        decisions.push_back(desired);
        previous = desired;

        const std::size_t now = decisions.size() - 1;
        const std::size_t lagged = now >= static_cast<std::size_t>(persona.latency_ticks) ? now - static_cast<std::size_t>(persona.latency_ticks) : 0;
        Label target = decisions[lagged];
        if (!detail::label_available(frame, target)) target = desired;

        if (target == kNoise || u_noise < persona.noise_rate) {
            // off-target: above every person/box region, or far outside every VR tolerance
            if (frame.variant == Variant::TwoD)
                trace.samples.push_back(GazeSample::screen(t, geo.screen_w_px / 2.0 + j1 * 400.0, geo.body_top_px * 0.5 + j2 * 20.0));
            else
                trace.samples.push_back(GazeSample::head_yaw(t, 90.0 + j1 * 5.0));
            trace.truth.push_back(kNoise);
            continue;
        }
        if (frame.variant == Variant::TwoD) {
            const bool box = target == kBoxLabel;
            const double half = (box ? geo.box_half_width_deg : geo.person_half_width_deg) / 3.0;
            const double y_mid = box ? (geo.box_top_px + geo.box_bottom_px) / 2.0 : (geo.body_top_px + geo.body_bottom_px) / 2.0;
            trace.samples.push_back(
                GazeSample::screen(t, geo.angle_to_x(detail::label_angle(frame, target) + j1 * half), y_mid + j2 * 100.0));
        } else {
            trace.samples.push_back(GazeSample::head_yaw(t, frame.angle(target) + j1 * geo.vr_tolerance_deg / 3.0));
        }
        trace.truth.push_back(target);
    }
    return trace;
}

/// Labeled frames for one trace: normalized features, label resolved from the emitted gaze.
inline std::vector<LabeledFrame> label_trace(const Timeline& timeline, const GazeTrace& trace,
                                             const Normalization& norm = {}, const GazeGeometry& geo = {}) {
    std::vector<LabeledFrame> out;
    out.reserve(timeline.frames.size());
    for (std::size_t i = 0; i < timeline.frames.size(); ++i) {
        const auto& f = timeline.frames[i];
        const auto& s = trace.samples.at(i);
        out.push_back({f.tick, f.situation_id, encode_frame(f, true, norm), resolve_label(s, f, geo), s.valid});
    }
    return out;
}

/// Concatenated windowed datasets of every persona, with persona parameters in provenance.
inline Dataset synth_corpus(const Timeline& timeline, std::span<const GazerPersona> personas, int m,
                            const GazeGeometry& geo = {}) {
    if (personas.empty()) throw Error(ErrorCode::InvalidConfig, "synth_corpus needs at least one persona");
    Dataset data(make_meta(timeline.variant, m, personas.front().seed, "oracle"));
    nlohmann::json prov = {{"generator", "oracle"}, {"fps", timeline.fps}, {"personas", nlohmann::json::array()}};
    for (const auto& p : personas) {
        prov["personas"].push_back(to_json(p));
        const auto trace = simulate_gazer(timeline, p, geo);
        const auto frames = label_trace(timeline, trace, data.meta().normalization, geo);
        append_windows(data, frames);
    }
    data.meta().provenance = prov.dump();
    return data;
}

/// `count` personas jittered log-normally around `base` (weights, decay and width) with
/// latencies drawn from base.latency_ticks .. base.latency_ticks + latency_spread.
/// Seeds are seed+1, seed+2, ...
inline std::vector<GazerPersona> jittered_personas(const GazerPersona& base, int count, std::uint64_t seed,
                                                   double log_jitter = 0.1, int latency_spread = 3) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<GazerPersona> out;
    for (int i = 0; i < count; ++i) {
        GazerPersona p = base;
        for (auto& w : p.cue_weights) w *= std::exp(log_jitter * noise(rng));
        p.box_weight *= std::exp(log_jitter * noise(rng));
        p.distance_decay *= std::exp(log_jitter * noise(rng));
        p.angle_width_deg *= std::exp(log_jitter * noise(rng));
        p.latency_ticks = base.latency_ticks +
                          (latency_spread > 0 ? static_cast<int>(rng() % static_cast<std::uint64_t>(latency_spread + 1)) : 0);
        p.seed = seed + 1 + static_cast<std::uint64_t>(i);
        out.push_back(p);
    }
    return out;
}

}  // namespace gazectl
