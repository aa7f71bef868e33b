#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gazectl/error.hpp"

namespace gazectl {

enum class Variant { TwoD, ThreeD };

inline std::string to_string(Variant v) { return v == Variant::TwoD ? "2d" : "3d"; }

inline Variant parse_variant(const std::string& s) {
    if (s == "2d" || s == "2D" || s == "TwoD") return Variant::TwoD;
    if (s == "3d" || s == "3D" || s == "ThreeD") return Variant::ThreeD;
    throw Error(ErrorCode::SchemaError, "unknown variant '" + s + "'");
}

/// Person rows in the feature matrix (4 on screen, 3 in VR).
constexpr int capacity(Variant v) { return v == Variant::TwoD ? 4 : 3; }
constexpr int default_fps(Variant v) { return v == Variant::TwoD ? 24 : 25; }

inline constexpr std::array<double, 4> kStations2D{-60.0, -30.0, 30.0, 60.0};
inline constexpr std::array<double, 3> kStations3D{-45.0, 0.0, 45.0};

inline double station_angle(Variant v, int slot) {
    return v == Variant::TwoD ? kStations2D.at(static_cast<std::size_t>(slot))
                              : kStations3D.at(static_cast<std::size_t>(slot));
}

enum class Movement : int { Standing = 0, EnteringSlow = 1, EnteringFast = 2, LeavingSlow = 3, LeavingFast = 4 };

enum class Characteristic : int {
    Standing = 1,
    MovingSide = 2,
    MovingForward = 3,
    Waving = 4,
    CrossedArms = 5,
    Conversation = 6,
    EnterExit = 7,
    Pointing = 8,
};

struct CharacterState2D {
    bool present = false;
    double distance_m = 0.0;
    bool waving = false;
    bool pointing = false;
    bool talking = false;
    double angle_deg = 0.0;
    Movement movement = Movement::Standing;

    bool operator==(const CharacterState2D&) const = default;
};

struct CharacterState3D {
    bool present = false;
    double distance_m = 0.0;
    Characteristic characteristic = Characteristic::Standing;
    bool talking = false;
    int pointed_at_count = 0;
    double angle_deg = 0.0;
    /// Slot this character points at when characteristic == Pointing; -1 otherwise.
    /// Not a model feature, it only feeds pointed_at_count of the target.
    int pointing_at = -1;

    bool operator==(const CharacterState3D&) const = default;
};

struct SceneFrame {
    std::int64_t tick = 0;
    double t_s = 0.0;
    int situation_id = 0;
    Variant variant = Variant::TwoD;
    std::array<CharacterState2D, 4> people2d{};
    std::array<CharacterState3D, 3> people3d{};
    /// 2D only: the box sits straight ahead at 0 degrees for the whole clip.
    bool box_present = false;

    int capacity() const { return gazectl::capacity(variant); }
    bool present(int i) const {
        return variant == Variant::TwoD ? people2d.at(static_cast<std::size_t>(i)).present
                                        : people3d.at(static_cast<std::size_t>(i)).present;
    }
    double angle(int i) const {
        return variant == Variant::TwoD ? people2d.at(static_cast<std::size_t>(i)).angle_deg
                                        : people3d.at(static_cast<std::size_t>(i)).angle_deg;
    }
    double distance(int i) const {
        return variant == Variant::TwoD ? people2d.at(static_cast<std::size_t>(i)).distance_m
                                        : people3d.at(static_cast<std::size_t>(i)).distance_m;
    }
    int present_count() const {
        int n = 0;
        for (int i = 0; i < capacity(); ++i) n += present(i) ? 1 : 0;
        return n;
    }

    bool operator==(const SceneFrame&) const = default;
};

/// Per-character assignment for one situation. 2D uses the waving/pointing/talking
/// flags; 3D uses `action`, `talking` and `pointing_at`.
struct CharacterSpec {
    bool present = false;
    bool near = true;
    bool waving = false;
    bool pointing = false;
    bool talking = false;
    Characteristic action = Characteristic::Standing;
    int pointing_at = -1;

    bool operator==(const CharacterSpec&) const = default;
};

struct SituationSpec {
    Variant variant = Variant::TwoD;
    int situation_id = 0;
    double duration_s = 5.0;
    std::vector<CharacterSpec> characters;

    int present_count() const {
        return static_cast<int>(std::count_if(characters.begin(), characters.end(),
                                              [](const CharacterSpec& c) { return c.present; }));
    }
    /// Bit i set when character i is present.
    unsigned presence_mask() const {
        unsigned mask = 0;
        for (std::size_t i = 0; i < characters.size(); ++i)
            if (characters[i].present) mask |= 1u << i;
        return mask;
    }

    bool operator==(const SituationSpec&) const = default;
};

/// Geometry and kinematics knobs for timeline compilation.
struct SceneConfig {
    double near_m = 1.5;
    double far_m = 3.0;
    double offstage_m = 5.0;
    /// Entering/leaving walks drift this far outward from the station angle at the off-stage end.
    double walk_angle_offset_deg = 15.0;
    double fast_traverse_s = 2.5;
    double slow_traverse_s = 5.0;
    /// 3D enter/exit and near/far repositioning time at the start of a situation.
    double transition_3d_s = 1.0;
    /// 2D near/far repositioning time for characters that stay on stage.
    double reposition_2d_s = 1.0;
};

struct Timeline {
    Variant variant = Variant::TwoD;
    int fps = 24;
    std::vector<SceneFrame> frames;

    double duration_s() const { return static_cast<double>(frames.size()) / fps; }
    int situation_of(std::size_t tick) const { return frames.at(tick).situation_id; }
};

namespace detail {

inline unsigned gray(unsigned j) { return j ^ (j >> 1); }

inline bool parity_bit(unsigned code, unsigned mask) { return (std::popcount(code & mask) & 1) != 0; }

struct PresenceGroup {
    unsigned mask;
    int size_log2;
};

}  // namespace detail

/// The 128 on-screen situations in canonical order: ids 0..31 have two people present,
/// 32..95 three, 96..127 four. Within each presence group every binary activity of every
/// present person is a parity of the Gray-coded local index, so it is true in exactly
/// half of that group.
inline std::vector<SituationSpec> enumerate_situations_2d() {
    // Every person appears in 2 of the pairs and 3 of the triples.
    const std::vector<std::vector<detail::PresenceGroup>> bands = {
        {{0b0011, 3}, {0b1100, 3}, {0b1001, 3}, {0b0110, 3}},
        {{0b1110, 4}, {0b1101, 4}, {0b1011, 4}, {0b0111, 4}},
        {{0b1111, 5}},
    };
    std::vector<SituationSpec> out;
    out.reserve(128);
    int id = 0;
    for (const auto& band : bands) {
        for (const auto& group : band) {
            const unsigned group_size = 1u << group.size_log2;
            const unsigned mask_count = group_size - 1;
            for (unsigned j = 0; j < group_size; ++j) {
                SituationSpec spec;
                spec.variant = Variant::TwoD;
                spec.situation_id = id++;
                spec.characters.resize(4);
                const unsigned code = detail::gray(j);
                int ordinal = 0;
                for (int c = 0; c < 4; ++c) {
                    if ((group.mask & (1u << c)) == 0) continue;
                    auto& ch = spec.characters[static_cast<std::size_t>(c)];
                    ch.present = true;
                    auto bit = [&](unsigned activity) {
                        const unsigned key = static_cast<unsigned>(ordinal) * 4 + activity;
                        return detail::parity_bit(code, key % mask_count + 1);
                    };
                    ch.near = !bit(0);
                    ch.pointing = bit(1);
                    ch.waving = bit(2);
                    ch.talking = bit(3);
                    ++ordinal;
                }
                out.push_back(std::move(spec));
            }
        }
    }
    return out;
}

/// The 120 VR situations: 20 placements (12 two-person = 3 station pairs x near/far each,
/// 8 three-person = near/far per person) times 6 social situations.
inline std::vector<SituationSpec> enumerate_situations_3d() {
    using C = Characteristic;
    struct Placement {
        std::vector<int> slots;
        std::vector<bool> near;
    };
    std::vector<Placement> placements;
    const std::array<std::array<int, 2>, 3> pairs{{{0, 1}, {0, 2}, {1, 2}}};
    for (const auto& pair : pairs)
        for (int nf = 0; nf < 4; ++nf)
            placements.push_back({{pair[0], pair[1]}, {(nf & 2) == 0, (nf & 1) == 0}});
    for (int nf = 0; nf < 8; ++nf)
        placements.push_back({{0, 1, 2}, {(nf & 4) == 0, (nf & 2) == 0, (nf & 1) == 0}});

    // Per social situation: the action of each present person (by ordinal) and,
    // for pointing, the ordinal pointed at.
    struct Role {
        C action;
        int target = -1;
    };
    const std::vector<std::vector<Role>> two_person = {
        {{C::Standing}, {C::Waving}},
        {{C::Waving}, {C::CrossedArms}},
        {{C::CrossedArms}, {C::Standing}},
        {{C::Conversation}, {C::Conversation}},
        {{C::Pointing, 1}, {C::Standing}},
        {{C::CrossedArms}, {C::Pointing, 0}},
    };
    const std::vector<std::vector<Role>> three_person = {
        {{C::Standing}, {C::Waving}, {C::CrossedArms}},
        {{C::Waving}, {C::CrossedArms}, {C::Standing}},
        {{C::CrossedArms}, {C::Standing}, {C::Waving}},
        {{C::Conversation}, {C::Conversation}, {C::Waving}},
        {{C::Pointing, 2}, {C::Pointing, 2}, {C::CrossedArms}},
        {{C::Standing}, {C::Conversation}, {C::Conversation}},
    };

    std::vector<SituationSpec> out;
    out.reserve(120);
    for (std::size_t p = 0; p < placements.size(); ++p) {
        const auto& placement = placements[p];
        const auto& templates = placement.slots.size() == 2 ? two_person : three_person;
        for (std::size_t s = 0; s < templates.size(); ++s) {
            SituationSpec spec;
            spec.variant = Variant::ThreeD;
            spec.situation_id = static_cast<int>(p * 6 + s);
            spec.characters.resize(3);
            for (std::size_t j = 0; j < placement.slots.size(); ++j) {
                auto& ch = spec.characters[static_cast<std::size_t>(placement.slots[j])];
                const Role& role = templates[s][j];
                ch.present = true;
                ch.near = placement.near[j];
                ch.action = role.action;
                ch.pointing_at = role.target >= 0 ? placement.slots[static_cast<std::size_t>(role.target)] : -1;
                // Conversations are spoken; every other action alternates silent/speaking
                // so each (placement size, situation, ordinal) pattern is split evenly.
                ch.talking = role.action == C::Conversation || (p + s + j) % 2 == 0;
            }
            out.push_back(std::move(spec));
        }
    }
    return out;
}

/// Orders the canonical 2D situations into the clip schedule: presence changes only on
/// odd segment boundaries (t = 5 + 10n) and activities only on even ones (t = 10n).
/// Segments pair up as {0}, {1,2}, {3,4}, ..., {125,126}, {127}; each pair shares a
/// presence set and the presence-set size cycles 2,3,4,3 so consecutive pairs differ.
inline std::vector<SituationSpec> schedule_2d(const std::vector<SituationSpec>& specs) {
    if (specs.size() != 128)
        throw Error(ErrorCode::InvalidConfig, "2D schedule expects the 128 canonical situations");
    std::map<unsigned, std::vector<const SituationSpec*>> groups;
    for (const auto& s : specs) {
        if (s.variant != Variant::TwoD) throw Error(ErrorCode::MixedVariant, "schedule_2d got a 3D situation");
        groups[s.presence_mask()].push_back(&s);
    }
    for (auto& [mask, members] : groups)
        std::sort(members.begin(), members.end(),
                  [](const SituationSpec* a, const SituationSpec* b) { return a->situation_id < b->situation_id; });

    // Units of two same-presence specs, interleaved round-robin across presence groups.
    auto units_for = [&](int count, std::vector<const SituationSpec*>* singles) {
        std::vector<std::vector<std::vector<const SituationSpec*>>> per_group;
        for (auto& [mask, members] : groups) {
            if (std::popcount(mask) != count) continue;
            std::vector<const SituationSpec*> pool = members;
            if (singles != nullptr && singles->empty()) {
                singles->push_back(pool.front());
                singles->push_back(pool.back());
                pool = std::vector<const SituationSpec*>(pool.begin() + 1, pool.end() - 1);
            }
            if (pool.size() % 2 != 0) throw Error(ErrorCode::InvalidConfig, "presence group of odd size");
            std::vector<std::vector<const SituationSpec*>> units;
            for (std::size_t i = 0; i < pool.size(); i += 2) units.push_back({pool[i], pool[i + 1]});
            per_group.push_back(std::move(units));
        }
        std::vector<std::vector<const SituationSpec*>> merged;
        for (std::size_t round = 0;; ++round) {
            bool any = false;
            for (auto& units : per_group) {
                if (round < units.size()) {
                    merged.push_back(units[round]);
                    any = true;
                }
            }
            if (!any) break;
        }
        return merged;
    };
    std::vector<const SituationSpec*> singles;
    auto pairs = units_for(2, &singles);
    auto triples = units_for(3, nullptr);
    auto quads = units_for(4, nullptr);

    std::vector<SituationSpec> out;
    out.reserve(128);
    out.push_back(*singles.at(0));
    std::size_t pi = 0, ti = 0, qi = 0;
    const std::array<int, 4> cycle{2, 3, 4, 3};
    for (int block = 1; block < 64; ++block) {
        const int count = cycle[static_cast<std::size_t>(block % 4)];
        const auto& unit = count == 2 ? pairs.at(pi++) : count == 3 ? triples.at(ti++) : quads.at(qi++);
        for (const auto* s : unit) out.push_back(*s);
    }
    out.push_back(*singles.at(1));
    if (pi != pairs.size() || ti != triples.size() || qi != quads.size())
        throw Error(ErrorCode::InvalidConfig, "2D schedule did not consume every situation");
    return out;
}

namespace detail {

inline double lerp(double a, double b, double u) { return a + (b - a) * std::clamp(u, 0.0, 1.0); }

inline double spec_distance(const CharacterSpec& c, const SceneConfig& cfg) { return c.near ? cfg.near_m : cfg.far_m; }

inline double outward(double station) { return station < 0 ? -1.0 : 1.0; }

inline CharacterState2D state_2d(int slot, const CharacterSpec* prev, const CharacterSpec& cur, int situation_id,
                                 double tau, const SceneConfig& cfg) {
    CharacterState2D st;
    const double station = kStations2D[static_cast<std::size_t>(slot)];
    const bool was = prev != nullptr && prev->present;
    const bool fast = (situation_id + slot) % 2 == 0;
    const double traverse = fast ? cfg.fast_traverse_s : cfg.slow_traverse_s;
    const double offstage_angle = station + outward(station) * cfg.walk_angle_offset_deg;
    if (cur.present && !was && prev != nullptr && tau < traverse) {
        const double u = tau / traverse;
        st.present = true;
        st.movement = fast ? Movement::EnteringFast : Movement::EnteringSlow;
        st.distance_m = lerp(cfg.offstage_m, spec_distance(cur, cfg), u);
        st.angle_deg = lerp(offstage_angle, station, u);
        return st;
    }
    if (!cur.present && was) {
        if (tau >= traverse) return st;
        const double u = tau / traverse;
        st.present = true;
        st.movement = fast ? Movement::LeavingFast : Movement::LeavingSlow;
        st.distance_m = lerp(spec_distance(*prev, cfg), cfg.offstage_m, u);
        st.angle_deg = lerp(station, offstage_angle, u);
        return st;
    }
    if (!cur.present) return st;
    st.present = true;
    st.angle_deg = station;
    st.distance_m = spec_distance(cur, cfg);
    if (was && prev->near != cur.near && tau < cfg.reposition_2d_s)
        st.distance_m = lerp(spec_distance(*prev, cfg), spec_distance(cur, cfg), tau / cfg.reposition_2d_s);
    st.waving = cur.waving;
    st.pointing = cur.pointing;
    st.talking = cur.talking;
    return st;
}

inline CharacterState3D state_3d(int slot, const CharacterSpec* prev, const CharacterSpec& cur, double tau,
                                 const SceneConfig& cfg) {
    CharacterState3D st;
    st.angle_deg = kStations3D[static_cast<std::size_t>(slot)];
    const bool was = prev != nullptr && prev->present;
    const bool in_transition = tau < cfg.transition_3d_s;
    const double u = tau / cfg.transition_3d_s;
    if (!cur.present) {
        if (was && in_transition) {
            st.present = true;
            st.characteristic = Characteristic::EnterExit;
            st.distance_m = lerp(spec_distance(*prev, cfg), cfg.offstage_m, u);
        } else {
            st.angle_deg = 0.0;
        }
        return st;
    }
    st.present = true;
    st.distance_m = spec_distance(cur, cfg);
    if (prev != nullptr && !was && in_transition) {
        st.characteristic = Characteristic::EnterExit;
        st.distance_m = lerp(cfg.offstage_m, spec_distance(cur, cfg), u);
        return st;
    }
    if (was && prev->near != cur.near && in_transition) {
        st.characteristic = Characteristic::MovingForward;
        st.distance_m = lerp(spec_distance(*prev, cfg), spec_distance(cur, cfg), u);
        return st;
    }
    st.characteristic = cur.action;
    st.talking = cur.talking;
    st.pointing_at = cur.action == Characteristic::Pointing ? cur.pointing_at : -1;
    return st;
}

}  // namespace detail

/// Renders situations back to back, `duration_s * fps` ticks each. Characters that join or
/// leave between consecutive situations walk in/out at the start of the new one.
inline Timeline compile_timeline(const std::vector<SituationSpec>& specs, int fps, const SceneConfig& cfg = {}) {
    if (specs.empty()) throw Error(ErrorCode::EmptyInput, "compile_timeline needs at least one situation");
    if (fps <= 0) throw Error(ErrorCode::InvalidConfig, "fps must be positive");
    const Variant variant = specs.front().variant;
    for (const auto& s : specs) {
        if (s.variant != variant) throw Error(ErrorCode::MixedVariant, "situations disagree on variant");
        if (static_cast<int>(s.characters.size()) != capacity(variant))
            throw Error(ErrorCode::InvalidConfig, "situation has wrong character count");
    }
    Timeline tl;
    tl.variant = variant;
    tl.fps = fps;
    std::int64_t tick = 0;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& cur = specs[i];
        const SituationSpec* prev = i > 0 ? &specs[i - 1] : nullptr;
        const auto ticks = static_cast<std::int64_t>(std::llround(cur.duration_s * fps));
        for (std::int64_t k = 0; k < ticks; ++k, ++tick) {
            const double tau = static_cast<double>(k) / fps;
            SceneFrame f;
            f.tick = tick;
            f.t_s = static_cast<double>(tick) / fps;
            f.situation_id = cur.situation_id;
            f.variant = variant;
            for (int c = 0; c < capacity(variant); ++c) {
                const auto uc = static_cast<std::size_t>(c);
                const CharacterSpec* pc = prev != nullptr ? &prev->characters[uc] : nullptr;
                if (variant == Variant::TwoD)
                    f.people2d[uc] = detail::state_2d(c, pc, cur.characters[uc], cur.situation_id, tau, cfg);
                else
                    f.people3d[uc] = detail::state_3d(c, pc, cur.characters[uc], tau, cfg);
            }
            if (variant == Variant::TwoD) {
                f.box_present = true;
            } else {
                for (const auto& p : f.people3d)
                    if (p.present && p.pointing_at >= 0 && f.people3d[static_cast<std::size_t>(p.pointing_at)].present)
                        ++f.people3d[static_cast<std::size_t>(p.pointing_at)].pointed_at_count;
            }
            tl.frames.push_back(f);
        }
    }
    return tl;
}

/// The full clip for a variant: 640 s on screen (scheduled), 600 s in VR.
inline Timeline canonical_timeline(Variant v, const SceneConfig& cfg = {}) {
    if (v == Variant::TwoD) return compile_timeline(schedule_2d(enumerate_situations_2d()), default_fps(v), cfg);
    return compile_timeline(enumerate_situations_3d(), default_fps(v), cfg);
}

inline const SceneFrame& frame_at(const Timeline& tl, double t) {
    if (!(t >= 0.0) || t >= tl.duration_s())
        throw Error(ErrorCode::OutOfRange, "t=" + std::to_string(t) + " outside [0, " + std::to_string(tl.duration_s()) + ")");
    const auto tick = static_cast<std::size_t>(std::floor(t * tl.fps));
    return tl.frames.at(std::min(tick, tl.frames.size() - 1));
}

}  // namespace gazectl
