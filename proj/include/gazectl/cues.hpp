#pragma once

#include <array>
#include <string>
#include <string_view>

#include "gazectl/error.hpp"
#include "gazectl/scene.hpp"

namespace gazectl {

enum class Cue : int { Waving = 0, Pointing, Talking, Entering, Leaving, CrossedArms, Conversation, Moving };

inline constexpr int kCueCount = 8;

inline constexpr std::array<std::string_view, kCueCount> kCueNames{
    "waving", "pointing", "talking", "entering", "leaving", "crossed_arms", "conversation", "moving"};

inline Cue parse_cue(std::string_view name) {
    for (int i = 0; i < kCueCount; ++i)
        if (kCueNames[static_cast<std::size_t>(i)] == name) return static_cast<Cue>(i);
    throw Error(ErrorCode::SchemaError, "unknown cue '" + std::string(name) + "'");
}

/// Bitset over Cue.
using CueSet = unsigned;

constexpr CueSet cue_bit(Cue c) { return 1u << static_cast<int>(c); }
constexpr bool has_cue(CueSet s, Cue c) { return (s & cue_bit(c)) != 0; }
inline constexpr CueSet kAllCues = (1u << kCueCount) - 1;

inline CueSet active_cues(const CharacterState2D& p) {
    if (!p.present) return 0;
    CueSet s = 0;
    if (p.waving) s |= cue_bit(Cue::Waving);
    if (p.pointing) s |= cue_bit(Cue::Pointing);
    if (p.talking) s |= cue_bit(Cue::Talking);
    if (p.movement == Movement::EnteringSlow || p.movement == Movement::EnteringFast) s |= cue_bit(Cue::Entering);
    if (p.movement == Movement::LeavingSlow || p.movement == Movement::LeavingFast) s |= cue_bit(Cue::Leaving);
    return s;
}

/// VR frames do not say which way an EnterExit walk goes; it maps to the entering cue.
inline CueSet active_cues(const CharacterState3D& p) {
    if (!p.present) return 0;
    CueSet s = p.talking ? cue_bit(Cue::Talking) : 0;
    switch (p.characteristic) {
        case Characteristic::Waving: s |= cue_bit(Cue::Waving); break;
        case Characteristic::Pointing: s |= cue_bit(Cue::Pointing); break;
        case Characteristic::CrossedArms: s |= cue_bit(Cue::CrossedArms); break;
        case Characteristic::Conversation: s |= cue_bit(Cue::Conversation); break;
        case Characteristic::EnterExit: s |= cue_bit(Cue::Entering); break;
        case Characteristic::MovingSide:
        case Characteristic::MovingForward: s |= cue_bit(Cue::Moving); break;
        case Characteristic::Standing: break;
    }
    return s;
}

inline CueSet active_cues(const SceneFrame& f, int person) {
    return f.variant == Variant::TwoD ? active_cues(f.people2d.at(static_cast<std::size_t>(person)))
                                      : active_cues(f.people3d.at(static_cast<std::size_t>(person)));
}

}  // namespace gazectl
