#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gazectl/controller.hpp"

namespace gazectl::check {

struct InvariantReport {
    std::size_t ticks = 0;
    std::size_t switches = 0;
    std::size_t early_switches = 0;
    double max_step_deg = 0;
    std::vector<std::string> violations;

    bool ok() const { return violations.empty(); }
};

namespace detail {

inline bool available(const SceneFrame& f, int label) {
    if (f.variant == Variant::TwoD && label == 4) return f.box_present;
    return label >= 0 && label < f.capacity() && f.present(label);
}

}  // namespace detail

/// Replays a command log against its frames and checks, tick by tick:
/// |pan step| <= rate * dt, and every switch between two targets that comes sooner than
/// min_dwell after the previous change had (p[new] - p[old if present]) >= margin.
/// Changes into or out of "no target" are exempt from the dwell rule.
inline InvariantReport check_invariants(std::span<const SceneFrame> frames, std::span<const GazeCommand> cmds, const ControllerPolicy& policy,
                                        double dt, double start_pan = 0.0) {
    InvariantReport rep;
    rep.ticks = cmds.size();
    if (frames.size() != cmds.size()) {
        rep.violations.push_back("frame and command counts differ");
        return rep;
    }
    const double limit = policy.max_pan_rate_dps * dt;
    double pan = start_pan;
    std::optional<Label> target;
    std::size_t last_change = 0;
    for (std::size_t t = 0; t < cmds.size(); ++t) {
        const auto& c = cmds[t];
        const double step = std::abs(c.pan_deg - pan);
        rep.max_step_deg = std::max(rep.max_step_deg, step);
        if (step > limit * (1 + 1e-9)) rep.violations.push_back("tick " + std::to_string(t) + ": pan step " + std::to_string(step));
        pan = c.pan_deg;
        if (c.target != target) {
            if (target && c.target) {
                ++rep.switches;
                const double since = static_cast<double>(t - last_change) * dt;
                if (since < policy.min_dwell_s - 1e-6) {
                    ++rep.early_switches;
                    const double old_p = detail::available(frames[t], *target) ? c.probs[static_cast<std::size_t>(*target)] : 0.0;
                    if (c.probs[static_cast<std::size_t>(*c.target)] - old_p < policy.switch_margin)
                        rep.violations.push_back("tick " + std::to_string(t) + ": switch after " + std::to_string(since) + " s without margin");
                }
            }
            target = c.target;
            last_change = t;
        }
    }
    return rep;
}

}  // namespace gazectl::check
