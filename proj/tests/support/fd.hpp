#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "gazectl/numcore/params.hpp"

namespace gazectl::check {

struct GradReport {
    double max_rel = 0.0;
    std::string worst;
    std::size_t checked = 0;
};

/// Compares the analytic gradients already stored in `params` against a fourth-order
/// central difference of `loss`, which must recompute the loss from the current values.
/// Relative error is |a - n| / max(|a|, |n|, floor).
inline GradReport compare_fd(nc::ParamSet<double>& params, const std::function<double()>& loss, double h = 1e-4,
                             double floor = 1e-6, std::size_t stride = 1) {
    GradReport rep;
    for (auto& p : params) {
        for (std::size_t i = 0; i < p.value.size(); i += stride) {
            const double saved = p.value.data[i];
            auto at = [&](double offset) {
                p.value.data[i] = saved + offset;
                return loss();
            };
            const double numeric = (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h);
            p.value.data[i] = saved;
            const double analytic = p.grad.data[i];
            const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
            ++rep.checked;
            if (rel > rep.max_rel) {
                rep.max_rel = rel;
                rep.worst = p.name + "[" + std::to_string(i) + "] analytic=" + std::to_string(analytic) +
                            " numeric=" + std::to_string(numeric);
            }
        }
    }
    return rep;
}

}  // namespace gazectl::check
