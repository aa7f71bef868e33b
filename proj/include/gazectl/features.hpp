#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gazectl/error.hpp"
#include "gazectl/scene.hpp"

namespace gazectl {

constexpr int features_per_person(Variant v) { return v == Variant::TwoD ? 7 : 6; }
constexpr int feature_width(Variant v) { return capacity(v) * features_per_person(v); }
constexpr int label_count(Variant v) { return v == Variant::TwoD ? 5 : 3; }

using Label = int;
inline constexpr Label kNoise = -1;
/// 2D only: the box is the label after the four people.
inline constexpr Label kBoxLabel = 4;

inline std::vector<std::string> label_names(Variant v) {
    if (v == Variant::TwoD) return {"P1", "P2", "P3", "P4", "Box"};
    return {"P1", "P2", "P3"};
}

/// Column scales. distance/distance_scale, (angle/angle_scale + 1)/2, ordinal/scale.
struct Normalization {
    double distance_m = 5.0;
    double angle_deg = 90.0;
    double movement = 4.0;
    double characteristic = 8.0;
    double pointed_count = 2.0;

    bool operator==(const Normalization&) const = default;
};

enum class Column2D : int { Present = 0, Distance, Waving, Pointing, Talking, Angle, Movement };
enum class Column3D : int { Present = 0, Distance, Characteristic, Talking, PointedCount, Angle };

/// One frame as a capacity x per-person matrix, stored row-major.
struct FrameFeatures {
    Variant variant = Variant::TwoD;
    bool normalized = false;
    std::vector<double> values;

    int rows() const { return capacity(variant); }
    int cols() const { return features_per_person(variant); }
    double at(int row, int col) const { return values.at(static_cast<std::size_t>(row * cols() + col)); }
    double& at(int row, int col) { return values.at(static_cast<std::size_t>(row * cols() + col)); }
    std::span<const double> flat() const { return values; }
};

namespace detail {

inline bool is_angle_column(Variant v, int col) {
    return v == Variant::TwoD ? col == static_cast<int>(Column2D::Angle) : col == static_cast<int>(Column3D::Angle);
}

/// Scale applied to a raw column value; angle is handled separately (affine).
inline double column_scale(Variant v, int col, const Normalization& n) {
    if (v == Variant::TwoD) {
        switch (static_cast<Column2D>(col)) {
            case Column2D::Distance: return n.distance_m;
            case Column2D::Movement: return n.movement;
            default: return 1.0;
        }
    }
    switch (static_cast<Column3D>(col)) {
        case Column3D::Distance: return n.distance_m;
        case Column3D::Characteristic: return n.characteristic;
        case Column3D::PointedCount: return n.pointed_count;
        default: return 1.0;
    }
}

}  // namespace detail

inline double normalize_value(Variant v, int col, double raw, const Normalization& n) {
    if (detail::is_angle_column(v, col)) return (raw / n.angle_deg + 1.0) / 2.0;
    return raw / detail::column_scale(v, col, n);
}

inline double denormalize_value(Variant v, int col, double value, const Normalization& n) {
    if (detail::is_angle_column(v, col)) return (value * 2.0 - 1.0) * n.angle_deg;
    return value * detail::column_scale(v, col, n);
}

inline FrameFeatures encode_frame(const SceneFrame& frame, bool normalized = false, const Normalization& norm = {}) {
    FrameFeatures ff;
    ff.variant = frame.variant;
    ff.normalized = normalized;
    ff.values.assign(static_cast<std::size_t>(feature_width(frame.variant)), 0.0);
    for (int i = 0; i < frame.capacity(); ++i) {
        if (!frame.present(i)) continue;  // absent rows stay all-zero, normalized or not
        if (frame.variant == Variant::TwoD) {
            const auto& p = frame.people2d[static_cast<std::size_t>(i)];
            const double row[7] = {1.0, p.distance_m, p.waving ? 1.0 : 0.0, p.pointing ? 1.0 : 0.0,
                                   p.talking ? 1.0 : 0.0, p.angle_deg, static_cast<double>(p.movement)};
            for (int c = 0; c < 7; ++c) ff.at(i, c) = row[c];
        } else {
            const auto& p = frame.people3d[static_cast<std::size_t>(i)];
            const double row[6] = {1.0, p.distance_m, static_cast<double>(p.characteristic), p.talking ? 1.0 : 0.0,
                                   static_cast<double>(p.pointed_at_count), p.angle_deg};
            for (int c = 0; c < 6; ++c) ff.at(i, c) = row[c];
        }
        if (normalized)
            for (int c = 0; c < ff.cols(); ++c) ff.at(i, c) = normalize_value(frame.variant, c, ff.at(i, c), norm);
    }
    return ff;
}

/// Inverse of encode_frame for the fields the features carry (pointing targets are not encoded).
inline SceneFrame decode_frame(const FrameFeatures& ff, const Normalization& norm = {}) {
    SceneFrame f;
    f.variant = ff.variant;
    f.box_present = ff.variant == Variant::TwoD;
    auto raw = [&](int i, int c) { return ff.normalized ? denormalize_value(ff.variant, c, ff.at(i, c), norm) : ff.at(i, c); };
    for (int i = 0; i < ff.rows(); ++i) {
        if (ff.at(i, 0) < 0.5) continue;
        if (ff.variant == Variant::TwoD) {
            auto& p = f.people2d[static_cast<std::size_t>(i)];
            p.present = true;
            p.distance_m = raw(i, 1);
            p.waving = raw(i, 2) > 0.5;
            p.pointing = raw(i, 3) > 0.5;
            p.talking = raw(i, 4) > 0.5;
            p.angle_deg = raw(i, 5);
            p.movement = static_cast<Movement>(std::clamp(static_cast<int>(std::lround(raw(i, 6))), 0, 4));
        } else {
            auto& p = f.people3d[static_cast<std::size_t>(i)];
            p.present = true;
            p.distance_m = raw(i, 1);
            p.characteristic = static_cast<Characteristic>(std::clamp(static_cast<int>(std::lround(raw(i, 2))), 1, 8));
            p.talking = raw(i, 3) > 0.5;
            p.pointed_at_count = static_cast<int>(std::lround(raw(i, 4)));
            p.angle_deg = raw(i, 5);
        }
    }
    return f;
}

inline FrameFeatures unflatten(Variant v, std::span<const double> flat, bool normalized) {
    if (static_cast<int>(flat.size()) != feature_width(v))
        throw Error(ErrorCode::ShapeMismatch, "flat feature vector has " + std::to_string(flat.size()) +
                                                  " values, expected " + std::to_string(feature_width(v)));
    return FrameFeatures{v, normalized, std::vector<double>(flat.begin(), flat.end())};
}

// ---------------------------------------------------------------------------
// Gaze samples and resampling

struct GazeSample {
    enum class Kind { Screen, Yaw };
    double t = 0.0;
    Kind kind = Kind::Screen;
    double x = 0.0;
    double y = 0.0;
    double yaw = 0.0;
    bool valid = true;

    static GazeSample screen(double t, double x, double y, bool valid = true) { return {t, Kind::Screen, x, y, 0.0, valid}; }
    static GazeSample head_yaw(double t, double yaw, bool valid = true) { return {t, Kind::Yaw, 0.0, 0.0, yaw, valid}; }
};

/// 1000 Hz tracker samples to 24 fps: each run of 125 samples becomes three frames
/// averaged over 42, 42 and 41 samples. A frame is invalid when more than half of its
/// group is invalid; otherwise it is the mean of the valid samples. Trailing samples
/// that do not fill a 125-sample window are dropped.
inline std::vector<GazeSample> resample_eyelink(std::span<const GazeSample> samples, double fps = 24.0) {
    if (samples.empty()) throw Error(ErrorCode::EmptyInput, "resample_eyelink got no samples");
    constexpr std::size_t kWindow = 125;
    constexpr std::size_t kGroups[3] = {42, 42, 41};
    std::vector<GazeSample> out;
    const std::size_t windows = samples.size() / kWindow;
    out.reserve(windows * 3);
    const double t0 = samples.front().t;
    for (std::size_t w = 0; w < windows; ++w) {
        std::size_t begin = w * kWindow;
        for (std::size_t g = 0; g < 3; ++g) {
            const std::size_t n = kGroups[g];
            double sx = 0.0, sy = 0.0, syaw = 0.0;
            std::size_t valid = 0;
            for (std::size_t i = begin; i < begin + n; ++i) {
                if (!samples[i].valid) continue;
                sx += samples[i].x;
                sy += samples[i].y;
                syaw += samples[i].yaw;
                ++valid;
            }
            GazeSample frame;
            frame.kind = samples[begin].kind;
            frame.t = t0 + static_cast<double>(w * 3 + g) / fps;
            frame.valid = 2 * valid >= n;
            if (valid > 0) {
                const auto d = static_cast<double>(valid);
                frame.x = sx / d;
                frame.y = sy / d;
                frame.yaw = syaw / d;
            }
            out.push_back(frame);
            begin += n;
        }
    }
    return out;
}

/// Linear interpolation of head yaw onto the grid k * tick, k = 0 .. ticks-1. Grid points
/// outside the sampled span, or bracketed by an invalid sample, come out invalid.
inline std::vector<GazeSample> resample_vr(std::span<const GazeSample> samples, double tick = 0.04,
                                           std::optional<std::size_t> ticks = std::nullopt) {
    if (samples.empty()) throw Error(ErrorCode::EmptyInput, "resample_vr got no samples");
    constexpr double kEps = 1e-9;
    const double t_first = samples.front().t;
    const double t_last = samples.back().t;
    const std::size_t count =
        ticks.value_or(static_cast<std::size_t>(std::max(0.0, std::floor(t_last / tick + kEps))) + 1);
    std::vector<GazeSample> out;
    out.reserve(count);
    std::size_t j = 0;
    for (std::size_t k = 0; k < count; ++k) {
        const double t = static_cast<double>(k) * tick;
        GazeSample g = GazeSample::head_yaw(t, 0.0, false);
        if (t >= t_first - kEps && t <= t_last + kEps) {
            while (j + 1 < samples.size() && samples[j + 1].t <= t + kEps) ++j;
            const GazeSample& a = samples[j];
            if (std::abs(a.t - t) <= kEps) {
                g.yaw = a.yaw;
                g.valid = a.valid;
            } else if (j + 1 < samples.size()) {
                const GazeSample& b = samples[j + 1];
                const double u = (t - a.t) / (b.t - a.t);
                g.yaw = a.yaw + (b.yaw - a.yaw) * u;
                g.valid = a.valid && b.valid;
            }
        }
        out.push_back(g);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gaze -> label

/// Screen and headset tolerances used to decide what a gaze sample is looking at.
struct GazeGeometry {
    double screen_w_px = 1920.0;
    double screen_h_px = 1080.0;
    double px_per_deg = 12.0;
    double person_half_width_deg = 12.0;
    double body_top_px = 120.0;
    double body_bottom_px = 1080.0;
    double box_half_width_deg = 8.0;
    double box_top_px = 600.0;
    double box_bottom_px = 1080.0;
    double vr_tolerance_deg = 15.0;

    double angle_to_x(double angle_deg) const { return screen_w_px / 2.0 + angle_deg * px_per_deg; }
    double x_to_angle(double x) const { return (x - screen_w_px / 2.0) / px_per_deg; }
};

inline Label resolve_label(const GazeSample& sample, const SceneFrame& frame, const GazeGeometry& geo = {}) {
    if (!sample.valid) return kNoise;
    Label best = kNoise;
    double best_gap = std::numeric_limits<double>::infinity();
    if (frame.variant == Variant::TwoD) {
        const double gaze_deg = geo.x_to_angle(sample.x);
        if (sample.y >= geo.body_top_px && sample.y <= geo.body_bottom_px) {
            for (int i = 0; i < frame.capacity(); ++i) {
                if (!frame.present(i)) continue;
                const double gap = std::abs(gaze_deg - frame.angle(i));
                if (gap <= geo.person_half_width_deg && gap < best_gap) {
                    best = i;
                    best_gap = gap;
                }
            }
        }
        if (best == kNoise && frame.box_present && std::abs(gaze_deg) <= geo.box_half_width_deg &&
            sample.y >= geo.box_top_px && sample.y <= geo.box_bottom_px)
            best = kBoxLabel;
        return best;
    }
    for (int i = 0; i < frame.capacity(); ++i) {
        if (!frame.present(i)) continue;
        const double gap = std::abs(sample.yaw - frame.angle(i));
        if (gap <= geo.vr_tolerance_deg && gap < best_gap) {
            best = i;
            best_gap = gap;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Datasets

struct LabeledFrame {
    std::int64_t tick = 0;
    int situation_id = 0;
    FrameFeatures features;
    Label label = kNoise;
    /// False when the tracker sample behind this frame was lost (blink, out of range).
    bool valid = true;
};

struct DatasetMeta {
    int schema_version = 1;
    Variant variant = Variant::TwoD;
    int m = 0;
    int L = 0;
    std::vector<std::string> labels;
    Normalization normalization;
    bool normalized = true;
    std::uint64_t seed = 0;
    std::string source;
    /// Free-form provenance (persona parameters, recording origin, ...), kept as a JSON string.
    std::string provenance = "{}";
};

/// Windowed examples over a shared row store. A window is m consecutive feature rows,
/// so examples cut from one sequence share storage.
class Dataset {
   public:
    static constexpr std::size_t kNoRow = static_cast<std::size_t>(-1);

    struct Example {
        std::size_t row = 0;
        Label label = 0;
        int situation_id = 0;
        /// Row holding the label frame's own features, when stored.
        std::size_t label_row = kNoRow;
    };

    Dataset() : rows_(std::make_shared<std::vector<float>>()) {}
    explicit Dataset(DatasetMeta meta) : meta_(std::move(meta)), rows_(std::make_shared<std::vector<float>>()) {}

    const DatasetMeta& meta() const { return meta_; }
    DatasetMeta& meta() { return meta_; }
    std::size_t size() const { return examples_.size(); }
    bool empty() const { return examples_.empty(); }
    int m() const { return meta_.m; }
    int width() const { return meta_.L; }
    int classes() const { return static_cast<int>(meta_.labels.size()); }

    const Example& example(std::size_t i) const { return examples_.at(i); }
    Label label(std::size_t i) const { return examples_.at(i).label; }
    int situation(std::size_t i) const { return examples_.at(i).situation_id; }

    /// m*L floats, row-major (time, feature).
    std::span<const float> window(std::size_t i) const {
        const auto& e = examples_.at(i);
        return {rows_->data() + e.row * static_cast<std::size_t>(meta_.L),
                static_cast<std::size_t>(meta_.m) * static_cast<std::size_t>(meta_.L)};
    }

    /// Features of the frame that supplied the label (L floats), if the dataset keeps it.
    std::optional<std::span<const float>> label_frame(std::size_t i) const {
        const auto& e = examples_.at(i);
        if (e.label_row == kNoRow) return std::nullopt;
        return std::span<const float>(rows_->data() + e.label_row * static_cast<std::size_t>(meta_.L), static_cast<std::size_t>(meta_.L));
    }

    /// Appends rows to the store and returns the index of the first one.
    std::size_t append_rows(std::span<const float> values) {
        detach();
        const std::size_t first = rows_->size() / static_cast<std::size_t>(meta_.L);
        rows_->insert(rows_->end(), values.begin(), values.end());
        return first;
    }

    void add_example(std::size_t first_row, Label label, int situation_id, std::size_t label_row = kNoRow) {
        examples_.push_back({first_row, label, situation_id, label_row});
    }

    /// Stores a window, and optionally the label frame's features, as new rows.
    void add_window(std::span<const float> window, Label label, int situation_id, std::span<const float> label_frame = {}) {
        if (window.size() != static_cast<std::size_t>(meta_.m * meta_.L))
            throw Error(ErrorCode::ShapeMismatch, "window has " + std::to_string(window.size()) + " values, expected " +
                                                      std::to_string(meta_.m * meta_.L));
        if (!label_frame.empty() && label_frame.size() != static_cast<std::size_t>(meta_.L))
            throw Error(ErrorCode::ShapeMismatch, "label frame has " + std::to_string(label_frame.size()) + " values");
        const std::size_t row = append_rows(window);
        const std::size_t label_row = label_frame.empty() ? kNoRow : append_rows(label_frame);
        add_example(row, label, situation_id, label_row);
    }

    /// Examples at `indices`, sharing this dataset's row store.
    Dataset subset(std::span<const std::size_t> indices) const {
        Dataset d(meta_);
        d.rows_ = rows_;
        d.examples_.reserve(indices.size());
        for (auto i : indices) d.examples_.push_back(examples_.at(i));
        return d;
    }

    std::vector<int> situation_ids() const {
        std::set<int> ids;
        for (const auto& e : examples_) ids.insert(e.situation_id);
        return {ids.begin(), ids.end()};
    }

   private:
    void detach() {
        if (rows_.use_count() > 1) rows_ = std::make_shared<std::vector<float>>(*rows_);
    }

    DatasetMeta meta_;
    std::shared_ptr<std::vector<float>> rows_;
    std::vector<Example> examples_;
};

inline DatasetMeta make_meta(Variant v, int m, std::uint64_t seed = 0, std::string source = {}) {
    DatasetMeta meta;
    meta.variant = v;
    meta.m = m;
    meta.L = feature_width(v);
    meta.labels = label_names(v);
    meta.seed = seed;
    meta.source = std::move(source);
    return meta;
}

/// Appends the windows of one labeled sequence to `out`. A window ending at frame t uses
/// frames t-m+1..t (all valid, consecutive ticks) and is labeled with frame t+1, which must
/// carry a target. Examples take the label frame's situation id.
inline std::size_t append_windows(Dataset& out, std::span<const LabeledFrame> frames, int step = 1) {
    const int m = out.m();
    if (m < 1) throw Error(ErrorCode::InvalidConfig, "window length m must be >= 1");
    if (step < 1) throw Error(ErrorCode::InvalidConfig, "step must be >= 1");
    if (frames.size() < static_cast<std::size_t>(m))
        throw Error(ErrorCode::TooShort, std::to_string(frames.size()) + " frames cannot fill a window of " + std::to_string(m));
    const auto L = static_cast<std::size_t>(out.width());
    std::vector<float> rows;
    rows.reserve(frames.size() * L);
    for (const auto& f : frames) {
        if (f.features.values.size() != L)
            throw Error(ErrorCode::ShapeMismatch, "frame features have width " + std::to_string(f.features.values.size()));
        for (double v : f.features.values) rows.push_back(static_cast<float>(v));
    }
    const std::size_t base = out.append_rows(rows);

    // run = number of consecutive valid frames ending at t
    std::size_t added = 0;
    int run = 0;
    for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
        const bool contiguous = t == 0 || frames[t].tick == frames[t - 1].tick + 1;
        run = frames[t].valid ? (contiguous ? run + 1 : 1) : 0;
        if (run < m) continue;
        if ((static_cast<int>(t) - m + 1) % step != 0) continue;
        const auto& next = frames[t + 1];
        if (next.tick != frames[t].tick + 1 || !next.valid || next.label == kNoise) continue;
        if (next.label < 0 || next.label >= out.classes())
            throw Error(ErrorCode::SchemaError, "label " + std::to_string(next.label) + " outside label set");
        out.add_example(base + t + 1 - static_cast<std::size_t>(m), next.label, next.situation_id, base + t + 1);
        ++added;
    }
    return added;
}

inline Dataset window_dataset(std::span<const LabeledFrame> frames, Variant v, int m, int step = 1) {
    Dataset d(make_meta(v, m));
    append_windows(d, frames, step);
    return d;
}

// ---------------------------------------------------------------------------
// Cross-validation folds

struct FoldPlan {
    int k = 10;
    std::vector<std::vector<int>> test_situations;

    int fold_of(int situation_id) const {
        for (int f = 0; f < k; ++f) {
            const auto& s = test_situations[static_cast<std::size_t>(f)];
            if (std::find(s.begin(), s.end(), situation_id) != s.end()) return f;
        }
        return -1;
    }
};

/// Shuffles the distinct situation ids with `seed` and deals them round-robin into k test sets.
inline FoldPlan plan_folds(const Dataset& data, int k, std::uint64_t seed) {
    if (k < 1) throw Error(ErrorCode::InvalidConfig, "k must be >= 1");
    auto ids = data.situation_ids();
    if (static_cast<int>(ids.size()) < k)
        throw Error(ErrorCode::TooFewSituations,
                    std::to_string(ids.size()) + " situations cannot fill " + std::to_string(k) + " folds");
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    FoldPlan plan;
    plan.k = k;
    plan.test_situations.resize(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < ids.size(); ++i) plan.test_situations[i % static_cast<std::size_t>(k)].push_back(ids[i]);
    for (auto& s : plan.test_situations) std::sort(s.begin(), s.end());
    return plan;
}

struct FoldSplit {
    Dataset train;
    Dataset test;
};

inline FoldSplit split_fold(const Dataset& data, const FoldPlan& plan, int fold) {
    const auto& test_ids = plan.test_situations.at(static_cast<std::size_t>(fold));
    const std::set<int> test_set(test_ids.begin(), test_ids.end());
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < data.size(); ++i)
        (test_set.count(data.situation(i)) != 0 ? test_idx : train_idx).push_back(i);
    return {data.subset(train_idx), data.subset(test_idx)};
}

}  // namespace gazectl
