#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gazectl/error.hpp"
#include "gazectl/features.hpp"
#include "gazectl/oracle.hpp"
#include "gazectl/scene.hpp"

namespace gazectl {

using nlohmann::json;

namespace detail {

inline std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

template <class V>
V field(const json& j, const char* key, V fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<V>();
    } catch (const json::exception&) {
        throw Error(ErrorCode::SchemaError, std::string("field '") + key + "' has the wrong type");
    }
}

template <class V>
V required(const json& j, const char* key) {
    if (!j.contains(key)) throw Error(ErrorCode::SchemaError, std::string("missing field '") + key + "'");
    return field<V>(j, key, V{});
}

inline void append_float(std::string& out, float v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Characters and frames

inline json to_json(const CharacterState2D& c) {
    return {{"present", c.present}, {"distance_m", c.distance_m}, {"angle_deg", c.angle_deg},   {"waving", c.waving},
            {"pointing", c.pointing}, {"talking", c.talking},     {"movement", static_cast<int>(c.movement)}};
}

inline json to_json(const CharacterState3D& c) {
    return {{"present", c.present},
            {"distance_m", c.distance_m},
            {"angle_deg", c.angle_deg},
            {"characteristic", static_cast<int>(c.characteristic)},
            {"talking", c.talking},
            {"pointed_at_count", c.pointed_at_count},
            {"pointing_at", c.pointing_at}};
}

/// Missing fields take their defaults; out-of-range values are schema errors.
inline CharacterState2D character2d_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorCode::SchemaError, "character must be an object");
    CharacterState2D c;
    c.present = detail::field(j, "present", true);
    c.distance_m = detail::field(j, "distance_m", 1.5);
    c.angle_deg = detail::field(j, "angle_deg", 0.0);
    c.waving = detail::field(j, "waving", false);
    c.pointing = detail::field(j, "pointing", false);
    c.talking = detail::field(j, "talking", false);
    const int mv = detail::field(j, "movement", 0);
    if (mv < 0 || mv > 4) throw Error(ErrorCode::SchemaError, "movement must be 0..4");
    c.movement = static_cast<Movement>(mv);
    if (!std::isfinite(c.distance_m) || c.distance_m < 0) throw Error(ErrorCode::SchemaError, "distance_m must be >= 0");
    if (!std::isfinite(c.angle_deg) || std::abs(c.angle_deg) > 90) throw Error(ErrorCode::SchemaError, "angle_deg must be within [-90, 90]");
    return c;
}

inline CharacterState3D character3d_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorCode::SchemaError, "character must be an object");
    CharacterState3D c;
    c.present = detail::field(j, "present", true);
    c.distance_m = detail::field(j, "distance_m", 1.5);
    c.angle_deg = detail::field(j, "angle_deg", 0.0);
    const int ch = detail::field(j, "characteristic", 1);
    if (ch < 1 || ch > 8) throw Error(ErrorCode::SchemaError, "characteristic must be 1..8");
    c.characteristic = static_cast<Characteristic>(ch);
    c.talking = detail::field(j, "talking", false);
    c.pointed_at_count = detail::field(j, "pointed_at_count", 0);
    c.pointing_at = detail::field(j, "pointing_at", -1);
    if (c.pointed_at_count < 0 || c.pointed_at_count > 2) throw Error(ErrorCode::SchemaError, "pointed_at_count must be 0..2");
    if (!std::isfinite(c.distance_m) || c.distance_m < 0) throw Error(ErrorCode::SchemaError, "distance_m must be >= 0");
    if (!std::isfinite(c.angle_deg) || std::abs(c.angle_deg) > 90) throw Error(ErrorCode::SchemaError, "angle_deg must be within [-90, 90]");
    return c;
}

inline json to_json(const SceneFrame& f) {
    json chars = json::array();
    for (int i = 0; i < f.capacity(); ++i)
        chars.push_back(f.variant == Variant::TwoD ? to_json(f.people2d[static_cast<std::size_t>(i)])
                                                   : to_json(f.people3d[static_cast<std::size_t>(i)]));
    json j = {{"tick", f.tick}, {"t_s", f.t_s}, {"situation_id", f.situation_id}, {"characters", chars}};
    if (f.variant == Variant::TwoD) j["box"] = f.box_present;
    return j;
}

/// Parses a frame's characters (array index = slot; shorter arrays leave the remaining slots empty).
inline SceneFrame frame_from_json(const json& j, Variant v) {
    if (!j.is_object()) throw Error(ErrorCode::SchemaError, "frame must be an object");
    SceneFrame f;
    f.variant = v;
    f.tick = detail::field<std::int64_t>(j, "tick", 0);
    f.t_s = detail::field(j, "t_s", 0.0);
    f.situation_id = detail::field(j, "situation_id", 0);
    f.box_present = v == Variant::TwoD && detail::field(j, "box", true);
    if (!j.contains("characters") || !j.at("characters").is_array())
        throw Error(ErrorCode::SchemaError, "missing 'characters' array");
    const auto& chars = j.at("characters");
    if (static_cast<int>(chars.size()) > capacity(v))
        throw Error(ErrorCode::SchemaError, std::to_string(chars.size()) + " characters exceed the " + to_string(v) +
                                                " capacity of " + std::to_string(capacity(v)));
    for (std::size_t i = 0; i < chars.size(); ++i) {
        if (v == Variant::TwoD)
            f.people2d[i] = character2d_from_json(chars[i]);
        else
            f.people3d[i] = character3d_from_json(chars[i]);
    }
    return f;
}

// ---------------------------------------------------------------------------
// Timelines: header line, then one frame per line

inline void write_timeline(std::ostream& out, const Timeline& tl) {
    out << json{{"format", "gazectl-timeline"}, {"variant", to_string(tl.variant)}, {"fps", tl.fps}, {"frames", tl.frames.size()}}.dump()
        << '\n';
    for (const auto& f : tl.frames) out << to_json(f).dump() << '\n';
}

inline Timeline read_timeline(std::istream& in) {
    std::string line;
    std::size_t n = 0;
    Timeline tl;
    bool header = false;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            if (!header) {
                if (detail::field<std::string>(j, "format", "") != "gazectl-timeline")
                    throw Error(ErrorCode::SchemaError, "not a timeline header");
                tl.variant = parse_variant(detail::required<std::string>(j, "variant"));
                tl.fps = detail::required<int>(j, "fps");
                if (tl.fps < 1) throw Error(ErrorCode::SchemaError, "fps must be >= 1");
                header = true;
                continue;
            }
            tl.frames.push_back(frame_from_json(j, tl.variant));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::SchemaError, detail::at_line(n) + e.what());
        } catch (const Error& e) {
            throw Error(e.code(), detail::at_line(n) + e.message());
        }
    }
    if (!header) throw Error(ErrorCode::SchemaError, "empty timeline file");
    return tl;
}

// ---------------------------------------------------------------------------
// Datasets: header line, then one example per line

/// Situation listing entry; 2D characters report their flags, 3D ones their action code.
inline json to_json(const SituationSpec& s) {
    json chars = json::array();
    for (const auto& c : s.characters) {
        if (!c.present) {
            chars.push_back({{"present", false}});
            continue;
        }
        json o = {{"present", true}, {"near", c.near}};
        if (s.variant == Variant::TwoD) {
            o["waving"] = c.waving;
            o["pointing"] = c.pointing;
            o["talking"] = c.talking;
        } else {
            o["action"] = static_cast<int>(c.action);
            o["talking"] = c.talking;
            if (c.pointing_at >= 0) o["pointing_at"] = c.pointing_at;
        }
        chars.push_back(std::move(o));
    }
    return {{"situation_id", s.situation_id}, {"variant", to_string(s.variant)}, {"duration_s", s.duration_s}, {"characters", chars}};
}

inline json normalization_to_json(const Normalization& n) {
    return {{"distance_m", n.distance_m},
            {"angle_deg", n.angle_deg},
            {"movement", n.movement},
            {"characteristic", n.characteristic},
            {"pointed_count", n.pointed_count}};
}

inline Normalization normalization_from_json(const json& j) {
    Normalization n;
    n.distance_m = detail::field(j, "distance_m", n.distance_m);
    n.angle_deg = detail::field(j, "angle_deg", n.angle_deg);
    n.movement = detail::field(j, "movement", n.movement);
    n.characteristic = detail::field(j, "characteristic", n.characteristic);
    n.pointed_count = detail::field(j, "pointed_count", n.pointed_count);
    return n;
}

inline json dataset_header(const Dataset& d) {
    const auto& m = d.meta();
    json prov;
    try {
        prov = json::parse(m.provenance);
    } catch (const json::exception&) {
        prov = m.provenance;
    }
    return {{"format", "gazectl-dataset"},
            {"schema_version", m.schema_version},
            {"variant", to_string(m.variant)},
            {"m", m.m},
            {"L", m.L},
            {"labels", m.labels},
            {"normalized", m.normalized},
            {"normalization", normalization_to_json(m.normalization)},
            {"seed", m.seed},
            {"source", m.source},
            {"examples", d.size()},
            {"provenance", prov}};
}

inline void write_dataset(std::ostream& out, const Dataset& d) {
    out << dataset_header(d).dump() << '\n';
    const auto L = static_cast<std::size_t>(d.width());
    std::string line;
    for (std::size_t i = 0; i < d.size(); ++i) {
        line.clear();
        line += "{\"situation_id\":" + std::to_string(d.situation(i)) + ",\"label\":" + std::to_string(d.label(i)) + ",\"window\":[";
        const auto w = d.window(i);
        for (std::size_t t = 0; t < static_cast<std::size_t>(d.m()); ++t) {
            line += t ? ",[" : "[";
            for (std::size_t c = 0; c < L; ++c) {
                if (c) line += ',';
                detail::append_float(line, w[t * L + c]);
            }
            line += ']';
        }
        line += ']';
        if (const auto lf = d.label_frame(i)) {
            line += ",\"label_frame\":[";
            for (std::size_t c = 0; c < L; ++c) {
                if (c) line += ',';
                detail::append_float(line, (*lf)[c]);
            }
            line += ']';
        }
        line += "}\n";
        out << line;
    }
}

namespace detail {

inline DatasetMeta meta_from_header(const json& h) {
    if (field<std::string>(h, "format", "gazectl-dataset") != "gazectl-dataset") throw Error(ErrorCode::SchemaError, "not a dataset header");
    DatasetMeta m;
    m.schema_version = required<int>(h, "schema_version");
    if (m.schema_version != 1) throw Error(ErrorCode::VersionMismatch, "dataset schema " + std::to_string(m.schema_version) + ", expected 1");
    m.variant = parse_variant(required<std::string>(h, "variant"));
    m.m = required<int>(h, "m");
    m.L = required<int>(h, "L");
    m.labels = required<std::vector<std::string>>(h, "labels");
    m.normalized = field(h, "normalized", true);
    if (h.contains("normalization")) m.normalization = normalization_from_json(h.at("normalization"));
    m.seed = field<std::uint64_t>(h, "seed", 0);
    m.source = field<std::string>(h, "source", "");
    m.provenance = h.contains("provenance") ? h.at("provenance").dump() : "{}";
    if (m.m < 1) throw Error(ErrorCode::SchemaError, "m must be >= 1");
    if (m.L != feature_width(m.variant))
        throw Error(ErrorCode::SchemaError, "L=" + std::to_string(m.L) + " does not match the " + to_string(m.variant) +
                                                " feature width " + std::to_string(feature_width(m.variant)));
    if (m.labels != label_names(m.variant)) throw Error(ErrorCode::SchemaError, "label set does not match the variant");
    return m;
}

inline void check_row(const DatasetMeta& meta, const json& row, std::vector<float>& out, const char* what) {
    if (!row.is_array() || static_cast<int>(row.size()) != meta.L)
        throw Error(ErrorCode::ShapeMismatch, std::string(what) + " width " + (row.is_array() ? std::to_string(row.size()) : "?") +
                                                  " differs from header L=" + std::to_string(meta.L));
    const int cols = features_per_person(meta.variant);
    for (int c = 0; c < meta.L; ++c) {
        const auto& v = row[static_cast<std::size_t>(c)];
        if (!v.is_number()) throw Error(ErrorCode::SchemaError, std::string(what) + " holds a non-number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw Error(ErrorCode::SchemaError, std::string(what) + " holds a non-finite value");
        if (meta.normalized && (x < -1e-6 || x > 1 + 1e-6))
            throw Error(ErrorCode::SchemaError, std::string(what) + " value " + std::to_string(x) + " outside [0, 1]");
        if (c % cols == 0 && x != 0.0 && x != 1.0) throw Error(ErrorCode::SchemaError, std::string(what) + " presence flag must be 0 or 1");
        out.push_back(static_cast<float>(x));
    }
}

}  // namespace detail

/// Reads and validates a dataset; every violation names its line.
inline Dataset read_dataset(std::istream& in) {
    std::string line;
    std::size_t n = 0;
    Dataset d;
    bool header = false;
    std::vector<float> window, label_frame;
    std::size_t declared = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            if (!header) {
                d = Dataset(detail::meta_from_header(j));
                declared = detail::field<std::size_t>(j, "examples", std::size_t{0});
                header = true;
                continue;
            }
            const auto& meta = d.meta();
            const int label = detail::required<int>(j, "label");
            const int sid = detail::required<int>(j, "situation_id");
            if (label < 0 || label >= d.classes())
                throw Error(ErrorCode::SchemaError, "label " + std::to_string(label) + " outside 0.." + std::to_string(d.classes() - 1));
            if (!j.contains("window") || !j.at("window").is_array()) throw Error(ErrorCode::SchemaError, "missing 'window' array");
            const auto& w = j.at("window");
            if (static_cast<int>(w.size()) != meta.m)
                throw Error(ErrorCode::ShapeMismatch, "window has " + std::to_string(w.size()) + " frames, header m=" + std::to_string(meta.m));
            window.clear();
            for (const auto& row : w) detail::check_row(meta, row, window, "window row");
            label_frame.clear();
            if (j.contains("label_frame")) detail::check_row(meta, j.at("label_frame"), label_frame, "label_frame");
            d.add_window(window, label, sid, label_frame);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::SchemaError, detail::at_line(n) + e.what());
        } catch (const Error& e) {
            throw Error(e.code(), detail::at_line(n) + e.message());
        }
    }
    if (!header) throw Error(ErrorCode::SchemaError, "line 1: missing dataset header");
    if (declared != 0 && declared != d.size())
        throw Error(ErrorCode::SchemaError, "header declares " + std::to_string(declared) + " examples, file has " + std::to_string(d.size()));
    return d;
}

// ---------------------------------------------------------------------------
// Files

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    return in;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    return out;
}

inline Dataset load_dataset(const std::string& path) {
    auto in = open_in(path);
    return read_dataset(in);
}

inline void save_dataset(const std::string& path, const Dataset& d) {
    auto out = open_out(path);
    write_dataset(out, d);
}

inline Timeline load_timeline(const std::string& path) {
    auto in = open_in(path);
    return read_timeline(in);
}

inline void save_timeline(const std::string& path, const Timeline& tl) {
    auto out = open_out(path);
    write_timeline(out, tl);
}

inline json load_json(const std::string& path) {
    auto in = open_in(path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, path + ": " + e.what());
    }
}

inline void save_json(const std::string& path, const json& j) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

/// A persona file holds one persona object or {"personas": [...]}.
inline std::vector<GazerPersona> load_personas(const std::string& path) {
    const json j = load_json(path);
    std::vector<GazerPersona> out;
    try {
        if (j.contains("personas"))
            for (const auto& p : j.at("personas")) out.push_back(persona_from_json(p));
        else
            out.push_back(persona_from_json(j));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, path + ": " + e.what());
    }
    for (const auto& p : out) p.validate();
    return out;
}

}  // namespace gazectl
