#pragma once

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gazectl/error.hpp"
#include "gazectl/models.hpp"

// Checkpoint layout (all integers little-endian):
//   "GZF1" | u32 header_len | header JSON | f32 tensor values in header order | u32 CRC-32 of all preceding bytes

namespace gazectl {

inline constexpr char kCheckpointMagic[4] = {'G', 'Z', 'F', '1'};
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 | static_cast<std::uint32_t>(p[2]) << 16 |
           static_cast<std::uint32_t>(p[3]) << 24;
}

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    while (n > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        crc = ::crc32(crc, data, chunk);
        data += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

template <class T>
std::vector<std::uint8_t> encode_checkpoint(const SequenceModel<T>& model, const nlohmann::json& extra = nlohmann::json::object()) {
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& p : model.params()) tensors.push_back({{"name", p.name}, {"shape", p.value.shape}});
    nlohmann::json header = {{"format_version", kCheckpointVersion},
                             {"arch", to_string(model.architecture())},
                             {"config", config_to_json(model.config())},
                             {"tensors", tensors},
                             {"parameter_count", model.parameter_count()},
                             {"extra", extra}};
    const std::string h = header.dump();
    std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
    detail::put_u32(out, static_cast<std::uint32_t>(h.size()));
    out.insert(out.end(), h.begin(), h.end());
    out.reserve(out.size() + 4 * model.parameter_count() + 4);
    for (const auto& p : model.params())
        for (T v : p.value.data) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    detail::put_u32(out, detail::crc32_of(out.data(), out.size()));
    return out;
}

/// Validates framing, checksum and version; returns the header.
inline nlohmann::json checkpoint_header(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
        throw Error(ErrorCode::CorruptFile, "not a checkpoint (bad magic)");
    const std::uint32_t stored = detail::get_u32(bytes.data() + bytes.size() - 4);
    if (stored != detail::crc32_of(bytes.data(), bytes.size() - 4)) throw Error(ErrorCode::CorruptFile, "checksum mismatch");
    const std::uint32_t hlen = detail::get_u32(bytes.data() + 4);
    if (8 + static_cast<std::size_t>(hlen) + 4 > bytes.size()) throw Error(ErrorCode::CorruptFile, "header length exceeds file");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + hlen);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::CorruptFile, std::string("unreadable header: ") + e.what());
    }
    const int version = header.value("format_version", -1);
    if (version != kCheckpointVersion)
        throw Error(ErrorCode::VersionMismatch,
                    "checkpoint format " + std::to_string(version) + ", expected " + std::to_string(kCheckpointVersion));
    return header;
}

/// Rebuilds the model stored in `bytes`. With `expected`, the stored architecture and
/// config must match it exactly.
inline SequenceModel<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::optional<ModelConfig>& expected = std::nullopt) {
    const auto header = checkpoint_header(bytes);
    Architecture arch;
    ModelConfig cfg;
    try {
        arch = parse_architecture(header.at("arch").get<std::string>());
        cfg = config_from_json(arch, header.at("config"));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::CorruptFile, std::string("header: ") + e.what());
    } catch (const Error& e) {
        throw Error(ErrorCode::CorruptFile, std::string("header: ") + e.message());
    }
    if (expected) {
        if (architecture_of(*expected) != arch)
            throw Error(ErrorCode::ArchMismatch, "checkpoint holds " + to_string(arch) + ", expected " + to_string(architecture_of(*expected)));
        if (config_to_json(*expected) != config_to_json(cfg))
            throw Error(ErrorCode::ArchMismatch, "checkpoint config " + config_to_json(cfg).dump() + " differs from expected " +
                                                     config_to_json(*expected).dump());
    }
    auto model = SequenceModel<float>::empty(cfg);
    const auto& tensors = header.at("tensors");
    if (tensors.size() != model.params().size())
        throw Error(ErrorCode::ArchMismatch, "checkpoint lists " + std::to_string(tensors.size()) + " tensors, architecture has " +
                                                 std::to_string(model.params().size()));
    std::size_t offset = 8 + detail::get_u32(bytes.data() + 4);
    const std::size_t payload_end = bytes.size() - 4;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        auto& p = model.params()[i];
        const auto name = tensors[i].at("name").get<std::string>();
        const auto shape = tensors[i].at("shape").get<nc::Shape>();
        if (name != p.name || shape != p.value.shape)
            throw Error(ErrorCode::ArchMismatch, "tensor " + std::to_string(i) + " is " + name + nc::shape_str(shape) + ", expected " +
                                                     p.name + nc::shape_str(p.value.shape));
        if (offset + 4 * p.value.size() > payload_end) throw Error(ErrorCode::CorruptFile, "payload truncated at " + name);
        for (auto& v : p.value.data) {
            v = std::bit_cast<float>(detail::get_u32(bytes.data() + offset));
            offset += 4;
        }
    }
    if (offset != payload_end) throw Error(ErrorCode::CorruptFile, "trailing bytes after tensor payload");
    return model;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <class T>
void save_checkpoint(const std::string& path, const SequenceModel<T>& model, const nlohmann::json& extra = nlohmann::json::object()) {
    const auto bytes = encode_checkpoint(model, extra);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "short write to " + path);
}

inline SequenceModel<float> load_checkpoint(const std::string& path, const std::optional<ModelConfig>& expected = std::nullopt) {
    return decode_checkpoint(read_file_bytes(path), expected);
}

}  // namespace gazectl
