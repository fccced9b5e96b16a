#pragma once

// Checkpoints are a JSON manifest (name, group, shape, precision, byte
// offset per parameter, config hash, stage tag) plus a flat little-endian
// IEEE-754 payload file. Loading writes parameter data in place so that
// layer handles stay valid.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jscc/error.hpp"
#include "jscc/nn.hpp"

namespace jscc {

template <typename S>
constexpr const char* precision_tag() {
    if constexpr (std::is_same_v<S, float>) {
        return "f32";
    } else {
        return "f64";
    }
}

inline std::string manifest_path(const std::string& stem) { return stem + ".manifest.json"; }
inline std::string payload_path(const std::string& stem) { return stem + ".payload.bin"; }

inline bool checkpoint_exists(const std::string& stem) {
    return std::filesystem::exists(manifest_path(stem)) &&
           std::filesystem::exists(payload_path(stem));
}

template <typename S>
void save_checkpoint(const ParameterStore<S>& store, const std::string& stem,
                     const std::string& stage_tag, std::uint64_t config_hash) {
    nlohmann::json manifest;
    manifest["format"] = "jscc-checkpoint-v1";
    manifest["stage"] = stage_tag;
    manifest["config_hash"] = config_hash;
    manifest["precision"] = precision_tag<S>();
    manifest["payload"] = std::filesystem::path(payload_path(stem)).filename().string();

    std::ofstream payload(payload_path(stem), std::ios::binary | std::ios::trunc);
    if (!payload) throw IoError("cannot write checkpoint payload '" + payload_path(stem) + "'");

    nlohmann::json params = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& e : store.entries()) {
        nlohmann::json p;
        p["name"] = e.name;
        p["group"] = e.group;
        p["shape"] = e.tensor.shape();
        p["precision"] = precision_tag<S>();
        p["offset"] = offset;
        p["count"] = e.tensor.numel();
        params.push_back(std::move(p));
        payload.write(reinterpret_cast<const char*>(e.tensor.values().data()),
                      static_cast<std::streamsize>(e.tensor.numel() * sizeof(S)));
        offset += e.tensor.numel() * sizeof(S);
    }
    manifest["params"] = std::move(params);
    if (!payload) throw IoError("short write on checkpoint payload '" + payload_path(stem) + "'");
    payload.close();

    std::ofstream mf(manifest_path(stem), std::ios::trunc);
    if (!mf) throw IoError("cannot write checkpoint manifest '" + manifest_path(stem) + "'");
    mf << manifest.dump(2) << "\n";
}

// Loads into an existing store built from the same ModelConfig. Every
// parameter must match by name and shape in both directions. A config-hash
// mismatch is an error unless force is set, in which case it is reported via
// the returned flag.
template <typename S>
bool load_checkpoint(ParameterStore<S>& store, const std::string& stem,
                     std::uint64_t expected_config_hash, bool force,
                     std::string* stage_tag_out = nullptr) {
    std::ifstream mf(manifest_path(stem));
    if (!mf) throw IoError("cannot open checkpoint manifest '" + manifest_path(stem) + "'");
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const std::exception& e) {
        throw IoError("malformed checkpoint manifest '" + manifest_path(stem) + "': " + e.what());
    }
    if (manifest.value("format", "") != "jscc-checkpoint-v1") {
        throw IoError("unrecognized checkpoint format in '" + manifest_path(stem) + "'");
    }
    if (stage_tag_out) *stage_tag_out = manifest.value("stage", "");

    bool hash_mismatch = false;
    const std::uint64_t stored_hash = manifest.value("config_hash", std::uint64_t{0});
    if (stored_hash != expected_config_hash) {
        if (!force) {
            throw IoError("checkpoint '" + stem + "' was written under a different config " +
                          "(hash " + std::to_string(stored_hash) + " vs " +
                          std::to_string(expected_config_hash) +
                          "); pass --force to load anyway");
        }
        hash_mismatch = true;
    }
    if (manifest.value("precision", "") != precision_tag<S>()) {
        throw IoError("checkpoint '" + stem + "' holds " + manifest.value("precision", "?") +
                      " parameters, run precision is " + precision_tag<S>());
    }

    std::ifstream payload(payload_path(stem), std::ios::binary);
    if (!payload) throw IoError("cannot open checkpoint payload '" + payload_path(stem) + "'");

    std::size_t seen = 0;
    for (const auto& p : manifest.at("params")) {
        const std::string name = p.at("name").get<std::string>();
        if (!store.has(name)) {
            throw IoError("checkpoint parameter '" + name + "' does not exist in this model");
        }
        Tensor<S>& t = store.get(name);
        const Shape shape = p.at("shape").get<Shape>();
        if (t.shape() != shape) {
            throw ShapeError("checkpoint parameter '" + name + "' has shape " +
                             shape_str(shape) + ", model expects " + shape_str(t.shape()));
        }
        payload.seekg(static_cast<std::streamoff>(p.at("offset").get<std::uint64_t>()));
        payload.read(reinterpret_cast<char*>(t.mutable_values().data()),
                     static_cast<std::streamsize>(t.numel() * sizeof(S)));
        if (static_cast<std::size_t>(payload.gcount()) != t.numel() * sizeof(S)) {
            throw IoError("truncated checkpoint payload for parameter '" + name + "'");
        }
        ++seen;
    }
    if (seen != store.entries().size()) {
        throw IoError("checkpoint '" + stem + "' lists " + std::to_string(seen) +
                      " parameters, model has " + std::to_string(store.entries().size()));
    }
    return hash_mismatch;
}

}  // namespace jscc
