#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcrd/common.hpp"
#include "dcrd/model.hpp"

namespace dcrd {

// Checkpoint layout: one compact JSON line (config + tensor manifest with
// names/shapes/offsets), '\n', then the little-endian float32 blob.
namespace detail {

inline void write_f32_le(std::ofstream& os, const std::vector<float>& data) {
    static_assert(sizeof(float) == 4);
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * 4));
    } else {
        for (float f : data) {
            std::uint32_t u;
            std::memcpy(&u, &f, 4);
            char b[4] = {static_cast<char>(u), static_cast<char>(u >> 8),
                         static_cast<char>(u >> 16), static_cast<char>(u >> 24)};
            os.write(b, 4);
        }
    }
}

inline std::vector<float> read_f32_le(std::ifstream& is, std::size_t count) {
    std::vector<float> data(count);
    if constexpr (std::endian::native == std::endian::little) {
        is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * 4));
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            unsigned char b[4];
            is.read(reinterpret_cast<char*>(b), 4);
            std::uint32_t u = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                              (static_cast<std::uint32_t>(b[2]) << 16) |
                              (static_cast<std::uint32_t>(b[3]) << 24);
            std::memcpy(&data[i], &u, 4);
        }
    }
    if (!is) throw InputError("checkpoint blob truncated");
    return data;
}

inline nlohmann::json manifest_json(const std::vector<TensorSpec>& layout) {
    nlohmann::json m = nlohmann::json::array();
    for (const auto& t : layout)
        m.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", t.offset}});
    return m;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const nlohmann::json& config_json,
                            const std::vector<TensorSpec>& layout, const std::vector<float>& data) {
    nlohmann::json header = {{"format", "dcrd-checkpoint-v1"},
                             {"config", config_json},
                             {"tensors", detail::manifest_json(layout)}};
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot open checkpoint for writing: " + path);
    const std::string line = header.dump();
    os.write(line.data(), static_cast<std::streamsize>(line.size()));
    os.put('\n');
    detail::write_f32_le(os, data);
    if (!os) throw InputError("checkpoint write failed: " + path);
}

struct LoadedCheckpoint {
    nlohmann::json config;
    std::vector<TensorSpec> layout;
    std::vector<float> data;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(is, line)) throw InputError("checkpoint header missing: " + path);
    nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
    if (header.is_discarded() || header.value("format", "") != "dcrd-checkpoint-v1")
        throw InputError("unrecognized checkpoint header: " + path);
    LoadedCheckpoint out;
    out.config = header.at("config");
    std::size_t total = 0;
    for (const auto& t : header.at("tensors")) {
        TensorSpec spec;
        spec.name = t.at("name").get<std::string>();
        spec.shape = t.at("shape").get<std::vector<std::size_t>>();
        spec.offset = t.at("offset").get<std::size_t>();
        total += spec.numel();
        out.layout.push_back(std::move(spec));
    }
    out.data = detail::read_f32_le(is, total);
    return out;
}

inline nlohmann::json model_config_json(const ModelConfig& cfg) {
    return {{"vocab_size", cfg.vocab_size}, {"d_model", cfg.d_model}, {"n_layers", cfg.n_layers},
            {"n_heads", cfg.n_heads},       {"d_ff", cfg.d_ff},       {"max_seq", cfg.max_seq},
            {"seed", cfg.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.vocab_size = j.at("vocab_size").get<int>();
    cfg.d_model = j.at("d_model").get<int>();
    cfg.n_layers = j.at("n_layers").get<int>();
    cfg.n_heads = j.at("n_heads").get<int>();
    cfg.d_ff = j.at("d_ff").get<int>();
    cfg.max_seq = j.at("max_seq").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

inline void save_model(const std::string& path, const ModelParams& params) {
    save_checkpoint(path, model_config_json(params.config), param_layout(params.config),
                    params.data);
}

inline ModelParams load_model(const std::string& path) {
    LoadedCheckpoint ck = load_checkpoint(path);
    ModelParams p;
    p.config = model_config_from_json(ck.config);
    p.config.validate();
    if (ck.data.size() != param_count(p.config))
        throw InputError("checkpoint tensor size mismatch: " + path);
    p.data = std::move(ck.data);
    return p;
}

}  // namespace dcrd
