// SPDX-License-Identifier: Apache-2.0
//
// Flat binary parameter checkpoints, format RISNN1:
//   magic "RISNN1" (6 bytes), version u32, parameter count u64, then per
//   parameter: name length u32, name bytes, rank u32, extents u64 each,
//   values f32. All integers and floats little-endian.

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "risce/io.hpp"
#include "risce/nn/adam.hpp"
#include "risce/nn/tensor.hpp"

namespace risce::nn {

inline constexpr char kCheckpointMagic[6] = {'R', 'I', 'S', 'N', 'N', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(std::ostream& os, const std::vector<Parameter<float>>& params) {
    io::put_bytes(os, kCheckpointMagic, sizeof kCheckpointMagic);
    io::put_u32(os, kCheckpointVersion);
    io::put_u64(os, params.size());
    for (const Parameter<float>& p : params) {
        io::put_u32(os, static_cast<std::uint32_t>(p.name.size()));
        io::put_bytes(os, p.name.data(), p.name.size());
        io::put_u32(os, static_cast<std::uint32_t>(p.value.rank()));
        for (const std::size_t e : p.value.shape) io::put_u64(os, e);
        for (const float x : p.value.v) io::put_f32(os, x);
    }
    if (!os) throw std::runtime_error("checkpoint write failed");
}

inline void save_checkpoint(const std::string& path,
                            const std::vector<Parameter<float>>& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    save_checkpoint(os, params);
}

/// Fills `params` in place. Every parameter in the stream must match one in
/// `params` by name and shape, and every parameter must be covered.
inline void load_checkpoint(std::istream& is, std::vector<Parameter<float>>& params) {
    char magic[6];
    io::get_bytes(is, magic, sizeof magic, "magic");
    if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw std::runtime_error("not a RISNN1 checkpoint");
    const std::uint32_t version = io::get_u32(is, "version");
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t count = io::get_u64(is, "parameter count");
    if (count != params.size())
        throw std::runtime_error("checkpoint holds " + std::to_string(count) +
                                 " parameters, expected " + std::to_string(params.size()));
    std::vector<bool> seen(params.size(), false);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = io::get_u32(is, "name length");
        std::string name(name_len, '\0');
        if (name_len > 0) io::get_bytes(is, name.data(), name_len, "name");
        const std::uint32_t rank = io::get_u32(is, "rank");
        std::vector<std::size_t> shape(rank);
        for (std::uint32_t r = 0; r < rank; ++r)
            shape[r] = static_cast<std::size_t>(io::get_u64(is, "extent"));

        std::size_t slot = params.size();
        for (std::size_t j = 0; j < params.size(); ++j)
            if (!seen[j] && params[j].name == name) {
                slot = j;
                break;
            }
        if (slot == params.size())
            throw std::runtime_error("checkpoint parameter \"" + name +
                                     "\" has no match in the target set");
        Parameter<float>& p = params[slot];
        if (shape != p.value.shape)
            throw std::runtime_error("checkpoint parameter \"" + name + "\" has shape " +
                                     shape_str(Tensor<float>(shape)) + ", expected " +
                                     shape_str(p.value));
        for (float& x : p.value.v) x = io::get_f32(is, "values");
        seen[slot] = true;
    }
}

inline void load_checkpoint(const std::string& path, std::vector<Parameter<float>>& params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    load_checkpoint(is, params);
}

}  // namespace risce::nn
