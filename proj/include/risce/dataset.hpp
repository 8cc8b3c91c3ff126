// SPDX-License-Identifier: Apache-2.0
//
// Sample archives, format RISCE1:
//   magic "RISCE1\0\0" (8 bytes), version u32, link id u8, rows u32, cols u32,
//   sample count u64, normalization scale f64, then per sample: snr f32
//   followed by four planar row-major f32 blocks (noisy re, noisy im,
//   clean re, clean im). All fields little-endian.
//
// In memory each matrix is a (rows, cols, 2) tensor with real and imaginary
// parts interleaved on the last axis, which is what the network consumes.
// Values are stored raw; consumers divide by `scale` before training.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "risce/io.hpp"
#include "risce/nn/tensor.hpp"
#include "risce/rng.hpp"

namespace risce::data {

inline constexpr char kDatasetMagic[8] = {'R', 'I', 'S', 'C', 'E', '1', '\0', '\0'};
inline constexpr std::uint32_t kDatasetVersion = 1;

struct SampleRecord {
    float snr_db = 0.0f;
    nn::Tensor<float> noisy;  // (rows, cols, 2)
    nn::Tensor<float> clean;  // (rows, cols, 2)
};

struct Dataset {
    std::uint8_t link_id = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    double scale = 1.0;
    std::vector<SampleRecord> samples;
};

namespace detail {

inline void put_planar(std::ostream& os, const nn::Tensor<float>& t, std::size_t part) {
    const std::size_t cells = t.numel() / 2;
    for (std::size_t p = 0; p < cells; ++p) io::put_f32(os, t.v[p * 2 + part]);
}

inline void get_planar(std::istream& is, nn::Tensor<float>& t, std::size_t part,
                       const char* what) {
    const std::size_t cells = t.numel() / 2;
    for (std::size_t p = 0; p < cells; ++p) t.v[p * 2 + part] = io::get_f32(is, what);
}

}  // namespace detail

inline void write_dataset(std::ostream& os, const Dataset& ds) {
    if (ds.rows == 0 || ds.cols == 0)
        throw std::invalid_argument("write_dataset: rows and cols must be positive");
    const std::vector<std::size_t> want{ds.rows, ds.cols, 2};
    io::put_bytes(os, kDatasetMagic, sizeof kDatasetMagic);
    io::put_u32(os, kDatasetVersion);
    unsigned char link = ds.link_id;
    io::put_bytes(os, &link, 1);
    io::put_u32(os, static_cast<std::uint32_t>(ds.rows));
    io::put_u32(os, static_cast<std::uint32_t>(ds.cols));
    io::put_u64(os, ds.samples.size());
    io::put_f64(os, ds.scale);
    for (const SampleRecord& s : ds.samples) {
        if (s.noisy.shape != want || s.clean.shape != want)
            throw std::invalid_argument("write_dataset: sample shape does not match header");
        io::put_f32(os, s.snr_db);
        detail::put_planar(os, s.noisy, 0);
        detail::put_planar(os, s.noisy, 1);
        detail::put_planar(os, s.clean, 0);
        detail::put_planar(os, s.clean, 1);
    }
    if (!os) throw std::runtime_error("dataset write failed");
}

inline void write_dataset(const std::string& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open dataset for writing: " + path);
    write_dataset(os, ds);
}

inline Dataset read_dataset(std::istream& is) {
    char magic[8];
    io::get_bytes(is, magic, sizeof magic, "magic");
    if (std::memcmp(magic, kDatasetMagic, sizeof magic) != 0)
        throw std::runtime_error("not a RISCE1 dataset");
    const std::uint32_t version = io::get_u32(is, "version");
    if (version != kDatasetVersion)
        throw std::runtime_error("unsupported dataset version " + std::to_string(version));
    Dataset ds;
    unsigned char link = 0;
    io::get_bytes(is, &link, 1, "link id");
    ds.link_id = link;
    ds.rows = io::get_u32(is, "rows");
    ds.cols = io::get_u32(is, "cols");
    if (ds.rows == 0 || ds.cols == 0)
        throw std::runtime_error("dataset header has zero dimension");
    const std::uint64_t count = io::get_u64(is, "sample count");
    ds.scale = io::get_f64(is, "scale");
    ds.samples.resize(count);
    for (SampleRecord& s : ds.samples) {
        s.snr_db = io::get_f32(is, "snr");
        s.noisy = nn::Tensor<float>({ds.rows, ds.cols, 2});
        s.clean = nn::Tensor<float>({ds.rows, ds.cols, 2});
        detail::get_planar(is, s.noisy, 0, "noisy re");
        detail::get_planar(is, s.noisy, 1, "noisy im");
        detail::get_planar(is, s.clean, 0, "clean re");
        detail::get_planar(is, s.clean, 1, "clean im");
    }
    return ds;
}

inline Dataset read_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open dataset: " + path);
    return read_dataset(is);
}

/// Deterministic train/holdout split: shuffles 0..n-1 with the given stream
/// and cuts at round(fraction*n), clamped so both sides stay nonempty.
/// Both index lists come back sorted ascending.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double fraction, const RngStream& rng) {
    if (n < 2) throw std::invalid_argument("split_indices: need at least 2 samples");
    if (!(fraction > 0.0 && fraction < 1.0))
        throw std::invalid_argument("split_indices: fraction must lie in (0, 1)");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    RngStream r = rng;
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = r.next_below(i + 1);
        std::swap(order[i], order[j]);
    }
    std::size_t cut = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    if (cut == 0) cut = 1;
    if (cut == n) cut = n - 1;
    std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
    std::vector<std::size_t> holdout(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end());
    std::sort(train.begin(), train.end());
    std::sort(holdout.begin(), holdout.end());
    return {std::move(train), std::move(holdout)};
}

}  // namespace risce::data
