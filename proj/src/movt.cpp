// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mova/movt.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "mova/errors.hpp"

namespace mova::movt {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
    return v;
}

}  // namespace

std::vector<std::uint8_t> encode(const Tensor& t) {
    if (t.rank() > std::numeric_limits<std::uint8_t>::max()) throw ValidationError("movt: rank exceeds 255");
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    out.reserve(6 + 4 * t.rank() + 4 * t.size());
    out.push_back(kVersion);
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.dims()) {
        if (d > std::numeric_limits<std::uint32_t>::max()) throw ValidationError("movt: extent exceeds u32");
        put_u32(out, static_cast<std::uint32_t>(d));
    }
    for (double v : t.data()) {
        const auto narrowed = static_cast<float>(v);
        if (!std::isfinite(narrowed)) throw NumericError("movt: value does not fit in float32");
        put_u32(out, std::bit_cast<std::uint32_t>(narrowed));
    }
    return out;
}

Tensor decode(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw ValidationError("movt: bad magic");
    }
    if (bytes[4] != kVersion) throw ValidationError("movt: unsupported version " + std::to_string(bytes[4]));
    const std::size_t rank = bytes[5];
    std::size_t at = 6;
    if (bytes.size() < at + 4 * rank) throw ValidationError("movt: truncated header");

    std::vector<std::size_t> dims(rank);
    std::size_t count = 1;
    for (auto& d : dims) {
        d = get_u32(bytes, at);
        at += 4;
        if (d == 0) throw ValidationError("movt: zero extent");
        count *= d;
    }
    if (bytes.size() != at + 4 * count) {
        throw ValidationError("movt: payload holds " + std::to_string(bytes.size() - at) + " bytes, expected " +
                              std::to_string(4 * count));
    }
    std::vector<double> data(count);
    for (auto& v : data) {
        v = static_cast<double>(std::bit_cast<float>(get_u32(bytes, at)));
        at += 4;
    }
    return Tensor(std::move(dims), std::move(data));
}

void save(const std::filesystem::path& path, const Tensor& t) {
    const auto bytes = encode(t);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("movt: cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("movt: write failed for " + path.string());
}

Tensor load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("movt: cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode(bytes);
}

}  // namespace mova::movt
