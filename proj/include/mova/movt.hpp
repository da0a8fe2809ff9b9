// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// MOVT binary tensor files:
//   "MOVT" | version u8 (=1) | rank u8 | rank x u32 LE extents | f32 LE values
// Values are narrowed to float on save and widened to double on load.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mova/numerics.hpp"

namespace mova::movt {

inline constexpr std::uint8_t kMagic[4] = {0x4D, 0x4F, 0x56, 0x54};
inline constexpr std::uint8_t kVersion = 0x01;

std::vector<std::uint8_t> encode(const Tensor& t);
Tensor decode(std::span<const std::uint8_t> bytes);

void save(const std::filesystem::path& path, const Tensor& t);
Tensor load(const std::filesystem::path& path);

}  // namespace mova::movt
