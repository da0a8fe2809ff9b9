// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic stand-ins for the frozen vision experts and the registry that
// describes the expert pool.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mova/numerics.hpp"

namespace mova {

struct Geometry {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    bool operator==(const Geometry&) const = default;
};

struct ExpertSpec {
    char letter = 'A';
    std::string name;
    std::string description;
    Geometry geometry;
    std::uint64_t seed = 0;

    bool operator==(const ExpertSpec&) const = default;
};

/// Immutable, validated expert pool. Letters run A, B, C, ... in order.
class ExpertRegistry {
public:
    static constexpr std::size_t kMaxExperts = 26;

    /// Throws ValidationError naming the offending expert.
    ExpertRegistry(Geometry base, std::vector<ExpertSpec> experts);

    const Geometry& base() const noexcept { return base_; }
    const std::vector<ExpertSpec>& experts() const noexcept { return experts_; }
    std::size_t size() const noexcept { return experts_.size(); }
    const ExpertSpec& operator[](std::size_t i) const { return experts_.at(i); }

    std::optional<std::size_t> find(const std::string& name) const;
    /// Index for a name; ValidationError when unknown.
    std::size_t index_of(const std::string& name) const;

    bool operator==(const ExpertRegistry&) const = default;

private:
    Geometry base_;
    std::vector<ExpertSpec> experts_;
};

/// The 7-expert desk pool: dinov2, codetr, sam, pix2struct, deplot, vary,
/// biomedclip with 16x4x4 features over an 8x8x8 base.
ExpertRegistry default_registry();

ExpertRegistry load_registry(const std::filesystem::path& path);
void save_registry(const ExpertRegistry& registry, const std::filesystem::path& path);
std::string registry_to_json(const ExpertRegistry& registry);
ExpertRegistry registry_from_json(const std::string& text);

struct Sample {
    std::string sample_id;
    std::uint64_t image_seed = 0;
    std::string question;
    std::vector<double> answer_vector;
    std::optional<std::string> planted_expert;

    bool operator==(const Sample&) const = default;
};

/// Seeded standard-normal map of the registry's base geometry.
FeatureMap generate_base_feature(const ExpertRegistry& registry, std::uint64_t image_seed);

/// Seeded noise of the expert's geometry. When planted, channel c < len(answer)
/// is shifted so its spatial mean equals answer[c].
FeatureMap generate_expert_feature(const ExpertSpec& spec, std::uint64_t image_seed, bool planted,
                                   const std::vector<double>& answer_vector);

/// Features for every registry expert for one sample (planting where named).
std::vector<FeatureMap> generate_all_expert_features(const ExpertRegistry& registry, const Sample& sample);

}  // namespace mova
