// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mova/experts.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mova/errors.hpp"
#include "mova/rng.hpp"

namespace mova {

using nlohmann::json;

namespace {

constexpr std::uint64_t kBaseEncoderSalt = 0xC11B5EEDULL;

void check_geometry(const Geometry& g, const std::string& who) {
    if (g.channels == 0 || g.height == 0 || g.width == 0) {
        throw ValidationError(who + ": channels, height and width must all be >= 1");
    }
}

}  // namespace

ExpertRegistry::ExpertRegistry(Geometry base, std::vector<ExpertSpec> experts)
    : base_(base), experts_(std::move(experts)) {
    check_geometry(base_, "base encoder");
    if (experts_.empty()) throw ValidationError("registry: at least one expert is required");
    if (experts_.size() > kMaxExperts) {
        throw ValidationError("registry: " + std::to_string(experts_.size()) + " experts exceed the limit of 26");
    }
    std::set<std::string> names;
    std::set<char> letters;
    for (std::size_t i = 0; i < experts_.size(); ++i) {
        const auto& e = experts_[i];
        const std::string who = "expert #" + std::to_string(i) + " (" + (e.name.empty() ? "<unnamed>" : e.name) + ")";
        if (e.name.empty()) throw ValidationError(who + ": empty name");
        if (e.description.empty()) throw ValidationError(who + ": empty description");
        if (!names.insert(e.name).second) throw ValidationError(who + ": duplicate name");
        if (!letters.insert(e.letter).second) {
            throw ValidationError(who + ": duplicate letter " + std::string(1, e.letter));
        }
        const char expected = static_cast<char>('A' + i);
        if (e.letter != expected) {
            throw ValidationError(who + ": letter " + std::string(1, e.letter) + " breaks the A.. sequence, expected " +
                                  std::string(1, expected));
        }
        check_geometry(e.geometry, who);
    }
}

std::optional<std::size_t> ExpertRegistry::find(const std::string& name) const {
    for (std::size_t i = 0; i < experts_.size(); ++i) {
        if (experts_[i].name == name) return i;
    }
    return std::nullopt;
}

std::size_t ExpertRegistry::index_of(const std::string& name) const {
    if (auto i = find(name)) return *i;
    throw ValidationError("registry: unknown expert '" + name + "'");
}

ExpertRegistry default_registry() {
    struct Entry {
        const char* name;
        const char* description;
    };
    // Placeholder descriptions; users are expected to edit these in experts.json.
    static const Entry entries[] = {
        {"dinov2", "DINOv2: general visual features for fine-grained object and spatial understanding."},
        {"codetr", "Co-DETR: object detection, localization and counting of everyday objects."},
        {"sam", "SAM: image segmentation and precise object boundaries."},
        {"pix2struct", "Pix2Struct: screenshots, documents and reading text in natural images."},
        {"deplot", "Deplot: charts and plots, extracting the underlying table of values."},
        {"vary", "Vary: dense document OCR, long text and formulas."},
        {"biomedclip", "BiomedCLIP: biomedical and medical images such as scans and microscopy."},
    };
    std::vector<ExpertSpec> experts;
    for (std::size_t i = 0; i < std::size(entries); ++i) {
        experts.push_back({static_cast<char>('A' + i), entries[i].name, entries[i].description, {16, 4, 4},
                           1000 + static_cast<std::uint64_t>(i)});
    }
    return ExpertRegistry({8, 8, 8}, std::move(experts));
}

// ---------------------------------------------------------------- json

namespace {

template <typename T>
T field(const json& j, const char* key, const std::string& who) {
    if (!j.contains(key)) throw ValidationError(who + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(who + ": malformed field '" + key + "'");
    }
}

std::size_t extent(const json& j, const char* key, const std::string& who) {
    const auto v = field<std::int64_t>(j, key, who);
    if (v < 1) throw ValidationError(who + ": field '" + key + "' must be >= 1");
    return static_cast<std::size_t>(v);
}

}  // namespace

std::string registry_to_json(const ExpertRegistry& registry) {
    json doc;
    doc["base"] = {{"channels", registry.base().channels},
                   {"height", registry.base().height},
                   {"width", registry.base().width}};
    doc["experts"] = json::array();
    for (const auto& e : registry.experts()) {
        doc["experts"].push_back({{"letter", std::string(1, e.letter)},
                                  {"name", e.name},
                                  {"description", e.description},
                                  {"channels", e.geometry.channels},
                                  {"height", e.geometry.height},
                                  {"width", e.geometry.width},
                                  {"seed", e.seed}});
    }
    return doc.dump(2) + "\n";
}

ExpertRegistry registry_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("experts.json: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("base") || !doc.contains("experts") || !doc["experts"].is_array()) {
        throw ValidationError("experts.json: expected {\"base\": {...}, \"experts\": [...]}");
    }
    const auto& b = doc["base"];
    Geometry base{extent(b, "channels", "base"), extent(b, "height", "base"), extent(b, "width", "base")};

    std::vector<ExpertSpec> experts;
    for (std::size_t i = 0; i < doc["experts"].size(); ++i) {
        const auto& e = doc["experts"][i];
        std::string who = "expert #" + std::to_string(i);
        if (e.contains("name") && e["name"].is_string()) who += " (" + e["name"].get<std::string>() + ")";
        const auto letter = field<std::string>(e, "letter", who);
        if (letter.size() != 1 || letter[0] < 'A' || letter[0] > 'Z') {
            throw ValidationError(who + ": letter must be a single uppercase character");
        }
        const auto seed = field<std::uint64_t>(e, "seed", who);
        experts.push_back({letter[0], field<std::string>(e, "name", who), field<std::string>(e, "description", who),
                           {extent(e, "channels", who), extent(e, "height", who), extent(e, "width", who)}, seed});
    }
    return ExpertRegistry(base, std::move(experts));
}

ExpertRegistry load_registry(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return registry_from_json(ss.str());
}

void save_registry(const ExpertRegistry& registry, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << registry_to_json(registry);
}

// ---------------------------------------------------------------- features

FeatureMap generate_base_feature(const ExpertRegistry& registry, std::uint64_t image_seed) {
    const auto& g = registry.base();
    Rng rng(combine_seeds(kBaseEncoderSalt, image_seed));
    return FeatureMap(g.channels, g.height, g.width, normal_draws(rng, g.channels * g.height * g.width));
}

FeatureMap generate_expert_feature(const ExpertSpec& spec, std::uint64_t image_seed, bool planted,
                                   const std::vector<double>& answer_vector) {
    const auto& g = spec.geometry;
    if (planted && answer_vector.size() > g.channels) {
        throw ValidationError("expert " + spec.name + ": answer vector of length " +
                              std::to_string(answer_vector.size()) + " exceeds capacity of " +
                              std::to_string(g.channels) + " channels");
    }
    Rng rng(combine_seeds(spec.seed, image_seed));
    FeatureMap f(g.channels, g.height, g.width, normal_draws(rng, g.channels * g.height * g.width));
    if (!planted) return f;

    const auto means = global_avg_pool(f);
    const std::size_t hw = g.height * g.width;
    for (std::size_t c = 0; c < answer_vector.size(); ++c) {
        const double shift = answer_vector[c] - means[c];
        double* ch = f.data().data() + c * hw;
        for (std::size_t p = 0; p < hw; ++p) ch[p] += shift;
    }
    return f;
}

std::vector<FeatureMap> generate_all_expert_features(const ExpertRegistry& registry, const Sample& sample) {
    std::vector<FeatureMap> out;
    out.reserve(registry.size());
    for (const auto& spec : registry.experts()) {
        const bool planted = sample.planted_expert && *sample.planted_expert == spec.name;
        out.push_back(generate_expert_feature(spec, sample.image_seed, planted, sample.answer_vector));
    }
    return out;
}

}  // namespace mova
