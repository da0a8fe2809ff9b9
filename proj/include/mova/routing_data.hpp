// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Offline routing annotations: an expert is useful for a sample when the
// model built on it reaches a strictly lower loss than the base-encoder
// model. At most `cap` experts (lowest loss first) are kept.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mova/experts.hpp"
#include "mova/selection.hpp"

namespace mova {

inline constexpr std::size_t kDefaultRoutingCap = 3;

struct LossRecord {
    std::string sample_id;
    double base_loss = 0.0;
    std::vector<double> expert_losses;  // registry order

    /// ValidationError on negative/non-finite losses or a length other than n_experts.
    void validate(std::size_t n_experts) const;

    bool operator==(const LossRecord&) const = default;
};

struct RoutingAnnotation {
    std::string sample_id;
    std::vector<std::string> experts;

    bool operator==(const RoutingAnnotation&) const = default;
};

struct GroundTruth {
    std::string sample_id;
    std::string planted;

    bool operator==(const GroundTruth&) const = default;
};

/// Indices j with loss_j < base_loss, lowest loss first (ties by index),
/// truncated to cap. Empty when nothing beats the base.
ExpertSelection construct_routing_set(const LossRecord& record, std::size_t cap = kDefaultRoutingCap);

RoutingAnnotation construct_routing_annotation(const LossRecord& record, const ExpertRegistry& registry,
                                               std::size_t cap = kDefaultRoutingCap);

/// Registry indices of an annotation's expert names, in annotation order.
ExpertSelection annotation_selection(const RoutingAnnotation& annotation, const ExpertRegistry& registry);

// ---------------------------------------------------------------- JSONL

std::string to_jsonl_line(const LossRecord& r);
std::string to_jsonl_line(const RoutingAnnotation& a);
std::string to_jsonl_line(const GroundTruth& g);
std::string to_jsonl_line(const Sample& s);

/// Readers report the 1-based line number of the first bad line. Blank lines
/// are skipped.
std::vector<LossRecord> read_losses(const std::filesystem::path& path);
std::vector<RoutingAnnotation> read_annotations(const std::filesystem::path& path);
std::vector<GroundTruth> read_ground_truth(const std::filesystem::path& path);
std::vector<Sample> read_samples(const std::filesystem::path& path);

template <typename Record>
void write_jsonl(const std::filesystem::path& path, const std::vector<Record>& records);

/// One annotation line per loss record, in input order. Returns the count.
std::size_t build_annotations(const std::filesystem::path& losses_path, const ExpertRegistry& registry,
                              std::size_t cap, const std::filesystem::path& out_path);

/// Fraction of samples whose annotation contains the planted expert. Both
/// lists must cover the same sample ids.
double score_routing_accuracy(const std::vector<RoutingAnnotation>& annotations,
                              const std::vector<GroundTruth>& ground_truth);

// ---------------------------------------------------------------- synthetic corpus

struct SyntheticOptions {
    std::size_t num_samples = 200;
    std::uint64_t seed = 0;
    double noise = 0.0;
    std::size_t answer_dim = 4;
    /// Plant every sample in this expert instead of a random one.
    std::optional<std::string> planted_override;
};

struct SyntheticCorpus {
    std::vector<Sample> samples;
    std::vector<LossRecord> losses;
    std::vector<GroundTruth> ground_truth;
};

struct CorpusManifest {
    std::filesystem::path samples;
    std::filesystem::path losses;
    std::filesystem::path ground_truth;
    std::size_t count = 0;
};

/// Plants each sample's answer in one expert and scores every model (base and
/// experts) by the residual of a least-squares probe from its pooled features
/// to the answer, plus seeded noise of scale `noise` (clamped at 0).
SyntheticCorpus make_synthetic_corpus(const ExpertRegistry& registry, const SyntheticOptions& options);

CorpusManifest generate_synthetic_corpus(const ExpertRegistry& registry, const SyntheticOptions& options,
                                         const std::filesystem::path& out_dir);

/// Affine least-squares probe: target ≈ [features, 1]·weights. Minimum-norm
/// solution when under-determined.
class LinearProbe {
public:
    static LinearProbe fit(const std::vector<std::vector<double>>& features,
                           const std::vector<std::vector<double>>& targets);

    std::vector<double> predict(const std::vector<double>& features) const;
    /// Mean squared error over the target dimensions.
    double residual(const std::vector<double>& features, const std::vector<double>& target) const;

private:
    std::size_t in_ = 0;
    std::size_t out_ = 0;
    std::vector<double> weights_;  // (in + 1) x out, row-major
};

}  // namespace mova
