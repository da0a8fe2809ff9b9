// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mova/routing_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <Eigen/Dense>
#include <json.hpp>

#include "mova/errors.hpp"
#include "mova/rng.hpp"

namespace mova {

using ojson = nlohmann::ordered_json;

void LossRecord::validate(std::size_t n_experts) const {
    if (expert_losses.size() != n_experts) {
        throw ValidationError("sample " + sample_id + ": " + std::to_string(expert_losses.size()) +
                              " expert losses for a pool of " + std::to_string(n_experts));
    }
    auto ok = [](double v) { return std::isfinite(v) && v >= 0.0; };
    if (!ok(base_loss)) throw ValidationError("sample " + sample_id + ": base loss must be finite and >= 0");
    for (std::size_t j = 0; j < expert_losses.size(); ++j) {
        if (!ok(expert_losses[j])) {
            throw ValidationError("sample " + sample_id + ": expert loss #" + std::to_string(j) +
                                  " must be finite and >= 0");
        }
    }
}

ExpertSelection construct_routing_set(const LossRecord& record, std::size_t cap) {
    if (cap == 0) throw ValidationError("routing cap must be >= 1");
    std::vector<std::size_t> useful;
    for (std::size_t j = 0; j < record.expert_losses.size(); ++j) {
        if (record.expert_losses[j] < record.base_loss) useful.push_back(j);
    }
    std::stable_sort(useful.begin(), useful.end(), [&](std::size_t a, std::size_t b) {
        return record.expert_losses[a] < record.expert_losses[b];
    });
    if (useful.size() > cap) useful.resize(cap);
    return {useful};
}

RoutingAnnotation construct_routing_annotation(const LossRecord& record, const ExpertRegistry& registry,
                                               std::size_t cap) {
    record.validate(registry.size());
    RoutingAnnotation out{record.sample_id, {}};
    for (auto j : construct_routing_set(record, cap).indices) out.experts.push_back(registry[j].name);
    return out;
}

ExpertSelection annotation_selection(const RoutingAnnotation& annotation, const ExpertRegistry& registry) {
    ExpertSelection sel;
    for (const auto& name : annotation.experts) sel.indices.push_back(registry.index_of(name));
    sel.validate(registry.size());
    return sel;
}

// ---------------------------------------------------------------- JSONL

std::string to_jsonl_line(const LossRecord& r) {
    ojson j;
    j["sample_id"] = r.sample_id;
    j["base_loss"] = r.base_loss;
    j["expert_losses"] = r.expert_losses;
    return j.dump();
}

std::string to_jsonl_line(const RoutingAnnotation& a) {
    ojson j;
    j["sample_id"] = a.sample_id;
    j["experts"] = a.experts;
    return j.dump();
}

std::string to_jsonl_line(const GroundTruth& g) {
    ojson j;
    j["sample_id"] = g.sample_id;
    j["planted"] = g.planted;
    return j.dump();
}

std::string to_jsonl_line(const Sample& s) {
    ojson j;
    j["sample_id"] = s.sample_id;
    j["image_seed"] = s.image_seed;
    j["question"] = s.question;
    j["answer_vector"] = s.answer_vector;
    if (s.planted_expert) j["planted"] = *s.planted_expert;
    return j.dump();
}

template <typename Record>
void write_jsonl(const std::filesystem::path& path, const std::vector<Record>& records) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    for (const auto& r : records) out << to_jsonl_line(r) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

template void write_jsonl(const std::filesystem::path&, const std::vector<LossRecord>&);
template void write_jsonl(const std::filesystem::path&, const std::vector<RoutingAnnotation>&);
template void write_jsonl(const std::filesystem::path&, const std::vector<GroundTruth>&);
template void write_jsonl(const std::filesystem::path&, const std::vector<Sample>&);

namespace {

template <typename Parse>
auto read_lines(const std::filesystem::path& path, Parse parse) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<decltype(parse(ojson{}))> out;
    std::set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.filename().string() + ":" + std::to_string(lineno);
        try {
            auto record = parse(ojson::parse(line));
            if (!ids.insert(record.sample_id).second) {
                throw ValidationError("duplicate sample_id '" + record.sample_id + "'");
            }
            out.push_back(std::move(record));
        } catch (const ojson::exception& e) {
            throw ValidationError(where + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(where + ": " + e.what());
        }
    }
    return out;
}

}  // namespace

std::vector<LossRecord> read_losses(const std::filesystem::path& path) {
    return read_lines(path, [](const ojson& j) {
        LossRecord r{j.at("sample_id").get<std::string>(), j.at("base_loss").get<double>(),
                     j.at("expert_losses").get<std::vector<double>>()};
        r.validate(r.expert_losses.size());
        return r;
    });
}

std::vector<RoutingAnnotation> read_annotations(const std::filesystem::path& path) {
    return read_lines(path, [](const ojson& j) {
        return RoutingAnnotation{j.at("sample_id").get<std::string>(), j.at("experts").get<std::vector<std::string>>()};
    });
}

std::vector<GroundTruth> read_ground_truth(const std::filesystem::path& path) {
    return read_lines(path, [](const ojson& j) {
        return GroundTruth{j.at("sample_id").get<std::string>(), j.at("planted").get<std::string>()};
    });
}

std::vector<Sample> read_samples(const std::filesystem::path& path) {
    return read_lines(path, [](const ojson& j) {
        Sample s;
        s.sample_id = j.at("sample_id").get<std::string>();
        s.image_seed = j.at("image_seed").get<std::uint64_t>();
        s.question = j.at("question").get<std::string>();
        s.answer_vector = j.at("answer_vector").get<std::vector<double>>();
        if (j.contains("planted")) s.planted_expert = j.at("planted").get<std::string>();
        return s;
    });
}

std::size_t build_annotations(const std::filesystem::path& losses_path, const ExpertRegistry& registry,
                              std::size_t cap, const std::filesystem::path& out_path) {
    std::ifstream in(losses_path);
    if (!in) throw IoError("cannot open " + losses_path.string());
    std::vector<RoutingAnnotation> annotations;
    std::set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = losses_path.filename().string() + ":" + std::to_string(lineno);
        try {
            const auto j = ojson::parse(line);
            LossRecord r{j.at("sample_id").get<std::string>(), j.at("base_loss").get<double>(),
                         j.at("expert_losses").get<std::vector<double>>()};
            r.validate(registry.size());
            if (!ids.insert(r.sample_id).second) throw ValidationError("duplicate sample_id '" + r.sample_id + "'");
            annotations.push_back(construct_routing_annotation(r, registry, cap));
        } catch (const ojson::exception& e) {
            throw ValidationError(where + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(where + ": " + e.what());
        }
    }
    write_jsonl(out_path, annotations);
    return annotations.size();
}

double score_routing_accuracy(const std::vector<RoutingAnnotation>& annotations,
                              const std::vector<GroundTruth>& ground_truth) {
    std::map<std::string, const RoutingAnnotation*> by_id;
    for (const auto& a : annotations) by_id[a.sample_id] = &a;
    if (by_id.size() != ground_truth.size() || annotations.size() != ground_truth.size()) {
        throw ValidationError("score: " + std::to_string(annotations.size()) + " annotations vs " +
                              std::to_string(ground_truth.size()) + " ground-truth records");
    }
    if (ground_truth.empty()) throw ValidationError("score: no samples");
    std::size_t hits = 0;
    for (const auto& g : ground_truth) {
        auto it = by_id.find(g.sample_id);
        if (it == by_id.end()) throw ValidationError("score: no annotation for sample '" + g.sample_id + "'");
        const auto& names = it->second->experts;
        if (std::find(names.begin(), names.end(), g.planted) != names.end()) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(ground_truth.size());
}

// ---------------------------------------------------------------- probe

LinearProbe LinearProbe::fit(const std::vector<std::vector<double>>& features,
                             const std::vector<std::vector<double>>& targets) {
    if (features.empty() || features.size() != targets.size()) {
        throw ValidationError("probe: need matching, non-empty feature and target rows");
    }
    LinearProbe p;
    p.in_ = features.front().size();
    p.out_ = targets.front().size();
    const auto n = static_cast<Eigen::Index>(features.size());
    Eigen::MatrixXd a(n, static_cast<Eigen::Index>(p.in_ + 1));
    Eigen::MatrixXd b(n, static_cast<Eigen::Index>(p.out_));
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& f = features[static_cast<std::size_t>(r)];
        const auto& t = targets[static_cast<std::size_t>(r)];
        if (f.size() != p.in_ || t.size() != p.out_) throw ValidationError("probe: ragged rows");
        for (std::size_t c = 0; c < p.in_; ++c) a(r, static_cast<Eigen::Index>(c)) = f[c];
        a(r, static_cast<Eigen::Index>(p.in_)) = 1.0;
        for (std::size_t c = 0; c < p.out_; ++c) b(r, static_cast<Eigen::Index>(c)) = t[c];
    }
    const Eigen::MatrixXd w = a.completeOrthogonalDecomposition().solve(b);
    p.weights_.resize((p.in_ + 1) * p.out_);
    for (std::size_t r = 0; r <= p.in_; ++r) {
        for (std::size_t c = 0; c < p.out_; ++c) {
            p.weights_[r * p.out_ + c] = w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        }
    }
    return p;
}

std::vector<double> LinearProbe::predict(const std::vector<double>& features) const {
    if (features.size() != in_) throw ShapeError("probe: feature length mismatch");
    std::vector<double> out(out_, 0.0);
    for (std::size_t c = 0; c < out_; ++c) {
        double acc = weights_[in_ * out_ + c];
        for (std::size_t r = 0; r < in_; ++r) acc += features[r] * weights_[r * out_ + c];
        out[c] = acc;
    }
    return out;
}

double LinearProbe::residual(const std::vector<double>& features, const std::vector<double>& target) const {
    const auto pred = predict(features);
    if (target.size() != out_) throw ShapeError("probe: target length mismatch");
    double acc = 0.0;
    for (std::size_t c = 0; c < out_; ++c) acc += (pred[c] - target[c]) * (pred[c] - target[c]);
    return acc / static_cast<double>(out_);
}

// ---------------------------------------------------------------- synthetic corpus

namespace {

const std::map<std::string, std::vector<std::string>>& question_templates() {
    static const std::map<std::string, std::vector<std::string>> templates = {
        {"dinov2", {"describe the objects and their spatial layout", "what is the animal on the left doing",
                    "which object is closer to the camera"}},
        {"codetr", {"how many people are in the picture", "locate the red car in the image",
                    "give the bounding box of the dog"}},
        {"sam", {"segment the person from the background", "outline the shape of the building",
                 "which region belongs to the table"}},
        {"pix2struct", {"where is the red sign and what does it say", "read the text on the screenshot",
                        "what does the web page header say"}},
        {"deplot", {"read the chart values", "what is the highest bar in the plot",
                    "summarise the trend in this line chart"}},
        {"vary", {"transcribe the document paragraph", "convert the formula on the page to latex",
                  "read the dense text of this receipt"}},
        {"biomedclip", {"is there a lesion in this scan", "what tissue type is shown in the microscopy image",
                        "describe the abnormality in the x-ray"}},
    };
    return templates;
}

std::string synthetic_question(const std::string& expert, Rng& rng) {
    const auto& table = question_templates();
    auto it = table.find(expert);
    if (it == table.end()) return "what does the " + expert + " expert see in this image";
    std::uniform_int_distribution<std::size_t> pick(0, it->second.size() - 1);
    return it->second[pick(rng)];
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(const ExpertRegistry& registry, const SyntheticOptions& options) {
    if (options.num_samples == 0) throw ValidationError("synthetic corpus: num_samples must be >= 1");
    if (!(options.noise >= 0.0) || !std::isfinite(options.noise)) {
        throw ValidationError("synthetic corpus: noise must be finite and >= 0");
    }
    std::optional<std::size_t> forced;
    if (options.planted_override) forced = registry.index_of(*options.planted_override);

    const std::size_t n = options.num_samples, experts = registry.size();
    Rng rng(combine_seeds(options.seed, 0x5A3D1EULL));
    std::uniform_int_distribution<std::size_t> pick_expert(0, experts - 1);
    std::normal_distribution<double> gauss(0.0, 1.0);

    SyntheticCorpus corpus;
    std::vector<std::size_t> planted(n);
    for (std::size_t i = 0; i < n; ++i) {
        planted[i] = forced ? *forced : pick_expert(rng);
        Sample s;
        char id[32];
        std::snprintf(id, sizeof id, "s%05zu", i);
        s.sample_id = id;
        s.image_seed = rng();
        s.question = synthetic_question(registry[planted[i]].name, rng);
        s.answer_vector.resize(options.answer_dim);
        for (auto& v : s.answer_vector) v = gauss(rng);
        s.planted_expert = registry[planted[i]].name;
        corpus.ground_truth.push_back({s.sample_id, registry[planted[i]].name});
        corpus.samples.push_back(std::move(s));
    }

    // pooled[m][i]: model m (0 = base, j+1 = expert j) pooled features for sample i.
    std::vector<std::vector<std::vector<double>>> pooled(experts + 1, std::vector<std::vector<double>>(n));
    std::vector<std::vector<double>> answers(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = corpus.samples[i];
        answers[i] = s.answer_vector;
        pooled[0][i] = global_avg_pool(generate_base_feature(registry, s.image_seed));
        for (std::size_t j = 0; j < experts; ++j) {
            pooled[j + 1][i] = global_avg_pool(
                generate_expert_feature(registry[j], s.image_seed, planted[i] == j, s.answer_vector));
        }
    }

    // Each expert model's probe is fit on its home samples (where its features
    // carry the answer); the base model and experts without home samples fit
    // on the whole corpus.
    std::vector<std::vector<double>> residuals(experts + 1, std::vector<double>(n));
    for (std::size_t m = 0; m <= experts; ++m) {
        std::vector<std::vector<double>> fx, fy;
        for (std::size_t i = 0; i < n; ++i) {
            if (m == 0 || planted[i] == m - 1) {
                fx.push_back(pooled[m][i]);
                fy.push_back(answers[i]);
            }
        }
        if (fx.empty()) {
            fx = pooled[m];
            fy = answers;
        }
        const auto probe = LinearProbe::fit(fx, fy);
        for (std::size_t i = 0; i < n; ++i) residuals[m][i] = probe.residual(pooled[m][i], answers[i]);
    }

    Rng noise_rng(combine_seeds(options.seed, 0x9015EULL));
    std::normal_distribution<double> noise_gauss(0.0, 1.0);
    auto observe = [&](double r) { return std::max(0.0, r + options.noise * noise_gauss(noise_rng)); };
    for (std::size_t i = 0; i < n; ++i) {
        LossRecord rec{corpus.samples[i].sample_id, observe(residuals[0][i]), {}};
        for (std::size_t j = 0; j < experts; ++j) rec.expert_losses.push_back(observe(residuals[j + 1][i]));
        corpus.losses.push_back(std::move(rec));
    }
    return corpus;
}

CorpusManifest generate_synthetic_corpus(const ExpertRegistry& registry, const SyntheticOptions& options,
                                         const std::filesystem::path& out_dir) {
    const auto corpus = make_synthetic_corpus(registry, options);
    std::filesystem::create_directories(out_dir);
    CorpusManifest m{out_dir / "samples.jsonl", out_dir / "losses.jsonl", out_dir / "ground_truth.jsonl",
                     corpus.samples.size()};
    write_jsonl(m.samples, corpus.samples);
    write_jsonl(m.losses, corpus.losses);
    write_jsonl(m.ground_truth, corpus.ground_truth);
    return m;
}

}  // namespace mova
