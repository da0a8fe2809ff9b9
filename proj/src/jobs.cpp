// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mova/jobs.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mova/errors.hpp"

namespace mova {

using nlohmann::json;

ToyJob concentration_job() {
    ToyJob job;
    job.train.steps = 500;
    job.train.learning_rate = 0.05;
    job.train.batch_size = 8;
    job.train.seed = 42;
    job.train.scope = TrainScope::full;
    job.synthetic.num_samples = 40;
    job.synthetic.seed = 42;
    job.synthetic.noise = 0.0;
    job.synthetic.planted_override = "pix2struct";
    job.selection = std::vector<std::string>{"dinov2", "pix2struct"};
    return job;
}

ToyJob ablation_job() {
    ToyJob job = concentration_job();
    job.train.steps = 300;
    job.synthetic.num_samples = 120;
    job.synthetic.noise = 0.1;
    job.synthetic.planted_override.reset();
    job.selection.reset();
    return job;
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) throw ValidationError(where + ": unknown key '" + it.key() + "'");
    }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(where + ": '" + key + "' has the wrong type");
    }
}

}  // namespace

ToyJob toy_job_from_json(const std::string& text, const std::filesystem::path& base_dir, const ToyJob& defaults) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("toy job: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("toy job: expected an object");
    reject_unknown(j,
                   {"steps", "learning_rate", "batch_size", "seed", "scope", "eval_fraction", "gradcheck_eps",
                    "gradcheck_tol", "gradcheck_probes", "adapter", "corpus", "synthetic", "selection", "cap",
                    "routing_seed"},
                   "toy job");
    ToyJob job = defaults;
    const std::string where = "toy job";
    read_field(j, "steps", job.train.steps, where);
    read_field(j, "learning_rate", job.train.learning_rate, where);
    read_field(j, "batch_size", job.train.batch_size, where);
    read_field(j, "seed", job.train.seed, where);
    read_field(j, "eval_fraction", job.train.eval_fraction, where);
    read_field(j, "gradcheck_eps", job.train.gradcheck_eps, where);
    read_field(j, "gradcheck_tol", job.train.gradcheck_tol, where);
    read_field(j, "gradcheck_probes", job.train.gradcheck_probes, where);
    read_field(j, "cap", job.cap, where);
    read_field(j, "routing_seed", job.routing_seed, where);
    if (j.contains("scope")) {
        std::string scope;
        read_field(j, "scope", scope, where);
        job.train.scope = train_scope_from_string(scope);
    }
    if (j.contains("adapter")) job.train.adapter = config_from_json(j["adapter"].dump());
    if (j.contains("corpus")) {
        std::string p;
        read_field(j, "corpus", p, where);
        std::filesystem::path path(p);
        job.corpus = path.is_absolute() ? path : base_dir / path;
    }
    if (j.contains("synthetic")) {
        const auto& s = j["synthetic"];
        if (!s.is_object()) throw ValidationError("toy job: 'synthetic' must be an object");
        reject_unknown(s, {"samples", "seed", "noise", "planted", "answer_dim"}, "toy job synthetic");
        read_field(s, "samples", job.synthetic.num_samples, where);
        read_field(s, "seed", job.synthetic.seed, where);
        read_field(s, "noise", job.synthetic.noise, where);
        read_field(s, "answer_dim", job.synthetic.answer_dim, where);
        if (s.contains("planted")) {
            if (s["planted"].is_null()) {
                job.synthetic.planted_override.reset();
            } else {
                std::string planted;
                read_field(s, "planted", planted, where);
                job.synthetic.planted_override = planted;
            }
        }
    }
    if (j.contains("selection")) {
        if (j["selection"].is_null()) {
            job.selection.reset();
        } else {
            std::vector<std::string> names;
            read_field(j, "selection", names, where);
            job.selection = names;
        }
    }
    if (job.train.steps == 0) throw ValidationError("toy job: steps must be >= 1");
    if (job.cap == 0) throw ValidationError("toy job: cap must be >= 1");
    return job;
}

ToyJob load_toy_job(const std::filesystem::path& path, const ToyJob& defaults) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return toy_job_from_json(ss.str(), path.parent_path(), defaults);
}

SyntheticCorpus resolve_corpus(const ToyJob& job, const ExpertRegistry& registry) {
    if (!job.corpus) return make_synthetic_corpus(registry, job.synthetic);
    SyntheticCorpus c;
    c.samples = read_samples(*job.corpus / "samples.jsonl");
    if (std::filesystem::exists(*job.corpus / "losses.jsonl")) c.losses = read_losses(*job.corpus / "losses.jsonl");
    if (std::filesystem::exists(*job.corpus / "ground_truth.jsonl")) {
        c.ground_truth = read_ground_truth(*job.corpus / "ground_truth.jsonl");
    }
    return c;
}

TrainReport run_toy_job(const ToyJob& job, const ExpertRegistry& registry) {
    const auto corpus = resolve_corpus(job, registry);
    if (job.selection) {
        ExpertSelection fixed;
        for (const auto& name : *job.selection) fixed.indices.push_back(registry.index_of(name));
        fixed.validate(registry.size());
        return train_toy(job.train, registry, corpus.samples, [&](const Sample&) { return fixed; });
    }
    std::map<std::string, const LossRecord*> losses;
    for (const auto& r : corpus.losses) losses[r.sample_id] = &r;
    return train_toy(job.train, registry, corpus.samples, [&](const Sample& s) {
        auto it = losses.find(s.sample_id);
        if (it == losses.end()) {
            throw ValidationError("toy job: oracle routing needs a loss record for sample '" + s.sample_id + "'");
        }
        it->second->validate(registry.size());
        return construct_routing_set(*it->second, job.cap);
    });
}

std::vector<AblationEntry> run_ablation_job(const ToyJob& job, const std::vector<AblationMode>& modes,
                                            const ExpertRegistry& registry) {
    AblationConfig config;
    config.train = job.train;
    config.cap = job.cap;
    config.routing_seed = job.routing_seed;
    return run_ablation(modes, registry, resolve_corpus(job, registry), config);
}

GradCheckReport desk_gradcheck(double eps, std::uint64_t seed, std::size_t max_per_tensor) {
    const auto registry = default_registry();
    const auto config = desk_config();
    SyntheticOptions opt;
    opt.num_samples = 1;
    opt.seed = seed;
    opt.planted_override = "pix2struct";
    const auto corpus = make_synthetic_corpus(registry, opt);
    const ExpertSelection selection{{registry.index_of("dinov2"), registry.index_of("pix2struct")}};
    const auto prepared = prepare_sample(registry, corpus.samples.front(), selection, config.text_dim);
    GradCheckOptions gc;
    gc.scopes = {ParamScope::gating, ParamScope::extractor, ParamScope::projector};
    gc.eps = eps;
    gc.max_per_tensor = max_per_tensor;
    return check_adapter_gradients(init_params(config, registry, seed), config, {&prepared}, gc);
}

}  // namespace mova
