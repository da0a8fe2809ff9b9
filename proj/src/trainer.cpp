// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mova/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "mova/errors.hpp"

namespace mova {

std::string to_string(TrainScope scope) {
    switch (scope) {
        case TrainScope::gating: return "gating";
        case TrainScope::gating_extractor: return "gating+extractor";
        case TrainScope::full: return "full";
    }
    return "?";
}

TrainScope train_scope_from_string(const std::string& s) {
    for (auto k : {TrainScope::gating, TrainScope::gating_extractor, TrainScope::full}) {
        if (to_string(k) == s) return k;
    }
    throw ValidationError("unknown training scope '" + s + "' (expected gating, gating+extractor or full)");
}

std::set<ParamScope> param_scopes(TrainScope scope) {
    switch (scope) {
        case TrainScope::gating: return {ParamScope::gating};
        case TrainScope::gating_extractor: return {ParamScope::gating, ParamScope::extractor};
        case TrainScope::full:
            return {ParamScope::gating, ParamScope::extractor, ParamScope::transformer, ParamScope::reduction,
                    ParamScope::projector};
    }
    return {};
}

double pooled_mse(const Matrix& tokens, const std::vector<double>& target, Matrix* d_tokens) {
    const std::size_t m = target.size();
    if (m == 0 || m > tokens.cols()) {
        throw ShapeError("pooled_mse: target length " + std::to_string(m) + " vs token width " +
                         std::to_string(tokens.cols()));
    }
    const double inv_p = 1.0 / static_cast<double>(tokens.rows());
    std::vector<double> diff(m, 0.0);
    for (std::size_t p = 0; p < tokens.rows(); ++p) {
        for (std::size_t i = 0; i < m; ++i) diff[i] += tokens(p, i);
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        diff[i] = diff[i] * inv_p - target[i];
        loss += diff[i] * diff[i];
    }
    loss /= static_cast<double>(m);
    if (d_tokens) {
        *d_tokens = Matrix(tokens.rows(), tokens.cols());
        for (std::size_t p = 0; p < tokens.rows(); ++p) {
            for (std::size_t i = 0; i < m; ++i) (*d_tokens)(p, i) = 2.0 * diff[i] * inv_p / static_cast<double>(m);
        }
    }
    return loss;
}

PreparedSample prepare_sample(const ExpertRegistry& registry, const Sample& sample, const ExpertSelection& selection,
                              std::size_t text_dim) {
    selection.validate(registry.size());
    PreparedSample out;
    out.sample = sample;
    out.base = generate_base_feature(registry, sample.image_seed);
    auto features = generate_all_expert_features(registry, sample);
    for (auto i : selection.indices) out.experts.emplace(i, std::move(features[i]));
    out.text = encode_text(sample.question, text_dim);
    out.selection = selection;
    return out;
}

double batch_loss(const AdapterParams& params, const AdapterConfig& config,
                  const std::vector<const PreparedSample*>& batch, AdapterParams* grad) {
    if (batch.empty()) throw ValidationError("batch_loss: empty batch");
    const double scale = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const auto* s : batch) {
        AdapterTrace trace;
        auto out = adapter_forward(s->base, s->experts, s->selection, s->text, params, config, grad ? &trace : nullptr);
        Matrix d_tokens;
        total += pooled_mse(out.tokens, s->sample.answer_vector, grad ? &d_tokens : nullptr);
        if (grad) {
            for (auto& v : d_tokens.data()) v *= scale;
            adapter_backward(trace, params, config, d_tokens, *grad);
        }
    }
    return total * scale;
}

namespace {

// Pool index of an extractor parameter named blocks.B.extractors.J.*
std::optional<std::size_t> extractor_index(const std::string& name) {
    const std::string tag = ".extractors.";
    auto pos = name.find(tag);
    if (pos == std::string::npos) return std::nullopt;
    return static_cast<std::size_t>(std::stoul(name.substr(pos + tag.size())));
}

std::vector<std::size_t> probe_coordinates(std::size_t size, std::size_t max_per_tensor) {
    std::vector<std::size_t> out;
    if (max_per_tensor == 0 || max_per_tensor >= size) {
        out.resize(size);
        for (std::size_t i = 0; i < size; ++i) out[i] = i;
        return out;
    }
    for (std::size_t k = 0; k < max_per_tensor; ++k) out.push_back(k * size / max_per_tensor);
    return out;
}

}  // namespace

GradCheckReport check_adapter_gradients(const AdapterParams& params, const AdapterConfig& config,
                                        const std::vector<const PreparedSample*>& batch,
                                        const GradCheckOptions& options) {
    std::set<std::size_t> routed;
    for (const auto* s : batch) routed.insert(s->selection.indices.begin(), s->selection.indices.end());

    AdapterParams grad = zeros_like(params);
    batch_loss(params, config, batch, &grad);

    AdapterParams work = params;
    auto work_refs = param_refs(work);
    const auto grad_refs = param_refs(static_cast<const AdapterParams&>(grad));

    GradCheckReport total;
    total.op = "adapter";
    total.eps = options.eps;
    std::size_t offset = 0;
    for (std::size_t t = 0; t < work_refs.size(); ++t) {
        const auto& ref = work_refs[t];
        if (!options.scopes.count(ref.scope)) continue;
        if (options.routed_extractors_only && ref.scope == ParamScope::extractor) {
            auto j = extractor_index(ref.name);
            if (j && !routed.count(*j)) continue;
        }
        const auto coords = probe_coordinates(ref.value->size(), options.max_per_tensor);
        std::vector<double> base_values, analytic;
        for (auto c : coords) {
            base_values.push_back(ref.value->data()[c]);
            analytic.push_back(grad_refs[t].value->data()[c]);
        }
        Matrix* target = ref.value;
        auto fn = [&](const Tensor& probe) {
            const Matrix saved = *target;
            for (std::size_t k = 0; k < coords.size(); ++k) target->data()[coords[k]] = probe.data()[k];
            const double loss = batch_loss(work, config, batch);
            *target = saved;
            return loss;
        };
        const auto report = finite_diff_check(ref.name, Tensor({coords.size()}, base_values), fn,
                                              Tensor({coords.size()}, analytic), options.eps);
        if (report.max_relative_error > total.max_relative_error || total.compared == 0) {
            total.max_relative_error = std::max(total.max_relative_error, report.max_relative_error);
            total.op = ref.name;
            total.worst_index = offset + report.worst_index;
        }
        total.compared += report.compared;
        offset += coords.size();
    }
    return total;
}

EvalResult evaluate(const AdapterParams& params, const AdapterConfig& config,
                    const std::vector<const PreparedSample*>& samples, std::size_t pool_size) {
    EvalResult r;
    r.gate_means.assign(pool_size, 0.0);
    if (samples.empty()) return r;
    for (const auto* s : samples) {
        auto out = adapter_forward(s->base, s->experts, s->selection, s->text, params, config);
        r.loss += pooled_mse(out.tokens, s->sample.answer_vector);
        for (const auto& g : out.gates) {
            for (std::size_t k = 0; k < g.weights.size(); ++k) r.gate_means[s->selection.indices[k]] += g.weights[k];
        }
    }
    const double n = static_cast<double>(samples.size());
    r.loss /= n;
    for (auto& g : r.gate_means) g /= n * static_cast<double>(config.num_blocks);
    return r;
}

TrainReport train_toy(const ToyTrainConfig& config, const ExpertRegistry& registry, const std::vector<Sample>& samples,
                      const SelectionPolicy& policy) {
    const auto started = std::chrono::steady_clock::now();
    config.adapter.validate();
    if (samples.empty()) throw ValidationError("train_toy: no samples");
    if (!(config.learning_rate >= 0.0) || !std::isfinite(config.learning_rate)) {
        throw ValidationError("train_toy: learning rate must be finite and >= 0");
    }
    if (!(config.eval_fraction >= 0.0 && config.eval_fraction < 1.0)) {
        throw ValidationError("train_toy: eval_fraction must lie in [0, 1)");
    }

    std::vector<PreparedSample> prepared;
    prepared.reserve(samples.size());
    for (const auto& s : samples) prepared.push_back(prepare_sample(registry, s, policy(s), config.adapter.text_dim));

    const std::size_t n = prepared.size();
    std::size_t n_eval = static_cast<std::size_t>(std::llround(config.eval_fraction * static_cast<double>(n)));
    if (config.eval_fraction > 0.0) n_eval = std::max<std::size_t>(n_eval, 1);
    std::vector<const PreparedSample*> train, eval;
    if (n_eval >= n) {
        for (const auto& p : prepared) train.push_back(&p);
        eval = train;
    } else {
        for (std::size_t i = 0; i < n - n_eval; ++i) train.push_back(&prepared[i]);
        for (std::size_t i = n - n_eval; i < n; ++i) eval.push_back(&prepared[i]);
    }
    if (eval.empty()) eval = train;

    const std::size_t batch = config.batch_size == 0 ? train.size() : std::min(config.batch_size, train.size());
    const std::vector<const PreparedSample*> monitor(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(batch));

    TrainReport report;
    report.params = init_params(config.adapter, registry, config.seed);
    const auto scopes = param_scopes(config.scope);

    GradCheckOptions gc;
    gc.scopes = scopes;
    gc.eps = config.gradcheck_eps;
    gc.max_per_tensor = config.gradcheck_probes;
    report.gradcheck = check_adapter_gradients(report.params, config.adapter, {train.front()}, gc);
    if (report.gradcheck.max_relative_error > config.gradcheck_tol) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "gradient check failed on %s: relative error %.3e > %.1e",
                      report.gradcheck.op.c_str(), report.gradcheck.max_relative_error, config.gradcheck_tol);
        throw TrainingError(0, buf);
    }

    std::size_t cursor = 0;
    for (std::size_t step = 0; step < config.steps; ++step) {
        std::vector<const PreparedSample*> current;
        for (std::size_t b = 0; b < batch; ++b) current.push_back(train[(cursor + b) % train.size()]);
        cursor = (cursor + batch) % train.size();

        AdapterParams grad = zeros_like(report.params);
        const double loss = batch_loss(report.params, config.adapter, current, &grad);
        const double monitored = current == monitor ? loss : batch_loss(report.params, config.adapter, monitor);
        if (!std::isfinite(loss) || !std::isfinite(monitored)) throw TrainingError(step, "loss is not finite");
        report.loss_trace.push_back(monitored);

        auto p_refs = param_refs(report.params);
        const auto g_refs = param_refs(static_cast<const AdapterParams&>(grad));
        for (std::size_t t = 0; t < p_refs.size(); ++t) {
            if (!scopes.count(p_refs[t].scope)) continue;
            auto dst = p_refs[t].value->data();
            const auto src = g_refs[t].value->data();
            for (std::size_t i = 0; i < dst.size(); ++i) {
                dst[i] -= config.learning_rate * src[i];
                if (!std::isfinite(dst[i])) throw TrainingError(step, "parameter " + p_refs[t].name + " diverged");
            }
        }
    }

    const auto result = evaluate(report.params, config.adapter, eval, registry.size());
    if (!std::isfinite(result.loss)) throw TrainingError(config.steps, "evaluation loss is not finite");
    report.eval_loss = result.loss;
    for (std::size_t j = 0; j < registry.size(); ++j) report.gate_means.push_back({registry[j].name, result.gate_means[j]});
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

std::string train_report_to_json(const TrainReport& report, bool include_timing) {
    nlohmann::ordered_json j;
    j["loss_trace"] = report.loss_trace;
    j["eval_loss"] = report.eval_loss;
    j["gate_means"] = nlohmann::ordered_json::object();
    for (const auto& g : report.gate_means) j["gate_means"][g.expert] = g.mean_weight;
    j["gradcheck"] = {{"max_relative_error", report.gradcheck.max_relative_error},
                      {"compared", report.gradcheck.compared},
                      {"eps", report.gradcheck.eps},
                      {"worst", report.gradcheck.op}};
    if (include_timing) j["wall_clock_seconds"] = report.wall_clock_seconds;
    return j.dump(2);
}

}  // namespace mova
