// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mova/adapter.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "mova/errors.hpp"
#include "mova/movt.hpp"
#include "mova/rng.hpp"

namespace mova {

using nlohmann::json;

// ---------------------------------------------------------------- config

std::string to_string(GatingMode mode) { return mode == GatingMode::dynamic ? "dynamic" : "uniform"; }

GatingMode gating_mode_from_string(const std::string& s) {
    if (s == "dynamic") return GatingMode::dynamic;
    if (s == "uniform") return GatingMode::uniform;
    throw ValidationError("gating_mode must be 'dynamic' or 'uniform', got '" + s + "'");
}

void AdapterConfig::validate() const {
    const std::pair<const char*, std::size_t> extents[] = {
        {"num_blocks", num_blocks}, {"hidden_dim", hidden_dim},       {"text_dim", text_dim},
        {"gating_hidden", gating_hidden}, {"ffn_expansion", ffn_expansion}, {"heads", heads},
        {"llm_dim", llm_dim}};
    for (const auto& [name, v] : extents) {
        if (v == 0) throw ValidationError(std::string("adapter config: ") + name + " must be >= 1");
    }
    if (hidden_dim % heads != 0) {
        throw ValidationError("adapter config: heads (" + std::to_string(heads) + ") must divide hidden_dim (" +
                              std::to_string(hidden_dim) + ")");
    }
}

AdapterConfig desk_config() { return AdapterConfig{}; }

std::string config_to_json(const AdapterConfig& c) {
    json j = {{"num_blocks", c.num_blocks},       {"hidden_dim", c.hidden_dim}, {"text_dim", c.text_dim},
              {"gating_hidden", c.gating_hidden}, {"ffn_expansion", c.ffn_expansion},
              {"heads", c.heads},                 {"llm_dim", c.llm_dim},
              {"gating_mode", to_string(c.gating_mode)}, {"seed", c.seed}};
    return j.dump(2) + "\n";
}

AdapterConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("adapter.json: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("adapter.json: expected an object");
    AdapterConfig c = desk_config();
    auto extent = [&](const char* key, std::size_t& out) {
        if (!j.contains(key)) return;
        if (!j[key].is_number_integer() || j[key].get<std::int64_t>() < 1) {
            throw ValidationError(std::string("adapter.json: '") + key + "' must be a positive integer");
        }
        out = j[key].get<std::size_t>();
    };
    extent("num_blocks", c.num_blocks);
    extent("hidden_dim", c.hidden_dim);
    extent("text_dim", c.text_dim);
    extent("gating_hidden", c.gating_hidden);
    extent("ffn_expansion", c.ffn_expansion);
    extent("heads", c.heads);
    extent("llm_dim", c.llm_dim);
    if (j.contains("gating_mode")) {
        if (!j["gating_mode"].is_string()) throw ValidationError("adapter.json: 'gating_mode' must be a string");
        c.gating_mode = gating_mode_from_string(j["gating_mode"].get<std::string>());
    }
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) throw ValidationError("adapter.json: 'seed' must be a non-negative integer");
        c.seed = j["seed"].get<std::uint64_t>();
    }
    c.validate();
    return c;
}

AdapterConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

// ---------------------------------------------------------------- parameter traversal

std::string to_string(ParamScope scope) {
    switch (scope) {
        case ParamScope::gating: return "gating";
        case ParamScope::extractor: return "extractor";
        case ParamScope::transformer: return "transformer";
        case ParamScope::reduction: return "reduction";
        case ParamScope::projector: return "projector";
    }
    return "?";
}

namespace {

template <typename Params, typename Fn>
void visit(Params& p, Fn&& fn) {
    auto linear = [&](const std::string& prefix, ParamScope scope, auto& l) {
        fn(prefix + ".weight", scope, l.weight);
        fn(prefix + ".bias", scope, l.bias);
    };
    auto norm = [&](const std::string& prefix, ParamScope scope, auto& n) {
        fn(prefix + ".scale", scope, n.scale);
        fn(prefix + ".offset", scope, n.offset);
    };
    auto attention = [&](const std::string& prefix, ParamScope scope, auto& a) {
        linear(prefix + ".query", scope, a.query);
        // Key bias only shifts each score row by a constant, which softmax
        // cancels; it is held at zero and not exposed as a parameter.
        fn(prefix + ".key.weight", scope, a.key.weight);
        linear(prefix + ".value", scope, a.value);
        linear(prefix + ".output", scope, a.output);
    };
    for (std::size_t b = 0; b < p.blocks.size(); ++b) {
        auto& block = p.blocks[b];
        const std::string pre = "blocks." + std::to_string(b);
        for (std::size_t j = 0; j < block.extractors.size(); ++j) {
            attention(pre + ".extractors." + std::to_string(j), ParamScope::extractor, block.extractors[j]);
        }
        linear(pre + ".gating.hidden", ParamScope::gating, block.gating.hidden);
        linear(pre + ".gating.logits", ParamScope::gating, block.gating.logits);
        attention(pre + ".transformer.attention", ParamScope::transformer, block.transformer.attention);
        norm(pre + ".transformer.norm1", ParamScope::transformer, block.transformer.norm1);
        linear(pre + ".transformer.ffn_in", ParamScope::transformer, block.transformer.ffn_in);
        linear(pre + ".transformer.ffn_out", ParamScope::transformer, block.transformer.ffn_out);
        norm(pre + ".transformer.norm2", ParamScope::transformer, block.transformer.norm2);
    }
    for (std::size_t r = 0; r < p.reduction.size(); ++r) {
        linear("reduction." + std::to_string(r) + ".fc1", ParamScope::reduction, p.reduction[r].fc1);
        linear("reduction." + std::to_string(r) + ".fc2", ParamScope::reduction, p.reduction[r].fc2);
    }
    linear("projector.in", ParamScope::projector, p.projector_in);
    linear("projector.out", ParamScope::projector, p.projector_out);
}

}  // namespace

std::vector<ParamRef> param_refs(AdapterParams& params) {
    std::vector<ParamRef> out;
    visit(params, [&](const std::string& name, ParamScope scope, Matrix& m) { out.push_back({name, scope, &m}); });
    return out;
}

std::vector<ConstParamRef> param_refs(const AdapterParams& params) {
    std::vector<ConstParamRef> out;
    visit(params,
          [&](const std::string& name, ParamScope scope, const Matrix& m) { out.push_back({name, scope, &m}); });
    return out;
}

std::size_t param_count(const AdapterParams& params) {
    std::size_t n = 0;
    for (const auto& r : param_refs(params)) n += r.value->size();
    return n;
}

AdapterParams zeros_like(const AdapterParams& params) {
    AdapterParams out = params;
    for (auto& r : param_refs(out)) {
        for (auto& v : r.value->data()) v = 0.0;
    }
    return out;
}

// ---------------------------------------------------------------- init

namespace {

class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : rng_(seed) {}

    Linear linear(std::size_t in, std::size_t out) {
        Linear l{Matrix(in, out, normal_draws(rng_, in * out, 1.0 / std::sqrt(static_cast<double>(in)))),
                 Matrix(1, out, 0.0)};
        return l;
    }
    static LayerNorm norm(std::size_t width) { return {Matrix(1, width, 1.0), Matrix(1, width, 0.0)}; }
    Attention attention(std::size_t query_in, std::size_t kv_in, std::size_t width) {
        Attention a;
        a.query = linear(query_in, width);
        a.key = linear(kv_in, width);
        a.value = linear(kv_in, width);
        a.output = linear(width, width);
        return a;
    }

private:
    Rng rng_;
};

}  // namespace

AdapterParams init_params(const AdapterConfig& config, const ExpertRegistry& registry, std::uint64_t seed) {
    config.validate();
    if (config.hidden_dim != registry.base().channels) {
        throw ValidationError("adapter hidden_dim " + std::to_string(config.hidden_dim) +
                              " does not match base encoder channels " + std::to_string(registry.base().channels));
    }
    const std::size_t c = config.hidden_dim;
    Initializer init(seed);
    AdapterParams p;
    p.blocks.reserve(config.num_blocks);
    for (std::size_t b = 0; b < config.num_blocks; ++b) {
        AdapterBlock block;
        for (const auto& e : registry.experts()) block.extractors.push_back(init.attention(c, e.geometry.channels, c));
        block.gating.hidden = init.linear(c + config.text_dim, config.gating_hidden);
        block.gating.logits = init.linear(config.gating_hidden, registry.size());
        block.transformer.attention = init.attention(c, c, c);
        block.transformer.norm1 = Initializer::norm(c);
        block.transformer.ffn_in = init.linear(c, c * config.ffn_expansion);
        block.transformer.ffn_out = init.linear(c * config.ffn_expansion, c);
        block.transformer.norm2 = Initializer::norm(c);
        p.blocks.push_back(std::move(block));
    }
    for (auto& r : p.reduction) {
        r.fc1 = init.linear(c, c);
        r.fc2 = init.linear(c, c);
    }
    p.projector_in = init.linear(c, config.llm_dim);
    p.projector_out = init.linear(config.llm_dim, config.llm_dim);
    return p;
}

// ---------------------------------------------------------------- persistence

void save_params(const AdapterParams& params, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["format"] = "MOVT";
    manifest["tensors"] = json::array();
    for (const auto& r : param_refs(params)) {
        const std::string file = r.name + ".movt";
        movt::save(dir / file, r.value->to_tensor());
        manifest["tensors"].push_back({{"name", r.name}, {"file", file}, {"dims", {r.value->rows(), r.value->cols()}}});
    }
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << "\n";
}

AdapterParams load_params(const std::filesystem::path& dir, const AdapterParams& shape) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("cannot open " + (dir / "manifest.json").string());
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("manifest.json: ") + e.what());
    }
    std::map<std::string, std::string> files;
    for (const auto& t : manifest.at("tensors")) files[t.at("name").get<std::string>()] = t.at("file").get<std::string>();

    AdapterParams out = shape;
    for (auto& r : param_refs(out)) {
        auto it = files.find(r.name);
        if (it == files.end()) throw ValidationError("manifest.json: missing parameter " + r.name);
        Matrix m = Matrix::from_tensor(movt::load(dir / it->second));
        if (m.rows() != r.value->rows() || m.cols() != r.value->cols()) {
            throw ShapeError("parameter " + r.name + " has dims [" + std::to_string(m.rows()) + "," +
                             std::to_string(m.cols()) + "], expected [" + std::to_string(r.value->rows()) + "," +
                             std::to_string(r.value->cols()) + "]");
        }
        *r.value = std::move(m);
    }
    return out;
}

// ---------------------------------------------------------------- token-space pieces

namespace {

std::vector<double> token_mean(const Matrix& tokens) {
    std::vector<double> out(tokens.cols(), 0.0);
    for (std::size_t c = 0; c < tokens.cols(); ++c) {
        double acc = 0.0;
        for (std::size_t p = 0; p < tokens.rows(); ++p) acc += tokens(p, c);
        out[c] = acc / static_cast<double>(tokens.rows());
    }
    return out;
}

Matrix concat_row(const std::vector<double>& a, const std::vector<double>& b) {
    Matrix m(1, a.size() + b.size());
    std::copy(a.begin(), a.end(), m.data().begin());
    std::copy(b.begin(), b.end(), m.data().begin() + static_cast<std::ptrdiff_t>(a.size()));
    return m;
}

Matrix pool_tokens_2x(const Matrix& x, std::size_t height, std::size_t width) {
    const std::size_t oh = height / 2, ow = width / 2;
    Matrix out(oh * ow, x.cols());
    for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t xx = 0; xx < ow; ++xx) {
            const std::size_t p00 = (2 * y) * width + 2 * xx, p01 = p00 + 1;
            const std::size_t p10 = (2 * y + 1) * width + 2 * xx, p11 = p10 + 1;
            for (std::size_t c = 0; c < x.cols(); ++c) {
                out(y * ow + xx, c) = (x(p00, c) + x(p01, c) + x(p10, c) + x(p11, c)) / 4.0;
            }
        }
    }
    return out;
}

Matrix unpool_tokens_2x(const Matrix& d_out, std::size_t height, std::size_t width) {
    const std::size_t ow = width / 2;
    Matrix dx(height * width, d_out.cols());
    for (std::size_t p = 0; p < height * width; ++p) {
        const std::size_t q = (p / width / 2) * ow + (p % width) / 2;
        for (std::size_t c = 0; c < d_out.cols(); ++c) dx(p, c) = d_out(q, c) / 4.0;
    }
    return dx;
}

Matrix transformer_tokens(const Matrix& x, const TransformerWeights& w, std::size_t heads, bool normalize,
                          TransformerTrace* t) {
    Matrix u = attention_forward(x, x, w.attention, heads, t ? &t->attention : nullptr);
    add_into(u, x);
    Matrix x1 = normalize ? layer_norm_forward(u, w.norm1, t ? &t->norm1 : nullptr) : u;
    Matrix pre = linear_forward(x1, w.ffn_in);
    Matrix act = gelu(pre);
    Matrix v = linear_forward(act, w.ffn_out);
    add_into(v, x1);
    Matrix out = normalize ? layer_norm_forward(v, w.norm2, t ? &t->norm2 : nullptr) : v;
    if (t) {
        t->x1 = std::move(x1);
        t->ffn_pre = std::move(pre);
        t->ffn_act = std::move(act);
    }
    return out;
}

Matrix transformer_tokens_backward(const TransformerTrace& t, const TransformerWeights& w, std::size_t heads,
                                   const Matrix& d_out, TransformerWeights& g) {
    Matrix dv = layer_norm_backward(t.norm2, w.norm2, d_out, g.norm2);
    const Matrix d_act = linear_backward(t.ffn_act, w.ffn_out, dv, g.ffn_out);
    const Matrix d_pre = gelu_backward(t.ffn_pre, d_act);
    add_into(dv, linear_backward(t.x1, w.ffn_in, d_pre, g.ffn_in));  // dv now holds d x1
    Matrix du = layer_norm_backward(t.norm1, w.norm1, dv, g.norm1);
    const auto att = attention_backward(t.attention, w.attention, heads, du, g.attention, true);
    add_into(du, att.query_in);
    add_into(du, att.kv_in);
    return du;
}

std::unique_ptr<bool[]> selection_mask(const ExpertSelection& selection, std::size_t pool) {
    auto mask = std::make_unique<bool[]>(pool);
    for (std::size_t i = 0; i < pool; ++i) mask[i] = false;
    for (auto j : selection.indices) mask[j] = true;
    return mask;
}

void check_selection(const ExpertSelection& selection, std::size_t pool) {
    if (selection.empty()) {
        throw RoutingError(RoutingError::Kind::routed_empty,
                           "gate_weights: empty selection; use the base-only path of adapter_forward");
    }
    selection.validate(pool);
}

std::vector<double> select_weights(const std::vector<double>& logits, const ExpertSelection& selection) {
    const auto mask = selection_mask(selection, logits.size());
    const auto probs = softmax(logits, std::span<const bool>(mask.get(), logits.size()));
    std::vector<double> w;
    w.reserve(selection.size());
    for (auto j : selection.indices) w.push_back(probs[j]);
    return w;
}

Matrix fuse_tokens(const std::vector<Matrix>& conditional, const std::vector<double>& weights) {
    Matrix out(conditional[0].rows(), conditional[0].cols());
    auto od = out.data();
    for (std::size_t k = 0; k < conditional.size(); ++k) {
        auto yd = conditional[k].data();
        const double w = weights[k];
        if (k == 0) {
            for (std::size_t i = 0; i < od.size(); ++i) od[i] = yd[i] * w;
        } else {
            for (std::size_t i = 0; i < od.size(); ++i) od[i] += yd[i] * w;
        }
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------- public operations

FeatureMap extract_expert_knowledge(const FeatureMap& x, const FeatureMap& expert_feature, const Attention& params,
                                    std::size_t heads) {
    if (x.channels() != params.query.weight.rows()) {
        throw ShapeError("extract_expert_knowledge: input has " + std::to_string(x.channels()) +
                         " channels, extractor expects " + std::to_string(params.query.weight.rows()));
    }
    if (expert_feature.channels() != params.key.weight.rows()) {
        throw ShapeError("extract_expert_knowledge: expert feature has " + std::to_string(expert_feature.channels()) +
                         " channels, extractor expects " + std::to_string(params.key.weight.rows()));
    }
    const FeatureMap aligned = bilinear_interpolate(expert_feature, x.height(), x.width());
    Matrix y = attention_forward(to_tokens(x), to_tokens(aligned), params, heads);
    add_into(y, to_tokens(x));
    return from_tokens(y, x.height(), x.width());
}

std::vector<double> gating_logits(const GatingInput& input, const GatingNetwork& params) {
    const Matrix z = concat_row(input.visual_token, input.text_token.values);
    if (z.cols() != params.hidden.weight.rows()) {
        throw ShapeError("gating: input width " + std::to_string(z.cols()) + " vs expected " +
                         std::to_string(params.hidden.weight.rows()));
    }
    const Matrix logits = linear_forward(gelu(linear_forward(z, params.hidden)), params.logits);
    return {logits.data().begin(), logits.data().end()};
}

GateWeights gate_weights(const GatingInput& input, const ExpertSelection& selection, const GatingNetwork& params,
                         GatingMode mode) {
    const std::size_t pool = params.logits.weight.cols();
    check_selection(selection, pool);
    if (mode == GatingMode::uniform) {
        return {std::vector<double>(selection.size(), 1.0 / static_cast<double>(selection.size()))};
    }
    return {select_weights(gating_logits(input, params), selection)};
}

FeatureMap fuse(const std::vector<FeatureMap>& conditional, const GateWeights& weights) {
    if (conditional.empty() || conditional.size() != weights.weights.size()) {
        throw ShapeError("fuse: " + std::to_string(conditional.size()) + " maps vs " +
                         std::to_string(weights.weights.size()) + " weights");
    }
    FeatureMap out(conditional[0].channels(), conditional[0].height(), conditional[0].width());
    auto od = out.data();
    for (std::size_t k = 0; k < conditional.size(); ++k) {
        if (conditional[k].dims() != conditional[0].dims()) throw ShapeError("fuse: conditional maps differ in dims");
        auto yd = conditional[k].data();
        const double w = weights.weights[k];
        if (k == 0) {
            for (std::size_t i = 0; i < od.size(); ++i) od[i] = yd[i] * w;
        } else {
            for (std::size_t i = 0; i < od.size(); ++i) od[i] += yd[i] * w;
        }
    }
    return out;
}

FeatureMap transformer_block(const FeatureMap& x, const TransformerWeights& params, std::size_t heads,
                             bool normalize) {
    if (x.channels() != params.attention.query.weight.rows()) {
        throw ShapeError("transformer_block: input has " + std::to_string(x.channels()) + " channels, block expects " +
                         std::to_string(params.attention.query.weight.rows()));
    }
    return from_tokens(transformer_tokens(to_tokens(x), params, heads, normalize, nullptr), x.height(), x.width());
}

AdapterOutput adapter_forward(const FeatureMap& base, const ExpertFeatures& expert_features,
                              const ExpertSelection& selection, const std::string& question,
                              const AdapterParams& params, const AdapterConfig& config) {
    return adapter_forward(base, expert_features, selection, encode_text(question, config.text_dim), params, config);
}

AdapterOutput adapter_forward(const FeatureMap& base, const ExpertFeatures& expert_features,
                              const ExpertSelection& selection, const TextToken& text_token,
                              const AdapterParams& params, const AdapterConfig& config, AdapterTrace* trace) {
    config.validate();
    if (params.blocks.size() != config.num_blocks) {
        throw ValidationError("adapter: parameters hold " + std::to_string(params.blocks.size()) + " blocks, config " +
                              std::to_string(config.num_blocks));
    }
    if (base.channels() != config.hidden_dim) {
        throw ShapeError("adapter: base feature has " + std::to_string(base.channels()) + " channels, hidden_dim is " +
                         std::to_string(config.hidden_dim));
    }
    if (base.height() % 2 != 0 || base.width() % 2 != 0) {
        throw ShapeError("adapter: base extents must be even, got " + std::to_string(base.height()) + "x" +
                         std::to_string(base.width()));
    }
    if (text_token.values.size() != config.text_dim) {
        throw ShapeError("adapter: text token length " + std::to_string(text_token.values.size()) + " vs text_dim " +
                         std::to_string(config.text_dim));
    }
    const std::size_t pool = params.blocks.front().extractors.size();
    selection.validate(pool);

    const std::size_t height = base.height(), width = base.width();
    // Resampling depends only on the expert feature and the base extent, so it
    // is shared by all blocks.
    std::vector<Matrix> aligned;
    aligned.reserve(selection.size());
    for (auto j : selection.indices) {
        auto it = expert_features.find(j);
        if (it == expert_features.end()) {
            throw RoutingError(RoutingError::Kind::feature_mismatch,
                               "adapter: no feature supplied for routed expert #" + std::to_string(j));
        }
        const std::size_t expected = params.blocks.front().extractors[j].key.weight.rows();
        if (it->second.channels() != expected) {
            throw ShapeError("adapter: expert #" + std::to_string(j) + " feature has " +
                             std::to_string(it->second.channels()) + " channels, extractor expects " +
                             std::to_string(expected));
        }
        aligned.push_back(to_tokens(bilinear_interpolate(it->second, height, width)));
    }

    if (trace) {
        trace->selection = selection;
        trace->height = height;
        trace->width = width;
        trace->blocks.assign(config.num_blocks, BlockTrace{});
    }

    AdapterOutput result;
    Matrix x = to_tokens(base);
    for (std::size_t b = 0; b < config.num_blocks; ++b) {
        const AdapterBlock& block = params.blocks[b];
        BlockTrace* bt = trace ? &trace->blocks[b] : nullptr;
        if (bt) bt->input = x;

        Matrix fused;
        if (selection.empty()) {
            fused = x;
            result.gates.push_back({});
        } else {
            std::vector<Matrix> conditional;
            conditional.reserve(selection.size());
            if (bt) bt->extract.resize(selection.size());
            for (std::size_t k = 0; k < selection.size(); ++k) {
                Matrix y = attention_forward(x, aligned[k], block.extractors[selection.indices[k]], config.heads,
                                             bt ? &bt->extract[k] : nullptr);
                add_into(y, x);
                conditional.push_back(std::move(y));
            }

            std::vector<double> weights;
            if (config.gating_mode == GatingMode::uniform) {
                weights.assign(selection.size(), 1.0 / static_cast<double>(selection.size()));
            } else {
                Matrix z = concat_row(token_mean(x), text_token.values);
                Matrix pre = linear_forward(z, block.gating.hidden);
                Matrix hidden = gelu(pre);
                const Matrix logits = linear_forward(hidden, block.gating.logits);
                weights = select_weights({logits.data().begin(), logits.data().end()}, selection);
                if (bt) {
                    bt->gating.input = std::move(z);
                    bt->gating.pre = std::move(pre);
                    bt->gating.hidden = std::move(hidden);
                }
            }
            if (bt) bt->gating.weights = weights;
            fused = fuse_tokens(conditional, weights);
            result.gates.push_back({weights});
            if (bt) bt->conditional = std::move(conditional);
        }
        x = transformer_tokens(fused, block.transformer, config.heads, true, bt ? &bt->transformer : nullptr);
    }

    for (std::size_t r = 0; r < params.reduction.size(); ++r) {
        Matrix pre = linear_forward(x, params.reduction[r].fc1);
        Matrix act = gelu(pre);
        Matrix next = linear_forward(act, params.reduction[r].fc2);
        add_into(next, x);
        if (trace) trace->reduction[r] = {std::move(x), std::move(pre), std::move(act)};
        x = std::move(next);
    }
    Matrix pooled = pool_tokens_2x(x, height, width);
    Matrix pre = linear_forward(pooled, params.projector_in);
    Matrix act = gelu(pre);
    result.tokens = linear_forward(act, params.projector_out);
    if (trace) {
        trace->pooled = std::move(pooled);
        trace->projector_pre = std::move(pre);
        trace->projector_act = std::move(act);
    }
    return result;
}

void adapter_backward(const AdapterTrace& trace, const AdapterParams& params, const AdapterConfig& config,
                      const Matrix& d_tokens, AdapterParams& grad) {
    const Matrix d_act = linear_backward(trace.projector_act, params.projector_out, d_tokens, grad.projector_out);
    const Matrix d_pre = gelu_backward(trace.projector_pre, d_act);
    const Matrix d_pooled = linear_backward(trace.pooled, params.projector_in, d_pre, grad.projector_in);
    Matrix dx = unpool_tokens_2x(d_pooled, trace.height, trace.width);

    for (std::size_t r = params.reduction.size(); r-- > 0;) {
        const ResidualTrace& rt = trace.reduction[r];
        const Matrix d_act_r = linear_backward(rt.act, params.reduction[r].fc2, dx, grad.reduction[r].fc2);
        const Matrix d_pre_r = gelu_backward(rt.pre, d_act_r);
        add_into(dx, linear_backward(rt.input, params.reduction[r].fc1, d_pre_r, grad.reduction[r].fc1));
    }

    const auto& selection = trace.selection;
    for (std::size_t b = config.num_blocks; b-- > 0;) {
        const AdapterBlock& block = params.blocks[b];
        AdapterBlock& gblock = grad.blocks[b];
        const BlockTrace& bt = trace.blocks[b];

        const Matrix d_fused =
            transformer_tokens_backward(bt.transformer, block.transformer, config.heads, dx, gblock.transformer);
        if (selection.empty()) {
            dx = d_fused;
            continue;
        }

        const std::size_t n = bt.input.rows();
        const auto& w = bt.gating.weights;
        Matrix d_input(n, bt.input.cols());

        if (config.gating_mode == GatingMode::dynamic) {
            // dL/dP_k = <dFused, Y_k>; softmax Jacobian restricted to the routed subset.
            std::vector<double> dp(selection.size(), 0.0);
            for (std::size_t k = 0; k < selection.size(); ++k) {
                auto yd = bt.conditional[k].data();
                auto gd = d_fused.data();
                double acc = 0.0;
                for (std::size_t i = 0; i < yd.size(); ++i) acc += gd[i] * yd[i];
                dp[k] = acc;
            }
            double mean_dp = 0.0;
            for (std::size_t k = 0; k < selection.size(); ++k) mean_dp += w[k] * dp[k];
            const std::size_t pool = block.gating.logits.weight.cols();
            Matrix d_logits(1, pool, 0.0);
            for (std::size_t k = 0; k < selection.size(); ++k) {
                d_logits(0, selection.indices[k]) = w[k] * (dp[k] - mean_dp);
            }
            const Matrix d_hidden =
                linear_backward(bt.gating.hidden, block.gating.logits, d_logits, gblock.gating.logits);
            const Matrix d_gpre = gelu_backward(bt.gating.pre, d_hidden);
            const Matrix d_z = linear_backward(bt.gating.input, block.gating.hidden, d_gpre, gblock.gating.hidden);
            // Visual token is the token mean of X^i.
            for (std::size_t c = 0; c < bt.input.cols(); ++c) {
                const double share = d_z(0, c) / static_cast<double>(n);
                for (std::size_t p = 0; p < n; ++p) d_input(p, c) += share;
            }
        }

        for (std::size_t k = 0; k < selection.size(); ++k) {
            Matrix dy = d_fused;
            for (auto& v : dy.data()) v *= w[k];
            const std::size_t j = selection.indices[k];
            const auto att =
                attention_backward(bt.extract[k], block.extractors[j], config.heads, dy, gblock.extractors[j], false);
            add_into(d_input, dy);
            add_into(d_input, att.query_in);
        }
        dx = std::move(d_input);
    }
}

}  // namespace mova
