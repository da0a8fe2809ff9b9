// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance harness: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli_runner.hpp"
#include "mova/ablation.hpp"
#include "mova/adapter.hpp"
#include "mova/errors.hpp"
#include "mova/jobs.hpp"
#include "mova/movt.hpp"
#include "mova/routing.hpp"
#include "mova/routing_data.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mova;

namespace {

// Collects failed expectations for one criterion.
struct Verdict {
    std::vector<std::string> failures;
    std::string detail;

    void expect(bool ok, const std::string& what) {
        if (!ok && failures.size() < 5) failures.push_back(what);
        if (!ok) ++failed;
    }
    std::size_t failed = 0;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

// Desk instance with randomized biases so every oracle term is exercised.
struct Instance {
    ExpertRegistry registry = default_registry();
    AdapterConfig config = desk_config();
    AdapterParams params;
    FeatureMap base;
    std::vector<FeatureMap> experts;
    ExpertFeatures features;

    explicit Instance(std::uint64_t seed) {
        Rng rng(seed);
        params = init_params(config, registry, seed);
        for (auto& ref : param_refs(params)) {
            if (ref.name.ends_with("bias") || ref.name.ends_with("offset")) {
                for (auto& v : ref.value->data()) v = normal_draws(rng, 1, 0.1)[0];
            }
        }
        base = testutil::random_map(rng, config.hidden_dim, 8, 8);
        for (std::size_t j = 0; j < registry.size(); ++j) {
            experts.push_back(testutil::random_map(rng, 16, 4, 4));
            features.emplace(j, experts.back());
        }
    }
};

void structural_constants(Verdict& v) {
    const auto desk = default_registry();
    const ExpertRegistry full(Geometry{8, 48, 48}, desk.experts());
    const auto config = desk_config();
    v.expect(config.num_blocks == 3, "default config has " + std::to_string(config.num_blocks) + " blocks");

    const auto params = init_params(config, full, 1);
    const auto base = generate_base_feature(full, 7);
    v.expect(base.height() * base.width() == 2304, "base positions != 2304");
    const ExpertSelection sel{{full.index_of("pix2struct")}};
    ExpertFeatures feats;
    feats.emplace(sel.indices[0], generate_expert_feature(full[sel.indices[0]], 7, false, {}));
    const auto routed = adapter_forward(base, feats, sel, "what is in the chart", params, config);
    const auto base_only = adapter_forward(base, {}, ExpertSelection{}, "q", params, config);
    v.expect(routed.tokens.rows() == 576, "routed path emits " + std::to_string(routed.tokens.rows()) + " tokens");
    v.expect(base_only.tokens.rows() == 576, "base-only path emits " + std::to_string(base_only.tokens.rows()));
    const auto coarse = coarse_image_tokens(base, 8);
    v.expect(coarse.rows() == 64, "coarse tokens: " + std::to_string(coarse.rows()));
    v.detail = "576 tokens from 2304, 64 coarse tokens, L=3";
}

void routing_protocol(Verdict& v) {
    const auto registry = default_registry();
    const std::string q = "Which year had the highest revenue?";
    const auto prompt = build_routing_prompt(registry, q);
    std::vector<std::string> lines;
    std::istringstream in(prompt);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    const std::vector<std::string> expected_head = {
        "As a router, your task is to choose several models from a model pool to assist you. Below is a brief "
        "overview of the expertise of each model in the pool:"};
    v.expect(lines.size() == 13, "prompt has " + std::to_string(lines.size()) + " lines");
    if (lines.size() == 13) {
        v.expect(lines[0] == expected_head[0], "opening sentence differs");
        for (std::size_t i = 0; i < 7; ++i) {
            const std::string want = std::string(1, static_cast<char>('A' + i)) + ". " + registry[i].description;
            v.expect(lines[1 + i] == want, "expert line " + std::to_string(i));
        }
        v.expect(lines[8] == "Here is user question:", "question header");
        v.expect(lines[9] == "###" && lines[11] == "###", "fences");
        v.expect(lines[10] == q, "question line");
        v.expect(lines[12] ==
                     "Identify and select models that will best enable you to accurately answer questions. Please "
                     "consider the image contents, questions, and expertise of these models when you perform "
                     "selection. Answer with the model's letter from the given choices directly.",
                 "closing instruction differs");
    }
    const auto sel = parse_routing_response("A, D", registry);
    std::vector<std::string> names;
    for (auto i : sel.indices) names.push_back(registry[i].name);
    std::sort(names.begin(), names.end());
    v.expect(names == std::vector<std::string>{"dinov2", "pix2struct"}, "\"A, D\" did not parse to dinov2+pix2struct");
    v.detail = "prompt skeleton verbatim, \"A, D\" -> {dinov2, pix2struct}";
}

void oracle_equivalence(Verdict& v) {
    double worst = 0.0;
    Rng rng(2026);
    for (std::uint64_t t = 0; t < 100; ++t) {
        const Instance in(1000 + t);
        const auto& block = in.params.blocks[t % 3];
        const std::size_t j = t % 7;
        const auto y = extract_expert_knowledge(in.base, in.experts[j], block.extractors[j]);
        const double e1 = oracle::max_abs_diff(y.data(), oracle::extract(in.base, in.experts[j], block.extractors[j]).data());

        const std::size_t k = 1 + t % 4;
        ExpertSelection sel;
        for (std::size_t i = 0; i < k; ++i) sel.indices.push_back((j + 2 * i) % 7);
        const GatingInput gi{normal_draws(rng, 8), encode_text("q" + std::to_string(t), 8)};
        const auto w = gate_weights(gi, sel, block.gating, GatingMode::dynamic).weights;
        const double e2 =
            oracle::max_abs_diff(w, oracle::gate(gi.visual_token, gi.text_token.values, sel.indices, block.gating));

        std::vector<FeatureMap> maps;
        for (auto idx : sel.indices) maps.push_back(extract_expert_knowledge(in.base, in.experts[idx], block.extractors[idx]));
        const double e3 = oracle::max_abs_diff(fuse(maps, {w}).data(), oracle::fuse(maps, w).data());
        worst = std::max({worst, e1, e2, e3});
        v.expect(e1 <= 1e-10 && e2 <= 1e-10 && e3 <= 1e-10, "instance " + std::to_string(t) + " error " + fmt(std::max({e1, e2, e3})));
    }

    const Instance in(7);
    const auto same = bilinear_interpolate(in.base, 8, 8);
    v.expect(same == in.base, "same-size interpolation is not the identity");
    const GatingInput gi{normal_draws(rng, 8), encode_text("k1", 8)};
    v.expect(gate_weights(gi, ExpertSelection{{4}}, in.params.blocks[0].gating, GatingMode::dynamic).weights ==
                 std::vector<double>{1.0},
             "K=1 weight is not exactly 1");
    v.expect(fuse({in.base}, {{1.0}}) == in.base, "K=1 fuse is not the identity");
    Attention zero = in.params.blocks[1].extractors[3];
    for (auto& x : zero.output.weight.data()) x = 0.0;
    for (auto& x : zero.output.bias.data()) x = 0.0;
    v.expect(extract_expert_knowledge(in.base, in.experts[3], zero) == in.base,
             "zero output projection does not return the base");
    v.detail = "100 instances, worst error " + fmt(worst) + "; degenerate cases exact";
}

void gate_simplex(Verdict& v) {
    const auto registry = default_registry();
    const auto params = init_params(desk_config(), registry, 4);
    Rng rng(44);
    double worst_sum = 0.0, worst_mask = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const GatingInput gi{normal_draws(rng, 8, 2.0), TextToken{normal_draws(rng, 8)}};
        const auto& gating = params.blocks[t % 3].gating;
        const auto logits = gating_logits(gi, gating);
        for (unsigned mask = 1; mask < 128; ++mask) {
            ExpertSelection sel;
            std::vector<std::uint8_t> flags(7, 0);
            for (std::size_t j = 0; j < 7; ++j) {
                if (mask & (1u << j)) {
                    sel.indices.push_back(j);
                    flags[j] = 1;
                }
            }
            const auto w = gate_weights(gi, sel, gating, GatingMode::dynamic).weights;
            double sum = 0.0;
            bool interior = true;
            for (double x : w) {
                sum += x;
                interior = interior && x > 0.0 && x < 1.0;
            }
            worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
            if (std::abs(sum - 1.0) > 1e-9) v.expect(false, "weights sum to " + fmt(sum));
            if (sel.size() >= 2 && !interior) v.expect(false, "weight outside (0,1) at mask " + std::to_string(mask));

            const bool mask_bools[7] = {bool(flags[0]), bool(flags[1]), bool(flags[2]), bool(flags[3]),
                                        bool(flags[4]), bool(flags[5]), bool(flags[6])};
            const auto masked = softmax(logits, std::span<const bool>(mask_bools, 7));
            const auto subset = oracle::subset_softmax(logits, sel.indices);
            for (std::size_t i = 0; i < sel.size(); ++i) {
                const double d = std::max(std::abs(masked[sel.indices[i]] - subset[i]), std::abs(w[i] - subset[i]));
                worst_mask = std::max(worst_mask, d);
                if (d > 1e-12) v.expect(false, "masked vs subset softmax differ by " + fmt(d));
            }
        }
    }
    v.detail = "127000 cases, max |sum-1| " + fmt(worst_sum) + ", max masked/subset diff " + fmt(worst_mask);
}

void routing_constructor(Verdict& v) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(55);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    std::size_t checked = 0;
    for (int t = 0; t < 10000; ++t) {
        LossRecord r{"r" + std::to_string(t), 0.0, {}};
        const bool ties = t % 4 == 0;
        auto draw = [&] { return ties ? 0.25 * static_cast<double>(testutil::uniform(rng, 0, 8)) : u(rng); };
        r.base_loss = draw();
        for (int j = 0; j < 7; ++j) r.expert_losses.push_back(draw());
        const std::size_t cap = 1 + static_cast<std::size_t>(t % 7);
        const auto got = construct_routing_set(r, cap).indices;
        v.expect(got == oracle::routing_set(r, cap), "oracle mismatch on record " + std::to_string(t));

        // Scaling every loss by a power of two is exact and must not move the set.
        for (double s : {0.5, 2.0, 1024.0}) {
            LossRecord scaled = r;
            scaled.base_loss *= s;
            for (auto& l : scaled.expert_losses) l *= s;
            v.expect(construct_routing_set(scaled, cap).indices == got, "scale " + fmt(s) + " changed record " + std::to_string(t));
        }
        // Improving a selected expert keeps it selected; worsening an unselected one keeps it out.
        for (std::size_t j = 0; j < 7; ++j) {
            const bool in_set = std::find(got.begin(), got.end(), j) != got.end();
            LossRecord moved = r;
            moved.expert_losses[j] += in_set ? -0.5 : 0.5;
            const auto after = construct_routing_set(moved, cap).indices;
            const bool still = std::find(after.begin(), after.end(), j) != after.end();
            v.expect(still == in_set, "monotonicity broken on record " + std::to_string(t));
        }
        ++checked;
    }
    const double secs = seconds_since(t0);
    v.expect(secs < 30.0, "runtime " + fmt(secs) + " s");
    v.detail = std::to_string(checked) + " records vs oracle, scale and monotonicity";
}

void routing_recovery(Verdict& v) {
    const auto registry = default_registry();
    auto accuracy = [&](double noise) {
        SyntheticOptions opt;
        opt.num_samples = 200;
        opt.seed = 42;
        opt.noise = noise;
        const auto corpus = make_synthetic_corpus(registry, opt);
        std::vector<RoutingAnnotation> annotations;
        for (const auto& l : corpus.losses) annotations.push_back(construct_routing_annotation(l, registry));
        return score_routing_accuracy(annotations, corpus.ground_truth);
    };
    const double clean = accuracy(0.0);
    const double noisy = accuracy(0.2);
    v.expect(clean == 1.0, "noise 0 accuracy " + fmt(clean));
    v.expect(noisy >= 0.9, "noise 0.2 accuracy " + fmt(noisy));
    v.detail = "accuracy " + fmt(clean) + " at noise 0, " + fmt(noisy) + " at noise 0.2 (seed 42, 200 samples)";
}

void gradient_correctness(Verdict& v) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = desk_gradcheck(1e-5, 42, 0);
    const double secs = seconds_since(t0);
    v.expect(r.max_relative_error < 1e-4, "max relative error " + fmt(r.max_relative_error) + " at " + r.op);
    v.expect(secs < 60.0, "runtime " + fmt(secs) + " s");
    v.detail = std::to_string(r.compared) + " coordinates, max relative error " + fmt(r.max_relative_error);
}

void gating_concentration(Verdict& v) {
    const auto registry = default_registry();
    const auto report = run_toy_job(concentration_job(), registry);
    double planted = 0.0, best_other = 0.0;
    for (const auto& g : report.gate_means) {
        if (g.expert == "pix2struct") {
            planted = g.mean_weight;
        } else {
            best_other = std::max(best_other, g.mean_weight);
        }
    }
    v.expect(planted > 0.5, "planted gate mean " + fmt(planted));
    v.expect(planted > best_other, "planted gate not strictly greatest");

    const auto entries =
        run_ablation_job(ablation_job(), parse_ablation_modes("dynamic,uniform-gating,random-routing"), registry);
    const double dynamic = entries[0].eval_loss, uniform = entries[1].eval_loss, random = entries[2].eval_loss;
    v.expect(entries[0].stream_digest == entries[1].stream_digest && entries[1].stream_digest == entries[2].stream_digest,
             "arms consumed different sample streams");
    v.expect(dynamic <= uniform, "dynamic " + fmt(dynamic) + " > uniform " + fmt(uniform));
    v.expect(dynamic <= random, "oracle routing " + fmt(dynamic) + " > random " + fmt(random));
    v.detail = "pix2struct gate " + fmt(planted) + "; eval loss dynamic " + fmt(dynamic) + ", uniform " + fmt(uniform) +
               ", random " + fmt(random);
}

void irrelevance_exclusion(Verdict& v) {
    std::size_t cases = 0;
    for (std::uint64_t t = 0; t < 10; ++t) {
        const Instance in(300 + t);
        const ExpertSelection sel{{t % 7, (t + 3) % 7}};
        const auto ref = adapter_forward(in.base, in.features, sel, "read the label", in.params, in.config).tokens;
        for (std::size_t j = 0; j < 7; ++j) {
            if (sel.contains(j)) continue;
            auto changed = in.features;
            for (auto& x : changed.at(j).data()) x = x * -3.0 + 1.0;
            v.expect(adapter_forward(in.base, changed, sel, "read the label", in.params, in.config).tokens == ref,
                     "routed-out expert " + std::to_string(j) + " changed the output");
            ++cases;
        }
        const auto a = adapter_forward(in.base, in.features, ExpertSelection{}, "count the birds", in.params, in.config);
        const auto b = adapter_forward(in.base, {}, ExpertSelection{}, "what colour is the sky", in.params, in.config);
        v.expect(a.tokens == b.tokens, "empty selection depends on the question");
        ++cases;
    }
    v.detail = std::to_string(cases) + " bitwise comparisons";
}

void determinism_and_formats(Verdict& v) {
    const auto dir = testutil::scratch("acceptance");
    testutil::write_text(dir / "toy.json", R"({"steps":5,"synthetic":{"samples":12}})");
    testutil::write_text(dir / "ablate.json", R"({"steps":4,"synthetic":{"samples":12}})");

    std::size_t commands = 0;
    // Runs a command twice into separate directories and compares stdout plus written files.
    auto twice = [&](const std::string& name, const std::function<std::vector<std::string>(const std::filesystem::path&)>& args,
                     const std::vector<std::string>& files) {
        std::string outs[2];
        for (int k = 0; k < 2; ++k) {
            const auto run_dir = dir / (name + std::to_string(k));
            std::filesystem::create_directories(run_dir);
            const auto r = cli::run(args(run_dir));
            v.expect(r.status == 0, name + " exited " + std::to_string(r.status) + ": " + r.err);
            outs[k] = r.out;
            for (const auto& f : files) outs[k] += "\n--" + f + "--\n" + testutil::slurp(run_dir / f);
            // Paths differ between the two runs; strip the run directory.
            for (auto pos = outs[k].find(run_dir.string()); pos != std::string::npos; pos = outs[k].find(run_dir.string())) {
                outs[k].erase(pos, run_dir.string().size());
            }
        }
        v.expect(outs[0] == outs[1], name + " is not byte-reproducible");
        ++commands;
    };
    const auto corpus = dir / "corpus";
    {
        const auto r = cli::run({"gen-synthetic", "--samples", "20", "--seed", "4", "--noise", "0.1", "--out", corpus.string()});
        v.expect(r.status == 0, "gen-synthetic failed: " + r.err);
    }
    const auto losses = (corpus / "losses.jsonl").string();
    const auto truth = (corpus / "ground_truth.jsonl").string();
    twice("gen-synthetic", [](const auto& d) { return std::vector<std::string>{"gen-synthetic", "--samples", "20", "--seed", "4", "--out", (d / "c").string()}; },
          {"c/samples.jsonl", "c/losses.jsonl", "c/ground_truth.jsonl"});
    twice("build-routing-data", [&](const auto& d) { return std::vector<std::string>{"build-routing-data", "--losses", losses, "--out", (d / "r.jsonl").string()}; },
          {"r.jsonl"});
    cli::run({"build-routing-data", "--losses", losses, "--out", (dir / "routing.jsonl").string()});
    const auto routing = (dir / "routing.jsonl").string();
    twice("score-routing", [&](const auto&) { return std::vector<std::string>{"score-routing", "--annotations", routing, "--truth", truth}; }, {});
    twice("prompt", [](const auto&) { return std::vector<std::string>{"prompt", "--question", "Which bar is tallest?"}; }, {});
    for (const std::string strategy : {"scripted", "annotation", "oracle", "random", "all"}) {
        twice("route/" + strategy, [&](const auto&) {
            return std::vector<std::string>{"route", "--question", "q", "--strategy", strategy, "--response", "B, E",
                                            "--annotations", routing, "--losses", losses, "--sample-id", "s00003", "--seed", "9"};
        }, {});
    }
    twice("fuse", [](const auto& d) { return std::vector<std::string>{"fuse", "--question", "q", "--response", "A, D", "--image-seed", "3", "--out", (d / "t.movt").string()}; },
          {"t.movt"});
    twice("train-toy", [&](const auto& d) { return std::vector<std::string>{"train-toy", "--config", (dir / "toy.json").string(), "--report", (d / "report.json").string()}; },
          {"report.json"});
    twice("ablate", [&](const auto&) { return std::vector<std::string>{"ablate", "--modes", "dynamic,uniform-gating,random-routing,all-experts,fixed-K:2", "--config", (dir / "ablate.json").string()}; }, {});
    twice("gradcheck", [](const auto&) { return std::vector<std::string>{"gradcheck", "--probes", "3"}; }, {});
    twice("check", [](const auto&) { return std::vector<std::string>{"check"}; }, {});

    // MOVT: float-representable values round trip exactly and re-encode byte-identically.
    Rng rng(10);
    for (const auto& dims : std::vector<std::vector<std::size_t>>{{5}, {3, 4}, {2, 3, 4}, {1, 1, 1, 2}}) {
        Tensor t(dims);
        for (auto& x : t.data()) x = static_cast<double>(static_cast<float>(normal_draws(rng, 1)[0]));
        const auto path = dir / "t.movt";
        movt::save(path, t);
        const auto back = movt::load(path);
        v.expect(back == t, "MOVT round trip changed values");
        v.expect(movt::encode(back) == movt::encode(t), "MOVT re-encoding differs");
    }
    // JSONL: read then write reproduces the generated files byte for byte.
    write_jsonl(dir / "l2.jsonl", read_losses(losses));
    write_jsonl(dir / "g2.jsonl", read_ground_truth(truth));
    write_jsonl(dir / "r2.jsonl", read_annotations(routing));
    v.expect(testutil::slurp(dir / "l2.jsonl") == testutil::slurp(losses), "loss JSONL round trip");
    v.expect(testutil::slurp(dir / "g2.jsonl") == testutil::slurp(truth), "ground-truth JSONL round trip");
    v.expect(testutil::slurp(dir / "r2.jsonl") == testutil::slurp(routing), "annotation JSONL round trip");
    v.detail = std::to_string(commands) + " CLI invocations reproduced; MOVT and JSONL round trips exact";
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria = {
        {"structural constants", structural_constants},
        {"routing protocol fidelity", routing_protocol},
        {"extractor/gate/fuse oracle equivalence", oracle_equivalence},
        {"gate simplex and subset consistency", gate_simplex},
        {"routing-data constructor equivalence", routing_constructor},
        {"synthetic routing recovery", routing_recovery},
        {"gradient correctness", gradient_correctness},
        {"gating concentration and ablation ordering", gating_concentration},
        {"irrelevance exclusion", irrelevance_exclusion},
        {"determinism and formats", determinism_and_formats},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            criteria[i].second(v);
        } catch (const std::exception& e) {
            v.expect(false, std::string("exception: ") + e.what());
        }
        const bool ok = v.failed == 0;
        failed += ok ? 0 : 1;
        std::cout << (ok ? "PASS" : "FAIL") << " criterion " << (i + 1) << ": " << criteria[i].first;
        if (ok) {
            std::cout << " (" << v.detail << "; " << fmt(seconds_since(t0)) << " s)";
        } else {
            std::cout << " (" << v.failed << " failed:";
            for (const auto& f : v.failures) std::cout << " [" << f << "]";
            std::cout << ")";
        }
        std::cout << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
