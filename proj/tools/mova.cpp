// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// mova: command-line front end. Exit codes: 0 success, 1 validation or usage
// error, 2 property/gradient check failure.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mova/ablation.hpp"
#include "mova/adapter.hpp"
#include "mova/errors.hpp"
#include "mova/experts.hpp"
#include "mova/jobs.hpp"
#include "mova/pipeline.hpp"
#include "mova/properties.hpp"
#include "mova/routing.hpp"
#include "mova/routing_data.hpp"
#include "mova/trainer.hpp"

namespace {

using namespace mova;

constexpr int kCheckFailed = 2;

// Flag value when given, else MOVA_SEED, else the fallback.
std::uint64_t resolve_seed(const CLI::Option* flag, std::uint64_t value, std::uint64_t fallback) {
    if (flag->count()) return value;
    if (const char* env = std::getenv("MOVA_SEED")) {
        try {
            std::size_t used = 0;
            const auto parsed = std::stoull(env, &used);
            if (used == std::string(env).size()) return parsed;
        } catch (const std::exception&) {
        }
        throw ValidationError(std::string("MOVA_SEED must be an unsigned integer, got '") + env + "'");
    }
    return fallback;
}

ExpertRegistry registry_from(const std::string& path) {
    return path.empty() ? default_registry() : load_registry(path);
}

void emit(const std::string& text, const std::string& report_path) {
    if (report_path.empty()) {
        std::cout << text << '\n';
        return;
    }
    std::ofstream out(report_path, std::ios::binary);
    if (!out) throw IoError("cannot write " + report_path);
    out << text << '\n';
    if (!out) throw IoError("failed writing " + report_path);
}

struct RoutingFlags {
    std::string strategy = "scripted";
    std::string annotations;
    std::string losses;
    std::string response;
    std::string sample_id = "query";
    std::uint64_t seed = 0;
    std::size_t cap = kDefaultRoutingCap;
    CLI::Option* seed_flag = nullptr;
    CLI::Option* response_flag = nullptr;

    void add_to(CLI::App& app) {
        app.add_option("--strategy", strategy, "annotation | oracle | random | all | scripted")->capture_default_str();
        app.add_option("--annotations", annotations, "routing.jsonl for the annotation strategy");
        app.add_option("--losses", losses, "losses.jsonl for the oracle strategy");
        response_flag = app.add_option("--response", response, "router answer text for the scripted strategy");
        app.add_option("--sample-id", sample_id, "sample id used to look up annotations/losses")->capture_default_str();
        seed_flag = app.add_option("--seed", seed, "seed for the random strategy");
        app.add_option("--cap", cap, "maximum experts kept")->capture_default_str();
    }

    RoutingContext context() const {
        RoutingContext ctx;
        ctx.seed = resolve_seed(seed_flag, seed, 0);
        ctx.cap = cap;
        if (!annotations.empty()) {
            for (auto& a : read_annotations(annotations)) ctx.annotations.emplace(a.sample_id, a);
        }
        if (!losses.empty()) {
            for (auto& l : read_losses(losses)) ctx.losses.emplace(l.sample_id, l);
        }
        if (response_flag->count()) ctx.response = response;
        return ctx;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mova: coarse-to-fine vision expert routing and fusion at desk scale"};
    app.require_subcommand(1);
    int status = 0;

    // route
    auto* route_cmd = app.add_subcommand("route", "route one question to a subset of the expert pool");
    std::string route_experts, route_question;
    RoutingFlags route_flags;
    route_cmd->add_option("--experts", route_experts, "experts.json (built-in desk pool when omitted)");
    route_cmd->add_option("--question", route_question, "user question")->required();
    route_flags.add_to(*route_cmd);
    route_cmd->callback([&] {
        const auto registry = registry_from(route_experts);
        Sample s;
        s.sample_id = route_flags.sample_id;
        s.question = route_question;
        if (route_question.empty()) throw ValidationError("--question must be non-empty");
        const auto d = route(strategy_from_string(route_flags.strategy), registry, s, route_flags.context());
        emit(decision_to_json(d, registry), "");
    });

    // prompt
    auto* prompt_cmd = app.add_subcommand("prompt", "print the router prompt for a question");
    std::string prompt_experts, prompt_question_text;
    prompt_cmd->add_option("--experts", prompt_experts, "experts.json (built-in desk pool when omitted)");
    prompt_cmd->add_option("--question", prompt_question_text, "user question")->required();
    prompt_cmd->callback([&] { emit(build_routing_prompt(registry_from(prompt_experts), prompt_question_text), ""); });

    // build-routing-data
    auto* build_cmd = app.add_subcommand("build-routing-data", "loss records to routing annotations");
    std::string build_experts, build_losses, build_out;
    std::size_t build_cap = kDefaultRoutingCap;
    build_cmd->add_option("--experts", build_experts, "experts.json (built-in desk pool when omitted)");
    build_cmd->add_option("--losses", build_losses, "losses.jsonl")->required();
    build_cmd->add_option("--out", build_out, "routing.jsonl to write")->required();
    build_cmd->add_option("--cap", build_cap, "maximum experts per sample")->capture_default_str();
    build_cmd->callback([&] {
        if (build_cap == 0) throw ValidationError("--cap must be >= 1");
        const auto n = build_annotations(build_losses, registry_from(build_experts), build_cap, build_out);
        emit(nlohmann::ordered_json{{"written", n}, {"out", build_out}}.dump(), "");
    });

    // gen-synthetic
    auto* gen_cmd = app.add_subcommand("gen-synthetic", "write a planted-expert synthetic corpus");
    std::string gen_experts, gen_out, gen_planted;
    std::size_t gen_samples = 200, gen_answer_dim = 4;
    std::uint64_t gen_seed = 0;
    double gen_noise = 0.0;
    gen_cmd->add_option("--experts", gen_experts, "experts.json (built-in desk pool when omitted)");
    gen_cmd->add_option("--samples", gen_samples, "number of samples")->capture_default_str();
    auto* gen_seed_flag = gen_cmd->add_option("--seed", gen_seed, "corpus seed");
    gen_cmd->add_option("--noise", gen_noise, "observation noise scale on the losses")->capture_default_str();
    gen_cmd->add_option("--answer-dim", gen_answer_dim, "answer vector length")->capture_default_str();
    gen_cmd->add_option("--planted", gen_planted, "plant every sample in this expert");
    gen_cmd->add_option("--out", gen_out, "output directory")->required();
    gen_cmd->callback([&] {
        SyntheticOptions opt;
        opt.num_samples = gen_samples;
        opt.seed = resolve_seed(gen_seed_flag, gen_seed, 0);
        opt.noise = gen_noise;
        opt.answer_dim = gen_answer_dim;
        if (!gen_planted.empty()) opt.planted_override = gen_planted;
        const auto m = generate_synthetic_corpus(registry_from(gen_experts), opt, gen_out);
        emit(nlohmann::ordered_json{{"samples", m.samples.string()},
                                    {"losses", m.losses.string()},
                                    {"ground_truth", m.ground_truth.string()},
                                    {"count", m.count}}
                 .dump(),
             "");
    });

    // score-routing
    auto* score_cmd = app.add_subcommand("score-routing", "fraction of samples whose annotation holds the planted expert");
    std::string score_annotations, score_truth;
    score_cmd->add_option("--annotations", score_annotations, "routing.jsonl")->required();
    score_cmd->add_option("--truth", score_truth, "ground_truth.jsonl")->required();
    score_cmd->callback([&] {
        const auto annotations = read_annotations(score_annotations);
        const auto truth = read_ground_truth(score_truth);
        emit(nlohmann::ordered_json{{"accuracy", score_routing_accuracy(annotations, truth)},
                                    {"samples", truth.size()}}
                 .dump(),
             "");
    });

    // fuse
    auto* fuse_cmd = app.add_subcommand("fuse", "route, fuse and write LLM tokens for one image and question");
    std::string fuse_experts, fuse_question, fuse_config, fuse_params, fuse_out;
    std::uint64_t fuse_image_seed = 0;
    bool fuse_fallback = false;
    RoutingFlags fuse_flags;
    fuse_cmd->add_option("--experts", fuse_experts, "experts.json (built-in desk pool when omitted)");
    fuse_cmd->add_option("--question", fuse_question, "user question")->required();
    fuse_flags.add_to(*fuse_cmd);
    fuse_cmd->add_option("--config", fuse_config, "adapter.json (desk config when omitted)");
    fuse_cmd->add_option("--params", fuse_params, "parameter directory from train-toy --save-params");
    auto* fuse_image_flag = fuse_cmd->add_option("--image-seed", fuse_image_seed, "seed of the synthetic image");
    fuse_cmd->add_option("--out", fuse_out, "MOVT file for the output tokens")->required();
    fuse_cmd->add_flag("--empty-fallback", fuse_fallback, "use the base-only path on an empty router answer");
    fuse_cmd->callback([&] {
        const auto registry = registry_from(fuse_experts);
        PipelineRequest req;
        req.question = fuse_question;
        req.sample_id = fuse_flags.sample_id;
        req.image_seed = resolve_seed(fuse_image_flag, fuse_image_seed, 0);
        req.strategy = strategy_from_string(fuse_flags.strategy);
        req.context = fuse_flags.context();
        req.empty_response_fallback = fuse_fallback;
        if (!fuse_config.empty()) req.config = load_config(fuse_config);
        if (!fuse_params.empty()) req.params_dir = fuse_params;
        req.out_path = fuse_out;
        emit(pipeline_summary_json(run_pipeline(registry, req), registry), "");
    });

    // train-toy
    auto* train_cmd = app.add_subcommand("train-toy", "train the adapter on the toy objective");
    std::string train_experts, train_config, train_report, train_save;
    std::uint64_t train_seed = 0;
    bool train_timing = false;
    train_cmd->add_option("--experts", train_experts, "experts.json (built-in desk pool when omitted)");
    train_cmd->add_option("--config", train_config, "toy.json (planted-concentration job when omitted)");
    train_cmd->add_option("--report", train_report, "write the JSON report here instead of standard output");
    auto* train_seed_flag = train_cmd->add_option("--seed", train_seed, "initialisation seed");
    train_cmd->add_flag("--timing", train_timing, "include wall-clock seconds in the report");
    train_cmd->add_option("--save-params", train_save, "directory for the trained parameters");
    train_cmd->callback([&] {
        auto job = train_config.empty() ? concentration_job() : load_toy_job(train_config, concentration_job());
        job.train.seed = resolve_seed(train_seed_flag, train_seed, job.train.seed);
        const auto report = run_toy_job(job, registry_from(train_experts));
        if (!train_save.empty()) save_params(report.params, train_save);
        std::cerr << "train-toy: " << report.wall_clock_seconds << " s\n";
        emit(train_report_to_json(report, train_timing), train_report);
    });

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "compare routing and gating ablations on shared seeds");
    std::string ablate_experts, ablate_config, ablate_modes, ablate_report;
    std::uint64_t ablate_seed = 0;
    ablate_cmd->add_option("--experts", ablate_experts, "experts.json (built-in desk pool when omitted)");
    ablate_cmd->add_option("--modes", ablate_modes,
                           "comma list of dynamic, random-routing, all-experts, uniform-gating, fixed-K:k")
        ->required();
    ablate_cmd->add_option("--config", ablate_config, "toy.json (ablation job when omitted)");
    ablate_cmd->add_option("--report", ablate_report, "write the JSON report here instead of standard output");
    auto* ablate_seed_flag = ablate_cmd->add_option("--seed", ablate_seed, "initialisation seed");
    ablate_cmd->callback([&] {
        const auto modes = parse_ablation_modes(ablate_modes);
        auto job = ablate_config.empty() ? ablation_job() : load_toy_job(ablate_config, ablation_job());
        job.train.seed = resolve_seed(ablate_seed_flag, ablate_seed, job.train.seed);
        emit(ablation_to_json(run_ablation_job(job, modes, registry_from(ablate_experts))), ablate_report);
    });

    // gradcheck
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of the adapter gradients");
    double grad_eps = 1e-5, grad_tol = 1e-4;
    std::uint64_t grad_seed = 0;
    std::size_t grad_probes = 0;
    std::string grad_report;
    grad_cmd->add_option("--eps", grad_eps, "central-difference step")->capture_default_str();
    grad_cmd->add_option("--tol", grad_tol, "maximum relative error")->capture_default_str();
    auto* grad_seed_flag = grad_cmd->add_option("--seed", grad_seed, "parameter and sample seed");
    grad_cmd->add_option("--probes", grad_probes, "coordinates per tensor (0 = all)")->capture_default_str();
    grad_cmd->add_option("--report", grad_report, "write the JSON report here instead of standard output");
    grad_cmd->callback([&] {
        if (!(grad_eps > 0.0)) throw ValidationError("--eps must be > 0");
        const auto r = desk_gradcheck(grad_eps, resolve_seed(grad_seed_flag, grad_seed, 42), grad_probes);
        const bool ok = r.max_relative_error < grad_tol;
        emit(nlohmann::ordered_json{{"max_relative_error", r.max_relative_error},
                                    {"compared", r.compared},
                                    {"eps", r.eps},
                                    {"tol", grad_tol},
                                    {"worst", r.op},
                                    {"ok", ok}}
                 .dump(2),
             grad_report);
        if (!ok) status = kCheckFailed;
    });

    // check
    auto* check_cmd = app.add_subcommand("check", "run the property suite");
    std::uint64_t check_seed = 0;
    std::string check_report;
    auto* check_seed_flag = check_cmd->add_option("--seed", check_seed, "suite seed");
    check_cmd->add_option("--report", check_report, "write the JSON report here instead of standard output");
    check_cmd->callback([&] {
        PropertyOptions opt;
        opt.seed = resolve_seed(check_seed_flag, check_seed, 42);
        const auto groups = run_property_suite(opt);
        for (const auto& g : groups) {
            std::cerr << (g.ok() ? "PASS " : "FAIL ") << g.name << ": " << g.passed << " passed, " << g.failed
                      << " failed\n";
        }
        emit(property_report_json(groups), check_report);
        if (!all_passed(groups)) status = kCheckFailed;
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return status;
}
