// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// moonlite command line: gen-data, train-sft, train-rl, embed, eval.
// Exit codes: 0 success, 2 usage error, 1 runtime failure.

#include <CLI11.hpp>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "moonlite/pipeline.hpp"

using namespace moonlite;

int main(int argc, char** argv) {
    CLI::App app{"moonlite: reasoning-aware multimodal product embeddings at desk scale"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "flat key=value config file");
    app.add_option("--set", overrides, "override a config key, e.g. --set sft.steps=100")
        ->take_all();

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic product dataset");
    GenDataArgs gen_args;
    std::string gen_schema;
    gen->add_option("--schema", gen_schema, "attribute schema file (default: built-in)");
    gen->add_option("--products", gen_args.products, "number of products")->capture_default_str();
    gen->add_option("--triplets", gen_args.triplets, "number of training triplets")
        ->capture_default_str();
    gen->add_option("--seed", gen_args.seed, "generator seed")->capture_default_str();
    gen->add_option("--noise", gen_args.noise, "patch noise sigma")->capture_default_str();
    gen->add_option("--out", gen_args.out_dir, "output dataset directory")->required();

    // train-sft
    auto* sft = app.add_subcommand("train-sft", "supervised fine-tuning stage");
    std::string sft_data, sft_out, sft_resume;
    sft->add_option("--data", sft_data, "dataset directory")->required();
    sft->add_option("--out", sft_out, "run directory")->required();
    sft->add_option("--resume", sft_resume, "resume from an SFT checkpoint");

    // train-rl
    auto* rl = app.add_subcommand("train-rl", "joint contrastive + GRPO stage");
    std::string rl_data, rl_ckpt, rl_out;
    rl->add_option("--data", rl_data, "dataset directory")->required();
    rl->add_option("--ckpt", rl_ckpt, "SFT checkpoint to start from")->required();
    rl->add_option("--out", rl_out, "run directory")->required();

    // embed
    auto* emb = app.add_subcommand("embed", "export embeddings for every product");
    std::string emb_data, emb_ckpt, emb_modality = "mm", emb_out, emb_rationales;
    emb->add_option("--data", emb_data, "dataset directory")->required();
    emb->add_option("--ckpt", emb_ckpt, "model checkpoint")->required();
    emb->add_option("--modality", emb_modality, "image|text|mm")->capture_default_str();
    emb->add_option("--out", emb_out, "output embedding file")->required();
    emb->add_option("--rationales", emb_rationales, "optional rationale dump file");

    // eval
    auto* ev = app.add_subcommand("eval", "retrieval / classification / attribute metrics");
    std::string ev_data, ev_ckpt, ev_tasks = "retrieval,classify,attr", ev_out = "report.txt";
    int ev_pool = 0;
    ev->add_option("--data", ev_data, "dataset directory")->required();
    ev->add_option("--ckpt", ev_ckpt, "model checkpoint")->required();
    ev->add_option("--tasks", ev_tasks, "comma list of retrieval,classify,attr")
        ->capture_default_str();
    ev->add_option("--pool", ev_pool, "candidate pool cap (default from config)");
    ev->add_option("--out", ev_out, "report file")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        Config cfg;
        if (!config_path.empty()) cfg.load_file(config_path);
        for (const auto& kv : overrides) cfg.set_kv(kv);

        if (gen->parsed()) {
            if (!gen_schema.empty()) gen_args.schema_path = gen_schema;
            cmd_gen_data(cfg, gen_args);
        } else if (sft->parsed()) {
            std::optional<std::string> resume;
            if (!sft_resume.empty()) resume = sft_resume;
            cmd_train_sft(cfg, sft_data, sft_out, resume);
        } else if (rl->parsed()) {
            cmd_train_rl(cfg, rl_data, rl_ckpt, rl_out);
        } else if (emb->parsed()) {
            std::optional<std::string> rationales;
            if (!emb_rationales.empty()) rationales = emb_rationales;
            cmd_embed(cfg, emb_data, emb_ckpt, emb_modality, emb_out, rationales);
        } else if (ev->parsed()) {
            cmd_eval(cfg, ev_data, ev_ckpt, ev_tasks, ev_pool, ev_out);
        }
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
