// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// Command implementations shared by the CLI and the integration tests:
// dataset generation, the two training stages, embedding export, and
// evaluation. Run directories hold config.echo, checkpoints/, logs/ and
// report.txt.

#pragma once

#include <memory>
#include <optional>
#include <string>

#include "moonlite/adam.hpp"
#include "moonlite/config.hpp"
#include "moonlite/eval.hpp"
#include "moonlite/model.hpp"

namespace moonlite {

struct GenDataArgs {
    std::optional<std::string> schema_path;
    int products = 500;
    int triplets = 2000;
    std::uint64_t seed = 7;
    double noise = 0.05;
    std::string out_dir;
};

void cmd_gen_data(const Config& cfg, const GenDataArgs& args);

// Model + parameter store assembled from the config and a vocabulary.
struct BuiltModel {
    ParamStore store;
    std::unique_ptr<MoonModel> model;
};
BuiltModel build_model(const Config& cfg, const Vocab& vocab);

// Loads the param entries of a checkpoint into the store (optimizer/rng
// entries are ignored here).
void load_model_params(ParamStore& store, const std::string& ckpt_path);

void cmd_train_sft(const Config& cfg, const std::string& data_dir, const std::string& out_dir,
                   const std::optional<std::string>& resume_ckpt);

void cmd_train_rl(const Config& cfg, const std::string& data_dir, const std::string& sft_ckpt,
                  const std::string& out_dir);

void cmd_embed(const Config& cfg, const std::string& data_dir, const std::string& ckpt,
               const std::string& modality, const std::string& out_file,
               const std::optional<std::string>& rationale_file);

EvalReport cmd_eval(const Config& cfg, const std::string& data_dir, const std::string& ckpt,
                    const std::string& tasks, int pool, const std::string& out_file);

}  // namespace moonlite
