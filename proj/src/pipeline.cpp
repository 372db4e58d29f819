// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0

#include "moonlite/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "moonlite/grpo.hpp"
#include "moonlite/parallel.hpp"
#include "moonlite/sft.hpp"

namespace moonlite {

namespace fs = std::filesystem;

namespace {

// Stable purpose tags for per-stage RNG streams derived from the config
// seed.
constexpr std::uint64_t kInitTag = 1;
constexpr std::uint64_t kSftTag = 2;
constexpr std::uint64_t kRlTag = 3;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_log(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot open log file " + path);
    return f;
}

void prepare_run_dir(const Config& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    fs::create_directories(out_dir + "/checkpoints");
    fs::create_directories(out_dir + "/logs");
    cfg.write_echo(out_dir + "/config.echo");
}

SftWeights sft_weights_from(const Config& c) {
    SftWeights w;
    w.w_img = c.get_double("sft.w_img");
    w.w_txt = c.get_double("sft.w_txt");
    w.w_mm = c.get_double("sft.w_mm");
    w.w_ntp = c.get_double("sft.w_ntp");
    w.tau = c.get_double("sft.temperature");
    return w;
}

RewardWeights reward_weights_from(const Config& c) {
    RewardWeights w;
    w.w1 = c.get_double("rl.w1");
    w.w2 = c.get_double("rl.w2");
    w.w3 = c.get_double("rl.w3");
    w.w4 = c.get_double("rl.w4");
    w.alpha_q = c.get_double("rl.alpha_q");
    w.tau_q = c.get_double("rl.tau_q");
    w.lmax = c.get_int("rl.lmax");
    w.lambda1 = c.get_double("rl.lambda1");
    w.lambda2 = c.get_double("rl.lambda2");
    w.clip = c.get_double("rl.clip");
    w.G = c.get_int("rl.G");
    return w;
}

std::vector<NamedTensor> checkpoint_entries(const ParamStore& store, const Adam& opt,
                                            const Rng& data_rng) {
    std::vector<NamedTensor> entries = store.snapshot_values();
    for (auto& e : opt.state_entries()) entries.push_back(std::move(e));
    entries.push_back({"rng.data", u64_tensor({data_rng.seed(), data_rng.counter()})});
    return entries;
}

}  // namespace

void cmd_gen_data(const Config& cfg, const GenDataArgs& args) {
    if (args.products <= 0) throw std::invalid_argument("gen-data: --products must be positive");
    if (args.triplets <= 0) throw std::invalid_argument("gen-data: --triplets must be positive");
    if (args.out_dir.empty()) throw std::invalid_argument("gen-data: --out is required");

    Schema schema = args.schema_path ? Schema::load(*args.schema_path) : Schema::default_schema();
    GenParams params;
    params.patch_count = cfg.get_int("model.patch_count");
    params.patch_dim = cfg.get_int("model.patch_dim");
    params.noise_sigma = args.noise;
    Dataset ds{schema, Vocab(schema.vocab_tail()), params, {}, {}};

    Rng rng(args.seed);
    Rng proj_rng = rng.fork(11);
    Rng uni_rng = rng.fork(12);
    Rng trip_rng = rng.fork(13);
    PatchProjector proj = PatchProjector::make(ds.schema, ds.params, proj_rng);
    ds.universe = gen_universe(ds.schema, args.products, proj, ds.params, uni_rng, ds.vocab);
    ds.triplets = gen_triplets(ds.universe, args.triplets, ds.schema, proj, ds.params, trip_rng);
    save_dataset(args.out_dir, ds);
}

BuiltModel build_model(const Config& cfg, const Vocab& vocab) {
    BuiltModel built;
    ModelConfig mc = ModelConfig::from_config(cfg, vocab.size());
    Rng init_rng = Rng(static_cast<std::uint64_t>(cfg.get_int("seed"))).fork(kInitTag);
    built.model = std::make_unique<MoonModel>(mc, built.store, init_rng);
    return built;
}

void load_model_params(ParamStore& store, const std::string& ckpt_path) {
    store.load_values(read_checkpoint(ckpt_path));
}

void cmd_train_sft(const Config& cfg, const std::string& data_dir, const std::string& out_dir,
                   const std::optional<std::string>& resume_ckpt) {
    Dataset data = load_dataset(data_dir);
    prepare_run_dir(cfg, out_dir);
    BuiltModel built = build_model(cfg, data.vocab);
    AttrCodec codec(data.vocab, data.schema);

    int threads = cfg.get_int("threads");
    Rng data_rng = Rng(static_cast<std::uint64_t>(cfg.get_int("seed"))).fork(kSftTag);
    SftTrainer trainer(*built.model, built.store, data, codec, sft_weights_from(cfg),
                       cfg.get_double("sft.lr"), cfg.get_double("sft.grad_clip"),
                       cfg.get_int("sft.batch_size"), threads, data_rng);

    int steps = cfg.get_int("sft.steps");
    if (resume_ckpt) {
        auto entries = read_checkpoint(*resume_ckpt);
        built.store.load_values(entries);
        trainer.optimizer().load_state(entries);
        for (const auto& e : entries)
            if (e.name == "rng.data") {
                auto words = u64_from_tensor(e.tensor);
                trainer.data_rng() = Rng::restore(words[0], words[1]);
            }
        trainer.set_step_index(trainer.optimizer().t());
        steps -= trainer.step_index();
        if (steps < 0) steps = 0;
    }

    FilePtr log = open_log(out_dir + "/logs/sft.log");
    trainer.train(steps, log.get());
    write_checkpoint(out_dir + "/checkpoints/sft.ckpt",
                     checkpoint_entries(built.store, trainer.optimizer(), trainer.data_rng()));
}

void cmd_train_rl(const Config& cfg, const std::string& data_dir, const std::string& sft_ckpt,
                  const std::string& out_dir) {
    Dataset data = load_dataset(data_dir);
    prepare_run_dir(cfg, out_dir);
    BuiltModel built = build_model(cfg, data.vocab);
    load_model_params(built.store, sft_ckpt);
    AttrCodec codec(data.vocab, data.schema);

    int threads = cfg.get_int("threads");
    Rng rl_rng = Rng(static_cast<std::uint64_t>(cfg.get_int("seed"))).fork(kRlTag);
    RlTrainer trainer(*built.model, built.store, data, codec, reward_weights_from(cfg),
                      sft_weights_from(cfg), make_scorer(cfg.get("rl.scorer")),
                      cfg.get_double("rl.lr"), cfg.get_double("sft.grad_clip"),
                      cfg.get_int("rl.batch_size"), cfg.get_double("rl.temperature"), threads,
                      rl_rng);

    FilePtr log = open_log(out_dir + "/logs/rl.log");
    trainer.train(cfg.get_int("rl.steps"), log.get());
    write_checkpoint(out_dir + "/checkpoints/rl.ckpt",
                     checkpoint_entries(built.store, trainer.optimizer(), trainer.rng()));
}

void cmd_embed(const Config& cfg, const std::string& data_dir, const std::string& ckpt,
               const std::string& modality, const std::string& out_file,
               const std::optional<std::string>& rationale_file) {
    Dataset data = load_dataset(data_dir);
    BuiltModel built = build_model(cfg, data.vocab);
    load_model_params(built.store, ckpt);
    Modality m = modality_from_name(modality);
    int threads = cfg.get_int("threads");

    std::vector<NamedTensor> rows(data.universe.size());
    std::vector<std::vector<int>> rationales(data.universe.size());
    parallel_for(static_cast<int>(data.universe.size()), threads, [&](int i) {
        rows[i].name = data.universe[i].id;
        rows[i].tensor = built.model->embed_record(data.universe[i], m, &rationales[i]);
    });
    write_checkpoint(out_file, rows);

    if (rationale_file) {
        FilePtr f = open_log(*rationale_file);
        for (std::size_t i = 0; i < data.universe.size(); ++i) {
            std::string line = data.universe[i].id + "\t";
            for (std::size_t j = 0; j < rationales[i].size(); ++j) {
                if (j) line += " ";
                line += data.vocab.token(rationales[i][j]);
            }
            line += "\n";
            std::fputs(line.c_str(), f.get());
        }
    }
}

EvalReport cmd_eval(const Config& cfg, const std::string& data_dir, const std::string& ckpt,
                    const std::string& tasks, int pool, const std::string& out_file) {
    Dataset data = load_dataset(data_dir);
    BuiltModel built = build_model(cfg, data.vocab);
    load_model_params(built.store, ckpt);

    EvalOptions opts;
    opts.tasks = EvalOptions::parse_tasks(tasks);
    opts.pool = pool > 0 ? pool : cfg.get_int("eval.pool");
    opts.threads = cfg.get_int("threads");
    EvalReport rep = run_eval(*built.model, data, opts);
    if (!out_file.empty()) rep.write(out_file);
    std::fprintf(stderr, "eval finished in %.1fs\n", rep.wall_seconds);
    return rep;
}

}  // namespace moonlite
