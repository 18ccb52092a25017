#include <CLI11.hpp>
#include <cstdio>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "tvec/commands.hpp"
#include "tvec/kernels.hpp"

namespace {

std::string dtos(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// One option set shared by every subcommand; flags given on the command line
// override the config file, which overrides the defaults.
struct FlagSet {
  std::string config_path;
  CLI::Option* config_opt = nullptr;

  struct Entry {
    CLI::Option* opt;
    std::string key;
    std::function<std::string()> get;
  };
  std::vector<Entry> entries;

  std::uint64_t seed{};
  std::string out, data, model, scenario, scale, global_act, windows;
  std::size_t k{}, f{}, t{}, fps{}, train{}, test{}, dim{}, heads{}, depth{}, ffn{},
      window{}, step{}, seg_width{}, clf_hidden{}, epochs{}, batch{}, eval_every{};
  double sigma{}, lr{};
  int threads{};
  bool no_memory = false;
  bool timing = false;
  CLI::Option* no_memory_opt = nullptr;
  CLI::Option* timing_opt = nullptr;

  void bind(CLI::App* sub) {
    config_opt = sub->add_option("--config", config_path, "key=value config file");
    auto add = [&](const char* flag, auto& var, const std::string& key, const char* help) {
      CLI::Option* opt = sub->add_option(flag, var, help);
      if constexpr (std::is_same_v<std::decay_t<decltype(var)>, double>) {
        entries.push_back({opt, key, [&var] { return dtos(var); }});
      } else if constexpr (std::is_same_v<std::decay_t<decltype(var)>, std::string>) {
        entries.push_back({opt, key, [&var] { return var; }});
      } else {
        entries.push_back({opt, key, [&var] { return std::to_string(var); }});
      }
    };
    add("--seed", seed, "seed", "global random seed");
    add("--out", out, "out", "run/output directory");
    add("--data", data, "data", "dataset directory (train.manifest/test.manifest)");
    add("--model", model, "model", "tvector or xvector");
    add("--scenario", scenario, "scenario", "concat or overlap");
    add("--k", k, "k", "number of enrolled speakers");
    add("--f", f, "f", "feature dimension");
    add("--t", t, "t", "utterance length in frames");
    add("--fps", fps, "fps", "frames per second");
    add("--train", train, "train", "training utterance count");
    add("--test", test, "test", "test utterance count");
    add("--sigma", sigma, "sigma", "synthetic speaker std");
    add("--dim", dim, "dim", "model width D");
    add("--heads", heads, "heads", "attention heads");
    add("--depth", depth, "depth", "frame-level encoder blocks L");
    add("--ffn", ffn, "ffn", "feed-forward width");
    add("--window", window, "window", "segment window M in frames");
    add("--step", step, "step", "segment step H in frames");
    add("--seg-width", seg_width, "seg_width", "segment-level TDNN output width");
    add("--clf-hidden", clf_hidden, "clf_hidden", "classifier hidden width");
    add("--scale", scale, "scale", "attention scale: inv_sqrt_dk or inv_sqrt_d");
    add("--global-act", global_act, "global_act", "global TDNN activation: relu or none");
    add("--epochs", epochs, "epochs", "training epochs");
    add("--batch", batch, "batch", "batch size");
    add("--lr", lr, "lr", "learning rate");
    add("--eval-every", eval_every, "eval_every", "checkpoint every N epochs");
    add("--windows", windows, "windows", "ablation window sizes, comma separated");
    add("--threads", threads, "threads", "worker thread cap");
    no_memory_opt = sub->add_flag("--no-memory", no_memory,
                                  "disable the frame-level memory mechanism");
    timing_opt = sub->add_flag("--timing", timing, "record wall seconds in loss.csv");
  }

  tvec::RunConfig build() const {
    tvec::RunConfig cfg;
    if (*config_opt) tvec::apply_config_file(cfg, config_path);
    for (const Entry& e : entries)
      if (*e.opt) cfg.set(e.key, e.get());
    if (*no_memory_opt) cfg.set("memory", "0");
    if (*timing_opt) cfg.set("timing", "1");
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  tvec::kernels::init_threads_from_env();

  CLI::App app{"t-vector weakly supervised multi-speaker identification"};
  app.require_subcommand(1);

  FlagSet synth_flags, train_flags, eval_flags, ablate_flags;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic weak-label dataset");
  CLI::App* train = app.add_subcommand("train", "train a model on a dataset");
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  CLI::App* ablate = app.add_subcommand("ablate", "memory on/off x window size grid");
  synth_flags.bind(synth);
  train_flags.bind(train);
  eval_flags.bind(eval);
  ablate_flags.bind(ablate);

  synth->callback([&] { tvec::cmd_synth(synth_flags.build()); });
  train->callback([&] { tvec::cmd_train(train_flags.build()); });
  eval->callback([&] { tvec::cmd_eval(eval_flags.build()); });
  ablate->callback([&] { tvec::cmd_ablate(ablate_flags.build()); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
