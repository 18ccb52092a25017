#include "tvec/commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "tvec/eval.hpp"
#include "tvec/kernels.hpp"
#include "tvec/nn.hpp"

namespace tvec {

namespace {

namespace fs = std::filesystem;

fs::path require_dir(const std::string& value, const char* flag) {
  if (value.empty())
    throw std::invalid_argument(std::string("missing required ") + flag + " directory");
  fs::path p(value);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw std::runtime_error("cannot create " + p.string() + ": " + ec.message());
  return p;
}

void echo_config(const RunConfig& cfg, const fs::path& out_dir) {
  std::ofstream os(out_dir / "config.echo", std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + (out_dir / "config.echo").string());
  os << cfg.echo();
  os.flush();
  if (!os) throw std::runtime_error("write failed: " + (out_dir / "config.echo").string());
}

void apply_threads(const RunConfig& cfg) {
  if (cfg.threads > 0) kernels::set_max_threads(cfg.threads);
}

AnyModel build_model(const RunConfig& cfg, const DatasetManifest& manifest) {
  if (cfg.model == "xvector") {
    XvectorConfig xc = cfg.xvector_config();
    xc.num_speakers = manifest.num_speakers;
    xc.feature_dim = manifest.feature_dim;
    return AnyModel(XvectorModel(xc, mix_seed(cfg.seed, 0x0DE1)));
  }
  TvectorConfig tc = cfg.tvector_config();
  tc.num_speakers = manifest.num_speakers;
  tc.feature_dim = manifest.feature_dim;
  return AnyModel(TvectorModel(tc, mix_seed(cfg.seed, 0x0DE1)));
}

}  // namespace

void cmd_synth(const RunConfig& cfg) {
  const fs::path out = require_dir(cfg.out, "--out");
  build_dataset(out, cfg.dataset_config(), cfg.seed);
  echo_config(cfg, out);
  std::cout << "synth: wrote " << cfg.train << " train / " << cfg.test
            << " test utterances (K=" << cfg.k << ", F=" << cfg.f << ", T=" << cfg.t
            << ", scenario=" << cfg.scenario << ") to " << out.string() << "\n";
}

void cmd_train(const RunConfig& cfg) {
  apply_threads(cfg);
  if (cfg.data.empty()) throw std::invalid_argument("train: missing --data directory");
  const fs::path data(cfg.data);
  const fs::path out = require_dir(cfg.out, "--out");
  const DatasetManifest manifest = read_manifest(data / "train.manifest");

  AnyModel model = build_model(cfg, manifest);
  TrainConfig tc = cfg.train_config();
  tc.checkpoint_path = out / "checkpoint.tvec";
  const TrainResult result = train_loop(model, manifest, data, tc);
  write_loss_history(out / "loss.csv", result.history);
  echo_config(cfg, out);
  std::cout << "train: " << result.steps << " optimizer steps over " << cfg.epochs
            << " epochs, final mean loss " << result.history.back().mean_loss << "\n";
}

void cmd_eval(const RunConfig& cfg) {
  apply_threads(cfg);
  if (cfg.data.empty()) throw std::invalid_argument("eval: missing --data directory");
  const fs::path data(cfg.data);
  const fs::path out = require_dir(cfg.out, "--out");
  const DatasetManifest manifest = read_manifest(data / "test.manifest");
  const AnyModel model = load_model(out / "checkpoint.tvec");
  const EvalReport report = evaluate(model, manifest, data);
  write_eval_csv(out / "eval.csv", report);
  write_summary(out / "summary.txt", report);
  echo_config(cfg, out);
  std::cout << "eval: mean EER " << report.mean_eer << " over " << report.utterances.size()
            << " utterances\n";
}

void cmd_ablate(const RunConfig& cfg) {
  apply_threads(cfg);
  if (cfg.model != "tvector")
    throw std::invalid_argument("ablate: the memory/window grid applies to the tvector model");
  if (cfg.data.empty()) throw std::invalid_argument("ablate: missing --data directory");
  const fs::path data(cfg.data);
  const fs::path out = require_dir(cfg.out, "--out");
  const DatasetManifest train_manifest = read_manifest(data / "train.manifest");
  const DatasetManifest test_manifest = read_manifest(data / "test.manifest");
  const std::vector<std::size_t> window_sizes = parse_size_list(cfg.windows);

  std::ofstream csv(out / "ablate.csv", std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write " + (out / "ablate.csv").string());
  csv << "memory,window,mean_eer,eer_concat,eer_overlap\n";

  char buf[128];
  std::size_t cell = 0;
  for (const bool mem : {true, false}) {
    for (const std::size_t w : window_sizes) {
      RunConfig cell_cfg = cfg;
      cell_cfg.memory = mem;
      cell_cfg.window = w;
      cell_cfg.seed = mix_seed(cfg.seed, 0xAB1A + cell);
      const fs::path cell_dir =
          require_dir((out / ("cell_mem" + std::to_string(mem ? 1 : 0) + "_w" +
                              std::to_string(w))).string(), "--out");
      AnyModel model = build_model(cell_cfg, train_manifest);
      TrainConfig tc = cell_cfg.train_config();
      tc.checkpoint_path = cell_dir / "checkpoint.tvec";
      train_loop(model, train_manifest, data, tc);
      const EvalReport report = evaluate(model, test_manifest, data);
      write_eval_csv(cell_dir / "eval.csv", report);
      write_summary(cell_dir / "summary.txt", report);

      const auto scenario_eer = [&](Scenario s) {
        const auto it = report.mean_by_scenario.find(s);
        return it == report.mean_by_scenario.end()
                   ? std::string("nan")
                   : (std::snprintf(buf, sizeof(buf), "%.17g", it->second), std::string(buf));
      };
      const std::string concat_eer = scenario_eer(Scenario::Concat);
      const std::string overlap_eer = scenario_eer(Scenario::Overlap);
      std::snprintf(buf, sizeof(buf), "%d,%zu,%.17g,", mem ? 1 : 0, w, report.mean_eer);
      csv << buf << concat_eer << ',' << overlap_eer << "\n";
      std::cout << "ablate: memory=" << (mem ? "on" : "off") << " window=" << w
                << " mean_eer=" << report.mean_eer << "\n";
      ++cell;
    }
  }
  csv.flush();
  if (!csv) throw std::runtime_error("write failed: " + (out / "ablate.csv").string());
  echo_config(cfg, out);
}

}  // namespace tvec
