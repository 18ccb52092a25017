#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tvec/data.hpp"
#include "tvec/model.hpp"
#include "tvec/train.hpp"

namespace tvec {

// Merged run configuration: defaults, then a key=value config file, then
// command-line overrides. Unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out;
  std::string data;
  std::string model = "tvector";
  std::string scenario = "concat";

  // dataset
  std::size_t k = 8;
  std::size_t f = 20;
  std::size_t t = 500;
  std::size_t fps = 100;
  std::size_t train = 200;
  std::size_t test = 100;
  double sigma = 0.3;

  // model
  std::size_t dim = 512;
  std::size_t heads = 4;
  std::size_t depth = 4;
  std::size_t ffn = 2048;
  std::size_t window = 20;
  std::size_t step = 10;
  std::size_t seg_width = 1500;
  std::size_t clf_hidden = 512;
  bool memory = true;
  std::string scale = "inv_sqrt_dk";
  std::string global_act = "relu";

  // training
  std::size_t epochs = 10;
  std::size_t batch = 8;
  double lr = 1e-4;
  std::size_t eval_every = 0;
  bool timing = false;

  // ablation grid
  std::string windows = "20,25,30";

  int threads = 0;  // 0 = library default

  void set(const std::string& key, const std::string& value);
  std::string echo() const;

  TvectorConfig tvector_config() const;
  XvectorConfig xvector_config() const;
  DatasetConfig dataset_config() const;
  TrainConfig train_config() const;
};

// Applies `key=value` lines ('#' comments and blank lines skipped).
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

std::vector<std::size_t> parse_size_list(const std::string& csv);

}  // namespace tvec
