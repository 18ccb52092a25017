#include "tvec/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tvec {

namespace {

std::size_t to_size(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return static_cast<std::size_t>(v);
  } catch (...) {
    throw std::invalid_argument("config: " + key + " expects an integer, got '" + value + "'");
  }
}

double to_real(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (...) {
    throw std::invalid_argument("config: " + key + " expects a number, got '" + value + "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw std::invalid_argument("config: " + key + " expects a boolean, got '" + value + "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "seed") seed = to_size(key, value);
  else if (key == "out") out = value;
  else if (key == "data") data = value;
  else if (key == "model") {
    if (value != "tvector" && value != "xvector")
      throw std::invalid_argument("config: model must be tvector or xvector, got '" + value + "'");
    model = value;
  } else if (key == "scenario") {
    scenario_from_string(value);  // validates
    scenario = value;
  } else if (key == "k") k = to_size(key, value);
  else if (key == "f") f = to_size(key, value);
  else if (key == "t") t = to_size(key, value);
  else if (key == "fps") fps = to_size(key, value);
  else if (key == "train") train = to_size(key, value);
  else if (key == "test") test = to_size(key, value);
  else if (key == "sigma") sigma = to_real(key, value);
  else if (key == "dim") dim = to_size(key, value);
  else if (key == "heads") heads = to_size(key, value);
  else if (key == "depth") depth = to_size(key, value);
  else if (key == "ffn") ffn = to_size(key, value);
  else if (key == "window") window = to_size(key, value);
  else if (key == "step") step = to_size(key, value);
  else if (key == "seg_width") seg_width = to_size(key, value);
  else if (key == "clf_hidden") clf_hidden = to_size(key, value);
  else if (key == "memory") memory = to_bool(key, value);
  else if (key == "scale") {
    scale_mode_from_string(value);  // validates
    scale = value;
  } else if (key == "global_act") {
    activation_from_string(value);  // validates
    global_act = value;
  } else if (key == "epochs") epochs = to_size(key, value);
  else if (key == "batch") batch = to_size(key, value);
  else if (key == "lr") lr = to_real(key, value);
  else if (key == "eval_every") eval_every = to_size(key, value);
  else if (key == "timing") timing = to_bool(key, value);
  else if (key == "windows") {
    parse_size_list(value);  // validates
    windows = value;
  } else if (key == "threads") threads = static_cast<int>(to_size(key, value));
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

std::string RunConfig::echo() const {
  std::ostringstream os;
  char buf[64];
  os << "seed=" << seed << "\n"
     << "out=" << out << "\n"
     << "data=" << data << "\n"
     << "model=" << model << "\n"
     << "scenario=" << scenario << "\n"
     << "k=" << k << "\n"
     << "f=" << f << "\n"
     << "t=" << t << "\n"
     << "fps=" << fps << "\n"
     << "train=" << train << "\n"
     << "test=" << test << "\n";
  std::snprintf(buf, sizeof(buf), "sigma=%.17g\n", sigma);
  os << buf;
  os << "dim=" << dim << "\n"
     << "heads=" << heads << "\n"
     << "depth=" << depth << "\n"
     << "ffn=" << ffn << "\n"
     << "window=" << window << "\n"
     << "step=" << step << "\n"
     << "seg_width=" << seg_width << "\n"
     << "clf_hidden=" << clf_hidden << "\n"
     << "memory=" << (memory ? 1 : 0) << "\n"
     << "scale=" << scale << "\n"
     << "global_act=" << global_act << "\n"
     << "epochs=" << epochs << "\n"
     << "batch=" << batch << "\n";
  std::snprintf(buf, sizeof(buf), "lr=%.17g\n", lr);
  os << buf;
  os << "eval_every=" << eval_every << "\n"
     << "timing=" << (timing ? 1 : 0) << "\n"
     << "windows=" << windows << "\n"
     << "threads=" << threads << "\n";
  return os.str();
}

TvectorConfig RunConfig::tvector_config() const {
  TvectorConfig c;
  c.feature_dim = f;
  c.model_dim = dim;
  c.heads = heads;
  c.depth = depth;
  c.ffn_width = ffn;
  c.window = window;
  c.step = step;
  c.num_speakers = k;
  c.seg_tdnn_width = seg_width;
  c.clf_hidden = clf_hidden;
  c.use_memory = memory;
  c.scale_mode = scale_mode_from_string(scale);
  c.global_tdnn_act = activation_from_string(global_act);
  return c;
}

XvectorConfig RunConfig::xvector_config() const {
  XvectorConfig c;
  c.feature_dim = f;
  c.model_dim = dim;
  c.out_width = seg_width;
  c.clf_hidden = clf_hidden;
  c.num_speakers = k;
  return c;
}

DatasetConfig RunConfig::dataset_config() const {
  DatasetConfig c;
  c.num_speakers = k;
  c.feature_dim = f;
  c.frames = t;
  c.fps = fps;
  c.train_size = train;
  c.test_size = test;
  c.sigma = sigma;
  c.scenario = scenario_from_string(scenario);
  return c;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig c;
  c.batch_size = batch;
  c.epochs = epochs;
  c.seed = seed;
  c.eval_every = eval_every;
  c.lr = lr;
  c.timing = timing;
  return c;
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: " + path.string() + ":" + std::to_string(lineno) +
                               ": expected key=value, got '" + line + "'");
    cfg.set(line.substr(0, eq), line.substr(eq + 1));
  }
}

std::vector<std::size_t> parse_size_list(const std::string& csv) {
  std::vector<std::size_t> out;
  std::istringstream is(csv);
  std::string item;
  while (std::getline(is, item, ',')) {
    if (item.empty()) throw std::invalid_argument("config: empty entry in list '" + csv + "'");
    out.push_back(to_size("list", item));
  }
  if (out.empty()) throw std::invalid_argument("config: empty list");
  return out;
}

}  // namespace tvec
