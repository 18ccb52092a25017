#include "tvec/model.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "tvec/binio.hpp"

namespace tvec {

namespace {

std::uint64_t req_size(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw std::runtime_error("checkpoint config missing key: " + key);
  return std::stoull(it->second);
}

std::string req_str(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw std::runtime_error("checkpoint config missing key: " + key);
  return it->second;
}

}  // namespace

void TvectorConfig::validate() const {
  if (num_speakers < 1) throw std::invalid_argument("config: num_speakers must be >= 1");
  if (feature_dim < 1) throw std::invalid_argument("config: feature_dim must be >= 1");
  if (model_dim % 2 != 0)
    throw std::invalid_argument("config: model_dim must be even for positional encoding");
  if (heads == 0 || model_dim % heads != 0)
    throw std::invalid_argument("config: model_dim " + std::to_string(model_dim) +
                                " not divisible by heads " + std::to_string(heads));
  if (depth < 1) throw std::invalid_argument("config: depth must be >= 1");
  if (window < 1 || step < 1 || step > window)
    throw std::invalid_argument("config: require 1 <= step <= window, got step=" +
                                std::to_string(step) + " window=" + std::to_string(window));
  if (ffn_width < 1 || seg_tdnn_width < 1 || clf_hidden < 1)
    throw std::invalid_argument("config: layer widths must be >= 1");
}

void XvectorConfig::validate() const {
  if (num_speakers < 1) throw std::invalid_argument("config: num_speakers must be >= 1");
  if (feature_dim < 1 || model_dim < 1 || out_width < 1 || clf_hidden < 1)
    throw std::invalid_argument("config: layer widths must be >= 1");
}

std::pair<std::size_t, std::size_t> ForwardTrace::shape(const std::string& name) const {
  for (const auto& [n, s] : shapes)
    if (n == name) return s;
  throw std::out_of_range("ForwardTrace: no entry named " + name);
}

std::vector<Tensor> segment_sequence(const Tensor& s, std::size_t window, std::size_t step) {
  if (window == 0 || step == 0)
    throw std::invalid_argument("segment_sequence: window and step must be positive");
  const std::size_t T = s.rows();
  if (T == 0) throw std::invalid_argument("segment_sequence: empty sequence");
  std::vector<Tensor> segments;
  if (T < window) {
    segments.push_back(concat_rows({s, Tensor(window - T, s.cols(), 0.0)}));
    return segments;
  }
  const std::size_t n = (T - window) / step + 1;
  segments.reserve(n);
  for (std::size_t i = 0; i < n; ++i) segments.push_back(slice_rows(s, i * step, window));
  return segments;
}

std::vector<Tensor> frame_encoder_pass(const std::vector<Tensor>& segments,
                                       const std::vector<EncoderBlock>& blocks,
                                       const MemoryBank& initial,
                                       std::vector<MemoryBank>* bank_trace,
                                       const std::vector<MemoryBank>* bank_replay) {
  if (segments.empty()) throw std::invalid_argument("frame_encoder_pass: no segments");
  if (initial.layers.size() != blocks.size())
    throw std::invalid_argument("frame_encoder_pass: memory bank depth " +
                                std::to_string(initial.layers.size()) + " != block count " +
                                std::to_string(blocks.size()));
  if (bank_replay && bank_replay->size() != segments.size())
    throw std::invalid_argument("frame_encoder_pass: bank replay needs one bank per segment");
  MemoryBank bank = initial;
  const bool use_memory = !bank.layers.empty() && bank.layers[0].numel() > 0;
  std::vector<Tensor> out;
  out.reserve(segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (bank_replay) bank = (*bank_replay)[i];
    if (bank_trace) bank_trace->push_back(bank);
    Tensor h = segments[i];
    MemoryBank next = bank;
    for (std::size_t l = 0; l < blocks.size(); ++l) {
      h = blocks[l].forward(h, bank.layers[l]);
      if (use_memory) next.layers[l] = stop_gradient(h);
    }
    bank = std::move(next);
    out.push_back(statistics_pooling(h));
  }
  return out;
}

// --- TvectorModel -----------------------------------------------------------

TvectorModel::TvectorModel(const TvectorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(mix_seed(seed, 0x7611));
  global_tdnn_ = TdnnLayer(cfg_.feature_dim, cfg_.model_dim, cfg_.global_tdnn_act, rng);
  frame_blocks_.reserve(cfg_.depth);
  for (std::size_t l = 0; l < cfg_.depth; ++l)
    frame_blocks_.emplace_back(cfg_.model_dim, cfg_.heads, cfg_.ffn_width, cfg_.scale_mode, rng);
  seg_tdnn1_ = TdnnLayer(2 * cfg_.model_dim, cfg_.model_dim, Activation::Relu, rng);
  seg_block_ = EncoderBlock(cfg_.model_dim, cfg_.heads, cfg_.ffn_width, cfg_.scale_mode, rng);
  seg_tdnn2_ = TdnnLayer(cfg_.model_dim, cfg_.seg_tdnn_width, Activation::Relu, rng);
  clf1_w_ = xavier_uniform(2 * cfg_.seg_tdnn_width, cfg_.clf_hidden, rng);
  clf1_b_ = Tensor(1, cfg_.clf_hidden);
  clf2_w_ = xavier_uniform(cfg_.clf_hidden, cfg_.num_speakers, rng);
  clf2_b_ = Tensor(1, cfg_.num_speakers);
  for (Tensor* t : {&clf1_w_, &clf1_b_, &clf2_w_, &clf2_b_}) t->set_requires_grad(true);
  collect_params();
}

void TvectorModel::collect_params() {
  params_.clear();
  global_tdnn_.collect("global_tdnn", params_);
  for (std::size_t l = 0; l < frame_blocks_.size(); ++l)
    frame_blocks_[l].collect("frame_block" + std::to_string(l), params_);
  seg_tdnn1_.collect("seg_tdnn1", params_);
  seg_block_.collect("seg_block", params_);
  seg_tdnn2_.collect("seg_tdnn2", params_);
  params_.push_back({"clf1.weight", clf1_w_});
  params_.push_back({"clf1.bias", clf1_b_});
  params_.push_back({"clf2.weight", clf2_w_});
  params_.push_back({"clf2.bias", clf2_b_});
}

void TvectorModel::zero_grad() {
  for (Parameter& p : params_) p.tensor.zero_grad();
}

Tensor TvectorModel::forward(const Tensor& features, ForwardTrace* trace,
                             std::vector<MemoryBank>* bank_trace,
                             const std::vector<MemoryBank>* bank_replay) const {
  if (features.cols() != cfg_.feature_dim)
    throw std::invalid_argument("utterance_forward: feature width " + features.shape_str() +
                                " does not match F=" + std::to_string(cfg_.feature_dim));
  if (features.rows() == 0)
    throw std::invalid_argument("utterance_forward: empty feature sequence");
  const std::size_t T = features.rows();
  if (trace) trace->add("input", T, features.cols());

  Tensor s = add(global_tdnn_.forward(features), positional_encoding(T, cfg_.model_dim));
  if (trace) trace->add("global_tdnn", s.rows(), s.cols());

  std::vector<Tensor> segments = segment_sequence(s, cfg_.window, cfg_.step);
  if (trace) trace->add("segment0", segments[0].rows(), segments[0].cols());

  MemoryBank bank = cfg_.use_memory
                        ? MemoryBank::zeros(cfg_.depth, segments[0].rows(), cfg_.model_dim)
                        : MemoryBank::empty(cfg_.depth);
  std::vector<Tensor> segvecs =
      frame_encoder_pass(segments, frame_blocks_, bank, bank_trace, bank_replay);

  Tensor sv = concat_rows(segvecs);
  if (trace) trace->add("segment_vectors", sv.rows(), sv.cols());

  Tensor t1 = seg_tdnn1_.forward(sv);
  if (trace) trace->add("seg_tdnn1", t1.rows(), t1.cols());
  Tensor sb = seg_block_.forward(t1, Tensor());
  if (trace) trace->add("seg_encoder", sb.rows(), sb.cols());
  Tensor t2 = seg_tdnn2_.forward(sb);
  if (trace) trace->add("seg_tdnn2", t2.rows(), t2.cols());

  Tensor pooled = statistics_pooling(t2);
  if (trace) trace->add("stats_pooling", pooled.rows(), pooled.cols());

  Tensor hidden = relu(add_rowvec(matmul(pooled, clf1_w_), clf1_b_));
  if (trace) trace->add("clf_hidden", hidden.rows(), hidden.cols());
  Tensor scores = sigmoid(add_rowvec(matmul(hidden, clf2_w_), clf2_b_));
  if (trace) trace->add("scores", scores.rows(), scores.cols());
  return scores;
}

// --- XvectorModel -----------------------------------------------------------

XvectorModel::XvectorModel(const XvectorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(mix_seed(seed, 0x7612));
  tdnn1_ = TdnnLayer(cfg_.feature_dim, cfg_.model_dim, Activation::Relu, rng);
  tdnn2_ = TdnnLayer(cfg_.model_dim, cfg_.model_dim, Activation::Relu, rng);
  tdnn3_ = TdnnLayer(cfg_.model_dim, cfg_.out_width, Activation::Relu, rng);
  clf1_w_ = xavier_uniform(2 * cfg_.out_width, cfg_.clf_hidden, rng);
  clf1_b_ = Tensor(1, cfg_.clf_hidden);
  clf2_w_ = xavier_uniform(cfg_.clf_hidden, cfg_.num_speakers, rng);
  clf2_b_ = Tensor(1, cfg_.num_speakers);
  for (Tensor* t : {&clf1_w_, &clf1_b_, &clf2_w_, &clf2_b_}) t->set_requires_grad(true);
  collect_params();
}

void XvectorModel::collect_params() {
  params_.clear();
  tdnn1_.collect("tdnn1", params_);
  tdnn2_.collect("tdnn2", params_);
  tdnn3_.collect("tdnn3", params_);
  params_.push_back({"clf1.weight", clf1_w_});
  params_.push_back({"clf1.bias", clf1_b_});
  params_.push_back({"clf2.weight", clf2_w_});
  params_.push_back({"clf2.bias", clf2_b_});
}

void XvectorModel::zero_grad() {
  for (Parameter& p : params_) p.tensor.zero_grad();
}

Tensor XvectorModel::forward(const Tensor& features, ForwardTrace* trace) const {
  if (features.cols() != cfg_.feature_dim)
    throw std::invalid_argument("xvector_forward: feature width " + features.shape_str() +
                                " does not match F=" + std::to_string(cfg_.feature_dim));
  if (features.rows() == 0)
    throw std::invalid_argument("xvector_forward: empty feature sequence");
  if (trace) trace->add("input", features.rows(), features.cols());
  Tensor h = tdnn3_.forward(tdnn2_.forward(tdnn1_.forward(features)));
  if (trace) trace->add("frame_features", h.rows(), h.cols());
  Tensor pooled = statistics_pooling(h);
  if (trace) trace->add("stats_pooling", pooled.rows(), pooled.cols());
  Tensor hidden = relu(add_rowvec(matmul(pooled, clf1_w_), clf1_b_));
  Tensor scores = sigmoid(add_rowvec(matmul(hidden, clf2_w_), clf2_b_));
  if (trace) trace->add("scores", scores.rows(), scores.cols());
  return scores;
}

Tensor utterance_forward(const Tensor& features, const TvectorModel& model, ForwardTrace* trace) {
  return model.forward(features, trace);
}

Tensor xvector_forward(const Tensor& features, const XvectorModel& model, ForwardTrace* trace) {
  return model.forward(features, trace);
}

// --- AnyModel ---------------------------------------------------------------

ModelKind AnyModel::kind() const {
  return std::holds_alternative<TvectorModel>(m_) ? ModelKind::Tvector : ModelKind::Xvector;
}

Tensor AnyModel::forward(const Tensor& features) const {
  if (auto* t = std::get_if<TvectorModel>(&m_)) return t->forward(features);
  return std::get<XvectorModel>(m_).forward(features);
}

std::vector<Parameter>& AnyModel::parameters() {
  if (auto* t = std::get_if<TvectorModel>(&m_)) return t->parameters();
  return std::get<XvectorModel>(m_).parameters();
}

std::size_t AnyModel::num_speakers() const {
  if (auto* t = std::get_if<TvectorModel>(&m_)) return t->config().num_speakers;
  return std::get<XvectorModel>(m_).config().num_speakers;
}

std::size_t AnyModel::feature_dim() const {
  if (auto* t = std::get_if<TvectorModel>(&m_)) return t->config().feature_dim;
  return std::get<XvectorModel>(m_).config().feature_dim;
}

void AnyModel::zero_grad() {
  if (auto* t = std::get_if<TvectorModel>(&m_))
    t->zero_grad();
  else
    std::get<XvectorModel>(m_).zero_grad();
}

// --- checkpoint io ------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'T', 'V', 'E', 'C'};
constexpr std::uint32_t kVersion = 1;

using binio::read_f32;
using binio::read_u32;
using binio::write_f32;
using binio::write_u32;

std::string config_block(const AnyModel& model) {
  std::ostringstream os;
  if (model.kind() == ModelKind::Tvector) {
    const TvectorConfig& c = model.tvector().config();
    os << "model=tvector\n"
       << "f=" << c.feature_dim << "\n"
       << "dim=" << c.model_dim << "\n"
       << "heads=" << c.heads << "\n"
       << "depth=" << c.depth << "\n"
       << "ffn=" << c.ffn_width << "\n"
       << "window=" << c.window << "\n"
       << "step=" << c.step << "\n"
       << "k=" << c.num_speakers << "\n"
       << "seg_width=" << c.seg_tdnn_width << "\n"
       << "clf_hidden=" << c.clf_hidden << "\n"
       << "memory=" << (c.use_memory ? 1 : 0) << "\n"
       << "scale=" << to_string(c.scale_mode) << "\n"
       << "global_act=" << to_string(c.global_tdnn_act) << "\n";
  } else {
    const XvectorConfig& c = model.xvector().config();
    os << "model=xvector\n"
       << "f=" << c.feature_dim << "\n"
       << "dim=" << c.model_dim << "\n"
       << "out_width=" << c.out_width << "\n"
       << "clf_hidden=" << c.clf_hidden << "\n"
       << "k=" << c.num_speakers << "\n";
  }
  return os.str();
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("checkpoint config: malformed line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace

void save_model(const std::filesystem::path& path, AnyModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  const std::string cfg = config_block(model);
  write_u32(os, static_cast<std::uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  const auto& params = model.parameters();
  write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const Parameter& p : params) {
    write_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_u32(os, 2);
    write_u32(os, static_cast<std::uint32_t>(p.tensor.rows()));
    write_u32(os, static_cast<std::uint32_t>(p.tensor.cols()));
    for (double v : p.tensor.values()) write_f32(os, static_cast<float>(v));
  }
  os.flush();
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path.string());
}

AnyModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  const std::uint32_t version = read_u32(is);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const std::uint32_t cfg_len = read_u32(is);
  std::string cfg_text(cfg_len, '\0');
  is.read(cfg_text.data(), cfg_len);
  if (!is) throw std::runtime_error("checkpoint: truncated config block");
  const auto kv = parse_kv(cfg_text);

  const std::string kind = req_str(kv, "model");
  AnyModel model = [&]() -> AnyModel {
    if (kind == "tvector") {
      TvectorConfig c;
      c.feature_dim = req_size(kv, "f");
      c.model_dim = req_size(kv, "dim");
      c.heads = req_size(kv, "heads");
      c.depth = req_size(kv, "depth");
      c.ffn_width = req_size(kv, "ffn");
      c.window = req_size(kv, "window");
      c.step = req_size(kv, "step");
      c.num_speakers = req_size(kv, "k");
      c.seg_tdnn_width = req_size(kv, "seg_width");
      c.clf_hidden = req_size(kv, "clf_hidden");
      c.use_memory = req_size(kv, "memory") != 0;
      c.scale_mode = scale_mode_from_string(req_str(kv, "scale"));
      c.global_tdnn_act = activation_from_string(req_str(kv, "global_act"));
      return AnyModel(TvectorModel(c, 0));
    }
    if (kind == "xvector") {
      XvectorConfig c;
      c.feature_dim = req_size(kv, "f");
      c.model_dim = req_size(kv, "dim");
      c.out_width = req_size(kv, "out_width");
      c.clf_hidden = req_size(kv, "clf_hidden");
      c.num_speakers = req_size(kv, "k");
      return AnyModel(XvectorModel(c, 0));
    }
    throw std::runtime_error("checkpoint: unknown model kind: " + kind);
  }();

  auto& params = model.parameters();
  const std::uint32_t count = read_u32(is);
  if (count != params.size())
    throw std::runtime_error("checkpoint: parameter count " + std::to_string(count) +
                             " does not match model (" + std::to_string(params.size()) + ")");
  for (Parameter& p : params) {
    const std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is || name != p.name)
      throw std::runtime_error("checkpoint: expected parameter " + p.name + ", found " + name);
    const std::uint32_t rank = read_u32(is);
    if (rank != 2) throw std::runtime_error("checkpoint: parameter " + name + " has rank " +
                                            std::to_string(rank));
    const std::uint32_t rows = read_u32(is);
    const std::uint32_t cols = read_u32(is);
    if (rows != p.tensor.rows() || cols != p.tensor.cols())
      throw std::runtime_error("checkpoint: parameter " + name + " shape [" +
                               std::to_string(rows) + "x" + std::to_string(cols) +
                               "] does not match model " + p.tensor.shape_str());
    for (double& v : p.tensor.values()) v = static_cast<double>(read_f32(is));
  }
  return model;
}

}  // namespace tvec
