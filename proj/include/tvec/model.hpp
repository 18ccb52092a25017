#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tvec/nn.hpp"
#include "tvec/tensor.hpp"

namespace tvec {

struct TvectorConfig {
  std::size_t feature_dim = 20;     // F
  std::size_t model_dim = 512;      // D
  std::size_t heads = 4;            // h
  std::size_t depth = 4;            // L frame-level blocks
  std::size_t ffn_width = 2048;
  std::size_t window = 20;          // M
  std::size_t step = 10;            // H
  std::size_t num_speakers = 0;     // K
  std::size_t seg_tdnn_width = 1500;
  std::size_t clf_hidden = 512;
  bool use_memory = true;
  ScaleMode scale_mode = ScaleMode::InvSqrtDk;
  Activation global_tdnn_act = Activation::Relu;

  void validate() const;
};

struct XvectorConfig {
  std::size_t feature_dim = 20;
  std::size_t model_dim = 512;
  std::size_t out_width = 1500;
  std::size_t clf_hidden = 512;
  std::size_t num_speakers = 0;

  void validate() const;
};

// Intermediate shapes collected during a forward pass, for inspection.
struct ForwardTrace {
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> shapes;
  void add(const std::string& name, std::size_t rows, std::size_t cols) {
    shapes.emplace_back(name, std::make_pair(rows, cols));
  }
  std::pair<std::size_t, std::size_t> shape(const std::string& name) const;
};

// Sliding window over the rows of s: N = floor((T-M)/H)+1 segments of M rows
// when T >= M; a single right-zero-padded segment when T < M. Tail rows not
// covered by the last full window are dropped.
std::vector<Tensor> segment_sequence(const Tensor& s, std::size_t window, std::size_t step);

// Left-to-right pass over the segments. Layer l of segment i attends over
// the detached output of layer l at segment i-1 (the bank's layer entry);
// each segment emits the statistics pooling of its top block output.
// bank_trace, when given, receives the bank consumed at every segment;
// bank_replay substitutes those banks instead of recomputing them (one per
// segment), which pins the memory values independently of the parameters.
std::vector<Tensor> frame_encoder_pass(const std::vector<Tensor>& segments,
                                       const std::vector<EncoderBlock>& blocks,
                                       const MemoryBank& initial,
                                       std::vector<MemoryBank>* bank_trace = nullptr,
                                       const std::vector<MemoryBank>* bank_replay = nullptr);

class TvectorModel {
 public:
  TvectorModel(const TvectorConfig& cfg, std::uint64_t seed);

  // features: T x F -> scores 1 x K, each strictly in (0,1). The memory
  // bank arguments pass through to frame_encoder_pass.
  Tensor forward(const Tensor& features, ForwardTrace* trace = nullptr,
                 std::vector<MemoryBank>* bank_trace = nullptr,
                 const std::vector<MemoryBank>* bank_replay = nullptr) const;

  const TvectorConfig& config() const { return cfg_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  void zero_grad();

  std::vector<EncoderBlock>& frame_blocks() { return frame_blocks_; }

 private:
  TvectorConfig cfg_;
  TdnnLayer global_tdnn_;
  std::vector<EncoderBlock> frame_blocks_;  // one shared set, reused per segment
  TdnnLayer seg_tdnn1_;
  EncoderBlock seg_block_;  // never receives memory
  TdnnLayer seg_tdnn2_;
  Tensor clf1_w_, clf1_b_, clf2_w_, clf2_b_;
  std::vector<Parameter> params_;

  void collect_params();
};

class XvectorModel {
 public:
  XvectorModel(const XvectorConfig& cfg, std::uint64_t seed);

  Tensor forward(const Tensor& features, ForwardTrace* trace = nullptr) const;

  const XvectorConfig& config() const { return cfg_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  void zero_grad();

 private:
  XvectorConfig cfg_;
  TdnnLayer tdnn1_, tdnn2_, tdnn3_;
  Tensor clf1_w_, clf1_b_, clf2_w_, clf2_b_;
  std::vector<Parameter> params_;

  void collect_params();
};

Tensor utterance_forward(const Tensor& features, const TvectorModel& model,
                         ForwardTrace* trace = nullptr);
Tensor xvector_forward(const Tensor& features, const XvectorModel& model,
                       ForwardTrace* trace = nullptr);

enum class ModelKind { Tvector, Xvector };

// Model-kind-erased wrapper used by training, evaluation and the CLI.
class AnyModel {
 public:
  explicit AnyModel(TvectorModel m) : m_(std::move(m)) {}
  explicit AnyModel(XvectorModel m) : m_(std::move(m)) {}

  ModelKind kind() const;
  Tensor forward(const Tensor& features) const;
  std::vector<Parameter>& parameters();
  std::size_t num_speakers() const;
  std::size_t feature_dim() const;
  void zero_grad();

  TvectorModel& tvector() { return std::get<TvectorModel>(m_); }
  XvectorModel& xvector() { return std::get<XvectorModel>(m_); }
  const TvectorModel& tvector() const { return std::get<TvectorModel>(m_); }
  const XvectorModel& xvector() const { return std::get<XvectorModel>(m_); }

 private:
  std::variant<TvectorModel, XvectorModel> m_;
};

// Checkpoint container: magic "TVEC", version u32, key-value config block,
// then the parameters in declaration order as
// name-length / name / rank / shape / raw little-endian f32 values.
void save_model(const std::filesystem::path& path, AnyModel& model);
AnyModel load_model(const std::filesystem::path& path);

}  // namespace tvec
