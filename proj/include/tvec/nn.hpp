#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tvec/tensor.hpp"

namespace tvec {

enum class Activation { None, Relu };
enum class ScaleMode { InvSqrtDk, InvSqrtD };

std::string to_string(Activation a);
std::string to_string(ScaleMode m);
Activation activation_from_string(const std::string& s);
ScaleMode scale_mode_from_string(const std::string& s);

// Deterministic seed derivation for independent rng streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

// Uniform init in +-sqrt(6/(fan_in+fan_out)), shape fan_in x fan_out.
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

// Per-frame affine map (context width 1): frame t depends only on frame t.
struct TdnnLayer {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
  Activation activation = Activation::Relu;

  TdnnLayer() = default;
  TdnnLayer(std::size_t in, std::size_t out, Activation act, std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<Parameter>& out);
};

Tensor tdnn_forward(const Tensor& x, const TdnnLayer& layer);

// Sinusoidal table: PE[pos, 2i] = sin(pos / 10000^(2i/D)),
// PE[pos, 2i+1] = cos(pos / 10000^(2i/D)). D must be even.
Tensor positional_encoding(std::size_t T, std::size_t D);

// Multi-head attention where keys and values also attend over a detached
// memory segment. Queries always come from the live input only, so the
// output keeps the input's row count.
struct MultiHeadAttentionMem {
  std::size_t heads = 1;
  std::size_t dim = 0;
  ScaleMode scale_mode = ScaleMode::InvSqrtDk;
  Tensor wq, wk, wv, wo;  // per-head projections stored fused as D x D

  MultiHeadAttentionMem() = default;
  MultiHeadAttentionMem(std::size_t dim, std::size_t heads, ScaleMode mode,
                        std::mt19937_64& rng);

  // mem: M x D matrix or an empty tensor for no memory. The memory always
  // passes through stop_gradient before use. attn_out, when given, receives
  // the per-head attention weight matrices.
  Tensor forward(const Tensor& x, const Tensor& mem,
                 std::vector<Tensor>* attn_out = nullptr) const;
  void collect(const std::string& prefix, std::vector<Parameter>& out);
};

Tensor mha_mem_forward(const Tensor& x, const Tensor& mem,
                       const MultiHeadAttentionMem& attn,
                       std::vector<Tensor>* attn_out = nullptr);

// Post-norm transformer encoder block:
//   y1 = layer_norm(x + attention(x, mem))
//   y2 = layer_norm(y1 + ffn(y1)), ffn = affine -> relu -> affine
struct EncoderBlock {
  MultiHeadAttentionMem attn;
  Tensor ffn_w1, ffn_b1;  // D -> ffn_width
  Tensor ffn_w2, ffn_b2;  // ffn_width -> D
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;

  EncoderBlock() = default;
  EncoderBlock(std::size_t dim, std::size_t heads, std::size_t ffn_width,
               ScaleMode mode, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, const Tensor& mem) const;
  void collect(const std::string& prefix, std::vector<Parameter>& out);
};

Tensor encoder_block_forward(const Tensor& x, const Tensor& mem, const EncoderBlock& block);

// Per-layer hidden states carried between consecutive frame-level encoders.
// Entries are detached values; an empty layer slot means no memory at all
// (the ablation mode), distinct from the all-zero bank at sequence start.
struct MemoryBank {
  std::vector<Tensor> layers;

  static MemoryBank zeros(std::size_t depth, std::size_t window, std::size_t dim);
  static MemoryBank empty(std::size_t depth);
};

// M x D -> 1 x 2D: per-column mean then per-column population std.
Tensor statistics_pooling(const Tensor& x);

}  // namespace tvec
