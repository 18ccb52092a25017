#include "tvec/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace tvec {

std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "none"; }

std::string to_string(ScaleMode m) {
  return m == ScaleMode::InvSqrtDk ? "inv_sqrt_dk" : "inv_sqrt_d";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "none") return Activation::None;
  throw std::invalid_argument("unknown activation: " + s);
}

ScaleMode scale_mode_from_string(const std::string& s) {
  if (s == "inv_sqrt_dk") return ScaleMode::InvSqrtDk;
  if (s == "inv_sqrt_d") return ScaleMode::InvSqrtD;
  throw std::invalid_argument("unknown scale mode: " + s);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(fan_in, fan_out);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

// --- TdnnLayer ----------------------------------------------------------------

TdnnLayer::TdnnLayer(std::size_t in, std::size_t out, Activation act, std::mt19937_64& rng)
    : weight(xavier_uniform(in, out, rng)), bias(1, out), activation(act) {
  weight.set_requires_grad(true);
  bias.set_requires_grad(true);
}

Tensor TdnnLayer::forward(const Tensor& x) const {
  Tensor y = add_rowvec(matmul(x, weight), bias);
  return activation == Activation::Relu ? relu(y) : y;
}

void TdnnLayer::collect(const std::string& prefix, std::vector<Parameter>& out) {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Tensor tdnn_forward(const Tensor& x, const TdnnLayer& layer) { return layer.forward(x); }

// --- positional encoding -------------------------------------------------------

Tensor positional_encoding(std::size_t T, std::size_t D) {
  if (D % 2 != 0)
    throw std::invalid_argument("positional_encoding: D must be even, got " + std::to_string(D));
  Tensor pe(T, D);
  for (std::size_t pos = 0; pos < T; ++pos) {
    for (std::size_t i = 0; i < D / 2; ++i) {
      const double rate = std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(D));
      const double angle = static_cast<double>(pos) / rate;
      pe(pos, 2 * i) = std::sin(angle);
      pe(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

// --- multi-head attention with memories ----------------------------------------

MultiHeadAttentionMem::MultiHeadAttentionMem(std::size_t dim_, std::size_t heads_,
                                             ScaleMode mode, std::mt19937_64& rng)
    : heads(heads_), dim(dim_), scale_mode(mode) {
  if (heads == 0 || dim % heads != 0)
    throw std::invalid_argument("attention: dim " + std::to_string(dim) +
                                " not divisible by heads " + std::to_string(heads));
  wq = xavier_uniform(dim, dim, rng);
  wk = xavier_uniform(dim, dim, rng);
  wv = xavier_uniform(dim, dim, rng);
  wo = xavier_uniform(dim, dim, rng);
  for (Tensor* w : {&wq, &wk, &wv, &wo}) w->set_requires_grad(true);
}

Tensor MultiHeadAttentionMem::forward(const Tensor& x, const Tensor& mem,
                                      std::vector<Tensor>* attn_out) const {
  if (x.rows() == 0) throw std::invalid_argument("attention: empty input");
  if (x.cols() != dim)
    throw std::invalid_argument("attention: input width " + x.shape_str() + " != dim " +
                                std::to_string(dim));
  Tensor kv_in = x;
  if (mem.numel() > 0) {
    if (mem.cols() != dim)
      throw std::invalid_argument("attention: memory width " + mem.shape_str() + " != dim " +
                                  std::to_string(dim));
    kv_in = concat_rows({stop_gradient(mem), x});
  }
  const std::size_t dk = dim / heads;
  const double sc = scale_mode == ScaleMode::InvSqrtDk
                        ? 1.0 / std::sqrt(static_cast<double>(dk))
                        : 1.0 / std::sqrt(static_cast<double>(dim));
  Tensor q = matmul(x, wq);
  Tensor k = matmul(kv_in, wk);
  Tensor v = matmul(kv_in, wv);
  std::vector<Tensor> head_outs;
  head_outs.reserve(heads);
  for (std::size_t i = 0; i < heads; ++i) {
    Tensor qi = slice_cols(q, i * dk, dk);
    Tensor ki = slice_cols(k, i * dk, dk);
    Tensor vi = slice_cols(v, i * dk, dk);
    Tensor weights = softmax_rows(scale(matmul(qi, transpose(ki)), sc));
    if (attn_out) attn_out->push_back(weights);
    head_outs.push_back(matmul(weights, vi));
  }
  return matmul(concat_cols(head_outs), wo);
}

void MultiHeadAttentionMem::collect(const std::string& prefix, std::vector<Parameter>& out) {
  out.push_back({prefix + ".wq", wq});
  out.push_back({prefix + ".wk", wk});
  out.push_back({prefix + ".wv", wv});
  out.push_back({prefix + ".wo", wo});
}

Tensor mha_mem_forward(const Tensor& x, const Tensor& mem, const MultiHeadAttentionMem& attn,
                       std::vector<Tensor>* attn_out) {
  return attn.forward(x, mem, attn_out);
}

// --- encoder block --------------------------------------------------------------

EncoderBlock::EncoderBlock(std::size_t dim, std::size_t heads, std::size_t ffn_width,
                           ScaleMode mode, std::mt19937_64& rng)
    : attn(dim, heads, mode, rng),
      ffn_w1(xavier_uniform(dim, ffn_width, rng)),
      ffn_b1(1, ffn_width),
      ffn_w2(xavier_uniform(ffn_width, dim, rng)),
      ffn_b2(1, dim),
      ln1_gain(1, dim, 1.0),
      ln1_bias(1, dim),
      ln2_gain(1, dim, 1.0),
      ln2_bias(1, dim) {
  for (Tensor* t : {&ffn_w1, &ffn_b1, &ffn_w2, &ffn_b2, &ln1_gain, &ln1_bias, &ln2_gain, &ln2_bias})
    t->set_requires_grad(true);
}

Tensor EncoderBlock::forward(const Tensor& x, const Tensor& mem) const {
  Tensor y1 = layer_norm(add(x, attn.forward(x, mem)), ln1_gain, ln1_bias);
  Tensor hidden = relu(add_rowvec(matmul(y1, ffn_w1), ffn_b1));
  Tensor ffn = add_rowvec(matmul(hidden, ffn_w2), ffn_b2);
  return layer_norm(add(y1, ffn), ln2_gain, ln2_bias);
}

void EncoderBlock::collect(const std::string& prefix, std::vector<Parameter>& out) {
  attn.collect(prefix + ".attn", out);
  out.push_back({prefix + ".ln1.gain", ln1_gain});
  out.push_back({prefix + ".ln1.bias", ln1_bias});
  out.push_back({prefix + ".ffn.w1", ffn_w1});
  out.push_back({prefix + ".ffn.b1", ffn_b1});
  out.push_back({prefix + ".ffn.w2", ffn_w2});
  out.push_back({prefix + ".ffn.b2", ffn_b2});
  out.push_back({prefix + ".ln2.gain", ln2_gain});
  out.push_back({prefix + ".ln2.bias", ln2_bias});
}

Tensor encoder_block_forward(const Tensor& x, const Tensor& mem, const EncoderBlock& block) {
  return block.forward(x, mem);
}

// --- memory bank -----------------------------------------------------------------

MemoryBank MemoryBank::zeros(std::size_t depth, std::size_t window, std::size_t dim) {
  MemoryBank bank;
  bank.layers.reserve(depth);
  for (std::size_t l = 0; l < depth; ++l) bank.layers.emplace_back(window, dim, 0.0);
  return bank;
}

MemoryBank MemoryBank::empty(std::size_t depth) {
  MemoryBank bank;
  bank.layers.assign(depth, Tensor());
  return bank;
}

// --- statistics pooling ------------------------------------------------------------

Tensor statistics_pooling(const Tensor& x) {
  if (x.rows() == 0 || x.cols() == 0)
    throw std::invalid_argument("statistics_pooling: empty input " + x.shape_str());
  return concat_cols({mean_rows(x), std_rows(x)});
}

}  // namespace tvec
