#include <doctest.h>

#include <random>

#include "support.hpp"
#include "tvec/model.hpp"
#include "tvec/train.hpp"

using namespace tvec;

namespace {

TvectorConfig desk_config() {
  TvectorConfig c;
  c.feature_dim = 5;
  c.model_dim = 8;
  c.heads = 2;
  c.depth = 2;
  c.ffn_width = 12;
  c.window = 10;
  c.step = 5;
  c.num_speakers = 4;
  c.seg_tdnn_width = 12;
  c.clf_hidden = 6;
  return c;
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("segment_sequence counts and coverage") {
  std::mt19937_64 rng(41);
  Tensor s100 = support::random_tensor(100, 4, rng);
  CHECK(segment_sequence(s100, 20, 10).size() == 9);

  Tensor s20 = support::random_tensor(20, 4, rng);
  auto one = segment_sequence(s20, 20, 10);
  REQUIRE(one.size() == 1);
  CHECK(one[0].values() == s20.values());

  Tensor s500 = support::random_tensor(500, 4, rng);
  auto many = segment_sequence(s500, 20, 10);
  CHECK(many.size() == 49);
  // segment i covers rows [i*step, i*step + window)
  for (std::size_t i : {std::size_t(0), std::size_t(17), std::size_t(48)})
    for (std::size_t r = 0; r < 20; ++r)
      for (std::size_t c = 0; c < 4; ++c) CHECK(many[i](r, c) == s500(i * 10 + r, c));

  // short input is right-zero-padded to one segment
  Tensor s7 = support::random_tensor(7, 4, rng);
  auto padded = segment_sequence(s7, 10, 5);
  REQUIRE(padded.size() == 1);
  CHECK(padded[0].rows() == 10);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(padded[0](6, c) == s7(6, c));
    CHECK(padded[0](7, c) == 0.0);
    CHECK(padded[0](9, c) == 0.0);
  }

  CHECK_THROWS_AS(segment_sequence(s100, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(segment_sequence(s100, 10, 0), std::invalid_argument);
}

TEST_CASE("frame_encoder_pass emits one 1x2D vector per segment") {
  std::mt19937_64 rng(42);
  std::vector<EncoderBlock> blocks;
  for (int l = 0; l < 2; ++l) blocks.emplace_back(6, 2, 10, ScaleMode::InvSqrtDk, rng);
  std::vector<Tensor> segments;
  for (int i = 0; i < 4; ++i) segments.push_back(support::random_tensor(3, 6, rng));
  auto vecs = frame_encoder_pass(segments, blocks, MemoryBank::zeros(2, 3, 6));
  REQUIRE(vecs.size() == 4);
  for (const Tensor& v : vecs) {
    CHECK(v.rows() == 1);
    CHECK(v.cols() == 12);
  }
}

TEST_CASE("single segment with zero memory equals the manual block chain") {
  std::mt19937_64 rng(43);
  std::vector<EncoderBlock> blocks;
  for (int l = 0; l < 2; ++l) blocks.emplace_back(6, 2, 10, ScaleMode::InvSqrtDk, rng);
  Tensor seg = support::random_tensor(3, 6, rng);
  auto vecs = frame_encoder_pass({seg}, blocks, MemoryBank::zeros(2, 3, 6));

  Tensor h = seg;
  Tensor zeros_mem(3, 6, 0.0);
  for (const EncoderBlock& b : blocks) h = b.forward(h, zeros_mem);
  Tensor expect = statistics_pooling(h);
  REQUIRE(vecs.size() == 1);
  for (std::size_t i = 0; i < expect.numel(); ++i)
    CHECK(vecs[0].values()[i] == doctest::Approx(expect.values()[i]).epsilon(1e-14));
}

TEST_CASE("memory makes identical segments produce different vectors") {
  std::mt19937_64 rng(44);
  std::vector<EncoderBlock> blocks;
  blocks.emplace_back(6, 2, 10, ScaleMode::InvSqrtDk, rng);
  Tensor seg = support::random_tensor(3, 6, rng);

  auto with_mem = frame_encoder_pass({seg, seg}, blocks, MemoryBank::zeros(1, 3, 6));
  bool differ = false;
  for (std::size_t i = 0; i < with_mem[0].numel(); ++i)
    if (with_mem[0].values()[i] != with_mem[1].values()[i]) differ = true;
  CHECK(differ);

  // ablation mode: no memory at all, so identical segments map identically
  auto without = frame_encoder_pass({seg, seg}, blocks, MemoryBank::empty(1));
  CHECK(without[0].values() == without[1].values());
}

TEST_CASE("zero-weight classifier scores 0.5 everywhere") {
  TvectorModel model(desk_config(), 45);
  for (Parameter& p : model.parameters())
    if (p.name.rfind("clf2", 0) == 0)
      for (double& v : p.tensor.values()) v = 0.0;
  std::mt19937_64 rng(46);
  Tensor x = support::random_tensor(25, 5, rng);
  Tensor scores = utterance_forward(x, model);
  REQUIRE(scores.cols() == 4);
  for (double s : scores.values()) CHECK(s == 0.5);
}

TEST_CASE("forward trace matches the configured shape chain") {
  TvectorConfig cfg = desk_config();
  TvectorModel model(cfg, 47);
  std::mt19937_64 rng(48);
  Tensor x = support::random_tensor(50, 5, rng);
  ForwardTrace trace;
  Tensor scores = utterance_forward(x, model, &trace);
  const std::size_t n = (50 - cfg.window) / cfg.step + 1;  // 9
  CHECK(trace.shape("input") == std::make_pair<std::size_t, std::size_t>(50, 5));
  CHECK(trace.shape("global_tdnn") == std::make_pair<std::size_t, std::size_t>(50, 8));
  CHECK(trace.shape("segment0") == std::make_pair<std::size_t, std::size_t>(10, 8));
  CHECK(trace.shape("segment_vectors") == std::make_pair(n, std::size_t(16)));
  CHECK(trace.shape("seg_tdnn1") == std::make_pair(n, std::size_t(8)));
  CHECK(trace.shape("seg_encoder") == std::make_pair(n, std::size_t(8)));
  CHECK(trace.shape("seg_tdnn2") == std::make_pair(n, std::size_t(12)));
  CHECK(trace.shape("stats_pooling") == std::make_pair<std::size_t, std::size_t>(1, 24));
  CHECK(trace.shape("clf_hidden") == std::make_pair<std::size_t, std::size_t>(1, 6));
  CHECK(trace.shape("scores") == std::make_pair<std::size_t, std::size_t>(1, 4));
  CHECK(scores.cols() == 4);
}

TEST_CASE("halved configuration still maps (T,F) to (1,K)") {
  TvectorConfig cfg = desk_config();
  cfg.model_dim /= 2;
  cfg.heads /= 2;
  cfg.depth /= 2;
  cfg.window /= 2;
  cfg.step = cfg.window / 2;
  TvectorModel model(cfg, 49);
  std::mt19937_64 rng(50);
  Tensor scores = utterance_forward(support::random_tensor(31, 5, rng), model);
  CHECK(scores.rows() == 1);
  CHECK(scores.cols() == 4);
}

TEST_CASE("input contract errors") {
  TvectorModel model(desk_config(), 51);
  std::mt19937_64 rng(52);
  CHECK_THROWS_AS(utterance_forward(support::random_tensor(10, 3, rng), model),
                  std::invalid_argument);
  CHECK_THROWS_AS(utterance_forward(Tensor(0, 5), model), std::invalid_argument);
}

TEST_CASE("scores are strictly inside (0,1) and deterministic under seed") {
  TvectorModel a(desk_config(), 53);
  TvectorModel b(desk_config(), 53);
  std::mt19937_64 rng(54);
  Tensor x = support::random_tensor(30, 5, rng);
  Tensor sa = utterance_forward(x, a);
  Tensor sb = utterance_forward(x, b);
  CHECK(sa.values() == sb.values());
  for (double s : sa.values()) {
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
  TvectorModel c(desk_config(), 99);
  Tensor sc = utterance_forward(x, c);
  CHECK(sa.values() != sc.values());
}

TEST_CASE("frame blocks hold the single shared parameter copy") {
  TvectorModel model(desk_config(), 55);
  std::mt19937_64 rng(56);
  Tensor x = support::random_tensor(40, 5, rng);  // several segments
  Tensor before = utterance_forward(x, model);
  model.frame_blocks()[0].attn.wq(0, 0) += 0.5;
  Tensor after = utterance_forward(x, model);
  bool differ = false;
  for (std::size_t i = 0; i < before.numel(); ++i)
    if (before.values()[i] != after.values()[i]) differ = true;
  CHECK(differ);
}

TEST_CASE("memories never leak across utterances") {
  TvectorModel model(desk_config(), 57);
  std::mt19937_64 rng(58);
  Tensor u1 = support::random_tensor(30, 5, rng);
  Tensor u2 = support::random_tensor(30, 5, rng);
  Tensor s2_first = utterance_forward(u2, model);
  utterance_forward(u1, model);
  Tensor s2_again = utterance_forward(u2, model);
  CHECK(s2_first.values() == s2_again.values());
}

TEST_CASE("full model BCE gradients match finite differences at desk scale") {
  TvectorConfig cfg;
  cfg.feature_dim = 3;
  cfg.model_dim = 4;
  cfg.heads = 2;
  cfg.depth = 1;
  cfg.ffn_width = 6;
  cfg.window = 2;
  cfg.step = 1;
  cfg.num_speakers = 4;
  cfg.seg_tdnn_width = 5;
  cfg.clf_hidden = 4;
  TvectorModel model(cfg, 59);
  std::mt19937_64 rng(60);
  Tensor x = support::random_tensor(4, 3, rng);
  Tensor target = Tensor::from({{1, 0, 0, 1}});

  // The tape treats the memories as constants, so the finite-difference
  // oracle must difference the same function: capture the banks at the base
  // point and replay them during the perturbed evaluations.
  std::vector<MemoryBank> banks;
  {
    Tape tape;
    tape.backward(bce_loss(model.forward(x, nullptr, &banks), target));
  }
  auto loss_value = [&] {
    return bce_loss(model.forward(x, nullptr, nullptr, &banks), target).values()[0];
  };
  for (Parameter& p : model.parameters()) {
    INFO(p.name);
    CHECK(support::max_grad_fd_err(p.tensor, loss_value) < 1e-4);
  }
}

TEST_CASE("xvector scores, zero final layer, and frame permutation invariance") {
  XvectorConfig cfg;
  cfg.feature_dim = 5;
  cfg.model_dim = 8;
  cfg.out_width = 10;
  cfg.clf_hidden = 6;
  cfg.num_speakers = 4;
  XvectorModel model(cfg, 61);
  std::mt19937_64 rng(62);
  Tensor x = support::random_tensor(12, 5, rng);
  Tensor scores = xvector_forward(x, model);
  REQUIRE(scores.cols() == 4);
  for (double s : scores.values()) {
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }

  Tensor permuted(12, 5);
  const std::size_t perm[12] = {5, 2, 9, 0, 11, 4, 7, 1, 10, 3, 8, 6};
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = 0; j < 5; ++j) permuted(i, j) = x(perm[i], j);
  Tensor scores_perm = xvector_forward(permuted, model);
  for (std::size_t i = 0; i < scores.numel(); ++i)
    CHECK(scores.values()[i] == doctest::Approx(scores_perm.values()[i]).epsilon(1e-12));

  for (Parameter& p : model.parameters())
    if (p.name.rfind("clf2", 0) == 0)
      for (double& v : p.tensor.values()) v = 0.0;
  Tensor flat = xvector_forward(x, model);
  for (double s : flat.values()) CHECK(s == 0.5);
}

TEST_CASE("checkpoint save/load/save is byte-identical and reproduces scores") {
  support::TempDir dir("ckpt");
  TvectorModel original(desk_config(), 63);
  AnyModel model(std::move(original));
  const auto c1 = dir.path() / "a.tvec";
  const auto c2 = dir.path() / "b.tvec";
  save_model(c1, model);

  AnyModel loaded = load_model(c1);
  save_model(c2, loaded);
  CHECK(support::slurp(c1) == support::slurp(c2));

  std::mt19937_64 rng(64);
  Tensor x = support::random_tensor(30, 5, rng);
  AnyModel loaded2 = load_model(c2);
  CHECK(loaded.forward(x).values() == loaded2.forward(x).values());

  // xvector round-trip through the same container
  XvectorConfig xc;
  xc.feature_dim = 5;
  xc.model_dim = 6;
  xc.out_width = 8;
  xc.clf_hidden = 6;
  xc.num_speakers = 4;
  AnyModel xmodel{XvectorModel(xc, 65)};
  const auto c3 = dir.path() / "x.tvec";
  const auto c4 = dir.path() / "x2.tvec";
  save_model(c3, xmodel);
  AnyModel xloaded = load_model(c3);
  CHECK(xloaded.kind() == ModelKind::Xvector);
  save_model(c4, xloaded);
  CHECK(support::slurp(c3) == support::slurp(c4));
  AnyModel xloaded2 = load_model(c4);
  CHECK(xloaded.forward(x).values() == xloaded2.forward(x).values());
}

TEST_CASE("checkpoint loader rejects damaged files") {
  support::TempDir dir("ckpt_bad");
  TvectorModel m(desk_config(), 66);
  AnyModel model(std::move(m));
  const auto good = dir.path() / "good.tvec";
  save_model(good, model);

  const std::string bytes = support::slurp(good);
  const auto truncated = dir.path() / "trunc.tvec";
  {
    std::ofstream os(truncated, std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_model(truncated), std::runtime_error);

  const auto garbled = dir.path() / "garbled.tvec";
  {
    std::string copy = bytes;
    copy[0] = 'X';
    std::ofstream os(garbled, std::ios::binary);
    os.write(copy.data(), static_cast<std::streamsize>(copy.size()));
  }
  CHECK_THROWS_AS(load_model(garbled), std::runtime_error);
}

TEST_SUITE_END();
