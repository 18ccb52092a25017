#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "tvec/eval.hpp"

using namespace tvec;

TEST_SUITE_BEGIN("eval");

TEST_CASE("utterance_eer fixed cases") {
  CHECK(utterance_eer({0.9, 0.1, 0.2, 0.3}, {1, 0, 0, 0}) == 0.0);
  CHECK(utterance_eer({0.1, 0.9}, {1, 0}) == 1.0);
  CHECK(utterance_eer({0.5, 0.5}, {1, 0}) == 0.5);
}

TEST_CASE("utterance_eer rejects degenerate labels") {
  CHECK_THROWS_AS(utterance_eer({0.1, 0.9}, {1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(utterance_eer({0.1, 0.9}, {0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(utterance_eer({0.1}, {1, 0}), std::invalid_argument);
}

TEST_CASE("utterance_eer equals the exhaustive-threshold oracle on random cases") {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> k_dist(4, 32);
  std::uniform_int_distribution<int> pos_dist(1, 3);
  std::uniform_int_distribution<int> grid_dist(0, 4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = k_dist(rng);
    std::vector<double> scores(k);
    const int grid = grid_dist(rng);
    for (double& s : scores) {
      s = uniform(rng);
      if (grid > 0) s = std::round(s * grid) / grid;  // quantize to force ties
    }
    std::vector<std::uint8_t> label(k, 0);
    const int positives = pos_dist(rng);
    for (int p = 0; p < positives; ++p) {
      std::size_t idx;
      do {
        idx = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
      } while (label[idx]);
      label[idx] = 1;
    }
    const double fast = utterance_eer(scores, label);
    const double slow = support::eer_oracle(scores, label);
    CHECK(std::abs(fast - slow) <= 1e-12);
    CHECK(fast >= 0.0);
    CHECK(fast <= 1.0);
  }
}

TEST_CASE("eer is invariant under strictly increasing score transforms") {
  std::mt19937_64 rng(102);
  std::uniform_real_distribution<double> uniform(0.01, 0.99);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> scores(8);
    for (double& s : scores) s = uniform(rng);
    std::vector<std::uint8_t> label{1, 0, 1, 0, 0, 0, 1, 0};
    std::vector<double> squared(8), shifted(8);
    for (std::size_t i = 0; i < 8; ++i) {
      squared[i] = scores[i] * scores[i];  // increasing on (0,1)
      shifted[i] = 3.0 * scores[i] + 2.0;
    }
    const double base = utterance_eer(scores, label);
    CHECK(utterance_eer(squared, label) == doctest::Approx(base).epsilon(1e-12));
    CHECK(utterance_eer(shifted, label) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("eer is symmetric under flipping scores and labels") {
  std::mt19937_64 rng(103);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> scores(10);
    for (double& s : scores) s = uniform(rng);
    std::vector<std::uint8_t> label(10, 0);
    label[1] = label[4] = 1;
    std::vector<double> flipped_scores(10);
    std::vector<std::uint8_t> flipped_label(10);
    for (std::size_t i = 0; i < 10; ++i) {
      flipped_scores[i] = 1.0 - scores[i];
      flipped_label[i] = 1 - label[i];
    }
    CHECK(utterance_eer(scores, label) ==
          doctest::Approx(utterance_eer(flipped_scores, flipped_label)).epsilon(1e-12));
  }
}

TEST_CASE("aggregates recombine exactly") {
  std::vector<UtteranceEval> evals{
      {"a", 1, Scenario::Concat, 0.0},
      {"b", 2, Scenario::Concat, 0.5},
      {"c", 3, Scenario::Overlap, 1.0},
  };
  const EvalReport report = aggregate_evals(evals);
  CHECK(report.mean_eer == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(report.mean_by_count.at(1) == 0.0);
  CHECK(report.mean_by_count.at(2) == 0.5);
  CHECK(report.mean_by_count.at(3) == 1.0);
  CHECK(report.mean_by_scenario.at(Scenario::Concat) == 0.25);
  CHECK(report.mean_by_scenario.at(Scenario::Overlap) == 1.0);
}

TEST_CASE("group means weighted by size recover the global mean") {
  std::mt19937_64 rng(104);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<UtteranceEval> evals;
  for (int i = 0; i < 97; ++i) {
    UtteranceEval u;
    u.id = "u" + std::to_string(i);
    u.speaker_count = 1 + (i % 3);
    u.scenario = i % 2 ? Scenario::Concat : Scenario::Overlap;
    u.eer = uniform(rng);
    evals.push_back(u);
  }
  const EvalReport report = aggregate_evals(evals);
  std::map<std::size_t, std::size_t> sizes;
  for (const auto& u : report.utterances) sizes[u.speaker_count]++;
  double recombined = 0.0;
  for (const auto& [count, mean] : report.mean_by_count)
    recombined += mean * static_cast<double>(sizes.at(count));
  recombined /= static_cast<double>(report.utterances.size());
  CHECK(std::abs(recombined - report.mean_eer) < 1e-12);
}

TEST_CASE("fresh model on balanced labels lands near chance") {
  DatasetConfig dc;
  dc.num_speakers = 8;
  dc.feature_dim = 6;
  dc.frames = 12;
  dc.train_size = 0;
  dc.test_size = 120;
  support::TempDir dir("eval_chance");
  build_dataset(dir.path(), dc, 31);
  const DatasetManifest manifest = read_manifest(dir.path() / "test.manifest");

  TvectorConfig cfg;
  cfg.feature_dim = 6;
  cfg.model_dim = 8;
  cfg.heads = 2;
  cfg.depth = 1;
  cfg.ffn_width = 8;
  cfg.window = 4;
  cfg.step = 2;
  cfg.num_speakers = 8;
  cfg.seg_tdnn_width = 8;
  cfg.clf_hidden = 8;
  const AnyModel model{TvectorModel(cfg, 33)};
  const EvalReport report = evaluate(model, manifest, dir.path());
  CHECK(report.mean_eer > 0.4);
  CHECK(report.mean_eer < 0.6);
}

TEST_CASE("evaluate rejects mismatched K and F") {
  DatasetConfig dc;
  dc.num_speakers = 5;
  dc.feature_dim = 3;
  dc.frames = 8;
  dc.train_size = 0;
  dc.test_size = 2;
  support::TempDir dir("eval_mismatch");
  build_dataset(dir.path(), dc, 35);
  const DatasetManifest manifest = read_manifest(dir.path() / "test.manifest");

  TvectorConfig cfg;
  cfg.feature_dim = 3;
  cfg.model_dim = 4;
  cfg.heads = 2;
  cfg.depth = 1;
  cfg.ffn_width = 4;
  cfg.window = 4;
  cfg.step = 2;
  cfg.num_speakers = 6;  // wrong K
  cfg.seg_tdnn_width = 4;
  cfg.clf_hidden = 4;
  const AnyModel wrong_k{TvectorModel(cfg, 36)};
  bool threw = false;
  try {
    evaluate(wrong_k, manifest, dir.path());
  } catch (const std::invalid_argument& e) {
    threw = true;
    CHECK(std::string(e.what()).find("K=") != std::string::npos);
  }
  CHECK(threw);

  cfg.num_speakers = 5;
  cfg.feature_dim = 7;  // wrong F
  const AnyModel wrong_f{TvectorModel(cfg, 37)};
  CHECK_THROWS_AS(evaluate(wrong_f, manifest, dir.path()), std::invalid_argument);
}

TEST_CASE("report files have the documented layout") {
  support::TempDir dir("report");
  std::vector<UtteranceEval> evals{
      {"tst000000", 1, Scenario::Concat, 0.25},
      {"tst000001", 3, Scenario::Concat, 0.125},
  };
  const EvalReport report = aggregate_evals(evals);
  write_eval_csv(dir.path() / "eval.csv", report);
  write_summary(dir.path() / "summary.txt", report);
  const std::string csv = support::slurp(dir.path() / "eval.csv");
  CHECK(csv.find("utt_id,speaker_count,scenario,eer\n") == 0);
  CHECK(csv.find("tst000000,1,concat,0.25") != std::string::npos);
  const std::string summary = support::slurp(dir.path() / "summary.txt");
  CHECK(summary.find("n_utterances=2") != std::string::npos);
  CHECK(summary.find("mean_eer=0.1875") != std::string::npos);
  CHECK(summary.find("eer_count_1=0.25") != std::string::npos);
  CHECK(summary.find("eer_count_3=0.125") != std::string::npos);
  CHECK(summary.find("eer_scenario_concat=0.1875") != std::string::npos);
}

TEST_SUITE_END();
