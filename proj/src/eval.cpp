#include "tvec/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace tvec {

double utterance_eer(const std::vector<double>& scores, const std::vector<std::uint8_t>& label) {
  if (scores.size() != label.size())
    throw std::invalid_argument("utterance_eer: scores and label sizes differ");
  const std::size_t k = scores.size();
  std::size_t num_pos = 0;
  for (std::uint8_t y : label) num_pos += y != 0;
  const std::size_t num_neg = k - num_pos;
  if (num_pos == 0 || num_neg == 0)
    throw std::invalid_argument("utterance_eer: need at least one positive and one negative label");

  // Ascending by score; positives and negatives below each threshold come
  // from prefix counts.
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sweep points: threshold at each unique score (predict positive when
  // score >= threshold), plus +inf where everything is negative.
  double prev_fpr = 1.0, prev_fnr = 0.0;
  bool have_prev = false;
  std::size_t pos_below = 0, neg_below = 0;
  std::size_t i = 0;
  while (i <= k) {
    std::size_t fp, fn;
    if (i == k) {  // +inf sentinel
      fp = 0;
      fn = num_pos;
    } else {
      fp = num_neg - neg_below;
      fn = pos_below;
    }
    const double fpr = static_cast<double>(fp) / static_cast<double>(num_neg);
    const double fnr = static_cast<double>(fn) / static_cast<double>(num_pos);
    // Exact comparisons on integers: fnr <=> fpr is fn*neg <=> fp*pos.
    const long long diff = static_cast<long long>(fn * num_neg) -
                           static_cast<long long>(fp * num_pos);
    if (diff == 0) return fpr;
    if (diff > 0) {
      if (!have_prev) return (fpr + fnr) / 2.0;  // unreachable: first point has fnr=0
      const double d_prev = prev_fnr - prev_fpr;
      const double d_cur = fnr - fpr;
      const double alpha = -d_prev / (d_cur - d_prev);
      const double fpr_star = prev_fpr + alpha * (fpr - prev_fpr);
      const double fnr_star = prev_fnr + alpha * (fnr - prev_fnr);
      return (fpr_star + fnr_star) / 2.0;
    }
    prev_fpr = fpr;
    prev_fnr = fnr;
    have_prev = true;
    if (i == k) break;
    // advance past the tie group at this threshold value
    const double v = scores[idx[i]];
    while (i < k && scores[idx[i]] == v) {
      pos_below += label[idx[i]] != 0;
      neg_below += label[idx[i]] == 0;
      ++i;
    }
  }
  throw std::logic_error("utterance_eer: no crossing found");
}

EvalReport aggregate_evals(std::vector<UtteranceEval> per_utterance) {
  EvalReport report;
  report.utterances = std::move(per_utterance);
  if (report.utterances.empty()) throw std::invalid_argument("evaluate: empty test set");
  double total = 0.0;
  std::map<std::size_t, std::pair<double, std::size_t>> by_count;
  std::map<Scenario, std::pair<double, std::size_t>> by_scenario;
  for (const UtteranceEval& u : report.utterances) {
    total += u.eer;
    auto& c = by_count[u.speaker_count];
    c.first += u.eer;
    c.second += 1;
    auto& s = by_scenario[u.scenario];
    s.first += u.eer;
    s.second += 1;
  }
  report.mean_eer = total / static_cast<double>(report.utterances.size());
  for (const auto& [count, acc] : by_count)
    report.mean_by_count[count] = acc.first / static_cast<double>(acc.second);
  for (const auto& [scenario, acc] : by_scenario)
    report.mean_by_scenario[scenario] = acc.first / static_cast<double>(acc.second);
  return report;
}

EvalReport evaluate(const AnyModel& model, const DatasetManifest& manifest,
                    const std::filesystem::path& data_dir) {
  if (manifest.num_speakers != model.num_speakers())
    throw std::invalid_argument("evaluate: manifest K=" + std::to_string(manifest.num_speakers) +
                                " does not match model K=" +
                                std::to_string(model.num_speakers()));
  if (manifest.feature_dim != model.feature_dim())
    throw std::invalid_argument("evaluate: manifest F=" + std::to_string(manifest.feature_dim) +
                                " does not match model F=" +
                                std::to_string(model.feature_dim()));
  std::vector<UtteranceEval> evals;
  evals.reserve(manifest.entries.size());
  for (const ManifestEntry& entry : manifest.entries) {
    const WeakUtterance utt = load_utterance(manifest, entry, data_dir);
    const Tensor scores = model.forward(utt.features);
    evals.push_back({utt.id, utt.speaker_count, utt.scenario,
                     utterance_eer(scores.values(), utt.label)});
  }
  return aggregate_evals(std::move(evals));
}

void write_eval_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("eval csv: cannot open " + path.string());
  os << "utt_id,speaker_count,scenario,eer\n";
  char buf[64];
  for (const UtteranceEval& u : report.utterances) {
    std::snprintf(buf, sizeof(buf), ",%zu,%s,%.17g\n", u.speaker_count,
                  to_string(u.scenario).c_str(), u.eer);
    os << u.id << buf;
  }
  os.flush();
  if (!os) throw std::runtime_error("eval csv: write failed: " + path.string());
}

void write_summary(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("summary: cannot open " + path.string());
  char buf[64];
  os << "n_utterances=" << report.utterances.size() << "\n";
  std::snprintf(buf, sizeof(buf), "mean_eer=%.17g\n", report.mean_eer);
  os << buf;
  for (const auto& [count, eer] : report.mean_by_count) {
    std::snprintf(buf, sizeof(buf), "eer_count_%zu=%.17g\n", count, eer);
    os << buf;
  }
  for (const auto& [scenario, eer] : report.mean_by_scenario) {
    std::snprintf(buf, sizeof(buf), "=%.17g\n", eer);
    os << "eer_scenario_" << to_string(scenario) << buf;
  }
  os.flush();
  if (!os) throw std::runtime_error("summary: write failed: " + path.string());
}

}  // namespace tvec
