#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tvec/data.hpp"
#include "tvec/model.hpp"

namespace tvec {

struct UtteranceEval {
  std::string id;
  std::size_t speaker_count = 0;
  Scenario scenario = Scenario::Concat;
  double eer = 0.0;
};

struct EvalReport {
  std::vector<UtteranceEval> utterances;
  double mean_eer = 0.0;
  std::map<std::size_t, double> mean_by_count;
  std::map<Scenario, double> mean_by_scenario;
};

// Sweeps thresholds over the sorted unique scores plus sentinels; EER is the
// exact crossing of FNR and FPR when attained, otherwise the midpoint of the
// two rates linearly interpolated at the crossing threshold. Requires at
// least one positive and one negative label.
double utterance_eer(const std::vector<double>& scores, const std::vector<std::uint8_t>& label);

EvalReport aggregate_evals(std::vector<UtteranceEval> per_utterance);

EvalReport evaluate(const AnyModel& model, const DatasetManifest& manifest,
                    const std::filesystem::path& data_dir);

// CSV: utt_id,speaker_count,scenario,eer
void write_eval_csv(const std::filesystem::path& path, const EvalReport& report);

// Flat key=value summary (mean EER plus per-count and per-scenario means).
void write_summary(const std::filesystem::path& path, const EvalReport& report);

}  // namespace tvec
