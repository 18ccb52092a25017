#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tvec/tensor.hpp"

namespace tvec {

enum class Scenario { Concat, Overlap };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

// Per-speaker frame sources. Synthetic speakers are diagonal Gaussians with
// a shared scalar std; ingested speakers hold precomputed feature matrices
// and serve random contiguous crops.
class SpeakerPool {
 public:
  static SpeakerPool synthetic(std::size_t num_speakers, std::size_t feature_dim,
                               double sigma, std::uint64_t seed);
  static SpeakerPool ingested(std::vector<std::vector<Tensor>> per_speaker);

  std::size_t num_speakers() const { return num_speakers_; }
  std::size_t feature_dim() const { return feature_dim_; }
  bool is_synthetic() const { return synthetic_; }

  Tensor sample_frames(std::size_t speaker, std::size_t n, std::mt19937_64& rng) const;

  // Synthetic mode only.
  const std::vector<double>& mean(std::size_t speaker) const;
  double sigma() const { return sigma_; }

 private:
  SpeakerPool() = default;
  bool synthetic_ = true;
  std::size_t num_speakers_ = 0;
  std::size_t feature_dim_ = 0;
  double sigma_ = 0.0;
  std::vector<std::vector<double>> means_;       // synthetic
  std::vector<std::vector<Tensor>> recordings_;  // ingested
};

Tensor sample_speaker_frames(const SpeakerPool& pool, std::size_t speaker, std::size_t n,
                             std::mt19937_64& rng);

struct WeakUtterance {
  std::string id;
  Tensor features;                  // T x F
  std::vector<std::uint8_t> label;  // multi-hot, length K
  Scenario scenario = Scenario::Concat;
  std::size_t speaker_count = 0;
};

// Timeline split into contiguous blocks, one per speaker, each at least
// floor(T / (2 * count)) frames; boundaries drawn uniformly over the valid
// compositions.
WeakUtterance make_concat(const SpeakerPool& pool, const std::vector<std::size_t>& speakers,
                          std::size_t frames, std::mt19937_64& rng);

// Full-duration overlap: the mean of independently sampled per-speaker streams.
WeakUtterance make_overlap(const SpeakerPool& pool, const std::vector<std::size_t>& speakers,
                           std::size_t frames, std::mt19937_64& rng);

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the manifest's directory
  Scenario scenario = Scenario::Concat;
  std::vector<std::size_t> speakers;
};

struct DatasetManifest {
  std::size_t num_speakers = 0;  // K
  std::size_t feature_dim = 0;   // F
  std::size_t fps = 100;
  std::size_t frames = 0;  // T
  std::vector<ManifestEntry> entries;

  std::vector<std::uint8_t> label_of(const ManifestEntry& e) const;
};

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

// Feature files: u32 T, u32 F, then T*F row-major little-endian f32.
void write_features(const std::filesystem::path& path, const Tensor& features);
Tensor read_features(const std::filesystem::path& path);

WeakUtterance load_utterance(const DatasetManifest& manifest, const ManifestEntry& entry,
                             const std::filesystem::path& base_dir);

struct DatasetConfig {
  std::size_t num_speakers = 8;
  std::size_t feature_dim = 20;
  std::size_t frames = 500;
  std::size_t fps = 100;
  std::size_t train_size = 200;
  std::size_t test_size = 100;
  double sigma = 0.3;
  Scenario scenario = Scenario::Concat;
};

// Writes train.manifest, test.manifest and feats/ under out_dir. Disjoint
// utterance sets, speaker count uniform over {1,2,3}, byte-identical under
// the same seed.
void build_dataset(const std::filesystem::path& out_dir, const DatasetConfig& config,
                   std::uint64_t seed);

struct Batch {
  std::vector<WeakUtterance> utterances;
};

// One epoch over the manifest in a seed-shuffled order; the final short
// batch is emitted.
class BatchIterator {
 public:
  BatchIterator(const DatasetManifest& manifest, std::filesystem::path base_dir,
                std::size_t batch_size, std::uint64_t shuffle_seed);

  std::optional<Batch> next();

 private:
  const DatasetManifest* manifest_;
  std::filesystem::path base_dir_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace tvec
