#include "tvec/data.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tvec/binio.hpp"
#include "tvec/nn.hpp"

namespace tvec {

std::string to_string(Scenario s) { return s == Scenario::Concat ? "concat" : "overlap"; }

Scenario scenario_from_string(const std::string& s) {
  if (s == "concat") return Scenario::Concat;
  if (s == "overlap") return Scenario::Overlap;
  throw std::invalid_argument("unknown scenario: " + s);
}

// --- SpeakerPool --------------------------------------------------------------

SpeakerPool SpeakerPool::synthetic(std::size_t num_speakers, std::size_t feature_dim,
                                   double sigma, std::uint64_t seed) {
  if (num_speakers < 1) throw std::invalid_argument("SpeakerPool: need at least one speaker");
  if (sigma < 0.0) throw std::invalid_argument("SpeakerPool: sigma must be non-negative");
  SpeakerPool pool;
  pool.synthetic_ = true;
  pool.num_speakers_ = num_speakers;
  pool.feature_dim_ = feature_dim;
  pool.sigma_ = sigma;
  std::mt19937_64 rng(mix_seed(seed, 0xDA7A));
  std::normal_distribution<double> unit(0.0, 1.0);
  pool.means_.resize(num_speakers);
  for (auto& mean : pool.means_) {
    mean.resize(feature_dim);
    for (double& v : mean) v = unit(rng);
  }
  return pool;
}

SpeakerPool SpeakerPool::ingested(std::vector<std::vector<Tensor>> per_speaker) {
  if (per_speaker.empty()) throw std::invalid_argument("SpeakerPool: no speakers");
  SpeakerPool pool;
  pool.synthetic_ = false;
  pool.num_speakers_ = per_speaker.size();
  for (const auto& recs : per_speaker) {
    if (recs.empty())
      throw std::invalid_argument("SpeakerPool: a speaker has no recordings");
    for (const Tensor& r : recs) {
      if (pool.feature_dim_ == 0) pool.feature_dim_ = r.cols();
      if (r.cols() != pool.feature_dim_)
        throw std::invalid_argument("SpeakerPool: inconsistent feature widths");
    }
  }
  pool.recordings_ = std::move(per_speaker);
  return pool;
}

const std::vector<double>& SpeakerPool::mean(std::size_t speaker) const {
  if (!synthetic_) throw std::logic_error("SpeakerPool::mean: ingested pool");
  return means_.at(speaker);
}

Tensor SpeakerPool::sample_frames(std::size_t speaker, std::size_t n,
                                  std::mt19937_64& rng) const {
  if (speaker >= num_speakers_)
    throw std::invalid_argument("SpeakerPool: unknown speaker " + std::to_string(speaker));
  if (n < 1) throw std::invalid_argument("SpeakerPool: need n >= 1 frames");
  if (synthetic_) {
    Tensor out(n, feature_dim_);
    std::normal_distribution<double> unit(0.0, 1.0);
    const std::vector<double>& mu = means_[speaker];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < feature_dim_; ++j)
        out(i, j) = mu[j] + sigma_ * unit(rng);
    return out;
  }
  // Ingest mode: a random contiguous crop from a recording long enough.
  std::vector<std::size_t> candidates;
  for (std::size_t r = 0; r < recordings_[speaker].size(); ++r)
    if (recordings_[speaker][r].rows() >= n) candidates.push_back(r);
  if (candidates.empty())
    throw std::runtime_error("SpeakerPool: no recording of speaker " + std::to_string(speaker) +
                             " has " + std::to_string(n) + " frames");
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  const Tensor& rec = recordings_[speaker][candidates[pick(rng)]];
  std::uniform_int_distribution<std::size_t> start_dist(0, rec.rows() - n);
  const std::size_t start = start_dist(rng);
  Tensor out(n, feature_dim_);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < feature_dim_; ++j) out(i, j) = rec(start + i, j);
  return out;
}

Tensor sample_speaker_frames(const SpeakerPool& pool, std::size_t speaker, std::size_t n,
                             std::mt19937_64& rng) {
  return pool.sample_frames(speaker, n, rng);
}

// --- mixing --------------------------------------------------------------------

namespace {

void check_speakers(const SpeakerPool& pool, const std::vector<std::size_t>& speakers) {
  if (speakers.empty() || speakers.size() > 3)
    throw std::invalid_argument("mixing: need 1 to 3 speakers, got " +
                                std::to_string(speakers.size()));
  std::set<std::size_t> distinct(speakers.begin(), speakers.end());
  if (distinct.size() != speakers.size())
    throw std::invalid_argument("mixing: speaker ids must be distinct");
  for (std::size_t s : speakers)
    if (s >= pool.num_speakers())
      throw std::invalid_argument("mixing: unknown speaker " + std::to_string(s));
}

std::vector<std::uint8_t> multi_hot(std::size_t k, const std::vector<std::size_t>& speakers) {
  std::vector<std::uint8_t> label(k, 0);
  for (std::size_t s : speakers) label[s] = 1;
  return label;
}

// Uniformly draws block lengths summing to total with every block >= floor_len:
// a uniform composition of the slack via a sorted random subset.
std::vector<std::size_t> draw_block_lengths(std::size_t total, std::size_t count,
                                            std::size_t floor_len, std::mt19937_64& rng) {
  const std::size_t slack = total - count * floor_len;
  if (count == 1) return {total};
  // Pick count-1 distinct separators in {1, ..., slack + count - 1}.
  std::set<std::size_t> seps;
  std::uniform_int_distribution<std::size_t> dist(1, slack + count - 1);
  while (seps.size() < count - 1) seps.insert(dist(rng));
  std::vector<std::size_t> lengths;
  std::size_t prev = 0;
  for (std::size_t s : seps) {
    lengths.push_back(floor_len + (s - prev - 1));
    prev = s;
  }
  lengths.push_back(floor_len + (slack + count - 1 - prev));
  return lengths;
}

}  // namespace

WeakUtterance make_concat(const SpeakerPool& pool, const std::vector<std::size_t>& speakers,
                          std::size_t frames, std::mt19937_64& rng) {
  check_speakers(pool, speakers);
  const std::size_t count = speakers.size();
  const std::size_t floor_len = frames / (2 * count);
  if (floor_len < 1)
    throw std::invalid_argument("make_concat: " + std::to_string(frames) +
                                " frames is too short for " + std::to_string(count) +
                                " speakers under the minimum block rule");
  const std::vector<std::size_t> lengths = draw_block_lengths(frames, count, floor_len, rng);
  WeakUtterance utt;
  utt.features = Tensor(frames, pool.feature_dim());
  std::size_t row = 0;
  for (std::size_t b = 0; b < count; ++b) {
    Tensor block = pool.sample_frames(speakers[b], lengths[b], rng);
    std::copy(block.values().begin(), block.values().end(),
              utt.features.values().begin() + row * pool.feature_dim());
    row += lengths[b];
  }
  utt.label = multi_hot(pool.num_speakers(), speakers);
  utt.scenario = Scenario::Concat;
  utt.speaker_count = count;
  return utt;
}

WeakUtterance make_overlap(const SpeakerPool& pool, const std::vector<std::size_t>& speakers,
                           std::size_t frames, std::mt19937_64& rng) {
  check_speakers(pool, speakers);
  if (frames < 1) throw std::invalid_argument("make_overlap: need at least one frame");
  WeakUtterance utt;
  utt.features = Tensor(frames, pool.feature_dim());
  const double inv = 1.0 / static_cast<double>(speakers.size());
  for (std::size_t s : speakers) {
    Tensor stream = pool.sample_frames(s, frames, rng);
    for (std::size_t i = 0; i < utt.features.numel(); ++i)
      utt.features.values()[i] += stream.values()[i] * inv;
  }
  utt.label = multi_hot(pool.num_speakers(), speakers);
  utt.scenario = Scenario::Overlap;
  utt.speaker_count = speakers.size();
  return utt;
}

// --- manifest and feature files ----------------------------------------------------

std::vector<std::uint8_t> DatasetManifest::label_of(const ManifestEntry& e) const {
  std::vector<std::uint8_t> label(num_speakers, 0);
  for (std::size_t s : e.speakers) {
    if (s >= num_speakers)
      throw std::runtime_error("manifest: speaker id " + std::to_string(s) + " out of range in " +
                               e.id);
    label[s] = 1;
  }
  return label;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("manifest: cannot open " + path.string() + " for writing");
  os << "#weakmix v1 K=" << manifest.num_speakers << " F=" << manifest.feature_dim
     << " fps=" << manifest.fps << " T=" << manifest.frames << "\n";
  for (const ManifestEntry& e : manifest.entries) {
    os << e.id << '\t' << e.path << '\t' << to_string(e.scenario) << '\t';
    for (std::size_t i = 0; i < e.speakers.size(); ++i) {
      if (i) os << ',';
      os << e.speakers[i];
    }
    os << '\n';
  }
  os.flush();
  if (!os) throw std::runtime_error("manifest: write failed: " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("manifest: cannot open " + path.string());
  std::string header;
  if (!std::getline(is, header))
    throw std::runtime_error("manifest: empty file: " + path.string());
  DatasetManifest m;
  {
    std::istringstream hs(header);
    std::string tag, kv;
    hs >> tag;
    if (tag != "#weakmix")
      throw std::runtime_error("manifest: bad header in " + path.string() + ": " + header);
    hs >> kv;
    if (kv != "v1") throw std::runtime_error("manifest: unsupported version: " + kv);
    bool have_k = false, have_f = false, have_fps = false, have_t = false;
    while (hs >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("manifest: malformed header field: " + kv);
      const std::string key = kv.substr(0, eq);
      const std::size_t value = std::stoull(kv.substr(eq + 1));
      if (key == "K") m.num_speakers = value, have_k = true;
      else if (key == "F") m.feature_dim = value, have_f = true;
      else if (key == "fps") m.fps = value, have_fps = true;
      else if (key == "T") m.frames = value, have_t = true;
      else throw std::runtime_error("manifest: unknown header field: " + key);
    }
    if (!have_k || !have_f || !have_fps || !have_t)
      throw std::runtime_error("manifest: incomplete header: " + header);
  }
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string scenario, ids;
    if (!std::getline(ls, e.id, '\t') || !std::getline(ls, e.path, '\t') ||
        !std::getline(ls, scenario, '\t') || !std::getline(ls, ids))
      throw std::runtime_error("manifest: malformed line: " + line);
    e.scenario = scenario_from_string(scenario);
    std::istringstream idss(ids);
    std::string id;
    while (std::getline(idss, id, ',')) {
      const std::size_t s = std::stoull(id);
      if (s >= m.num_speakers)
        throw std::runtime_error("manifest: speaker id " + id + " out of range in " + e.id);
      e.speakers.push_back(s);
    }
    if (e.speakers.empty())
      throw std::runtime_error("manifest: no speakers listed for " + e.id);
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_features(const std::filesystem::path& path, const Tensor& features) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("features: cannot open " + path.string() + " for writing");
  binio::write_u32(os, static_cast<std::uint32_t>(features.rows()));
  binio::write_u32(os, static_cast<std::uint32_t>(features.cols()));
  for (double v : features.values()) binio::write_f32(os, static_cast<float>(v));
  os.flush();
  if (!os) throw std::runtime_error("features: write failed: " + path.string());
}

Tensor read_features(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("features: cannot open " + path.string());
  const std::uint32_t rows = binio::read_u32(is);
  const std::uint32_t cols = binio::read_u32(is);
  Tensor t(rows, cols);
  for (double& v : t.values()) v = static_cast<double>(binio::read_f32(is));
  // must consume the file exactly
  is.peek();
  if (!is.eof())
    throw std::runtime_error("features: trailing bytes in " + path.string());
  return t;
}

WeakUtterance load_utterance(const DatasetManifest& manifest, const ManifestEntry& entry,
                             const std::filesystem::path& base_dir) {
  WeakUtterance utt;
  utt.id = entry.id;
  try {
    utt.features = read_features(base_dir / entry.path);
  } catch (const std::exception& e) {
    throw std::runtime_error("load error for utterance " + entry.id + ": " + e.what());
  }
  if (utt.features.rows() != manifest.frames || utt.features.cols() != manifest.feature_dim)
    throw std::runtime_error("load error for utterance " + entry.id + ": shape " +
                             utt.features.shape_str() + " does not match manifest T=" +
                             std::to_string(manifest.frames) + " F=" +
                             std::to_string(manifest.feature_dim));
  utt.label = manifest.label_of(entry);
  utt.scenario = entry.scenario;
  utt.speaker_count = entry.speakers.size();
  return utt;
}

// --- dataset construction ------------------------------------------------------------

namespace {

std::vector<std::size_t> draw_speakers(std::size_t k, std::size_t count, std::mt19937_64& rng) {
  std::vector<std::size_t> ids(k);
  for (std::size_t i = 0; i < k; ++i) ids[i] = i;
  // partial Fisher-Yates: the first `count` entries become the draw
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> dist(i, k - 1);
    std::swap(ids[i], ids[dist(rng)]);
  }
  ids.resize(count);
  return ids;
}

}  // namespace

void build_dataset(const std::filesystem::path& out_dir, const DatasetConfig& config,
                   std::uint64_t seed) {
  if (config.num_speakers < 4)
    throw std::invalid_argument("build_dataset: need at least 4 speakers so every label has "
                                "positives and negatives");
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "feats", ec);
  if (ec)
    throw std::runtime_error("build_dataset: cannot create " + (out_dir / "feats").string() +
                             ": " + ec.message());

  const SpeakerPool pool = SpeakerPool::synthetic(config.num_speakers, config.feature_dim,
                                                  config.sigma, mix_seed(seed, 0x9001));
  std::mt19937_64 rng(mix_seed(seed, 0x9002));
  std::uniform_int_distribution<std::size_t> count_dist(1, 3);

  const auto build_split = [&](const std::string& prefix, std::size_t size,
                               const std::string& manifest_name) {
    DatasetManifest manifest;
    manifest.num_speakers = config.num_speakers;
    manifest.feature_dim = config.feature_dim;
    manifest.fps = config.fps;
    manifest.frames = config.frames;
    for (std::size_t i = 0; i < size; ++i) {
      const std::size_t count = count_dist(rng);
      const std::vector<std::size_t> speakers =
          draw_speakers(config.num_speakers, count, rng);
      WeakUtterance utt = config.scenario == Scenario::Concat
                              ? make_concat(pool, speakers, config.frames, rng)
                              : make_overlap(pool, speakers, config.frames, rng);
      char id[32];
      std::snprintf(id, sizeof(id), "%s%06zu", prefix.c_str(), i);
      ManifestEntry entry;
      entry.id = id;
      entry.path = "feats/" + std::string(id) + ".feat";
      entry.scenario = utt.scenario;
      entry.speakers = speakers;
      write_features(out_dir / entry.path, utt.features);
      manifest.entries.push_back(std::move(entry));
    }
    write_manifest(out_dir / manifest_name, manifest);
  };

  build_split("trn", config.train_size, "train.manifest");
  build_split("tst", config.test_size, "test.manifest");
}

// --- batching -------------------------------------------------------------------------

BatchIterator::BatchIterator(const DatasetManifest& manifest, std::filesystem::path base_dir,
                             std::size_t batch_size, std::uint64_t shuffle_seed)
    : manifest_(&manifest), base_dir_(std::move(base_dir)), batch_size_(batch_size) {
  if (batch_size_ < 1) throw std::invalid_argument("BatchIterator: batch_size must be >= 1");
  order_.resize(manifest.entries.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(order_.begin(), order_.end(), rng);
}

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  Batch batch;
  const std::size_t end = std::min(cursor_ + batch_size_, order_.size());
  for (std::size_t i = cursor_; i < end; ++i) {
    const ManifestEntry& entry = manifest_->entries[order_[i]];
    batch.utterances.push_back(load_utterance(*manifest_, entry, base_dir_));
  }
  cursor_ = end;
  return batch;
}

}  // namespace tvec
