#include "tvec/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "tvec/nn.hpp"

namespace tvec {

Tensor bce_loss(const Tensor& pred, const Tensor& target, double delta) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw std::invalid_argument("bce_loss: dimension mismatch " + pred.shape_str() + " vs " +
                                target.shape_str());
  if (!(delta > 0.0 && delta < 0.5))
    throw std::invalid_argument("bce_loss: delta must be in (0, 0.5)");
  for (double y : target.values())
    if (y != 0.0 && y != 1.0)
      throw std::invalid_argument("bce_loss: targets must be 0 or 1");

  Tensor ones(target.rows(), target.cols(), 1.0);
  Tensor flipped = sub(ones, target);  // constant, 1 - y
  Tensor p = clamp(pred, delta, 1.0 - delta);
  Tensor term = add(mul(target, log(p)), mul(flipped, log(sub(ones, p))));
  return scale(sum_all(term), -1.0);
}

AdamOptimizer::AdamOptimizer(std::vector<Parameter>& params, AdamConfig cfg)
    : params_(params), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Parameter& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void AdamOptimizer::step() {
  t_ += 1;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = params_[i];
    const std::vector<double>& g = p.tensor.grad();
    std::vector<double>& val = p.tensor.values();
    std::vector<double>& m = m_[i];
    std::vector<double>& v = v_[i];
    for (std::size_t j = 0; j < val.size(); ++j) {
      const double gj = g[j];
      if (!std::isfinite(gj))
        throw std::runtime_error("adam: non-finite gradient in parameter " + p.name);
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      val[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(clamp_delta > 0.0 && clamp_delta < 0.5))
    throw std::invalid_argument("train: clamp_delta must be in (0, 0.5)");
}

TrainResult train_loop(AnyModel& model, const DatasetManifest& manifest,
                       const std::filesystem::path& data_dir, const TrainConfig& cfg) {
  cfg.validate();
  if (manifest.entries.empty()) throw std::invalid_argument("train: empty dataset");
  if (manifest.num_speakers != model.num_speakers())
    throw std::invalid_argument("train: manifest K=" + std::to_string(manifest.num_speakers) +
                                " does not match model K=" +
                                std::to_string(model.num_speakers()));

  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  AdamOptimizer opt(model.parameters(), adam_cfg);
  TrainResult result;

  const std::size_t k = model.num_speakers();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    BatchIterator batches(manifest, data_dir, cfg.batch_size,
                          mix_seed(cfg.seed, 0xE70C000 + epoch));
    double loss_sum = 0.0;
    std::size_t utt_count = 0;
    while (auto batch = batches.next()) {
      Tape tape;
      std::vector<Tensor> score_rows;
      Tensor target(batch->utterances.size(), k);
      for (std::size_t i = 0; i < batch->utterances.size(); ++i) {
        const WeakUtterance& utt = batch->utterances[i];
        score_rows.push_back(model.forward(utt.features));
        for (std::size_t j = 0; j < k; ++j) target(i, j) = utt.label[j];
      }
      Tensor loss = bce_loss(concat_rows(score_rows), target, cfg.clamp_delta);
      const double loss_value = loss.values()[0];
      if (!std::isfinite(loss_value))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
      tape.backward(loss);
      opt.step();
      model.zero_grad();
      loss_sum += loss_value;
      utt_count += batch->utterances.size();
    }
    double wall = 0.0;
    if (cfg.timing) {
      wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    result.history.push_back({epoch, loss_sum / static_cast<double>(utt_count), wall});
    if (!cfg.checkpoint_path.empty() && cfg.eval_every > 0 && epoch % cfg.eval_every == 0)
      save_model(cfg.checkpoint_path, model);
  }
  if (!cfg.checkpoint_path.empty()) save_model(cfg.checkpoint_path, model);
  result.steps = opt.steps();
  return result;
}

void write_loss_history(const std::filesystem::path& path,
                        const std::vector<EpochStats>& history) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("loss history: cannot open " + path.string());
  os << "epoch,mean_loss,wall_seconds\n";
  char buf[96];
  for (const EpochStats& e : history) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.3f\n", e.epoch, e.mean_loss, e.wall_seconds);
    os << buf;
  }
  os.flush();
  if (!os) throw std::runtime_error("loss history: write failed: " + path.string());
}

}  // namespace tvec
