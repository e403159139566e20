#include "bnrhn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "bnrhn/diagnostics.hpp"
#include "bnrhn/format.hpp"
#include "bnrhn/rng.hpp"

namespace bnrhn {

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw ConfigError("lr0: must be positive");
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("decay: must lie in (0, 1]");
  if (decay_every_epochs == 0) throw ConfigError("decay_every: must be positive");
  if (batch == 0) throw ConfigError("batch: must be positive");
  if (batch < 2 && model.kind == CellKind::bn_rhn) {
    throw ConfigError("batch: batch-normalized models need at least 2 samples per batch");
  }
  if (max_len == 0) throw ConfigError("max_len: must be positive");
  if (clip && !(*clip > 0.0)) throw ConfigError("clip: threshold must be positive");
  if (model.embed == 0 || model.hidden == 0 || model.depth == 0) {
    throw ConfigError("embed/hidden/depth: must be positive");
  }
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  return cfg.lr0 * std::pow(cfg.decay, static_cast<double>(epoch / cfg.decay_every_epochs));
}

NumericalAbort::NumericalAbort(std::size_t step_, double lr_, double norm_)
    : NumericalError("non-finite loss at step " + std::to_string(step_) + " (lr " + format_double(lr_) +
                     ", last gradient norm " + format_double(norm_) + ")"),
      step(step_),
      lr(lr_),
      last_grad_norm(norm_) {}

TrainResult train(std::span<const CaptionSample> dataset, const Vocab& vocab, const TrainConfig& cfg,
                  const std::function<void(const StepRecord&)>& on_step) {
  cfg.validate();
  if (dataset.empty()) throw DataError("train: dataset is empty");
  validate_dataset(dataset);

  const auto start = std::chrono::steady_clock::now();
  ModelSpec spec = cfg.model;
  spec.vocab_size = vocab.size();
  spec.feature_width = dataset.front().feature.size();
  InitOptions init = cfg.init;
  init.seed = cfg.seed;

  TrainResult result{{}, init_model(spec, init)};
  ModelParams& params = result.params;
  Rng order_rng(cfg.seed ^ 0xD1B54A32D192ED03ULL);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const bool needs_pairs = spec.kind == CellKind::bn_rhn;

  std::size_t step = 0;
  double last_norm = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    const double lr = lr_at(epoch, cfg);
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch) {
      if (cfg.max_steps != 0 && step >= cfg.max_steps) break;
      const std::size_t end = std::min(order.size(), begin + cfg.batch);
      if (needs_pairs && end - begin < 2) continue;
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const Batch batch = make_batch(dataset, idx, vocab, cfg.max_len);

      const UnrollResult fwd = forward_unroll(batch, params, Mode::train);
      if (!std::isfinite(fwd.loss)) throw NumericalAbort(step, lr, last_norm);
      ModelParams grads = backward_unroll(fwd.cache, params);

      StepRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.lr = lr;
      rec.loss = fwd.loss;
      if (cfg.clip) {
        auto clipped = clip_by_global_norm(flatten(grads), *cfg.clip);
        rec.pre_clip_norm = clipped.pre_norm;
        rec.clipped = clipped.clipped;
        if (clipped.clipped) assign(grads, clipped.grads);
      } else {
        rec.pre_clip_norm = global_norm(flatten(grads));
      }
      last_norm = rec.pre_clip_norm;
      if (!std::isfinite(rec.pre_clip_norm)) throw NumericalAbort(step, lr, last_norm);

      params = sgd_update(params, grads, lr);
      commit_bn_statistics(params, fwd);
      result.report.steps.push_back(rec);
      if (on_step) on_step(rec);
      ++step;
    }
    if (cfg.max_steps != 0 && step >= cfg.max_steps) break;
  }
  if (cfg.bn_recalibrate && step > 0) {
    std::vector<Batch> batches;
    std::vector<std::size_t> all(dataset.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t begin = 0; begin < all.size(); begin += cfg.batch) {
      const std::size_t end = std::min(all.size(), begin + cfg.batch);
      if (needs_pairs && end - begin < 2) continue;
      batches.push_back(make_batch(dataset, std::span<const std::size_t>(all.data() + begin, end - begin), vocab,
                                   cfg.max_len));
    }
    if (!batches.empty()) recalibrate_bn_statistics(params, batches);
  }
  result.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

void write_run_csv(std::ostream& os, const RunReport& report) {
  os << "step,epoch,lr,loss,pre_clip_norm,clipped\n";
  for (const auto& r : report.steps) {
    os << r.step << ',' << r.epoch << ',' << format_double(r.lr) << ',' << format_double(r.loss) << ','
       << format_double(r.pre_clip_norm) << ',' << (r.clipped ? 1 : 0) << '\n';
  }
}

std::vector<StepRecord> read_run_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DataError("run.csv: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "step,epoch,lr,loss,pre_clip_norm,clipped") throw DataError("run.csv: unexpected header '" + line + "'");
  std::vector<StepRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    StepRecord r;
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 6) throw DataError("run.csv line " + std::to_string(lineno) + ": expected 6 fields");
    try {
      r.step = std::stoull(fields[0]);
      r.epoch = std::stoull(fields[1]);
      r.lr = std::stod(fields[2]);
      r.loss = std::stod(fields[3]);
      r.pre_clip_norm = std::stod(fields[4]);
      r.clipped = fields[5] == "1";
    } catch (const std::exception&) {
      throw DataError("run.csv line " + std::to_string(lineno) + ": malformed number");
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace bnrhn
