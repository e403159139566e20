#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bnrhn/dataset.hpp"
#include "bnrhn/errors.hpp"
#include "bnrhn/model.hpp"
#include "bnrhn/vocab.hpp"

namespace bnrhn {

struct TrainConfig {
  ModelSpec model;  // vocab_size is taken from the vocabulary
  InitOptions init;
  double lr0 = 0.1;
  double decay = 0.5;
  std::size_t decay_every_epochs = 8;
  std::size_t epochs = 10;
  std::size_t batch = 8;
  std::size_t max_len = 16;
  std::optional<double> clip = 5.0;  // nullopt disables clipping
  std::uint64_t seed = 1;
  /// Stop after this many updates (0 = run every epoch).
  std::size_t max_steps = 0;
  /// After the last update, re-estimate batch-norm running statistics with
  /// one pass over the dataset at the final weights.
  bool bn_recalibrate = false;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// lr0 · decay^floor(epoch / decay_every_epochs)
double lr_at(std::size_t epoch, const TrainConfig& cfg);

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double pre_clip_norm = 0.0;
  bool clipped = false;
};

struct RunReport {
  std::vector<StepRecord> steps;
  double wall_seconds = 0.0;
};

struct TrainResult {
  RunReport report;
  ModelParams params;
};

/// Raised when a training step produces a non-finite loss.
class NumericalAbort : public NumericalError {
 public:
  NumericalAbort(std::size_t step, double lr, double last_grad_norm);
  std::size_t step;
  double lr;
  double last_grad_norm;
};

/// Seeded SGD over shuffled epochs. Each step: forward in train mode, BPTT,
/// optional global-norm clipping, update at lr_at(epoch), then commit the
/// batch-norm running statistics. A final incomplete batch is kept unless it
/// would hold a single sample for a batch-normalized model.
TrainResult train(std::span<const CaptionSample> dataset, const Vocab& vocab, const TrainConfig& cfg,
                  const std::function<void(const StepRecord&)>& on_step = {});

/// Header: step,epoch,lr,loss,pre_clip_norm,clipped
void write_run_csv(std::ostream& os, const RunReport& report);
std::vector<StepRecord> read_run_csv(std::istream& is);

}  // namespace bnrhn
