#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bnrhn/trainer.hpp"

namespace bnrhn::cli {

struct CompareOptions {
  double threshold = 0.5;
  /// Threshold is a fraction of each run's first recorded loss.
  bool relative = false;
  /// Exponential smoothing factor in [0, 1): ema = a·ema + (1−a)·loss,
  /// started at the first loss. 0 compares raw losses.
  double smooth = 0.0;
};

struct CompareRow {
  std::string label;
  std::optional<std::size_t> steps;  // first step at or below the threshold
  std::optional<std::size_t> rank;   // 1-based, ties share a rank
  double threshold = 0.0;            // absolute value used for this run
};

/// First step whose (smoothed) loss is <= the threshold, or nullopt.
std::optional<std::size_t> steps_to_threshold(std::span<const StepRecord> run, const CompareOptions& opts,
                                              double* absolute_threshold = nullptr);

/// Competition ranking by steps: runs that never reach the threshold are
/// left unranked.
std::vector<CompareRow> compare_runs(std::span<const std::vector<StepRecord>> runs,
                                     std::span<const std::string> labels, const CompareOptions& opts);

}  // namespace bnrhn::cli
