#include "compare.hpp"

#include "bnrhn/errors.hpp"

namespace bnrhn::cli {

std::optional<std::size_t> steps_to_threshold(std::span<const StepRecord> run, const CompareOptions& opts,
                                              double* absolute_threshold) {
  if (!(opts.smooth >= 0.0 && opts.smooth < 1.0)) throw ConfigError("smooth: must lie in [0, 1)");
  if (run.empty()) return std::nullopt;
  const double limit = opts.relative ? opts.threshold * run.front().loss : opts.threshold;
  if (absolute_threshold != nullptr) *absolute_threshold = limit;
  double ema = run.front().loss;
  for (const auto& r : run) {
    ema = opts.smooth * ema + (1.0 - opts.smooth) * r.loss;
    if (ema <= limit) return r.step;
  }
  return std::nullopt;
}

std::vector<CompareRow> compare_runs(std::span<const std::vector<StepRecord>> runs,
                                     std::span<const std::string> labels, const CompareOptions& opts) {
  if (runs.size() != labels.size()) throw ConfigError("compare: one label per run is required");
  std::vector<CompareRow> rows;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    CompareRow row;
    row.label = labels[i];
    row.steps = steps_to_threshold(runs[i], opts, &row.threshold);
    rows.push_back(std::move(row));
  }
  for (auto& row : rows) {
    if (!row.steps) continue;
    std::size_t better = 0;
    for (const auto& other : rows) {
      if (other.steps && *other.steps < *row.steps) ++better;
    }
    row.rank = better + 1;
  }
  return rows;
}

}  // namespace bnrhn::cli
