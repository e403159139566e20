#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "bnrhn/cells.hpp"
#include "bnrhn/diagnostics.hpp"

namespace bnrhn {

/// Sizes of the tiny caption model used for whole-model gradient checks.
struct TinyModelSpec {
  CellKind kind = CellKind::bn_rhn;
  std::size_t depth = 2;
  std::size_t vocab = 7;
  std::size_t embed = 4;
  std::size_t hidden = 5;
  std::size_t feature_width = 3;
  std::size_t steps = 3;
  std::size_t batch = 2;
  std::uint64_t seed = 1;
};

struct ModelCheckResult {
  GradCheckReport report;
  std::string worst_name;  // tensor name of the worst coordinate
};

/// Builds a seeded tiny model and batch (one sequence is padded at the last
/// step), then compares backward_unroll against central differences of the
/// training-mode loss over every trainable coordinate. `fault_scale` multiplies
/// the analytic gradient before the comparison, for fault injection.
ModelCheckResult check_model_gradients(const TinyModelSpec& spec, const GradCheckOptions& opts = {},
                                       double fault_scale = 1.0);

}  // namespace bnrhn
