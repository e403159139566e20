#include "bnrhn/model_check.hpp"

#include "bnrhn/errors.hpp"
#include "bnrhn/model.hpp"
#include "bnrhn/rng.hpp"

namespace bnrhn {

ModelCheckResult check_model_gradients(const TinyModelSpec& spec, const GradCheckOptions& opts, double fault_scale) {
  if (spec.vocab <= Vocab::kReserved || spec.steps == 0 || spec.batch < 2) {
    throw ConfigError("check_model_gradients: needs vocab > 4, steps >= 1 and batch >= 2");
  }
  ModelSpec ms;
  ms.kind = spec.kind;
  ms.vocab_size = spec.vocab;
  ms.embed = spec.embed;
  ms.hidden = spec.hidden;
  ms.feature_width = spec.feature_width;
  ms.depth = spec.depth;
  InitOptions init;
  init.seed = spec.seed;
  ModelParams params = init_model(ms, init);

  // Re-draw every trainable tensor at a scale where all terms matter.
  Rng rng(spec.seed * 7919 + 17);
  for_each_tensor(params, [&](const std::string& name, Matrix& m) {
    const bool gamma = name.ends_with(".gamma");
    for (double& v : m.data()) v = gamma ? rng.uniform(0.5, 1.5) : rng.uniform(-0.6, 0.6);
  });

  Batch batch;
  batch.features = Matrix(spec.batch, spec.feature_width);
  for (double& v : batch.features.data()) v = rng.uniform(-1.0, 1.0);
  for (std::size_t r = 0; r < spec.batch; ++r) batch.ids.push_back("tiny" + std::to_string(r));
  const std::uint64_t words = spec.vocab - Vocab::kReserved;
  for (std::size_t t = 0; t < spec.steps; ++t) {
    std::vector<TokenId> in(spec.batch), out(spec.batch);
    std::vector<double> mask(spec.batch, 1.0);
    for (std::size_t r = 0; r < spec.batch; ++r) {
      in[r] = t == 0 ? Vocab::kStart : batch.targets[t - 1][r];
      out[r] = t + 1 == spec.steps ? Vocab::kEnd : Vocab::kReserved + rng.below(words);
    }
    if (t + 1 == spec.steps && spec.steps > 1) {
      out.back() = Vocab::kPad;
      mask.back() = 0.0;
    }
    batch.inputs.push_back(std::move(in));
    batch.targets.push_back(std::move(out));
    batch.mask.push_back(std::move(mask));
  }

  const UnrollResult fwd = forward_unroll(batch, params, Mode::train);
  std::vector<Matrix> analytic = flatten(backward_unroll(fwd.cache, params));
  if (fault_scale != 1.0) {
    for (auto& m : analytic) m = scale(m, fault_scale);
  }
  const std::vector<Matrix> theta = flatten(params);

  ModelParams probe = params;
  const ScalarFn loss = [&](std::span<const Matrix> ts) {
    assign(probe, ts);
    return forward_unroll(batch, probe, Mode::train).loss;
  };

  ModelCheckResult out;
  out.report = grad_check(loss, theta, analytic, opts);
  out.worst_name = tensor_names(params).at(out.report.worst_tensor);
  return out;
}

}  // namespace bnrhn
