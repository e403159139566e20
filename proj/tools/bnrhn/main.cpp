#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "bnrhn/errors.hpp"
#include "commands.hpp"
#include "config.hpp"

namespace {

std::string config_keys_help() {
  std::ostringstream os;
  os << "Config keys (key=value in the file, --key=value on the command line):\n";
  for (const auto& k : bnrhn::cli::ExperimentConfig::keys()) {
    os << "  " << k.key << " [" << k.default_value << "]  " << k.help << '\n';
  }
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace bnrhn::cli;

  CLI::App app{"Batch-normalized recurrent highway networks for caption generation"};
  app.require_subcommand(1);

  TrainArgs train;
  std::string train_config;
  auto* train_cmd = app.add_subcommand("train", "Train a captioning model");
  train_cmd->add_option("--config", train_config, "key=value config file");
  train_cmd->allow_extras();
  train_cmd->footer(config_keys_help());

  SynthArgs synth;
  std::string synth_refs;
  auto* synth_cmd = app.add_subcommand("synth", "Write the synthetic captioning dataset");
  synth_cmd->add_option("--out", synth.out, "JSON Lines output")->required();
  synth_cmd->add_option("--references", synth_refs, "also write references JSON {id: [captions]}");
  synth_cmd->allow_extras();

  DecodeArgs decode;
  auto* decode_cmd = app.add_subcommand("decode", "Greedy-decode captions for a dataset");
  decode_cmd->add_option("--checkpoint", decode.checkpoint)->required();
  decode_cmd->add_option("--dataset", decode.dataset, "JSON Lines samples")->required();
  decode_cmd->add_option("--out", decode.out, "candidates JSON {id: caption}")->required();
  decode_cmd->add_option("--max-len", decode.max_len, "maximum tokens per caption");

  ScoreArgs score;
  std::string score_out;
  auto* score_cmd = app.add_subcommand("score", "BLEU-1..4, ROUGE-L and CIDEr of candidates against references");
  score_cmd->add_option("--candidates", score.candidates)->required();
  score_cmd->add_option("--references", score.references)->required();
  score_cmd->add_option("--out", score_out, "also write the scores JSON here");

  DiagnoseArgs diag;
  std::string diag_dataset;
  auto* diag_cmd = app.add_subcommand("diagnose", "Temporal Jacobian, Gershgorin discs or gradient-norm trace");
  diag_cmd->add_option("--checkpoint", diag.checkpoint)->required();
  diag_cmd->add_option("--mode", diag.mode, "jacobian, gersh or gradtrace")->required();
  diag_cmd->add_option("--method", diag.method, "analytic or finite_diff");
  diag_cmd->add_option("--dataset", diag_dataset, "operating point taken from this dataset");
  diag_cmd->add_option("--sample", diag.sample, "sample index in the dataset");
  diag_cmd->add_option("--steps", diag.steps, "gradtrace length without a dataset");
  diag_cmd->add_option("--t", diag.t, "time step whose batch-norm statistics are used");
  diag_cmd->add_option("--out-dir", diag.out_dir);

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the full model gradient");
  gc_cmd->add_option("--kind", gc.kind, "lstm, rhn, bn_rhn or all");
  gc_cmd->add_option("--seed", gc.seed);
  gc_cmd->add_option("--depths", gc.depths, "recurrence depths to check")->delimiter(',');
  gc_cmd->add_flag("--inject-fault", gc.inject_fault, "scale the analytic gradient by 1.1");

  CompareArgs cmp;
  std::string cmp_out;
  auto* cmp_cmd = app.add_subcommand("compare", "Rank runs by steps to reach a loss threshold");
  cmp_cmd->add_option("runs", cmp.runs, "run.csv files")->required();
  cmp_cmd->add_option("--labels", cmp.labels)->delimiter(',');
  cmp_cmd->add_option("--threshold", cmp.threshold);
  cmp_cmd->add_flag("--relative", cmp.relative, "threshold is a fraction of each run's first loss");
  cmp_cmd->add_option("--smooth", cmp.smooth, "EMA factor in [0,1) applied to the loss");
  cmp_cmd->add_option("--out", cmp_out, "comparison CSV (default comparison.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }

  try {
    if (*train_cmd) {
      if (!train_config.empty()) train.config = train_config;
      train.overrides = parse_overrides(train_cmd->remaining());
      return cmd_train(train, std::cout, std::cerr);
    }
    if (*synth_cmd) {
      if (!synth_refs.empty()) synth.references = synth_refs;
      synth.overrides = parse_overrides(synth_cmd->remaining());
      return cmd_synth(synth, std::cout, std::cerr);
    }
    if (*decode_cmd) return cmd_decode(decode, std::cout, std::cerr);
    if (*score_cmd) {
      if (!score_out.empty()) score.out = score_out;
      return cmd_score(score, std::cout, std::cerr);
    }
    if (*diag_cmd) {
      if (!diag_dataset.empty()) diag.dataset = diag_dataset;
      return cmd_diagnose(diag, std::cout, std::cerr);
    }
    if (*gc_cmd) return cmd_gradcheck(gc, std::cout, std::cerr);
    if (*cmp_cmd) {
      if (!cmp_out.empty()) cmp.out = cmp_out;
      return cmd_compare(cmp, std::cout, std::cerr);
    }
  } catch (const bnrhn::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
