#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace bnrhn::cli {

/// Exit codes shared by every command.
enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsage = 2, kNumerical = 3 };

struct TrainArgs {
  std::optional<std::filesystem::path> config;
  std::vector<std::pair<std::string, std::string>> overrides;  // applied after the file
};

struct SynthArgs {
  std::filesystem::path out;
  std::optional<std::filesystem::path> references;  // also write references JSON
  std::vector<std::pair<std::string, std::string>> overrides;  // synth_* keys
};

struct DecodeArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path dataset;
  std::filesystem::path out;
  std::size_t max_len = 20;
};

struct ScoreArgs {
  std::filesystem::path candidates;
  std::filesystem::path references;
  std::optional<std::filesystem::path> out;
};

struct DiagnoseArgs {
  std::filesystem::path checkpoint;
  std::string mode;  // jacobian, gersh, gradtrace
  std::string method = "analytic";
  std::optional<std::filesystem::path> dataset;
  std::size_t sample = 0;
  std::size_t steps = 10;  // gradtrace without a dataset
  std::size_t t = 0;       // time step whose batch-norm statistics are used
  std::filesystem::path out_dir = ".";
};

struct GradcheckArgs {
  std::string kind = "all";  // lstm, rhn, bn_rhn or all
  std::uint64_t seed = 1;
  std::vector<std::size_t> depths{1, 2, 3};
  bool inject_fault = false;
};

struct CompareArgs {
  std::vector<std::filesystem::path> runs;
  std::vector<std::string> labels;  // defaults to the file paths
  double threshold = 0.5;
  bool relative = false;
  double smooth = 0.0;
  std::optional<std::filesystem::path> out;
};

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_synth(const SynthArgs& args, std::ostream& out, std::ostream& err);
int cmd_decode(const DecodeArgs& args, std::ostream& out, std::ostream& err);
int cmd_score(const ScoreArgs& args, std::ostream& out, std::ostream& err);
int cmd_diagnose(const DiagnoseArgs& args, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err);
int cmd_compare(const CompareArgs& args, std::ostream& out, std::ostream& err);

/// Splits "--key=value" / "key=value" tokens; throws ConfigError otherwise.
std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& tokens);

}  // namespace bnrhn::cli
