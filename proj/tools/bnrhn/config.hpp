#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bnrhn/dataset.hpp"
#include "bnrhn/trainer.hpp"

namespace bnrhn::cli {

/// Flat key=value experiment configuration. Every key has a documented
/// default; unknown keys and malformed values raise ConfigError naming the
/// key.
class ExperimentConfig {
 public:
  ExperimentConfig();

  /// Parses "key = value" lines; '#' starts a comment, blank lines are skipped.
  void merge_text(std::string_view text, std::string_view origin);
  void merge_file(const std::filesystem::path& path);
  void set(std::string_view key, std::string_view value);

  [[nodiscard]] const std::string& get(std::string_view key) const;
  [[nodiscard]] const std::map<std::string, std::string>& values() const noexcept { return values_; }

  /// Checks every value and cross-field rule; throws ConfigError.
  void validate() const;

  [[nodiscard]] TrainConfig train_config() const;
  [[nodiscard]] DatasetSpec synth_spec() const;
  [[nodiscard]] std::size_t min_count() const;
  /// Empty when the synthetic dataset should be generated.
  [[nodiscard]] std::string dataset_path() const;
  [[nodiscard]] std::filesystem::path out_dir() const;

  /// Sorted "key=value" lines, the resolved snapshot.
  [[nodiscard]] std::string snapshot() const;
  /// 64-bit FNV-1a of the snapshot, excluding out_dir.
  [[nodiscard]] std::uint64_t hash() const;
  /// out_dir / "run-<16 hex digits of hash()>"
  [[nodiscard]] std::filesystem::path run_dir() const;

  struct KeyInfo {
    std::string_view key;
    std::string_view default_value;
    std::string_view help;
  };
  static std::span<const KeyInfo> keys() noexcept;

 private:
  std::map<std::string, std::string> values_;
};

double parse_real(std::string_view key, std::string_view text);
std::uint64_t parse_count(std::string_view key, std::string_view text);
bool parse_bool(std::string_view key, std::string_view text);

}  // namespace bnrhn::cli
