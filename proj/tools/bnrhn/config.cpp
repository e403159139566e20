#include "config.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bnrhn/errors.hpp"

namespace bnrhn::cli {

namespace {

constexpr std::array<ExperimentConfig::KeyInfo, 30> kKeys{{
    {"kind", "bn_rhn", "model kind: lstm, rhn or bn_rhn"},
    {"embed", "64", "word embedding width"},
    {"hidden", "64", "recurrent state width"},
    {"depth", "3", "recurrence depth D (rhn, bn_rhn)"},
    {"bn_every_depth", "true", "batch-normalize the state at every depth (false: depth 1 only)"},
    {"bn_gamma", "0.1", "initial batch-norm scale"},
    {"bn_shared_over_time", "true", "share running statistics over time (false: one slot per step up to max_len)"},
    {"bn_recalibrate", "false", "re-estimate running statistics at the final weights after training"},
    {"init_scale", "0.04", "weights ~ U(-init_scale, init_scale)"},
    {"transform_bias", "-2", "initial transform-gate bias"},
    {"carry_bias", "2", "initial carry-gate bias (bn_rhn)"},
    {"lr0", "0.1", "initial learning rate"},
    {"decay", "0.5", "learning-rate decay factor"},
    {"decay_every", "8", "epochs between decays"},
    {"epochs", "10", "passes over the training set"},
    {"batch", "8", "samples per update"},
    {"max_len", "16", "maximum unrolled steps per caption"},
    {"clip", "auto", "global-norm clip threshold, none, or auto (5 for lstm/rhn, none for bn_rhn)"},
    {"seed", "1", "seed for initialization and shuffling"},
    {"max_steps", "0", "stop after this many updates (0: no limit)"},
    {"dataset", "", "JSON Lines dataset; empty generates the synthetic set"},
    {"synth_samples", "200", "synthetic set: number of samples"},
    {"synth_feature_width", "32", "synthetic set: feature width"},
    {"synth_min_len", "4", "synthetic set: minimum caption length"},
    {"synth_max_len", "11", "synthetic set: maximum caption length"},
    {"synth_refs", "1", "synthetic set: references per sample"},
    {"synth_noise", "0.05", "synthetic set: feature noise amplitude"},
    {"synth_seed", "7", "synthetic set: seed"},
    {"min_count", "1", "minimum corpus count for a vocabulary entry"},
    {"out_dir", "runs", "parent directory of run directories"},
}};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

const ExperimentConfig::KeyInfo* find_key(std::string_view key) {
  for (const auto& k : kKeys) {
    if (k.key == key) return &k;
  }
  return nullptr;
}

}  // namespace

double parse_real(std::string_view key, std::string_view text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (text.empty() || res.ec != std::errc() || res.ptr != end || !std::isfinite(v)) {
    throw ConfigError(std::string(key) + ": expected a finite number, got '" + std::string(text) + "'");
  }
  return v;
}

std::uint64_t parse_count(std::string_view key, std::string_view text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (text.empty() || res.ec != std::errc() || res.ptr != end) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" + std::string(text) + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(std::string(key) + ": expected true or false, got '" + std::string(text) + "'");
}

ExperimentConfig::ExperimentConfig() {
  for (const auto& k : kKeys) values_.emplace(k.key, k.default_value);
}

std::span<const ExperimentConfig::KeyInfo> ExperimentConfig::keys() noexcept { return kKeys; }

void ExperimentConfig::set(std::string_view key, std::string_view value) {
  if (find_key(key) == nullptr) throw ConfigError("unknown config key '" + std::string(key) + "'");
  values_[std::string(key)] = std::string(trim(value));
}

const std::string& ExperimentConfig::get(std::string_view key) const {
  const auto it = values_.find(std::string(key));
  if (it == values_.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  return it->second;
}

void ExperimentConfig::merge_text(std::string_view text, std::string_view origin) {
  std::size_t lineno = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const auto key = trim(line.substr(0, eq));
    if (find_key(key) == nullptr) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(lineno) + ": unknown config key '" +
                        std::string(key) + "'");
    }
    set(key, line.substr(eq + 1));
  }
}

void ExperimentConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  merge_text(ss.str(), path.string());
}

void ExperimentConfig::validate() const {
  (void)train_config();
  (void)synth_spec();
  (void)min_count();
  if (out_dir().empty()) throw ConfigError("out_dir: must not be empty");
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig c;
  c.model.kind = parse_cell_kind(get("kind"));
  c.model.embed = parse_count("embed", get("embed"));
  c.model.hidden = parse_count("hidden", get("hidden"));
  c.model.depth = parse_count("depth", get("depth"));
  c.model.bn_every_depth = parse_bool("bn_every_depth", get("bn_every_depth"));
  c.model.bn_gamma = parse_real("bn_gamma", get("bn_gamma"));
  c.lr0 = parse_real("lr0", get("lr0"));
  c.decay = parse_real("decay", get("decay"));
  c.decay_every_epochs = parse_count("decay_every", get("decay_every"));
  c.epochs = parse_count("epochs", get("epochs"));
  c.batch = parse_count("batch", get("batch"));
  c.max_len = parse_count("max_len", get("max_len"));
  c.seed = parse_count("seed", get("seed"));
  c.max_steps = parse_count("max_steps", get("max_steps"));
  c.bn_recalibrate = parse_bool("bn_recalibrate", get("bn_recalibrate"));
  c.model.bn_stat_slots = parse_bool("bn_shared_over_time", get("bn_shared_over_time")) ? 1 : std::max<std::size_t>(1, c.max_len);
  c.init.init_scale = parse_real("init_scale", get("init_scale"));
  c.init.transform_bias = parse_real("transform_bias", get("transform_bias"));
  c.init.carry_bias = parse_real("carry_bias", get("carry_bias"));
  if (c.init.init_scale < 0.0) throw ConfigError("init_scale: must be non-negative");

  const std::string& clip = get("clip");
  if (clip == "auto") {
    c.clip = c.model.kind == CellKind::bn_rhn ? std::nullopt : std::optional<double>(5.0);
  } else if (clip == "none") {
    c.clip.reset();
  } else {
    c.clip = parse_real("clip", clip);
  }
  c.validate();
  return c;
}

DatasetSpec ExperimentConfig::synth_spec() const {
  DatasetSpec s;
  s.n_samples = parse_count("synth_samples", get("synth_samples"));
  s.feature_width = parse_count("synth_feature_width", get("synth_feature_width"));
  s.min_len = parse_count("synth_min_len", get("synth_min_len"));
  s.max_len = parse_count("synth_max_len", get("synth_max_len"));
  s.refs_per_sample = parse_count("synth_refs", get("synth_refs"));
  s.feature_noise = parse_real("synth_noise", get("synth_noise"));
  s.seed = parse_count("synth_seed", get("synth_seed"));
  if (s.n_samples < 2) throw ConfigError("synth_samples: must be at least 2");
  if (s.feature_width == 0) throw ConfigError("synth_feature_width: must be positive");
  if (s.min_len == 0 || s.min_len > s.max_len) throw ConfigError("synth_min_len: must lie in [1, synth_max_len]");
  if (s.refs_per_sample == 0) throw ConfigError("synth_refs: must be positive");
  if (s.feature_noise < 0.0) throw ConfigError("synth_noise: must be non-negative");
  return s;
}

std::size_t ExperimentConfig::min_count() const { return parse_count("min_count", get("min_count")); }

std::string ExperimentConfig::dataset_path() const { return get("dataset"); }

std::filesystem::path ExperimentConfig::out_dir() const { return get("out_dir"); }

std::string ExperimentConfig::snapshot() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t ExperimentConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [k, v] : values_) {
    if (k == "out_dir") continue;
    for (const char ch : k + "=" + v + "\n") {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::filesystem::path ExperimentConfig::run_dir() const {
  static constexpr char digits[] = "0123456789abcdef";
  std::string name = "run-";
  const std::uint64_t h = hash();
  for (int shift = 60; shift >= 0; shift -= 4) name += digits[(h >> shift) & 0xF];
  return out_dir() / name;
}

}  // namespace bnrhn::cli
