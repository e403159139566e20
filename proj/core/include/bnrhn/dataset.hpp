#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bnrhn/metrics.hpp"
#include "bnrhn/vocab.hpp"

namespace bnrhn {

/// One image: a precomputed feature vector and its reference captions.
struct CaptionSample {
  std::string id;
  std::vector<double> feature;
  std::vector<metrics::TokenSeq> references;  // >= 1, each nonempty
};

/// Parameters of the synthetic captioning corpus. Captions are rendered from
/// sampled scene attributes (color, animal, action, place, ...) and the
/// feature vector is a fixed random projection of those attributes plus
/// small noise, so the caption is recoverable from the feature.
struct DatasetSpec {
  std::size_t n_samples = 200;
  std::size_t feature_width = 32;
  std::size_t min_len = 4;
  std::size_t max_len = 11;
  std::size_t refs_per_sample = 1;
  double feature_noise = 0.05;
  std::uint64_t seed = 7;
};

/// Deterministic in `spec`. Captions are pairwise distinct. Throws
/// ConfigError if the spec cannot be satisfied.
std::vector<CaptionSample> synth_dataset(const DatasetSpec& spec);

/// Throws DataError unless every sample has a nonempty id, at least one
/// nonempty reference and the same feature width as the first sample.
void validate_dataset(std::span<const CaptionSample> samples);

/// Tokens with corpus count >= min_count get ids 4.. by descending count,
/// then lexicographically; the rest map to UNK.
Vocab build_vocab(std::span<const CaptionSample> samples, std::size_t min_count);

/// JSON Lines: one {"id", "feature", "captions"} object per line.
void write_jsonl(std::ostream& os, std::span<const CaptionSample> samples);
std::vector<CaptionSample> read_jsonl(std::istream& is);
void save_jsonl(const std::filesystem::path& path, std::span<const CaptionSample> samples);
std::vector<CaptionSample> load_jsonl(const std::filesystem::path& path);

}  // namespace bnrhn
