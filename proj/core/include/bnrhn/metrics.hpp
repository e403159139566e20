#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bnrhn::metrics {

using TokenSeq = std::vector<std::string>;
/// All reference captions for one image.
using RefSet = std::vector<TokenSeq>;
using Ngram = std::vector<std::string>;
using NgramCounts = std::map<Ngram, int>;

/// Lowercases, splits on whitespace, strips leading/trailing ASCII
/// punctuation from each token and drops tokens that end up empty.
TokenSeq tokenize(std::string_view text);

NgramCounts ngram_counts(const TokenSeq& seq, std::size_t n);

/// Σ over the candidate's n-grams of min(count, max count in any reference).
std::size_t clipped_matches(const TokenSeq& candidate, const RefSet& refs, std::size_t n);

/// Corpus BLEU-1..max_n with brevity penalty min(1, e^{1−r/c}); r sums the
/// closest reference length per item (ties go to the shorter). No smoothing:
/// a zero precision at any order gives a zero score for that and higher n.
std::vector<double> bleu(std::span<const TokenSeq> candidates, std::span<const RefSet> references,
                         std::size_t max_n = 4);

std::size_t lcs_len(const TokenSeq& a, const TokenSeq& b);

/// Sentence ROUGE-L: max over references of the LCS F-measure with the given
/// beta (recall weighted beta² times precision).
double rouge_l(const TokenSeq& candidate, const RefSet& refs, double beta = 1.2);
double rouge_l_corpus(std::span<const TokenSeq> candidates, std::span<const RefSet> references, double beta = 1.2);

/// CIDEr (×10 scale) with IDF = log(N / df), df counted over images whose
/// references contain the n-gram (floored at 1). Needs at least two items.
double cider(std::span<const TokenSeq> candidates, std::span<const RefSet> references);

struct ScoreReport {
  std::array<double, 4> bleu{};
  double rouge_l = 0.0;
  double cider = 0.0;
};

ScoreReport score_corpus(std::span<const TokenSeq> candidates, std::span<const RefSet> references);

}  // namespace bnrhn::metrics
