#include "bnrhn/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "bnrhn/errors.hpp"

namespace bnrhn::metrics {

namespace {

void require_aligned(std::size_t candidates, std::span<const RefSet> references, const char* what) {
  if (candidates != references.size()) {
    throw DataError(std::string(what) + ": " + std::to_string(candidates) + " candidates but " +
                    std::to_string(references.size()) + " reference sets");
  }
  for (std::size_t i = 0; i < references.size(); ++i) {
    if (references[i].empty()) throw DataError(std::string(what) + ": item " + std::to_string(i) + " has no reference");
  }
}

// Summing sorted terms makes corpus means independent of item order.
double sorted_mean(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

}  // namespace

TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::size_t b = i;
    std::size_t e = j;
    while (b < e && std::ispunct(static_cast<unsigned char>(text[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(text[e - 1]))) --e;
    if (b < e) {
      std::string tok(text.substr(b, e - b));
      for (char& ch : tok) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      out.push_back(std::move(tok));
    }
    i = j;
  }
  return out;
}

NgramCounts ngram_counts(const TokenSeq& seq, std::size_t n) {
  NgramCounts counts;
  if (n == 0 || seq.size() < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    ++counts[Ngram(seq.begin() + static_cast<std::ptrdiff_t>(i), seq.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

std::size_t clipped_matches(const TokenSeq& candidate, const RefSet& refs, std::size_t n) {
  NgramCounts max_ref;
  for (const auto& r : refs) {
    for (const auto& [g, c] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
  }
  std::size_t matched = 0;
  for (const auto& [g, c] : ngram_counts(candidate, n)) {
    const auto it = max_ref.find(g);
    if (it != max_ref.end()) matched += static_cast<std::size_t>(std::min(c, it->second));
  }
  return matched;
}

std::vector<double> bleu(std::span<const TokenSeq> candidates, std::span<const RefSet> references,
                         std::size_t max_n) {
  require_aligned(candidates.size(), references, "bleu");
  std::vector<double> scores(max_n, 0.0);
  if (candidates.empty() || max_n == 0) return scores;

  std::vector<std::size_t> matched(max_n, 0);
  std::vector<std::size_t> total(max_n, 0);
  std::size_t cand_len = 0;
  std::size_t ref_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    cand_len += c.size();
    std::size_t best = references[i].front().size();
    for (const auto& r : references[i]) {
      const auto d = [&](std::size_t len) { return len > c.size() ? len - c.size() : c.size() - len; };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    ref_len += best;
    for (std::size_t n = 1; n <= max_n; ++n) {
      matched[n - 1] += clipped_matches(c, references[i], n);
      if (c.size() >= n) total[n - 1] += c.size() - n + 1;
    }
  }
  if (cand_len == 0) return scores;

  const double bp =
      cand_len >= ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    if (matched[n - 1] == 0 || total[n - 1] == 0) break;  // this and all higher orders stay 0
    log_sum += std::log(static_cast<double>(matched[n - 1]) / static_cast<double>(total[n - 1]));
    scores[n - 1] = bp * std::exp(log_sum / static_cast<double>(n));
  }
  return scores;
}

std::size_t lcs_len(const TokenSeq& a, const TokenSeq& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const TokenSeq& candidate, const RefSet& refs, double beta) {
  if (refs.empty()) throw DataError("rouge_l: at least one reference is required");
  if (candidate.empty()) return 0.0;
  const double b2 = beta * beta;
  double best = 0.0;
  for (const auto& r : refs) {
    const auto l = static_cast<double>(lcs_len(candidate, r));
    if (l == 0.0 || r.empty()) continue;
    const double p = l / static_cast<double>(candidate.size());
    const double rec = l / static_cast<double>(r.size());
    best = std::max(best, (1.0 + b2) * p * rec / (rec + b2 * p));
  }
  return best;
}

double rouge_l_corpus(std::span<const TokenSeq> candidates, std::span<const RefSet> references, double beta) {
  require_aligned(candidates.size(), references, "rouge_l");
  std::vector<double> per_item;
  per_item.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) per_item.push_back(rouge_l(candidates[i], references[i], beta));
  return sorted_mean(std::move(per_item));
}

namespace {

constexpr std::size_t kCiderMaxN = 4;

using TfIdf = std::map<Ngram, double>;

struct WeightedVec {
  std::array<TfIdf, kCiderMaxN> by_n;
  std::array<double, kCiderMaxN> norm{};
};

WeightedVec tfidf(const TokenSeq& seq, const NgramCounts& df, double log_n) {
  WeightedVec v;
  for (std::size_t n = 1; n <= kCiderMaxN; ++n) {
    double sq = 0.0;
    for (const auto& [g, c] : ngram_counts(seq, n)) {
      const auto it = df.find(g);
      const double d = it == df.end() ? 1.0 : static_cast<double>(it->second);
      const double w = static_cast<double>(c) * (log_n - std::log(d));
      v.by_n[n - 1][g] = w;
      sq += w * w;
    }
    v.norm[n - 1] = std::sqrt(sq);
  }
  return v;
}

double cosine(const TfIdf& a, double na, const TfIdf& b, double nb) {
  if (na == 0.0 || nb == 0.0) return 0.0;
  double dot = 0.0;
  for (const auto& [g, w] : a) {
    const auto it = b.find(g);
    if (it != b.end()) dot += w * it->second;
  }
  return dot / (na * nb);
}

}  // namespace

double cider(std::span<const TokenSeq> candidates, std::span<const RefSet> references) {
  require_aligned(candidates.size(), references, "cider");
  if (candidates.size() < 2) {
    throw ConfigError("cider: needs at least 2 items; IDF over a single image is degenerate (log(1/1) = 0)");
  }
  NgramCounts df;
  for (const auto& refs : references) {
    std::set<Ngram> seen;
    for (const auto& r : refs) {
      for (std::size_t n = 1; n <= kCiderMaxN; ++n) {
        for (const auto& [g, c] : ngram_counts(r, n)) seen.insert(g);
      }
    }
    for (const auto& g : seen) ++df[g];
  }
  const double log_n = std::log(static_cast<double>(candidates.size()));

  std::vector<double> per_item;
  per_item.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const WeightedVec cv = tfidf(candidates[i], df, log_n);
    std::array<double, kCiderMaxN> acc{};
    for (const auto& r : references[i]) {
      const WeightedVec rv = tfidf(r, df, log_n);
      for (std::size_t n = 0; n < kCiderMaxN; ++n) acc[n] += cosine(cv.by_n[n], cv.norm[n], rv.by_n[n], rv.norm[n]);
    }
    double item = 0.0;
    for (double a : acc) item += a / static_cast<double>(references[i].size());
    per_item.push_back(item / static_cast<double>(kCiderMaxN));
  }
  return 10.0 * sorted_mean(std::move(per_item));
}

ScoreReport score_corpus(std::span<const TokenSeq> candidates, std::span<const RefSet> references) {
  ScoreReport rep;
  const auto b = bleu(candidates, references, 4);
  std::copy(b.begin(), b.end(), rep.bleu.begin());
  rep.rouge_l = rouge_l_corpus(candidates, references);
  rep.cider = cider(candidates, references);
  return rep;
}

}  // namespace bnrhn::metrics
