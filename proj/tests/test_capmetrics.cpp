#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "bnrhn/errors.hpp"
#include "bnrhn/metrics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace bnrhn::metrics;
using bnrhn::test::Gen;

namespace {

TokenSeq words(std::string_view s) { return tokenize(s); }

struct Corpus {
  std::vector<TokenSeq> cands;
  std::vector<RefSet> refs;
};

Corpus random_corpus(Gen& g, std::size_t items, std::size_t max_tokens, std::size_t alphabet) {
  Corpus c;
  for (std::size_t i = 0; i < items; ++i) {
    c.cands.push_back(g.tokens(g.range(0, max_tokens), alphabet));
    RefSet rs;
    const std::size_t nrefs = g.range(1, 3);
    for (std::size_t r = 0; r < nrefs; ++r) rs.push_back(g.tokens(g.range(1, max_tokens), alphabet));
    c.refs.push_back(rs);
  }
  return c;
}

}  // namespace

TEST_CASE("tokenize") {
  CHECK(tokenize("A man, riding.") == TokenSeq{"a", "man", "riding"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("Hello HELLO") == TokenSeq{"hello", "hello"});
  CHECK(tokenize("  ... x!  \"y\"\t-- ") == TokenSeq{"x", "y"});
  CHECK(tokenize("don't") == TokenSeq{"don't"});
}

TEST_CASE("ngram counts") {
  const auto c = ngram_counts(words("a b a b"), 2);
  CHECK(c.size() == 2);
  CHECK(c.at({"a", "b"}) == 2);
  CHECK(c.at({"b", "a"}) == 1);
  CHECK(ngram_counts(words("a b"), 3).empty());
  CHECK(ngram_counts(words("a b"), 0).empty());
}

TEST_CASE("bleu examples") {
  const std::vector<TokenSeq> same{words("a cat on a mat"), words("two dogs run")};
  const std::vector<RefSet> same_refs{{same[0]}, {same[1]}};
  for (const double s : bleu(same, same_refs)) CHECK(s == doctest::Approx(1.0).epsilon(1e-15));

  const std::vector<TokenSeq> the{words("the the the")};
  const std::vector<RefSet> cat{{words("the cat")}};
  CHECK(clipped_matches(the[0], cat[0], 1) == 1);
  CHECK(bleu(the, cat, 1)[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  // c = 2, r = 4, perfect precision: BP = e^{1 − 4/2}.
  const std::vector<TokenSeq> short_c{words("a b")};
  const std::vector<RefSet> long_r{{words("a b c d")}};
  const auto s = bleu(short_c, long_r, 2);
  CHECK(s[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(s[1] == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(s[0] < 1.0);

  // Closest reference length, ties to the shorter one.
  const std::vector<RefSet> tie{{words("a b c x"), words("a b")}};
  const std::vector<TokenSeq> three{words("a b c")};
  CHECK(bleu(three, tie, 1)[0] == doctest::Approx(1.0).epsilon(1e-15));

  for (const double v : bleu(std::vector<TokenSeq>{}, std::vector<RefSet>{})) CHECK(v == 0.0);
  const std::vector<TokenSeq> empty_c{TokenSeq{}};
  for (const double v : bleu(empty_c, cat)) CHECK(v == 0.0);
  CHECK(bleu(the, cat).size() == 4);
  CHECK_THROWS_AS((void)bleu(the, std::vector<RefSet>{}), bnrhn::DataError);
}

TEST_CASE("lcs and rouge-l examples") {
  CHECK(lcs_len(words("a b c d e"), words("a c e")) == 3);
  CHECK(lcs_len(words("a b c d"), words("a c b d")) == 3);
  const auto x = words("p q r p");
  CHECK(lcs_len(x, x) == x.size());
  CHECK(lcs_len(x, TokenSeq{}) == 0);

  CHECK(rouge_l(x, {x}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(rouge_l(words("a b"), {words("c d")}) == 0.0);
  CHECK(rouge_l(TokenSeq{}, {words("a")}) == 0.0);
  CHECK_THROWS_AS((void)rouge_l(x, RefSet{}), bnrhn::DataError);

  // LCS 3, P = 3/4, R = 3/4: F = P for any beta.
  CHECK(rouge_l(words("a b c d"), {words("a c b d")}) == doctest::Approx(0.75).epsilon(1e-15));
  // Max over references.
  CHECK(rouge_l(words("a b"), {words("z"), words("a b")}) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("cider examples") {
  const std::vector<TokenSeq> c{words("red fox jumps high"), words("blue whale dives deep")};
  const std::vector<RefSet> r{{c[0]}, {c[1]}};
  CHECK(cider(c, r) == doctest::Approx(10.0).epsilon(1e-12));

  // Three tokens have no 4-grams; that order's zero-vector cosine is 0.
  const std::vector<TokenSeq> c3{words("red fox jumps"), words("blue whale dives")};
  const std::vector<RefSet> r3{{c3[0]}, {c3[1]}};
  CHECK(cider(c3, r3) == doctest::Approx(7.5).epsilon(1e-12));

  const std::vector<TokenSeq> miss{words("green"), words("purple")};
  CHECK(cider(miss, r) == 0.0);

  // "the" is in every image's references: IDF 0, so alone it scores nothing.
  const std::vector<RefSet> shared{{words("the fox")}, {words("the whale")}};
  const std::vector<TokenSeq> only_the{words("the"), words("the")};
  CHECK(cider(only_the, shared) == 0.0);

  const std::vector<TokenSeq> one{words("a")};
  const std::vector<RefSet> one_ref{{words("a")}};
  try {
    (void)cider(one, one_ref);
    FAIL("expected ConfigError");
  } catch (const bnrhn::ConfigError& e) {
    CHECK(std::string(e.what()).find("IDF") != std::string::npos);
  }
}

TEST_CASE("two-item hand corpus") {
  const std::vector<TokenSeq> c{words("a cat sat"), words("dog runs")};
  const std::vector<RefSet> r{{words("a cat sat down")}, {words("the dog runs")}};

  // c = 5, r = 7. p1 = 5/5, p2 = 3/3, p3 = 1/1, no 4-grams.
  const double bp = std::exp(1.0 - 7.0 / 5.0);
  const auto b = bleu(c, r);
  CHECK(b[0] == doctest::Approx(bp).epsilon(1e-9));
  CHECK(b[1] == doctest::Approx(bp).epsilon(1e-9));
  CHECK(b[2] == doctest::Approx(bp).epsilon(1e-9));
  CHECK(b[3] == 0.0);

  const double b2 = 1.44;
  const double f1 = (1 + b2) * 1.0 * 0.75 / (0.75 + b2 * 1.0);
  const double f2 = (1 + b2) * 1.0 * (2.0 / 3.0) / (2.0 / 3.0 + b2 * 1.0);
  CHECK(rouge_l_corpus(c, r) == doctest::Approx((f1 + f2) / 2).epsilon(1e-9));

  // Disjoint reference vocabularies: every IDF is log 2 and cancels.
  const double item1 = (std::sqrt(3.0) / 2 + std::sqrt(2.0 / 3.0) + 1 / std::sqrt(2.0) + 0.0) / 4;
  const double item2 = (std::sqrt(2.0 / 3.0) + 1 / std::sqrt(2.0) + 0.0 + 0.0) / 4;
  CHECK(cider(c, r) == doctest::Approx(10.0 * (item1 + item2) / 2).epsilon(1e-9));

  const auto rep = score_corpus(c, r);
  CHECK(rep.bleu[0] == b[0]);
  CHECK(rep.bleu[3] == b[3]);
  CHECK(rep.rouge_l == rouge_l_corpus(c, r));
  CHECK(rep.cider == cider(c, r));
}

TEST_CASE("clipping matches the exhaustive oracle") {
  for (std::uint64_t seed = 1; seed <= 300; ++seed) {
    Gen g(seed);
    const TokenSeq cand = g.tokens(g.range(0, 6), 3);
    RefSet refs;
    for (std::size_t k = g.range(1, 3); k > 0; --k) refs.push_back(g.tokens(g.range(1, 6), 3));
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto got = clipped_matches(cand, refs, n);
      CHECK(got == bnrhn::test::brute_clipped(cand, refs, n));
      CHECK(got <= std::max(cand.size() + 1, std::size_t{n}) - n);
    }
  }
}

TEST_CASE("lcs matches subsequence enumeration") {
  for (std::uint64_t seed = 1; seed <= 300; ++seed) {
    Gen g(seed);
    const TokenSeq a = g.tokens(g.range(0, 10), 4);
    const TokenSeq b = g.tokens(g.range(0, 10), 4);
    CHECK(lcs_len(a, b) == bnrhn::test::brute_lcs(a, b));
    CHECK(lcs_len(a, b) == lcs_len(b, a));
  }
}

TEST_CASE("metric ranges and permutation invariance") {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Gen g(seed);
    Corpus c = random_corpus(g, g.range(2, 7), 6, 5);
    const auto base = score_corpus(c.cands, c.refs);
    for (const double v : base.bleu) CHECK((v >= 0.0 && v <= 1.0));
    CHECK((base.rouge_l >= 0.0 && base.rouge_l <= 1.0));
    CHECK((base.cider >= 0.0 && base.cider <= 10.0 + 1e-12));

    std::vector<std::size_t> perm(c.cands.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[g.below(i)]);
    Corpus p;
    for (const std::size_t i : perm) {
      p.cands.push_back(c.cands[i]);
      p.refs.push_back(c.refs[i]);
    }
    const auto moved = score_corpus(p.cands, p.refs);
    CHECK(moved.bleu == base.bleu);
    CHECK(moved.rouge_l == base.rouge_l);
    CHECK(moved.cider == base.cider);
  }
}

TEST_CASE("exact-match corpora score perfectly") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    Gen g(seed);
    const std::size_t items = g.range(2, 6);
    std::vector<TokenSeq> cands;
    std::vector<RefSet> refs;
    for (std::size_t i = 0; i < items; ++i) {
      // Per-item vocabulary keeps every IDF nondegenerate.
      TokenSeq s = g.tokens(g.range(4, 8), 3);
      for (auto& t : s) t += "_" + std::to_string(i);
      cands.push_back(s);
      refs.push_back({s});
    }
    const auto rep = score_corpus(cands, refs);
    for (const double v : rep.bleu) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.rouge_l == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.cider == doctest::Approx(10.0).epsilon(1e-12));
  }
}
