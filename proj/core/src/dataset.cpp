#include "bnrhn/dataset.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bnrhn/errors.hpp"
#include "bnrhn/rng.hpp"

namespace bnrhn {

namespace {

using Words = std::vector<std::string>;

// Scene vocabulary for the synthetic corpus. An empty entry means the slot is
// omitted from the caption.
const std::vector<Words> kSizes = {{}, {"small"}, {"large"}, {"young"}, {"old"}};
const std::vector<std::string> kColors = {"red", "blue", "green", "yellow", "black", "white", "brown", "gray"};
const std::vector<std::string> kNouns = {"dog", "cat", "man", "woman", "horse", "bird", "boy", "girl", "cow", "sheep"};
const std::vector<std::array<Words, 2>> kVerbs = {
    {Words{"runs"}, Words{"is", "running"}},   {Words{"sits"}, Words{"is", "sitting"}},
    {Words{"stands"}, Words{"is", "standing"}}, {Words{"walks"}, Words{"is", "walking"}},
    {Words{"plays"}, Words{"is", "playing"}},   {Words{"sleeps"}, Words{"is", "sleeping"}},
    {Words{"eats"}, Words{"is", "eating"}},     {Words{"jumps"}, Words{"is", "jumping"}},
};
const std::vector<std::string> kPreps = {"on", "in", "near", "under"};
const std::vector<std::string> kPlaces = {"grass", "street", "beach", "field", "table", "road", "snow", "park"};
const std::vector<Words> kTails = {{}, {"with", "a", "ball"}, {"at", "night"}, {"in", "the", "sun"}};

struct Scene {
  std::size_t size, color, noun, verb, place, tail;  // place 0 = no location phrase
};

constexpr std::size_t kPlaceOptions = 1 + 4 * 8;

metrics::TokenSeq render(const Scene& s, std::size_t ref) {
  metrics::TokenSeq out;
  out.emplace_back(ref >= 2 ? "the" : "a");
  for (const auto& w : kSizes[s.size]) out.push_back(w);
  out.push_back(kColors[s.color]);
  out.push_back(kNouns[s.noun]);
  for (const auto& w : kVerbs[s.verb][ref % 2]) out.push_back(w);
  if (s.place != 0) {
    out.push_back(kPreps[(s.place - 1) / kPlaces.size()]);
    out.emplace_back("the");
    out.push_back(kPlaces[(s.place - 1) % kPlaces.size()]);
  }
  for (const auto& w : kTails[s.tail]) out.push_back(w);
  return out;
}

// One random code vector per attribute value, per slot.
struct FeatureCodes {
  std::vector<std::vector<std::vector<double>>> slots;

  FeatureCodes(Rng& rng, std::size_t width) {
    const std::array<std::size_t, 6> cardinality = {kSizes.size(), kColors.size(), kNouns.size(),
                                                    kVerbs.size(), kPlaceOptions,  kTails.size()};
    for (const std::size_t card : cardinality) {
      std::vector<std::vector<double>> codes(card, std::vector<double>(width));
      for (auto& code : codes) {
        for (double& v : code) v = rng.uniform(-1.0, 1.0);
      }
      slots.push_back(std::move(codes));
    }
  }

  std::vector<double> encode(const Scene& s, Rng& rng, double noise) const {
    const std::array<std::size_t, 6> values = {s.size, s.color, s.noun, s.verb, s.place, s.tail};
    const std::size_t width = slots.front().front().size();
    std::vector<double> f(width, 0.0);
    for (std::size_t k = 0; k < values.size(); ++k) {
      const auto& code = slots[k][values[k]];
      for (std::size_t i = 0; i < width; ++i) f[i] += code[i];
    }
    for (double& v : f) v = v / static_cast<double>(values.size()) + rng.uniform(-noise, noise);
    return f;
  }
};

}  // namespace

std::vector<CaptionSample> synth_dataset(const DatasetSpec& spec) {
  if (spec.n_samples < 2) throw ConfigError("synth_dataset: n_samples must be at least 2");
  if (spec.feature_width == 0) throw ConfigError("synth_dataset: feature_width must be positive");
  if (spec.refs_per_sample == 0) throw ConfigError("synth_dataset: refs_per_sample must be positive");
  if (spec.min_len == 0 || spec.min_len > spec.max_len) {
    throw ConfigError("synth_dataset: caption length range [" + std::to_string(spec.min_len) + ", " +
                      std::to_string(spec.max_len) + "] is empty");
  }

  Rng rng(spec.seed);
  const FeatureCodes codes(rng, spec.feature_width);
  std::set<metrics::TokenSeq> used;
  std::vector<CaptionSample> out;
  out.reserve(spec.n_samples);

  const std::size_t max_attempts = 1000 * spec.n_samples;
  for (std::size_t attempt = 0; out.size() < spec.n_samples; ++attempt) {
    if (attempt >= max_attempts) {
      throw ConfigError("synth_dataset: could not draw " + std::to_string(spec.n_samples) +
                        " distinct captions within the length range");
    }
    Scene s{};
    s.size = rng.below(kSizes.size());
    s.color = rng.below(kColors.size());
    s.noun = rng.below(kNouns.size());
    s.verb = rng.below(kVerbs.size());
    s.place = rng.below(kPlaceOptions);
    s.tail = rng.below(kTails.size());

    std::vector<metrics::TokenSeq> refs;
    for (std::size_t r = 0; r < spec.refs_per_sample; ++r) refs.push_back(render(s, r));
    const bool in_range = std::all_of(refs.begin(), refs.end(), [&](const auto& t) {
      return t.size() >= spec.min_len && t.size() <= spec.max_len;
    });
    if (!in_range || used.contains(refs.front())) continue;
    used.insert(refs.front());

    CaptionSample sample;
    std::ostringstream id;
    id << "synth-" << out.size();
    sample.id = id.str();
    sample.feature = codes.encode(s, rng, spec.feature_noise);
    sample.references = std::move(refs);
    out.push_back(std::move(sample));
  }
  return out;
}

void validate_dataset(std::span<const CaptionSample> samples) {
  if (samples.empty()) return;
  const std::size_t width = samples.front().feature.size();
  std::set<std::string> ids;
  for (const auto& s : samples) {
    if (s.id.empty()) throw DataError("sample with empty id");
    if (!ids.insert(s.id).second) throw DataError("duplicate sample id '" + s.id + "'");
    if (s.feature.size() != width || width == 0) {
      throw DataError("sample '" + s.id + "' has feature width " + std::to_string(s.feature.size()) + ", expected " +
                      std::to_string(width));
    }
    if (s.references.empty()) throw DataError("sample '" + s.id + "' has no reference caption");
    for (const auto& r : s.references) {
      if (r.empty()) throw DataError("sample '" + s.id + "' has an empty reference caption");
    }
  }
}

Vocab build_vocab(std::span<const CaptionSample> samples, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : samples) {
    for (const auto& r : s.references) {
      for (const auto& tok : r) ++counts[tok];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, n] : counts) {
    if (n >= min_count) kept.emplace_back(tok, n);
  }
  // counts is already lexicographic, so a stable sort on count suffices.
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> tokens(Vocab::reserved_tokens().begin(), Vocab::reserved_tokens().end());
  for (auto& [tok, n] : kept) {
    if (std::find(tokens.begin(), tokens.end(), tok) == tokens.end()) tokens.push_back(std::move(tok));
  }
  return Vocab(std::move(tokens));
}

namespace {

std::string join(const metrics::TokenSeq& toks) {
  std::string out;
  for (const auto& t : toks) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

}  // namespace

void write_jsonl(std::ostream& os, std::span<const CaptionSample> samples) {
  for (const auto& s : samples) {
    nlohmann::ordered_json j;
    j["id"] = s.id;
    j["feature"] = s.feature;
    auto caps = nlohmann::ordered_json::array();
    for (const auto& r : s.references) caps.push_back(join(r));
    j["captions"] = std::move(caps);
    os << j.dump() << '\n';
  }
}

std::vector<CaptionSample> read_jsonl(std::istream& is) {
  std::vector<CaptionSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "dataset line " + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + ": " + e.what());
    }
    try {
      CaptionSample s;
      s.id = j.at("id").get<std::string>();
      s.feature = j.at("feature").get<std::vector<double>>();
      for (const auto& cap : j.at("captions")) s.references.push_back(metrics::tokenize(cap.get<std::string>()));
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  validate_dataset(out);
  return out;
}

void save_jsonl(const std::filesystem::path& path, std::span<const CaptionSample> samples) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  write_jsonl(os, samples);
}

std::vector<CaptionSample> load_jsonl(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open dataset " + path.string());
  return read_jsonl(is);
}

}  // namespace bnrhn
