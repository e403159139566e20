#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "bnrhn/checkpoint.hpp"
#include "bnrhn/dataset.hpp"
#include "bnrhn/errors.hpp"
#include "bnrhn/model.hpp"
#include "support.hpp"

using namespace bnrhn;
using bnrhn::test::Gen;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("bnrhn-dataio-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

CaptionSample sample(std::string id, std::vector<double> f, std::vector<std::string> caps) {
  CaptionSample s{std::move(id), std::move(f), {}};
  for (const auto& c : caps) s.references.push_back(metrics::tokenize(c));
  return s;
}

std::string read_all(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

ModelParams trained_like(CellKind kind, const std::vector<CaptionSample>& data, const Vocab& vocab,
                         std::size_t slots = 1) {
  ModelSpec spec;
  spec.kind = kind;
  spec.vocab_size = vocab.size();
  spec.embed = 6;
  spec.hidden = 7;
  spec.feature_width = data.front().feature.size();
  spec.depth = 2;
  spec.bn_stat_slots = slots;
  InitOptions init;
  init.seed = 3;
  init.init_scale = 0.5;
  ModelParams p = init_model(spec, init);
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  commit_bn_statistics(p, forward_unroll(make_batch(data, idx, vocab, 16), p, Mode::train));
  return p;
}

}  // namespace

TEST_CASE("synthetic dataset") {
  DatasetSpec spec;
  spec.n_samples = 50;
  spec.feature_width = 12;
  const auto a = synth_dataset(spec);
  const auto b = synth_dataset(spec);
  REQUIRE(a.size() == 50);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].feature == b[i].feature);
    CHECK(a[i].references == b[i].references);
  }
  spec.seed = 8;
  CHECK(synth_dataset(spec)[0].feature != a[0].feature);

  spec.n_samples = 2;
  const auto two = synth_dataset(spec);
  REQUIRE(two.size() == 2);
  CHECK(two[0].references.front() != two[1].references.front());

  spec.n_samples = 2;
  CHECK_THROWS_AS((void)[] {
    DatasetSpec s;
    s.n_samples = 1;
    return synth_dataset(s);
  }(), ConfigError);
  spec.min_len = 9;
  spec.max_len = 3;
  CHECK_THROWS_AS((void)synth_dataset(spec), ConfigError);
  // Too few distinct captions of a single length.
  spec.n_samples = 5000;
  spec.min_len = 4;
  spec.max_len = 4;
  CHECK_THROWS_AS((void)synth_dataset(spec), ConfigError);
}

TEST_CASE("synthetic dataset properties") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Gen g(seed);
    DatasetSpec spec;
    spec.seed = seed;
    spec.n_samples = g.range(2, 80);
    spec.feature_width = g.range(1, 40);
    spec.min_len = g.range(4, 6);
    spec.max_len = spec.min_len + g.range(3, 5);
    spec.refs_per_sample = g.range(1, 3);
    const auto data = synth_dataset(spec);
    CHECK(data.size() == spec.n_samples);
    CHECK_NOTHROW(validate_dataset(data));
    std::set<metrics::TokenSeq> firsts;
    for (const auto& s : data) {
      CHECK(s.feature.size() == spec.feature_width);
      CHECK(s.references.size() == spec.refs_per_sample);
      for (const auto& r : s.references) {
        CHECK(r.size() >= spec.min_len);
        CHECK(r.size() <= spec.max_len);
      }
      firsts.insert(s.references.front());
    }
    CHECK(firsts.size() == data.size());
  }
}

TEST_CASE("dataset validation") {
  std::vector<CaptionSample> d{sample("a", {1, 2}, {"x"}), sample("b", {1}, {"y"})};
  CHECK_THROWS_AS(validate_dataset(d), DataError);
  d[1] = sample("a", {1, 2}, {"y"});
  CHECK_THROWS_AS(validate_dataset(d), DataError);
  d[1] = sample("b", {1, 2}, {});
  CHECK_THROWS_AS(validate_dataset(d), DataError);
  d[1] = sample("b", {1, 2}, {"..."});
  CHECK_THROWS_AS(validate_dataset(d), DataError);
  d[1] = sample("", {1, 2}, {"y"});
  CHECK_THROWS_AS(validate_dataset(d), DataError);
  d[1] = sample("b", {1, 2}, {"y"});
  CHECK_NOTHROW(validate_dataset(d));
}

TEST_CASE("vocabulary") {
  const std::vector<CaptionSample> aab{sample("s", {0}, {"b a a"})};
  const Vocab v1 = build_vocab(aab, 1);
  REQUIRE(v1.size() == 6);
  CHECK(v1.token(0) == "<pad>");
  CHECK(v1.token(1) == "<start>");
  CHECK(v1.token(2) == "<end>");
  CHECK(v1.token(3) == "<unk>");
  CHECK(v1.id("a") == 4);
  CHECK(v1.id("b") == 5);

  const Vocab v2 = build_vocab(aab, 2);
  CHECK(v2.size() == 5);
  CHECK(v2.id("b") == Vocab::kUnk);
  CHECK(!v2.contains("b"));

  const Vocab v3 = build_vocab(aab, 3);
  CHECK(v3.size() == Vocab::kReserved);

  // Equal counts fall back to lexicographic order.
  const std::vector<CaptionSample> tie{sample("s", {0}, {"zeta alpha mu"})};
  const Vocab vt = build_vocab(tie, 1);
  CHECK(vt.token(4) == "alpha");
  CHECK(vt.token(5) == "mu");
  CHECK(vt.token(6) == "zeta");

  CHECK_THROWS_AS((void)Vocab(std::vector<std::string>{"<pad>", "<start>"}), DataError);
  CHECK_THROWS_AS((void)Vocab(std::vector<std::string>{"<pad>", "<start>", "<end>", "<unk>", "a", "a"}), DataError);
  CHECK_THROWS_AS((void)v1.token(99), DataError);

  DatasetSpec spec;
  spec.n_samples = 30;
  const auto data = synth_dataset(spec);
  const Vocab va = build_vocab(data, 1);
  const Vocab vb = build_vocab(data, 1);
  CHECK(std::vector<std::string>(va.tokens().begin(), va.tokens().end()) ==
        std::vector<std::string>(vb.tokens().begin(), vb.tokens().end()));
  for (TokenId id = 0; id < va.size(); ++id) CHECK(va.id(va.token(id)) == id);
}

TEST_CASE("json lines round-trip") {
  const std::vector<CaptionSample> d{sample("img 1", {0.1, -2.5e-300, 3.0}, {"a red fox", "the fox"}),
                                     sample("img-2", {1.0 / 3.0, 0.0, -0.0}, {"two \"dogs\" run"})};
  std::ostringstream os;
  write_jsonl(os, d);
  CHECK(os.str().starts_with(R"({"id":"img 1","feature":[0.1,-2.5e-300,3.0],"captions":["a red fox","the fox"]})" "\n"));
  std::istringstream is(os.str());
  const auto back = read_jsonl(is);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back[i].id == d[i].id);
    CHECK(back[i].feature == d[i].feature);
    CHECK(back[i].references == d[i].references);
  }

  TempDir dir;
  save_jsonl(dir.path / "d.jsonl", d);
  CHECK(load_jsonl(dir.path / "d.jsonl").size() == 2);
  CHECK_THROWS_AS((void)load_jsonl(dir.path / "missing.jsonl"), DataError);

  std::istringstream broken("{\"id\":\"a\",\"feature\":[1],\"captions\":[\"x\"]}\n{\"id\":\"b\"\n");
  try {
    (void)read_jsonl(broken);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::istringstream no_caps("{\"id\":\"a\",\"feature\":[1]}\n");
  CHECK_THROWS_AS((void)read_jsonl(no_caps), DataError);
}

TEST_CASE("checkpoint round-trip") {
  DatasetSpec spec;
  spec.n_samples = 12;
  spec.feature_width = 5;
  const auto data = synth_dataset(spec);
  const Vocab vocab = build_vocab(data, 1);
  TempDir dir;
  for (const auto kind : {CellKind::lstm, CellKind::rhn, CellKind::bn_rhn}) {
    for (const std::size_t slots : {std::size_t{1}, std::size_t{4}}) {
      const ModelParams p = trained_like(kind, data, vocab, slots);
      Checkpoint ck{p, vocab, {{"lr0", "2"}, {"kind", std::string(to_string(kind))}}};
      const fs::path file = dir.path / "ck.json";
      save_checkpoint(file, ck);
      const Checkpoint back = load_checkpoint(file);

      CHECK(back.config == ck.config);
      CHECK(back.vocab.size() == vocab.size());
      CHECK(tensor_names(back.params) == tensor_names(p));
      CHECK(flatten(back.params) == flatten(p));
      if (const auto* rhn = std::get_if<RhnParams>(&p.cell)) {
        const auto& r2 = std::get<RhnParams>(back.params.cell);
        CHECK(r2.variant == rhn->variant);
        for (std::size_t i = 0; i < rhn->state_bn.size(); ++i) {
          CHECK(r2.state_bn[i].running_mean == rhn->state_bn[i].running_mean);
          CHECK(r2.state_bn[i].running_var == rhn->state_bn[i].running_var);
          CHECK(r2.state_bn[i].slot_updates == rhn->state_bn[i].slot_updates);
        }
        CHECK(r2.input_bn.has_value() == rhn->input_bn.has_value());
      }
      for (const auto& s : data) {
        CHECK(greedy_decode_ids(s.feature, back.params, 12) == greedy_decode_ids(s.feature, p, 12));
      }
      // Saving twice gives the same bytes.
      save_checkpoint(dir.path / "again.json", back);
      CHECK(read_all(dir.path / "again.json") == read_all(file));
    }
  }
}

TEST_CASE("checkpoint errors") {
  DatasetSpec spec;
  spec.n_samples = 6;
  spec.feature_width = 3;
  const auto data = synth_dataset(spec);
  const Vocab vocab = build_vocab(data, 1);
  const std::string text = checkpoint_to_json({trained_like(CellKind::bn_rhn, data, vocab), vocab, {}});
  CHECK_NOTHROW((void)checkpoint_from_json(text));

  CHECK_THROWS_AS((void)checkpoint_from_json(text.substr(0, text.size() / 2)), MalformedDocumentError);
  CHECK_THROWS_AS((void)checkpoint_from_json("[]"), MalformedDocumentError);
  CHECK_THROWS_AS((void)checkpoint_from_json("{\"format_version\": 1}"), MalformedDocumentError);

  std::string bumped = text;
  const auto at = bumped.find("\"format_version\": 1");
  REQUIRE(at != std::string::npos);
  bumped.replace(at, 19, "\"format_version\": 7");
  try {
    (void)checkpoint_from_json(bumped);
    FAIL("expected VersionMismatchError");
  } catch (const VersionMismatchError& e) {
    CHECK(e.found == 7);
    CHECK(e.expected == kCheckpointFormatVersion);
    const std::string msg = e.what();
    CHECK(msg.find('7') != std::string::npos);
    CHECK(msg.find(std::to_string(kCheckpointFormatVersion)) != std::string::npos);
  }

  // A tensor whose shape disagrees with the model section.
  std::string wide = text;
  const auto hid = wide.find("\"hidden\": 7");
  REQUIRE(hid != std::string::npos);
  wide.replace(hid, 11, "\"hidden\": 8");
  CHECK_THROWS_AS((void)checkpoint_from_json(wide), ShapeInconsistencyError);

  TempDir dir;
  std::ofstream(dir.path / "cut.json") << text.substr(0, 100);
  CHECK_THROWS_AS((void)load_checkpoint(dir.path / "cut.json"), MalformedDocumentError);
  CHECK_THROWS_AS((void)load_checkpoint(dir.path / "nope.json"), CheckpointError);

  // Errors are distinct types sharing one base.
  CHECK(!std::is_base_of_v<VersionMismatchError, MalformedDocumentError>);
  CHECK(!std::is_base_of_v<ShapeInconsistencyError, MalformedDocumentError>);
  CHECK(std::is_base_of_v<DataError, CheckpointError>);
}
