#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bnrhn/checkpoint.hpp"
#include "bnrhn/dataset.hpp"
#include "bnrhn/diagnostics.hpp"
#include "bnrhn/errors.hpp"
#include "bnrhn/format.hpp"
#include "bnrhn/metrics.hpp"
#include "bnrhn/model.hpp"
#include "bnrhn/model_check.hpp"
#include "bnrhn/trainer.hpp"
#include "compare.hpp"
#include "config.hpp"

namespace bnrhn::cli {

using json = nlohmann::json;

namespace {

int guarded(std::ostream& err, const char* command, const std::function<int()>& body) {
  try {
    return body();
  } catch (const NumericalAbort& e) {
    err << command << ": numerical abort: " << e.what() << '\n';
    return kNumerical;
  } catch (const NumericalError& e) {
    err << command << ": numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const ConfigError& e) {
    err << command << ": config error: " << e.what() << '\n';
    return kUsage;
  } catch (const ShapeError& e) {
    err << command << ": shape error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << command << ": data error: " << e.what() << '\n';
    return kUsage;
  } catch (const UninitializedStatisticsError& e) {
    err << command << ": " << e.what() << '\n';
    return kUsage;
  } catch (const json::exception& e) {
    err << command << ": malformed JSON input: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << command << ": internal error: " << e.what() << '\n';
    return kCheckFailed;
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
}

std::string join(const metrics::TokenSeq& seq) {
  std::string out;
  for (const auto& tok : seq) {
    if (!out.empty()) out += ' ';
    out += tok;
  }
  return out;
}

std::vector<CaptionSample> load_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset_path().empty()) return synth_dataset(cfg.synth_spec());
  return load_jsonl(cfg.dataset_path());
}

Matrix initial_state(std::span<const double> feature, const ModelParams& p) {
  const Matrix f(1, feature.size(), std::vector<double>(feature.begin(), feature.end()));
  return map(MapOp::tanh, add_row(matmul(f, p.feat_w), p.feat_b));
}

Matrix embed(TokenId id, const ModelParams& p) {
  const auto row = p.embedding.row(id);
  return Matrix(1, row.size(), std::vector<double>(row.begin(), row.end()));
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& tokens) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::string_view tok : tokens) {
    if (tok.starts_with("--")) tok.remove_prefix(2);
    const auto eq = tok.find('=');
    if (eq == std::string_view::npos || eq == 0) {
      throw ConfigError("expected --key=value, got '" + std::string(tok) + "'");
    }
    out.emplace_back(std::string(tok.substr(0, eq)), std::string(tok.substr(eq + 1)));
  }
  return out;
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, "train", [&] {
    ExperimentConfig cfg;
    if (args.config) cfg.merge_file(*args.config);
    for (const auto& [k, v] : args.overrides) cfg.set(k, v);
    cfg.validate();
    const TrainConfig tc = cfg.train_config();

    const auto data = load_dataset(cfg);
    const Vocab vocab = build_vocab(data, cfg.min_count());

    const auto dir = cfg.run_dir();
    std::filesystem::create_directories(dir);
    write_file(dir / "config.snapshot", cfg.snapshot());

    std::ofstream csv(dir / "run.csv", std::ios::binary);
    if (!csv) throw DataError("cannot write " + (dir / "run.csv").string());
    RunReport streamed;
    csv << "step,epoch,lr,loss,pre_clip_norm,clipped\n";
    const auto on_step = [&](const StepRecord& r) {
      csv << r.step << ',' << r.epoch << ',' << format_double(r.lr) << ',' << format_double(r.loss) << ','
          << format_double(r.pre_clip_norm) << ',' << (r.clipped ? 1 : 0) << '\n';
    };
    TrainResult result = [&] {
      try {
        return train(data, vocab, tc, on_step);
      } catch (const NumericalAbort& e) {
        csv.flush();
        err << "train: step " << e.step << " lr " << format_double(e.lr) << " last gradient norm "
            << format_double(e.last_grad_norm) << '\n';
        throw;
      }
    }();
    csv.close();

    Checkpoint ckpt{std::move(result.params), vocab, cfg.values()};
    save_checkpoint(dir / "checkpoint.json", ckpt);
    out << dir.string() << '\n';
    return static_cast<int>(kOk);
  });
}

int cmd_synth(const SynthArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, "synth", [&] {
    ExperimentConfig cfg;
    for (const auto& [k, v] : args.overrides) {
      if (!k.starts_with("synth_")) throw ConfigError("synth accepts only synth_* keys, got '" + k + "'");
      cfg.set(k, v);
    }
    const auto data = synth_dataset(cfg.synth_spec());
    if (args.out.has_parent_path()) std::filesystem::create_directories(args.out.parent_path());
    save_jsonl(args.out, data);
    if (args.references) {
      json refs = json::object();
      for (const auto& s : data) {
        json caps = json::array();
        for (const auto& r : s.references) caps.push_back(join(r));
        refs[s.id] = std::move(caps);
      }
      write_file(*args.references, refs.dump(2) + "\n");
    }
    out << data.size() << " samples written to " << args.out.string() << '\n';
    return static_cast<int>(kOk);
  });
}

int cmd_decode(const DecodeArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, "decode", [&] {
    if (args.max_len == 0) throw ConfigError("max-len: must be positive");
    const Checkpoint ckpt = load_checkpoint(args.checkpoint);
    const auto data = load_jsonl(args.dataset);
    json cands = json::object();
    for (const auto& s : data) {
      if (s.feature.size() != ckpt.params.spec.feature_width) {
        throw ConfigError("sample '" + s.id + "' has feature width " + std::to_string(s.feature.size()) +
                          " but the checkpoint expects " + std::to_string(ckpt.params.spec.feature_width));
      }
      cands[s.id] = join(greedy_decode(s.feature, ckpt.params, ckpt.vocab, args.max_len));
    }
    write_file(args.out, cands.dump(2) + "\n");
    out << data.size() << " captions written to " << args.out.string() << '\n';
    return static_cast<int>(kOk);
  });
}

int cmd_score(const ScoreArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, "score", [&] {
    const json cands = json::parse(read_file(args.candidates));
    const json refs = json::parse(read_file(args.references));
    if (!cands.is_object() || !refs.is_object()) {
      throw DataError("candidates and references must be JSON objects keyed by image id");
    }
    std::vector<std::string> missing;
    for (const auto& [id, _] : cands.items()) {
      if (!refs.contains(id)) missing.push_back(id);
    }
    if (!missing.empty()) {
      std::string list;
      for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
      throw ConfigError("candidate ids without references: " + list);
    }
    std::vector<metrics::TokenSeq> c;
    std::vector<metrics::RefSet> r;
    for (const auto& [id, caption] : cands.items()) {
      c.push_back(metrics::tokenize(caption.get<std::string>()));
      metrics::RefSet set;
      for (const auto& ref : refs.at(id)) set.push_back(metrics::tokenize(ref.get<std::string>()));
      r.push_back(std::move(set));
    }
    const auto report = metrics::score_corpus(c, r);
    json j;
    for (std::size_t n = 0; n < 4; ++n) j["bleu_" + std::to_string(n + 1)] = report.bleu[n];
    j["rouge_l"] = report.rouge_l;
    j["cider"] = report.cider;
    const std::string text = j.dump(2) + "\n";
    out << text;
    if (args.out) write_file(*args.out, text);
    return static_cast<int>(kOk);
  });
}

int cmd_diagnose(const DiagnoseArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, "diagnose", [&] {
    if (args.mode != "jacobian" && args.mode != "gersh" && args.mode != "gradtrace") {
      throw ConfigError("mode: expected jacobian, gersh or gradtrace, got '" + args.mode + "'");
    }
    if (args.method != "analytic" && args.method != "finite_diff") {
      throw ConfigError("method: expected analytic or finite_diff, got '" + args.method + "'");
    }
    const Checkpoint ckpt = load_checkpoint(args.checkpoint);
    const auto* rhn = std::get_if<RhnParams>(&ckpt.params.cell);
    if (rhn == nullptr) throw ConfigError("diagnostics need an rhn or bn_rhn checkpoint, got lstm");
    const ModelParams& p = ckpt.params;

    std::vector<double> feature(p.spec.feature_width, 0.0);
    std::vector<TokenId> tokens{Vocab::kStart};
    if (args.dataset) {
      const auto data = load_jsonl(*args.dataset);
      if (args.sample >= data.size()) {
        throw ConfigError("sample: index " + std::to_string(args.sample) + " outside a dataset of " +
                          std::to_string(data.size()));
      }
      feature = data[args.sample].feature;
      if (feature.size() != p.spec.feature_width) throw ConfigError("dataset feature width does not match checkpoint");
      for (const auto& tok : data[args.sample].references.front()) tokens.push_back(ckpt.vocab.id(tok));
    } else {
      tokens.assign(std::max<std::size_t>(1, args.steps), Vocab::kStart);
    }
    const Matrix s0 = initial_state(feature, p);
    std::filesystem::create_directories(args.out_dir);

    if (args.mode == "gradtrace") {
      std::vector<Matrix> inputs;
      for (const TokenId id : tokens) inputs.push_back(embed(id, p));
      const Matrix u(1, s0.cols(), 1.0 / std::sqrt(static_cast<double>(s0.cols())));
      const GradTrace trace = grad_norm_trace(*rhn, s0, inputs, u);
      std::ofstream os(args.out_dir / "trace.csv", std::ios::binary);
      write_trace_csv(os, trace);
      const auto [lo, hi] = std::minmax_element(trace.step_norms.begin(), trace.step_norms.end());
      out << "steps " << trace.step_norms.size() << " max/min norm ratio "
          << format_double(*lo > 0.0 ? *hi / *lo : INFINITY) << '\n';
      return static_cast<int>(kOk);
    }

    const auto cell = rhn_transition(*rhn, embed(tokens.front(), p), args.t);
    const auto method = args.method == "analytic" ? JacobianMethod::analytic : JacobianMethod::finite_diff;
    const Matrix j = temporal_jacobian(cell, s0, method);
    if (args.mode == "jacobian") {
      const Matrix other = temporal_jacobian(
          cell, s0, method == JacobianMethod::analytic ? JacobianMethod::finite_diff : JacobianMethod::analytic);
      double diff = 0.0;
      for (std::size_t k = 0; k < j.size(); ++k) diff = std::max(diff, std::abs(j.data()[k] - other.data()[k]));
      std::ofstream os(args.out_dir / "jacobian.csv", std::ios::binary);
      os << "row,col,value\n";
      for (std::size_t r = 0; r < j.rows(); ++r) {
        for (std::size_t c = 0; c < j.cols(); ++c) os << r << ',' << c << ',' << format_double(j(r, c)) << '\n';
      }
      out << "jacobian " << j.rows() << "x" << j.cols() << " max |analytic - finite_diff| " << format_double(diff)
          << '\n';
      return static_cast<int>(kOk);
    }

    const auto discs = gershgorin_discs(j);
    std::ofstream os(args.out_dir / "discs.csv", std::ios::binary);
    write_discs_csv(os, discs);
    double max_radius = 0.0;
    double max_offset = 0.0;
    for (const auto& d : discs) {
      max_radius = std::max(max_radius, d.radius);
      max_offset = std::max(max_offset, std::abs(d.center - 1.0));
    }
    out << "discs " << discs.size() << " max radius " << format_double(max_radius) << " max |center - 1| "
        << format_double(max_offset) << '\n';
    return static_cast<int>(kOk);
  });
}

int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, "gradcheck", [&] {
    std::vector<CellKind> kinds;
    if (args.kind == "all") {
      kinds = {CellKind::lstm, CellKind::rhn, CellKind::bn_rhn};
    } else {
      kinds = {parse_cell_kind(args.kind)};
    }
    if (args.depths.empty()) throw ConfigError("depths: at least one depth is required");
    GradCheckOptions opts;
    opts.h = 1e-5;
    opts.tol = 1e-4;
    bool all_pass = true;
    for (const CellKind kind : kinds) {
      // Depth does not apply to the LSTM.
      const std::vector<std::size_t> depths =
          kind == CellKind::lstm ? std::vector<std::size_t>{1} : args.depths;
      for (const std::size_t d : depths) {
        if (d == 0) throw ConfigError("depths: must be positive");
        TinyModelSpec spec;
        spec.kind = kind;
        spec.depth = d;
        spec.seed = args.seed;
        const auto r = check_model_gradients(spec, opts, args.inject_fault ? 1.1 : 1.0);
        all_pass = all_pass && r.report.pass;
        out << to_string(kind) << " D=" << (kind == CellKind::lstm ? std::string("-") : std::to_string(d))
            << " checked=" << r.report.checked << " max_rel_err=" << format_double(r.report.max_rel_err)
            << " worst=" << r.worst_name << "[" << r.report.worst_index
            << "] analytic=" << format_double(r.report.worst_analytic)
            << " numeric=" << format_double(r.report.worst_numeric) << (r.report.pass ? " PASS" : " FAIL") << '\n';
      }
    }
    return static_cast<int>(all_pass ? kOk : kCheckFailed);
  });
}

int cmd_compare(const CompareArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, "compare", [&] {
    if (args.runs.size() < 2) throw ConfigError("compare needs at least two run files");
    std::vector<std::string> labels = args.labels;
    if (labels.empty()) {
      for (const auto& p : args.runs) labels.push_back(p.string());
    }
    if (labels.size() != args.runs.size()) throw ConfigError("labels: one label per run file is required");
    std::vector<std::vector<StepRecord>> runs;
    for (const auto& p : args.runs) {
      std::ifstream is(p, std::ios::binary);
      if (!is) throw DataError("cannot read " + p.string());
      try {
        runs.push_back(read_run_csv(is));
      } catch (const DataError& e) {
        throw DataError(p.string() + ": " + e.what());
      }
    }
    CompareOptions opts;
    opts.threshold = args.threshold;
    opts.relative = args.relative;
    opts.smooth = args.smooth;
    const auto rows = compare_runs(runs, labels, opts);

    std::ostringstream csv;
    csv << "run,threshold,steps_to_threshold,rank\n";
    for (const auto& r : rows) {
      const std::string steps = r.steps ? std::to_string(*r.steps) : "not_reached";
      const std::string rank = r.rank ? std::to_string(*r.rank) : "-";
      csv << r.label << ',' << format_double(r.threshold) << ',' << steps << ',' << rank << '\n';
      out << (r.rank ? "#" + rank : std::string("  -")) << "  " << r.label << "  "
          << (r.steps ? "reached at step " + steps : std::string("not reached")) << '\n';
    }
    write_file(args.out.value_or("comparison.csv"), csv.str());
    return static_cast<int>(kOk);
  });
}

}  // namespace bnrhn::cli
