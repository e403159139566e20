#include "bnrhn/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace bnrhn {

using json = nlohmann::ordered_json;

VersionMismatchError::VersionMismatchError(int found_, int expected_)
    : CheckpointError("checkpoint format_version " + std::to_string(found_) + " is not supported (expected " +
                      std::to_string(expected_) + ")"),
      found(found_),
      expected(expected_) {}

namespace {

json matrix_json(const std::string& name, const Matrix& m) {
  json j;
  j["name"] = name;
  j["shape"] = {m.rows(), m.cols()};
  j["data"] = std::vector<double>(m.data().begin(), m.data().end());
  return j;
}

Matrix matrix_from_json(const json& j, const std::string& name, std::size_t rows, std::size_t cols) {
  const auto shape = j.at("shape").get<std::vector<std::size_t>>();
  auto data = j.at("data").get<std::vector<double>>();
  if (shape.size() != 2 || shape[0] != rows || shape[1] != cols) {
    throw ShapeInconsistencyError("checkpoint tensor '" + name + "' has shape [" +
                                  (shape.size() == 2 ? std::to_string(shape[0]) + "," + std::to_string(shape[1]) : "?") +
                                  "], model expects [" + std::to_string(rows) + "," + std::to_string(cols) + "]");
  }
  if (data.size() != rows * cols) {
    throw ShapeInconsistencyError("checkpoint tensor '" + name + "' holds " + std::to_string(data.size()) +
                                  " values for shape [" + std::to_string(rows) + "," + std::to_string(cols) + "]");
  }
  return Matrix(rows, cols, std::move(data));
}

json spec_json(const ModelSpec& s) {
  json j;
  j["kind"] = std::string(to_string(s.kind));
  j["vocab_size"] = s.vocab_size;
  j["embed"] = s.embed;
  j["hidden"] = s.hidden;
  j["feature_width"] = s.feature_width;
  j["depth"] = s.depth;
  j["bn_every_depth"] = s.bn_every_depth;
  j["bn_gamma"] = s.bn_gamma;
  j["bn_stat_slots"] = s.bn_stat_slots;
  return j;
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec s;
  s.kind = parse_cell_kind(j.at("kind").get<std::string>());
  s.vocab_size = j.at("vocab_size").get<std::size_t>();
  s.embed = j.at("embed").get<std::size_t>();
  s.hidden = j.at("hidden").get<std::size_t>();
  s.feature_width = j.at("feature_width").get<std::size_t>();
  s.depth = j.at("depth").get<std::size_t>();
  s.bn_every_depth = j.at("bn_every_depth").get<bool>();
  s.bn_gamma = j.at("bn_gamma").get<double>();
  s.bn_stat_slots = j.at("bn_stat_slots").get<std::size_t>();
  return s;
}

template <class F>
void for_each_bn_site(RhnParams& p, F&& f) {
  for (std::size_t i = 0; i < p.state_bn.size(); ++i) f("cell.bn_state" + std::to_string(i), p.state_bn[i]);
  if (p.input_bn) f(std::string("cell.bn_input"), *p.input_bn);
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  json doc;
  doc["format_version"] = kCheckpointFormatVersion;
  json cfg = json::object();
  for (const auto& [k, v] : ckpt.config) cfg[k] = v;
  doc["config"] = std::move(cfg);
  doc["model"] = spec_json(ckpt.params.spec);
  doc["vocab"] = std::vector<std::string>(ckpt.vocab.tokens().begin(), ckpt.vocab.tokens().end());

  json params = json::array();
  for_each_tensor(ckpt.params, [&](const std::string& name, const Matrix& m) { params.push_back(matrix_json(name, m)); });
  doc["params"] = std::move(params);

  json stats = json::array();
  if (const auto* rhn = std::get_if<RhnParams>(&ckpt.params.cell)) {
    auto copy = *rhn;
    for_each_bn_site(copy, [&](const std::string& name, const BnLayer& l) {
      json s;
      s["name"] = name;
      s["updates"] = l.updates;
      s["eps"] = l.eps;
      s["momentum"] = l.momentum;
      s["slot_updates"] = l.slot_updates;
      s["shape"] = {l.running_mean.rows(), l.running_mean.cols()};
      s["running_mean"] = std::vector<double>(l.running_mean.data().begin(), l.running_mean.data().end());
      s["running_var"] = std::vector<double>(l.running_var.data().begin(), l.running_var.data().end());
      stats.push_back(std::move(s));
    });
  }
  doc["bn_stats"] = std::move(stats);
  return doc.dump(1);
}

Checkpoint checkpoint_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw MalformedDocumentError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (!doc.is_object() || !doc.contains("format_version")) {
      throw MalformedDocumentError("checkpoint has no format_version");
    }
    const int version = doc.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) throw VersionMismatchError(version, kCheckpointFormatVersion);

    const ModelSpec spec = spec_from_json(doc.at("model"));
    Vocab vocab(doc.at("vocab").get<std::vector<std::string>>());
    if (vocab.size() != spec.vocab_size) {
      throw ShapeInconsistencyError("checkpoint vocabulary has " + std::to_string(vocab.size()) +
                                    " tokens but the model expects " + std::to_string(spec.vocab_size));
    }
    InitOptions zero;
    zero.init_scale = 0.0;
    ModelParams params = init_model(spec, zero);

    const auto& arr = doc.at("params");
    std::map<std::string, const json*> by_name;
    for (const auto& p : arr) by_name[p.at("name").get<std::string>()] = &p;
    std::size_t seen = 0;
    for_each_tensor(params, [&](const std::string& name, Matrix& m) {
      const auto it = by_name.find(name);
      if (it == by_name.end()) throw ShapeInconsistencyError("checkpoint is missing tensor '" + name + "'");
      m = matrix_from_json(*it->second, name, m.rows(), m.cols());
      ++seen;
    });
    if (seen != by_name.size()) {
      throw ShapeInconsistencyError("checkpoint holds " + std::to_string(by_name.size()) + " tensors, model has " +
                                    std::to_string(seen));
    }

    std::map<std::string, const json*> stats;
    for (const auto& s : doc.at("bn_stats")) stats[s.at("name").get<std::string>()] = &s;
    if (auto* rhn = std::get_if<RhnParams>(&params.cell)) {
      std::size_t used = 0;
      for_each_bn_site(*rhn, [&](const std::string& name, BnLayer& l) {
        const auto it = stats.find(name);
        if (it == stats.end()) throw ShapeInconsistencyError("checkpoint is missing statistics for '" + name + "'");
        const json& s = *it->second;
        const std::size_t rows = l.slots();
        const std::size_t w = l.width();
        const auto shape = s.at("shape").get<std::vector<std::size_t>>();
        auto mean = s.at("running_mean").get<std::vector<double>>();
        auto var = s.at("running_var").get<std::vector<double>>();
        auto slot_updates = s.at("slot_updates").get<std::vector<std::size_t>>();
        if (shape != std::vector<std::size_t>{rows, w} || mean.size() != rows * w || var.size() != rows * w ||
            slot_updates.size() != rows) {
          throw ShapeInconsistencyError("statistics for '" + name + "' do not match " + std::to_string(rows) + "x" +
                                        std::to_string(w));
        }
        l.running_mean = Matrix(rows, w, std::move(mean));
        l.running_var = Matrix(rows, w, std::move(var));
        l.slot_updates = std::move(slot_updates);
        l.updates = s.at("updates").get<std::size_t>();
        l.eps = s.at("eps").get<double>();
        l.momentum = s.at("momentum").get<double>();
        ++used;
      });
      if (used != stats.size()) throw ShapeInconsistencyError("checkpoint has statistics for unknown sites");
    } else if (!stats.empty()) {
      throw ShapeInconsistencyError("checkpoint has batch-norm statistics for a model without batch norm");
    }

    Checkpoint ckpt{std::move(params), std::move(vocab), {}};
    for (const auto& [k, v] : doc.at("config").items()) ckpt.config[k] = v.get<std::string>();
    return ckpt;
  } catch (const json::exception& e) {
    throw MalformedDocumentError(std::string("checkpoint document is malformed: ") + e.what());
  } catch (const ConfigError& e) {
    throw MalformedDocumentError(std::string("checkpoint model section is invalid: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open " + path.string() + " for writing");
  os << checkpoint_to_json(ckpt) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace bnrhn
