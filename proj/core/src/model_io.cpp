#include "wdl/model_io.hpp"

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <utility>

#include "json.hpp"
#include "wdl/errors.hpp"

namespace wdl {
namespace {

using nlohmann::json;

constexpr std::size_t kMaxTreeDepth = 64;
constexpr const char* kFormat = "wdl-scgmm";

const char* update_name(WeightUpdate u) { return u == WeightUpdate::kEmApprox ? "em" : "gradient"; }

WeightUpdate parse_update(const std::string& s) {
  if (s == "em") return WeightUpdate::kEmApprox;
  if (s == "gradient") return WeightUpdate::kProjectedGradient;
  throw DecodeError("unknown pi_update '" + s + "'");
}

json encode_node(std::span<const RegressionTree::Node> nodes, std::size_t i) {
  const auto& n = nodes[i];
  if (n.feature == RegressionTree::kLeaf) return json{{"leaf", n.value}};
  return json{{"feature", n.feature},
              {"threshold", n.threshold},
              {"left", encode_node(nodes, static_cast<std::size_t>(n.left))},
              {"right", encode_node(nodes, static_cast<std::size_t>(n.right))}};
}

// Rebuilds flat pre-order storage; the internal node values are not stored.
void decode_node(const json& j, std::vector<RegressionTree::Node>& nodes, std::size_t depth) {
  if (depth > kMaxTreeDepth) throw DecodeError("tree nesting too deep");
  if (!j.is_object()) throw DecodeError("tree node must be an object");
  const auto index = nodes.size();
  nodes.emplace_back();
  if (j.contains("leaf")) {
    nodes[index].value = j.at("leaf").get<double>();
    return;
  }
  nodes[index].feature = j.at("feature").get<std::int32_t>();
  nodes[index].threshold = j.at("threshold").get<double>();
  nodes[index].left = static_cast<std::int32_t>(nodes.size());
  decode_node(j.at("left"), nodes, depth + 1);
  nodes[index].right = static_cast<std::int32_t>(nodes.size());
  decode_node(j.at("right"), nodes, depth + 1);
}

json encode_config(const ScgmmConfig& c) {
  return json{{"components", c.components},
              {"learning_rate", c.learning_rate},
              {"max_boost_iters", c.max_boost_iters},
              {"early_stop_patience", c.early_stop_patience},
              {"validation_fraction", c.validation_fraction},
              {"tree",
               {{"max_depth", c.tree.max_depth},
                {"min_samples_leaf", c.tree.min_samples_leaf},
                {"min_split_improvement", c.tree.min_split_improvement}}},
              {"seed", c.seed},
              {"pi_update", update_name(c.pi_update)},
              {"gradient_step", c.gradient_step},
              {"gradient_iters", c.gradient_iters},
              {"zero_init", c.zero_init}};
}

ScgmmConfig decode_config(const json& j, std::vector<double> levels) {
  ScgmmConfig c;
  c.components = j.at("components").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.max_boost_iters = j.at("max_boost_iters").get<std::size_t>();
  c.early_stop_patience = j.at("early_stop_patience").get<std::size_t>();
  c.validation_fraction = j.at("validation_fraction").get<double>();
  const json& t = j.at("tree");
  c.tree.max_depth = t.at("max_depth").get<std::size_t>();
  c.tree.min_samples_leaf = t.at("min_samples_leaf").get<std::size_t>();
  c.tree.min_split_improvement = t.at("min_split_improvement").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.pi_update = parse_update(j.at("pi_update").get<std::string>());
  c.gradient_step = j.at("gradient_step").get<double>();
  c.gradient_iters = j.at("gradient_iters").get<std::size_t>();
  c.zero_init = j.at("zero_init").get<bool>();
  c.grid = LevelGrid(std::move(levels));
  c.validate();
  return c;
}

const char* kParamNames[] = {"alpha", "mu", "z"};

}  // namespace

std::string serialize(const ScgmmModel& model) {
  json ensembles = json::array();
  for (std::size_t p = 0; p < 3; ++p) {
    for (std::size_t k = 0; k < model.components(); ++k) {
      const TreeEnsemble& e = p == 0 ? model.alpha(k) : p == 1 ? model.mu(k) : model.z(k);
      json trees = json::array();
      for (const auto& tree : e.trees()) trees.push_back(encode_node(tree.nodes(), 0));
      ensembles.push_back({{"param", kParamNames[p]},
                           {"component", k},
                           {"base", e.base_value()},
                           {"learning_rate", e.learning_rate()},
                           {"trees", std::move(trees)}});
    }
  }
  json records = json::array();
  for (const auto& r : model.trace().records) records.push_back({r.iteration, r.train_loss, r.validation_loss});
  const auto levels = model.config().grid.levels();
  const json doc{{"schema_version", kModelSchemaVersion},
                 {"format", kFormat},
                 {"config", encode_config(model.config())},
                 {"input_dim", model.input_dim()},
                 {"grid", std::vector<double>(levels.begin(), levels.end())},
                 {"ensembles", std::move(ensembles)},
                 {"trace", {{"best_iteration", model.trace().best_iteration}, {"records", std::move(records)}}}};
  return doc.dump(1) + "\n";
}

ScgmmModel deserialize(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DecodeError(std::string("model is not valid JSON: ") + e.what());
  }
  try {
    if (!doc.is_object()) throw DecodeError("model document must be an object");
    if (doc.value("format", std::string()) != kFormat) throw DecodeError("not a wdl model document");
    const int version = doc.at("schema_version").get<int>();
    if (version != kModelSchemaVersion) {
      throw DecodeError("unsupported schema_version " + std::to_string(version) + ", expected " +
                        std::to_string(kModelSchemaVersion));
    }
    ScgmmConfig cfg = decode_config(doc.at("config"), doc.at("grid").get<std::vector<double>>());
    const auto dim = doc.at("input_dim").get<std::size_t>();
    const std::size_t k_count = cfg.components;

    std::vector<std::vector<std::optional<TreeEnsemble>>> slots(3, std::vector<std::optional<TreeEnsemble>>(k_count));
    for (const json& e : doc.at("ensembles")) {
      const auto name = e.at("param").get<std::string>();
      std::size_t p = 0;
      while (p < 3 && name != kParamNames[p]) ++p;
      if (p == 3) throw DecodeError("unknown ensemble parameter '" + name + "'");
      const auto k = e.at("component").get<std::size_t>();
      if (k >= k_count) throw DecodeError("ensemble component index out of range");
      if (slots[p][k]) throw DecodeError("duplicate ensemble for " + name + "[" + std::to_string(k) + "]");
      TreeEnsemble ensemble(e.at("base").get<double>(), e.at("learning_rate").get<double>(), dim);
      for (const json& t : e.at("trees")) {
        std::vector<RegressionTree::Node> nodes;
        decode_node(t, nodes, 0);
        ensemble.append(RegressionTree(std::move(nodes), dim));
      }
      slots[p][k] = std::move(ensemble);
    }
    std::vector<TreeEnsemble> parts[3];
    for (std::size_t p = 0; p < 3; ++p) {
      for (std::size_t k = 0; k < k_count; ++k) {
        if (!slots[p][k]) throw DecodeError(std::string("missing ensemble ") + kParamNames[p]);
        parts[p].push_back(std::move(*slots[p][k]));
      }
    }

    TrainingTrace trace;
    const json& tr = doc.at("trace");
    trace.best_iteration = tr.at("best_iteration").get<std::size_t>();
    for (const json& r : tr.at("records")) {
      if (!r.is_array() || r.size() != 3) throw DecodeError("trace record must be [iteration, train, validation]");
      trace.records.push_back({r[0].get<std::size_t>(), r[1].get<double>(), r[2].get<double>()});
    }
    return ScgmmModel(std::move(cfg), dim, std::move(parts[0]), std::move(parts[1]), std::move(parts[2]),
                      std::move(trace));
  } catch (const json::exception& e) {
    throw DecodeError(std::string("malformed model: ") + e.what());
  } catch (const InvalidInputError& e) {
    throw DecodeError(std::string("invalid model: ") + e.what());
  }
}

ScgmmModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot open model file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

void save_model(const ScgmmModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInputError("cannot write model file " + path);
  out << serialize(model);
  if (!out) throw InvalidInputError("failed writing model file " + path);
}

}  // namespace wdl
