#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "wdl/errors.hpp"
#include "wdl/model_io.hpp"
#include "wdl/scgmm.hpp"
#include "wdl/sim.hpp"

using namespace wdl;

namespace {

ScgmmModel small_model(WeightUpdate update = WeightUpdate::kEmApprox) {
  SimConfig sim;
  sim.samples = 40;
  sim.points = 50;
  sim.seed = 31;
  ScgmmConfig cfg;
  cfg.max_boost_iters = 5;
  cfg.learning_rate = 0.3;
  cfg.pi_update = update;
  cfg.grid = LevelGrid::uniform(19);
  return train(simulate_mixture(sim), cfg);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string replace_once(std::string text, const std::string& from, const std::string& to) {
  const auto pos = text.find(from);
  EXPECT_NE(pos, std::string::npos) << from;
  if (pos != std::string::npos) text.replace(pos, from.size(), to);
  return text;
}

}  // namespace

TEST(ModelIo, RoundTripPredictsBitIdentically) {
  for (auto update : {WeightUpdate::kEmApprox, WeightUpdate::kProjectedGradient}) {
    const auto model = small_model(update);
    const auto text = serialize(model);
    const auto back = deserialize(text);
    EXPECT_EQ(serialize(back), text);
    EXPECT_EQ(back.config().pi_update, update);
    EXPECT_EQ(back.trace().best_iteration, model.trace().best_iteration);
    EXPECT_EQ(back.trace().records.size(), model.trace().records.size());
    const LevelGrid grid = default_grid();
    for (double a : {-1.0, -0.3, 0.2, 0.9}) {
      const double x[] = {a, -a, 0.5 * a};
      const auto q1 = predict_quantiles(model, x, grid);
      const auto q2 = predict_quantiles(back, x, grid);
      for (std::size_t j = 0; j < grid.size(); ++j) ASSERT_EQ(q1[j], q2[j]);
    }
  }
}

TEST(ModelIo, SaveAndLoadFile) {
  const auto model = small_model();
  const auto path = (std::filesystem::temp_directory_path() / "wdl_model_io_test.json").string();
  save_model(model, path);
  EXPECT_EQ(serialize(load_model(path)), serialize(model));
  std::filesystem::remove(path);
  EXPECT_THROW(load_model(path), InvalidInputError);
}

TEST(ModelIo, RejectsCorruptDocuments) {
  const auto text = serialize(small_model());
  EXPECT_THROW(deserialize(""), DecodeError);
  EXPECT_THROW(deserialize(text.substr(0, text.size() / 2)), DecodeError);
  EXPECT_THROW(deserialize("[1, 2, 3]"), DecodeError);
  EXPECT_THROW(deserialize(replace_once(text, "\"wdl-scgmm\"", "\"other\"")), DecodeError);
  EXPECT_THROW(deserialize(replace_once(text, "\"pi_update\": \"em\"", "\"pi_update\": \"newton\"")), DecodeError);
  EXPECT_THROW(deserialize(replace_once(text, "\"param\": \"mu\"", "\"param\": \"nu\"")), DecodeError);
  EXPECT_THROW(deserialize(replace_once(text, "\"components\": 2", "\"components\": 3")), DecodeError);
  EXPECT_THROW(deserialize(replace_once(text, "\"learning_rate\": 0.3", "\"learning_rate\": -0.3")), DecodeError);
  EXPECT_THROW(deserialize(replace_once(text, "\"input_dim\": 3", "\"input_dim\": 0")), DecodeError);
  EXPECT_THROW(deserialize(replace_once(text, "\"feature\": ", "\"feature\": 9")), DecodeError);
}

TEST(ModelIo, RejectsSchemaMismatch) {
  const auto text = serialize(small_model());
  try {
    deserialize(replace_once(text, "\"schema_version\": 1", "\"schema_version\": 2"));
    FAIL() << "expected DecodeError";
  } catch (const DecodeError& e) {
    EXPECT_NE(std::string(e.what()).find("schema_version"), std::string::npos);
  }
}

TEST(ModelIo, RejectsRunawayNesting) {
  std::string tree;
  for (int i = 0; i < 100; ++i) tree += "{\"feature\": 0, \"threshold\": 0, \"left\": {\"leaf\": 0}, \"right\": ";
  tree += "{\"leaf\": 0}";
  for (int i = 0; i < 100; ++i) tree += "}";
  auto text = serialize(small_model());
  const auto pos = text.find("\"trees\": [");
  ASSERT_NE(pos, std::string::npos);
  text.insert(pos + 10, tree + ",");
  EXPECT_THROW(deserialize(text), DecodeError);
}

TEST(ModelIo, GoldenModelStillDecodesAndPredicts) {
  const std::string dir = WDL_TEST_DATA_DIR;
  const auto golden_text = read_file(dir + "/golden_model.json");
  ASSERT_FALSE(golden_text.empty());
  const auto model = deserialize(golden_text);
  EXPECT_EQ(serialize(model), golden_text);

  std::ifstream in(dir + "/golden_predictions.csv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
    ASSERT_EQ(values.size(), 3 + model.config().grid.size());
    const double x[] = {values[0], values[1], values[2]};
    const auto q = predict_quantiles(model, x, model.config().grid);
    for (std::size_t j = 0; j < q.size(); ++j) EXPECT_NEAR(q[j], values[3 + j], 1e-12 * (1 + std::abs(q[j])));
    ++rows;
  }
  EXPECT_EQ(rows, 8u);
}
