#include <gtest/gtest.h>

#include "tags/config.hpp"

namespace tags {
namespace {

std::string error_of(const json& j) {
  try {
    run_config_from_json(j);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

TEST(RunConfig, DefaultsSurviveEmptyObject) {
  const RunConfig c = run_config_from_json(json::object());
  EXPECT_EQ(c.train.epochs, 15);
  EXPECT_EQ(c.train.learning_rate, 1e-4);
  EXPECT_EQ(c.workers, 1u);
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfig, RoundTrip) {
  RunConfig c;
  c.train.epochs = 3;
  c.train.seed = 99;
  c.train.model.width = 24;
  c.train.model.num_heads = 3;
  c.train.model.scales = {1, 2, 4};
  c.train.model.pooling[4] = PoolingConfig{3, 2, 1};
  c.train.loss.boundary_band = true;
  c.train.loss.thresholds = {0.2, 0.4};
  c.inference.class_agnostic = false;
  c.inference.max_keep = 7;
  c.paths.data = "d";
  c.workers = 4;
  const RunConfig back = run_config_from_json(json::parse(to_json(c).dump()));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.train.model, c.train.model);
  EXPECT_EQ(back.train.loss.thresholds, c.train.loss.thresholds);
  EXPECT_EQ(back.inference.max_keep, 7u);
}

TEST(RunConfig, UnknownKeysNamed) {
  EXPECT_NE(error_of({{"trian", json::object()}}).find("'trian'"), std::string::npos);
  EXPECT_NE(error_of({{"train", {{"epocs", 3}}}}).find("'epocs'"), std::string::npos);
  EXPECT_NE(error_of({{"model", {{"widht", 3}}}}).find("'widht'"), std::string::npos);
  EXPECT_NE(error_of({{"loss", {{"lambda3", 3}}}}).find("'lambda3'"), std::string::npos);
  EXPECT_NE(error_of({{"inference", {{"sigma", 3}}}}).find("'sigma'"), std::string::npos);
  EXPECT_NE(error_of({{"paths", {{"ckpt", "x"}}}}).find("'ckpt'"), std::string::npos);
}

TEST(RunConfig, WrongTypesNamed) {
  EXPECT_NE(error_of({{"train", {{"epochs", "many"}}}}).find("train.epochs"), std::string::npos);
  EXPECT_NE(error_of({{"train", 3}}).find("train"), std::string::npos);
  EXPECT_NE(error_of(json::parse(R"({"model": {"pooling": {"2": [1, 2]}}})")).find("pooling"), std::string::npos);
}

TEST(RunConfig, ValidationComposes) {
  RunConfig c;
  c.train.model.num_heads = 5;
  EXPECT_THROW(c.validate(), ValidationError);
  c = RunConfig{};
  c.inference.theta_c = 1.5;
  EXPECT_THROW(c.validate(), ValidationError);
  c = RunConfig{};
  c.workers = 0;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(TrainConfigJson, RoundTrip) {
  TrainConfig c;
  c.batch_size = 3;
  c.loss.alpha = 4;
  TrainConfig back;
  from_json(to_json(c), back);
  EXPECT_EQ(to_json(back), to_json(c));
}

}  // namespace
}  // namespace tags
