#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "apg/error.hpp"
#include "apg/nn/model_io.hpp"
#include "apg/nn/train.hpp"
#include "reference.hpp"

namespace apg::nn {
namespace {

namespace fs = std::filesystem;

// Ten classes, each a noisy copy of its own random prototype.
Dataset prototype_data(std::size_t n, std::size_t features, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<std::vector<float>> protos(10, std::vector<float>(features));
  for (auto& p : protos) {
    for (auto& v : p) v = u(rng) < 0.2f ? 1.0f : 0.0f;
  }
  Dataset d;
  d.features = features;
  for (std::size_t s = 0; s < n; ++s) {
    const auto label = static_cast<std::uint8_t>(s % 10);
    d.labels.push_back(label);
    for (float v : protos[label]) d.pixels.push_back(std::clamp(v + 0.3f * (u(rng) - 0.5f), 0.0f, 1.0f));
  }
  return d;
}

std::vector<float> flatten_params(const Network& net) {
  std::vector<float> out;
  for (const auto& l : net.layers()) {
    if (const auto* d = std::get_if<Dense>(&l)) {
      out.insert(out.end(), d->weights.begin(), d->weights.end());
      out.insert(out.end(), d->bias.begin(), d->bias.end());
    } else if (const auto* c = std::get_if<Conv2D>(&l)) {
      out.insert(out.end(), c->weights.begin(), c->weights.end());
      out.insert(out.end(), c->bias.begin(), c->bias.end());
    }
  }
  return out;
}

TEST(Init, HeUniformBoundsAndZeroBias) {
  const Network net = make_network(Architecture::cnn, 3);
  for (const auto& l : net.layers()) {
    if (const auto* c = std::get_if<Conv2D>(&l)) {
      const float limit = std::sqrt(6.0f / static_cast<float>(c->fan_in()));
      for (float w : c->weights) EXPECT_LE(std::abs(w), limit);
      for (float b : c->bias) EXPECT_EQ(b, 0.0f);
    } else if (const auto* d = std::get_if<Dense>(&l)) {
      const float limit = std::sqrt(6.0f / static_cast<float>(d->inputs));
      for (float w : d->weights) EXPECT_LE(std::abs(w), limit);
      for (float b : d->bias) EXPECT_EQ(b, 0.0f);
    }
  }
}

TEST(Init, SeedDeterminesWeights) {
  EXPECT_EQ(make_network(Architecture::mlp, 7), make_network(Architecture::mlp, 7));
  EXPECT_FALSE(make_network(Architecture::mlp, 7) == make_network(Architecture::mlp, 8));
}

TEST(Train, OverfitsSmallSubset) {
  const Dataset d = prototype_data(500, 784, 1);
  TrainConfig cfg;
  cfg.architecture = Architecture::mlp;
  cfg.epochs = 10;
  double last_acc = 0.0;
  const Network net = train(d, cfg, [&](const EpochReport& r) { last_acc = r.train_accuracy; });
  EXPECT_GE(evaluate(net, d), 0.95);
  EXPECT_GE(last_acc, 0.95);
}

TEST(Train, OverfitsSmallSubsetWithCnn) {
  const Dataset d = prototype_data(200, 784, 2);
  TrainConfig cfg;
  cfg.epochs = 4;
  const Network net = train(d, cfg);
  EXPECT_GE(evaluate(net, d), 0.95);
}

TEST(Train, BitIdenticalForFixedSeed) {
  const Dataset d = prototype_data(300, 784, 3);
  TrainConfig cfg;
  cfg.architecture = Architecture::mlp;
  cfg.epochs = 2;
  const Network a = train(d, cfg);
  const Network b = train(d, cfg);
  EXPECT_EQ(serialize_model(a), serialize_model(b));
  cfg.rng_seed = 2;
  EXPECT_NE(serialize_model(a), serialize_model(train(d, cfg)));
}

TEST(Train, TinyLearningRateStaysNearInit) {
  const Dataset d = prototype_data(256, 784, 4);
  TrainConfig cfg;
  cfg.architecture = Architecture::mlp;
  cfg.epochs = 1;
  cfg.learning_rate = 1e-12;
  const auto before = flatten_params(make_network(cfg.architecture, cfg.rng_seed));
  const auto after = flatten_params(train(d, cfg));
  ASSERT_EQ(before.size(), after.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    worst = std::max(worst, static_cast<double>(std::abs(before[i] - after[i])));
  }
  // Adam moves each parameter at most about lr per step; 4 steps here.
  EXPECT_LE(worst, 1e-9);
}

TEST(Train, RejectsBadConfig) {
  const Dataset d = prototype_data(20, 784, 5);
  TrainConfig cfg;
  cfg.architecture = Architecture::mlp;
  cfg.epochs = 0;
  EXPECT_THROW(train(d, cfg), ArgumentError);
  cfg.epochs = 1;
  cfg.batch_size = 0;
  EXPECT_THROW(train(d, cfg), ArgumentError);
  cfg.batch_size = 8;
  cfg.learning_rate = -1.0;
  EXPECT_THROW(train(d, cfg), ArgumentError);
  cfg.learning_rate = 1e-3;
  EXPECT_THROW(train(Dataset{784, {}, {}, Split::train}, cfg), ArgumentError);
}

TEST(Train, DivergenceRaisesTrainingError) {
  const Dataset d = prototype_data(64, 784, 6);
  TrainConfig cfg;
  cfg.architecture = Architecture::mlp;
  cfg.learning_rate = 1e30;
  cfg.epochs = 3;
  EXPECT_THROW(train(d, cfg), TrainingError);
}

TEST(Evaluate, PerfectAndConstantModels) {
  std::vector<float> w(100, 0.0f);
  for (int i = 0; i < 10; ++i) w[i * 10 + i] = 1.0f;
  const Network identity({Dense{10, 10, w, std::vector<float>(10, 0.0f)}, Softmax{10}});
  Dataset three;
  three.features = 10;
  for (std::uint8_t label : {2, 7, 4}) {
    std::vector<float> x(10, 0.0f);
    x[label] = 1.0f;
    three.pixels.insert(three.pixels.end(), x.begin(), x.end());
    three.labels.push_back(label);
  }
  EXPECT_DOUBLE_EQ(evaluate(identity, three), 1.0);

  std::vector<float> bias(10, 0.0f);
  bias[0] = 1.0f;
  const Network constant({Dense{784, 10, std::vector<float>(7840, 0.0f), bias}, Softmax{10}});
  EXPECT_DOUBLE_EQ(evaluate(constant, prototype_data(100, 784, 7)), 0.1);

  EXPECT_THROW(evaluate(constant, Dataset{784, {}, {}, Split::test}), ArgumentError);
}

TEST(Evaluate, PredictAllMatchesSingleForward) {
  const Dataset d = prototype_data(300, 784, 8);
  const Network net = make_network(Architecture::mlp, 4);
  const auto preds = predict_all(net, d);
  ASSERT_EQ(preds.size(), d.size());
  for (std::size_t i = 0; i < d.size(); i += 37) EXPECT_EQ(preds[i], argmax(net.forward(d.image(i))));
}

TEST(ModelIo, RoundTripIsBitIdentical) {
  for (auto arch : {Architecture::mlp, Architecture::cnn}) {
    const Network net = make_network(arch, 12);
    const auto bytes = serialize_model(net);
    const Network back = deserialize_model(bytes);
    EXPECT_EQ(net, back);
    EXPECT_EQ(serialize_model(back), bytes);
  }
}

TEST(ModelIo, FileRoundTripPreservesEvaluate) {
  const Dataset d = prototype_data(100, 784, 9);
  TrainConfig cfg;
  cfg.architecture = Architecture::mlp;
  cfg.epochs = 1;
  const Network net = train(d, cfg);
  const fs::path path = fs::temp_directory_path() / "apg_model_io_test.apgm";
  save_model(net, path);
  EXPECT_EQ(evaluate(load_model(path), d), evaluate(net, d));
  fs::remove(path);
}

std::string format_error(std::vector<std::uint8_t> bytes) {
  try {
    deserialize_model(bytes);
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

TEST(ModelIo, CorruptInputNamesField) {
  const auto good = serialize_model(make_network(Architecture::mlp, 1));
  auto bad = good;
  bad[0] = 'X';
  EXPECT_NE(format_error(bad).find("magic"), std::string::npos);
  bad = good;
  bad[4] = 2;
  EXPECT_NE(format_error(bad).find("version"), std::string::npos);
  bad = good;
  bad.resize(good.size() - 3);
  EXPECT_NE(format_error(bad).find("truncated"), std::string::npos);
  bad = good;
  bad.push_back(0);
  EXPECT_NE(format_error(bad).find("trailing"), std::string::npos);
  bad = good;
  bad[12] = 9;
  EXPECT_NE(format_error(bad).find("kind"), std::string::npos);
  EXPECT_NE(format_error({}).find("magic"), std::string::npos);
}

TEST(ModelIo, MissingFileIsIoError) {
  EXPECT_THROW(load_model("/nonexistent/dir/model.apgm"), IoError);
}

}  // namespace
}  // namespace apg::nn
