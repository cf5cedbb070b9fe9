#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "apg/attacks/attack.hpp"
#include "apg/error.hpp"
#include "reference.hpp"

namespace apg::attacks {
namespace {

// p0 = sigmoid(2x - 0.1): class 0 for x > 0.05, class 1 below.
nn::Network logistic() {
  return nn::Network({nn::Dense{1, 2, {1.0f, -1.0f}, {0.0f, 0.1f}}, nn::Softmax{2}});
}

AttackSpec saliency_spec(Algorithm a, std::size_t target, double upsilon,
                         std::optional<double> k = std::nullopt) {
  AttackSpec s;
  s.algorithm = a;
  s.target = target;
  s.strength = upsilon;
  s.k_percent = k;
  return s;
}

std::vector<float> random_image(std::size_t n, std::mt19937_64& rng, float zero_share = 0.5f) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> x(n);
  for (auto& v : x) v = u(rng) < zero_share ? 0.0f : u(rng);
  return x;
}

TEST(Budget, FloorAndCeil) {
  EXPECT_EQ(feature_budget(784, 20), 156u);
  EXPECT_EQ(feature_budget(784, 10), 78u);
  EXPECT_EQ(feature_budget(784, 25), 196u);
  EXPECT_EQ(feature_budget(784, 100), 784u);
  EXPECT_EQ(feature_budget(784, 0.2), 1u);
  EXPECT_EQ(apriori_k(784, 15), 118u);
  EXPECT_EQ(apriori_k(784, 10), 79u);
  EXPECT_EQ(apriori_k(784, 100), 784u);
  EXPECT_EQ(apriori_k(784, 0.01), 1u);
  EXPECT_EQ(apriori_k(100, 30), 30u);
}

TEST(Distances, Examples) {
  const std::vector<float> x{0.0f, 0.5f, 1.0f};
  EXPECT_EQ(distances(x, x), (Distances{0, 0.0, 0.0}));
  EXPECT_EQ(distances(std::vector<float>{0.0f}, std::vector<float>{1.0f}), (Distances{1, 1.0, 1.0}));
  EXPECT_THROW(distances(x, std::vector<float>{0.0f}), ArgumentError);
}

TEST(Distances, MatchesDirectComputation) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_image(50, rng), b = random_image(50, rng);
    std::size_t l0 = 0;
    double sq = 0.0, inf = 0.0;
    for (std::size_t i = 0; i < 50; ++i) {
      const double d = double{b[i]} - double{a[i]};
      l0 += d != 0.0;
      sq += d * d;
      inf = std::max(inf, std::abs(d));
    }
    const Distances got = distances(a, b);
    EXPECT_EQ(got.l0, l0);
    EXPECT_EQ(got.linf, inf);
    EXPECT_NEAR(got.l2, std::sqrt(sq), 1e-6);
  }
}

TEST(Validate, FieldNames) {
  const auto field = [](const AttackSpec& s) {
    try {
      validate(s, 10);
    } catch (const ArgumentError& e) {
      return e.field();
    }
    return std::string();
  };
  AttackSpec s = saliency_spec(Algorithm::jsma, 3, 20);
  EXPECT_EQ(field(s), "");
  s.target.reset();
  EXPECT_EQ(field(s), "target");
  s.target = 10;
  EXPECT_EQ(field(s), "target");
  s = saliency_spec(Algorithm::jsma, 3, 0);
  EXPECT_EQ(field(s), "strength");
  s.strength = 101;
  EXPECT_EQ(field(s), "strength");
  s = saliency_spec(Algorithm::fjsma, 3, 20);
  EXPECT_EQ(field(s), "k_percent");
  s.k_percent = 0;
  EXPECT_EQ(field(s), "k_percent");
  s.k_percent = 15;
  EXPECT_EQ(field(s), "");
  AttackSpec f;
  f.strength = 1.5;
  EXPECT_EQ(field(f), "strength");
  f.strength = NAN;
  EXPECT_EQ(field(f), "strength");
  f.strength = 0.3;
  EXPECT_EQ(field(f), "");
  f.k_percent = 10;
  EXPECT_EQ(field(f), "k_percent");
}

TEST(Parse, NamesRoundTrip) {
  for (auto a : {Algorithm::fgsm, Algorithm::jsma, Algorithm::fjsma}) {
    EXPECT_EQ(parse_algorithm(to_string(a)), a);
  }
  EXPECT_EQ(parse_algorithm("FJSMA"), Algorithm::fjsma);
  EXPECT_FALSE(parse_algorithm("cw"));
  EXPECT_EQ(parse_direction("increase"), Direction::increase);
  EXPECT_FALSE(parse_direction("up"));
}

TEST(Fgsm, LogisticDirection) {
  const nn::Network net = logistic();
  const std::vector<float> x{0.3f};
  AttackSpec s;
  s.strength = 0.2;
  auto o = fgsm(net, x, s);
  EXPECT_EQ(o.original_class, 0u);
  EXPECT_FLOAT_EQ(o.adversarial[0], 0.1f);
  EXPECT_FALSE(o.success);
  s.strength = 0.3;
  o = fgsm(net, x, s);
  EXPECT_FLOAT_EQ(o.adversarial[0], 0.0f);
  EXPECT_EQ(o.predicted, 1u);
  EXPECT_TRUE(o.success);
  EXPECT_EQ(o.iterations, 1u);

  s.target = 1;
  s.strength = 0.2;
  o = fgsm(net, x, s);
  EXPECT_FLOAT_EQ(o.adversarial[0], 0.1f);
  s.target = 0;
  o = fgsm(net, x, s);
  EXPECT_FLOAT_EQ(o.adversarial[0], 0.5f);
  EXPECT_TRUE(o.success);
}

TEST(Fgsm, ZeroEpsilonIsIdentity) {
  std::mt19937_64 rng(42);
  const nn::Network net = testing::random_mlp(64, 16, 10, rng);
  const auto x = random_image(64, rng);
  AttackSpec s;
  s.strength = 0.0;
  const auto o = fgsm(net, x, s);
  EXPECT_EQ(o.adversarial, x);
  EXPECT_FALSE(o.success);
  EXPECT_EQ(o.l0, 0u);
  EXPECT_EQ(o.predicted, o.original_class);
}

TEST(Fgsm, ClampsAndBoundsLinf) {
  std::mt19937_64 rng(43);
  const nn::Network net = testing::random_mlp(64, 16, 10, rng);
  for (double eps : {0.05, 0.3, 1.0}) {
    const auto x = random_image(64, rng);
    AttackSpec s;
    s.strength = eps;
    const auto o = fgsm(net, x, s);
    EXPECT_LE(o.linf, eps + 1e-7);
    for (float v : o.adversarial) EXPECT_TRUE(v >= 0.0f && v <= 1.0f);
  }
}

TEST(Saliency, AlreadyTargetClassSucceedsImmediately) {
  std::mt19937_64 rng(44);
  const nn::Network net = testing::random_mlp(64, 16, 10, rng);
  const auto x = random_image(64, rng);
  const std::size_t cls = nn::argmax(net.forward(x));
  for (auto a : {Algorithm::jsma, Algorithm::fjsma}) {
    const auto o = run_attack(net, x, saliency_spec(a, cls, 10, a == Algorithm::fjsma ? std::optional(15.0) : std::nullopt));
    EXPECT_TRUE(o.success);
    EXPECT_EQ(o.iterations, 0u);
    EXPECT_EQ(o.adversarial, x);
  }
}

TEST(Saliency, BudgetBelowTwoChangesNothing) {
  std::mt19937_64 rng(45);
  const nn::Network net = testing::random_mlp(64, 16, 10, rng);
  const auto x = random_image(64, rng);
  const std::size_t other = (nn::argmax(net.forward(x)) + 1) % 10;
  // floor(64 * 2 / 100) = 1
  const auto o = jsma(net, x, saliency_spec(Algorithm::jsma, other, 2));
  EXPECT_FALSE(o.success);
  EXPECT_EQ(o.iterations, 0u);
  EXPECT_EQ(o.adversarial, x);
}

TEST(Saliency, RejectsMismatchedAlgorithm) {
  const nn::Network net = logistic();
  EXPECT_THROW(jsma(net, std::vector<float>{0.5f}, saliency_spec(Algorithm::fjsma, 1, 50, 10.0)),
               ArgumentError);
}

class SaliencyProperties : public ::testing::TestWithParam<Direction> {};

TEST_P(SaliencyProperties, BudgetCountersAndDomain) {
  std::mt19937_64 rng(46);
  const Direction dir = GetParam();
  for (int trial = 0; trial < 30; ++trial) {
    const nn::Network net = testing::random_mlp(100, 24, 10, rng);
    const auto x = random_image(100, rng, 0.3f);
    const std::size_t target = (nn::argmax(net.forward(x)) + 1 + trial % 9) % 10;
    const double upsilon = 5.0 + trial % 4 * 10.0;
    const double kp = 10.0 + trial % 3 * 10.0;
    for (auto a : {Algorithm::jsma, Algorithm::fjsma}) {
      AttackSpec s = saliency_spec(a, target, upsilon, a == Algorithm::fjsma ? std::optional(kp) : std::nullopt);
      s.direction = dir;
      const auto o = run_attack(net, x, s);
      EXPECT_LE(o.l0, feature_budget(100, upsilon));
      EXPECT_EQ(o.steps.size(), o.iterations);
      for (float v : o.adversarial) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
      for (std::size_t i = 0; i < 100; ++i) {
        if (o.adversarial[i] != x[i]) EXPECT_EQ(o.adversarial[i], dir == Direction::decrease ? 0.0f : 1.0f);
      }
      std::size_t expected_gamma = SearchSpace::from_image(x, dir).size();
      for (const auto& st : o.steps) {
        EXPECT_EQ(st.gamma_size, expected_gamma);
        const std::uint64_t g = st.gamma_size;
        if (a == Algorithm::jsma) {
          EXPECT_EQ(st.candidates, g * (g - 1) / 2);
        } else {
          EXPECT_EQ(st.first_choices, std::min<std::size_t>(apriori_k(100, kp), g));
          EXPECT_EQ(st.candidates, st.first_choices * (g - 1));
          EXPECT_LE(st.candidates, apriori_k(100, kp) * g);
        }
        expected_gamma -= 2;
      }
      EXPECT_EQ(o.success, o.predicted == target);
      EXPECT_EQ(o.predicted, nn::argmax(net.forward(o.adversarial)));
    }
  }
}

TEST_P(SaliencyProperties, FullKReproducesJsma) {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 20; ++trial) {
    const nn::Network net = testing::random_mlp(64, 16, 10, rng);
    const auto x = random_image(64, rng, 0.3f);
    const std::size_t target = (nn::argmax(net.forward(x)) + 3) % 10;
    AttackSpec j = saliency_spec(Algorithm::jsma, target, 40);
    AttackSpec f = saliency_spec(Algorithm::fjsma, target, 40, 100.0);
    j.direction = f.direction = GetParam();
    const auto oj = run_attack(net, x, j), of = run_attack(net, x, f);
    EXPECT_EQ(oj.adversarial, of.adversarial);
    ASSERT_EQ(oj.steps.size(), of.steps.size());
    for (std::size_t i = 0; i < oj.steps.size(); ++i) {
      EXPECT_EQ(oj.steps[i].p1, of.steps[i].p1);
      EXPECT_EQ(oj.steps[i].p2, of.steps[i].p2);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(BothDirections, SaliencyProperties,
                         ::testing::Values(Direction::decrease, Direction::increase));

TEST(Saliency, LogitSaliencyRuns) {
  std::mt19937_64 rng(48);
  const nn::Network net = testing::random_mlp(64, 16, 10, rng);
  const auto x = random_image(64, rng, 0.3f);
  AttackSpec s = saliency_spec(Algorithm::fjsma, (nn::argmax(net.forward(x)) + 1) % 10, 30, 20.0);
  s.saliency = nn::JacobianMode::logits;
  const auto o = run_attack(net, x, s);
  EXPECT_LE(o.l0, feature_budget(64, 30));
}

}  // namespace
}  // namespace apg::attacks
