#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <atomic>
#include <limits>
#include <random>
#include <memory>
#include <thread>

#include "apg/error.hpp"
#include "apg/nn/network.hpp"
#include "apg/nn/train.hpp"
#include "reference.hpp"

namespace apg::nn {
namespace {

using testing::fd_jacobian;
using testing::fd_loss_gradient;
using testing::random_cnn;
using testing::random_mlp;
using testing::to_double;

std::vector<float> random_image(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> x(n);
  for (auto& v : x) v = u(rng);
  return x;
}

Network single_dense(std::uint32_t in, std::vector<float> w, std::vector<float> b) {
  const auto out = static_cast<std::uint32_t>(b.size());
  return Network({Dense{in, out, std::move(w), std::move(b)}, Softmax{out}});
}

TEST(Softmax, ClosedForm) {
  std::vector<float> z(10, 0.0f);
  z[0] = 1.0f;
  const auto p = softmax(z);
  const double e = std::exp(1.0);
  EXPECT_NEAR(p[0], e / (e + 9), 1e-6);
  EXPECT_NEAR(p[0], 0.2320, 1e-4);
  for (int i = 1; i < 10; ++i) EXPECT_NEAR(p[i], 0.08534, 1e-5);
}

TEST(Softmax, LargeLogitsStayFinite) {
  const auto p = softmax(std::vector<float>{1000.0f, 0.0f, -1000.0f});
  EXPECT_FLOAT_EQ(p[0], 1.0f);
  EXPECT_FLOAT_EQ(p[2], 0.0f);
}

TEST(Forward, UniformWeightsGiveUniformProbs) {
  const Network net = single_dense(784, std::vector<float>(7840, 0.25f), std::vector<float>(10, 0.0f));
  std::mt19937_64 rng(3);
  const auto p = net.forward(random_image(784, rng));
  ASSERT_EQ(p.size(), 10u);
  for (float v : p) EXPECT_NEAR(v, 0.1f, 1e-6);
}

TEST(Forward, ZeroNetworkHasZeroLogits) {
  const Network net = single_dense(784, std::vector<float>(7840, 0.0f), std::vector<float>(10, 0.0f));
  std::mt19937_64 rng(4);
  for (float z : net.logits(random_image(784, rng))) EXPECT_EQ(z, 0.0f);
}

TEST(Forward, IdentityMapCopiesInputSlice) {
  std::vector<float> w(100, 0.0f);
  for (int i = 0; i < 10; ++i) w[i * 10 + i] = 1.0f;
  const Network net = single_dense(10, w, std::vector<float>(10, 0.0f));
  const std::vector<float> x{0.0f, 0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f, 0.7f, 0.8f, 0.9f};
  EXPECT_EQ(net.logits(x), x);
}

TEST(Forward, RejectsWrongLength) {
  const Network net = make_network(Architecture::mlp, 1);
  EXPECT_THROW(net.forward(std::vector<float>(783, 0.0f)), ConfigError);
}

TEST(Forward, RejectsOutOfRangePixel) {
  const Network net = make_network(Architecture::mlp, 1);
  std::vector<float> x(784, 0.5f);
  x[10] = 1.5f;
  EXPECT_THROW(net.forward(x), ArgumentError);
  x[10] = NAN;
  EXPECT_THROW(net.forward(x), ArgumentError);
}

TEST(Forward, MatchesDoubleReference) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Network net = random_cnn(12, 4, 6, 3, 10, rng);
    const auto x = random_image(net.input_size(), rng);
    const auto ref = testing::reference_logits(net, to_double(x));
    const auto got = net.logits(x);
    for (std::size_t j = 0; j < got.size(); ++j) EXPECT_NEAR(got[j], ref[j], 1e-5);
  }
}

TEST(Forward, DefaultCnnMatchesDoubleReference) {
  const Network net = make_network(Architecture::cnn, 5);
  std::mt19937_64 rng(6);
  const auto x = random_image(784, rng);
  const auto ref = testing::reference_logits(net, to_double(x));
  const auto got = net.logits(x);
  for (std::size_t j = 0; j < 10; ++j) EXPECT_NEAR(got[j], ref[j], 1e-4);
}

TEST(NetworkConfig, RejectsBadStacks) {
  EXPECT_THROW(Network({Dense{4, 3, std::vector<float>(12), std::vector<float>(3)}}), ConfigError);
  EXPECT_THROW(Network({Dense{4, 3, std::vector<float>(11), std::vector<float>(3)}, Softmax{3}}),
               ConfigError);
  EXPECT_THROW(Network({Dense{4, 3, std::vector<float>(12), std::vector<float>(3)}, Softmax{4}}),
               ConfigError);
  EXPECT_THROW(Network({Conv2D{{1, 4, 4}, 2, 2, std::vector<float>(8), std::vector<float>(2)},
                        Softmax{32}}),
               ConfigError);
  EXPECT_THROW(Network({MaxPool2D{{1, 5, 5}, 2}, Softmax{4}}), ConfigError);
  EXPECT_THROW(Network({Softmax{3}, Dense{3, 3, std::vector<float>(9), std::vector<float>(3)},
                        Softmax{3}}),
               ConfigError);
}

TEST(Jacobian, TwoClassAnalytic) {
  // z = W x with W = [[a, b], [c, d]]; dp0/dx = p0 p1 (W0 - W1), dp1/dx = -dp0/dx.
  const std::vector<float> w{0.5f, -1.0f, 2.0f, 0.25f};
  const Network net = single_dense(2, w, {0.0f, 0.0f});
  const std::vector<float> x{0.3f, 0.8f};
  const double z0 = 0.5 * 0.3 - 1.0 * 0.8, z1 = 2.0 * 0.3 + 0.25 * 0.8;
  const double p0 = 1.0 / (1.0 + std::exp(z1 - z0)), p1 = 1.0 - p0;
  const Jacobian J = net.jacobian(x);
  EXPECT_NEAR(J(0, 0), p0 * p1 * (0.5 - 2.0), 1e-6);
  EXPECT_NEAR(J(0, 1), p0 * p1 * (-1.0 - 0.25), 1e-6);
  EXPECT_NEAR(J(1, 0), -J(0, 0), 1e-6);
  EXPECT_NEAR(J(1, 1), -J(0, 1), 1e-6);

  const Jacobian L = net.jacobian(x, JacobianMode::logits);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(L.values()[i], w[i]);
}

TEST(Jacobian, ColumnsSumToZero) {
  std::mt19937_64 rng(21);
  const Network net = random_cnn(8, 3, 4, 3, 10, rng);
  const Jacobian J = net.jacobian(random_image(net.input_size(), rng));
  for (std::size_t i = 0; i < J.features(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < J.classes(); ++j) s += J(j, i);
    EXPECT_NEAR(s, 0.0, 1e-6);
  }
}

TEST(Jacobian, ConstantClassifierIsZero) {
  std::mt19937_64 rng(22);
  const Network base = random_mlp(784, 32, 10, rng);
  auto layers = std::vector<Layer>(base.layers().begin(), base.layers().end());
  auto& last = std::get<Dense>(layers[2]);
  std::fill(last.weights.begin(), last.weights.end(), 0.0f);
  const Network net(std::move(layers));
  const auto x = random_image(784, rng);
  for (float v : net.jacobian(x).values()) EXPECT_EQ(v, 0.0f);
  for (float v : net.input_gradient(x, 3)) EXPECT_EQ(v, 0.0f);
}

TEST(Jacobian, MatchesFiniteDifferencesOnSmallCnn) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 4; ++trial) {
    const Network net = random_cnn(8, 3, 4, 3, 10, rng);
    const auto x = random_image(net.input_size(), rng);
    for (auto mode : {JacobianMode::probabilities, JacobianMode::logits}) {
      const Jacobian J = net.jacobian(x, mode);
      const auto ref = fd_jacobian(net, to_double(x), mode);
      for (std::size_t j = 0; j < 10; ++j) {
        for (std::size_t i = 0; i < x.size(); ++i) {
          ASSERT_NEAR(J(j, i), ref[j][i], 1e-4) << "class " << j << " feature " << i;
        }
      }
    }
  }
}

// 16 x 3 x 3 = 144 inputs per output unit in the second conv: the wide-patch kernel.
TEST(Jacobian, MatchesFiniteDifferencesOnWideCnn) {
  std::mt19937_64 rng(26);
  for (int trial = 0; trial < 2; ++trial) {
    const Network net = random_cnn(12, 16, 8, 3, 10, rng);
    const auto x = random_image(net.input_size(), rng);
    const Jacobian J = net.jacobian(x);
    const auto ref = fd_jacobian(net, to_double(x), JacobianMode::probabilities);
    for (std::size_t j = 0; j < 10; ++j) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        ASSERT_NEAR(J(j, i), ref[j][i], 1e-4) << "class " << j << " feature " << i;
      }
    }
    const auto g = net.input_gradient(x, 4);
    const auto gref = fd_loss_gradient(net, to_double(x), 4);
    for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(g[i], gref[i], 1e-4) << i;
  }
}

TEST(Jacobian, MatchesFiniteDifferencesOnDefaultCnnSample) {
  const Network net = make_network(Architecture::cnn, 9);
  std::mt19937_64 rng(24);
  const auto x = random_image(784, rng);
  const Jacobian J = net.jacobian(x);
  const auto xd = to_double(x);
  std::uniform_int_distribution<std::size_t> pick(0, 783);
  for (int n = 0; n < 6; ++n) {
    const std::size_t i = pick(rng);
    testing::central_difference(net, xd, i, 1e-3, [&](const auto& lo, const auto& hi, double h) {
      const auto plo = testing::reference_softmax(lo), phi = testing::reference_softmax(hi);
      for (std::size_t j = 0; j < 10; ++j) EXPECT_NEAR(J(j, i), (phi[j] - plo[j]) / (2 * h), 1e-4);
    });
  }
}

TEST(InputGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 4; ++trial) {
    const Network net = trial % 2 ? random_cnn(8, 3, 4, 3, 10, rng) : random_mlp(30, 16, 10, rng);
    const auto x = random_image(net.input_size(), rng);
    const std::size_t label = static_cast<std::size_t>(trial * 3 % 10);
    const auto g = net.input_gradient(x, label);
    const auto ref = fd_loss_gradient(net, to_double(x), label);
    for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(g[i], ref[i], 1e-4) << i;
  }
}

TEST(InputGradient, RejectsBadLabel) {
  const Network net = make_network(Architecture::mlp, 1);
  EXPECT_THROW(net.input_gradient(std::vector<float>(784, 0.0f), 10), ArgumentError);
}

TEST(NumericalGuard, NonFiniteActivationNamesLayer) {
  const Network net = single_dense(2, {std::numeric_limits<float>::max(), std::numeric_limits<float>::max(),
                                       0.0f, 0.0f},
                                   {0.0f, 0.0f});
  try {
    net.forward(std::vector<float>{1.0f, 1.0f});
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.layer(), 0u);
  }
}

TEST(Network, ParameterCount) {
  EXPECT_EQ(make_network(Architecture::mlp, 1).parameter_count(),
            784u * 256 + 256 + 256u * 256 + 256 + 256u * 10 + 10);
  EXPECT_EQ(make_network(Architecture::cnn, 1).parameter_count(),
            32u * 25 + 32 + 64u * 32 * 25 + 64 + 3136u * 1024 + 1024 + 1024u * 10 + 10);
}

TEST(Network, CopiesAtDifferentAddressesAgreeBitwise) {
  std::mt19937_64 rng(26);
  const Network net = random_cnn(8, 3, 4, 3, 10, rng);
  const auto x = random_image(net.input_size(), rng);
  const auto J = net.jacobian(x);
  const auto g = net.input_gradient(x, 2);
  std::vector<std::unique_ptr<Network>> copies;
  for (int n = 0; n < 8; ++n) {
    std::vector<char> pad(static_cast<std::size_t>(4 * n + 1));  // shifts later heap allocations
    copies.push_back(std::make_unique<Network>(net));
    const auto Jc = copies.back()->jacobian(x);
    EXPECT_TRUE(std::equal(J.values().begin(), J.values().end(), Jc.values().begin()));
    EXPECT_EQ(copies.back()->input_gradient(x, 2), g);
  }
}

TEST(Network, ThreadSafeEvaluation) {
  const Network net = make_network(Architecture::mlp, 2);
  std::mt19937_64 rng(2);
  const auto x = random_image(784, rng);
  const auto expected = net.jacobian(x).values();
  const std::vector<float> want(expected.begin(), expected.end());
  std::vector<std::thread> threads;
  std::atomic<int> mismatches{0};
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&] {
      for (int n = 0; n < 5; ++n) {
        const auto got = net.jacobian(x).values();
        if (!std::equal(got.begin(), got.end(), want.begin())) ++mismatches;
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(mismatches.load(), 0);
}

}  // namespace
}  // namespace apg::nn
