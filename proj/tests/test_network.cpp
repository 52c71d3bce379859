#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mannprune/experiment.hpp"
#include "mannprune/inference.hpp"
#include "mannprune/network.hpp"
#include "mannprune/training.hpp"

using namespace mannprune;

namespace {

NetworkConfig tiny_config(std::size_t d = 5, std::size_t h = 6, std::size_t k = 3, std::size_t g = 4) {
  NetworkConfig c;
  c.d_in = d;
  c.d_out = d - 1;
  c.h_size = h;
  c.n_experts = k;
  c.g_hidden = g;
  c.gating_indices = {0, 2, 3};
  return c;
}

// Independent plain-loop reference: gate, blend parameters, run the blended MLP.
std::vector<double> reference_forward(const MoENetwork<double>& net, const std::vector<double>& x) {
  const auto layer = [](const Matrix<double>& w, const Matrix<double>& b, const std::vector<double>& in, bool act) {
    std::vector<double> out(w.rows);
    for (std::size_t r = 0; r < w.rows; ++r) {
      double s = b(r, 0);
      for (std::size_t c = 0; c < w.cols; ++c) s += w(r, c) * in[c];
      out[r] = act ? (s > 0 ? s : std::exp(s) - 1) : s;
    }
    return out;
  };
  std::vector<double> gi;
  for (auto i : net.config.gating_indices) gi.push_back(x[i]);
  auto h = layer(net.gating[W0], net.gating[B0], gi, true);
  h = layer(net.gating[W1], net.gating[B1], h, true);
  h = layer(net.gating[W2], net.gating[B2], h, false);
  const double mx = *std::max_element(h.begin(), h.end());
  double z = 0;
  for (double& v : h) z += (v = std::exp(v - mx));
  for (double& v : h) v /= z;

  ParamSet<double> blended = net.experts[0];
  for (std::size_t s = 0; s < kSlots; ++s)
    for (std::size_t e = 0; e < blended[s].size(); ++e) {
      double acc = 0;
      for (std::size_t i = 0; i < net.experts.size(); ++i) acc += h[i] * net.experts[i][s].data[e];
      blended[s].data[e] = acc;
    }
  auto a = layer(blended[W0], blended[B0], x, true);
  a = layer(blended[W1], blended[B1], a, true);
  return layer(blended[W2], blended[B2], a, false);
}

MoENetwork<double> random_net(const NetworkConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  auto net = init_network<double>(c, rng);
  for (std::size_t id = 0; id < net.tensor_count(); ++id)
    if (!is_weight_slot(id % kSlots))
      for (auto& v : net.tensor(id).data) v = rng.uniform(-0.3, 0.3);
  return net;
}

}  // namespace

TEST(Network, HandComputedSingleExpert) {
  NetworkConfig c;
  c.d_in = 1;
  c.d_out = 1;
  c.h_size = 1;
  c.n_experts = 1;
  c.g_hidden = 1;
  c.gating_indices = {0};
  Rng rng(0);
  auto net = init_network<double>(c, rng);
  auto& e = net.experts[0];
  e[W0].data = {2};
  e[B0].data = {-1};
  e[W1].data = {1};
  e[B1].data = {0};
  e[W2].data = {3};
  e[B2].data = {0.5};
  const std::vector<double> one{1.0}, zero{0.0};
  EXPECT_DOUBLE_EQ(predict(net, std::span<const double>(one))[0], 3.5);
  const double h0 = std::exp(-1.0) - 1.0;
  const double h1 = std::exp(h0) - 1.0;
  EXPECT_NEAR(predict(net, std::span<const double>(zero))[0], 3 * h1 + 0.5, 1e-15);
}

TEST(Network, ParameterCountClosedForm) {
  const auto c = tiny_config();
  Rng rng(1);
  const auto net = init_network<float>(c, rng);
  EXPECT_EQ(net.parameter_count(), parameter_count(c));
  std::size_t sum = 0;
  for (std::size_t id = 0; id < net.tensor_count(); ++id) sum += net.tensor(id).size();
  EXPECT_EQ(sum, parameter_count(c));
}

TEST(Network, TensorNumberingAndNames) {
  const auto c = tiny_config();
  Rng rng(1);
  const auto net = init_network<float>(c, rng);
  EXPECT_EQ(net.tensor_count(), kSlots * 4);
  EXPECT_EQ(net.info(0).name, "gating.W0");
  EXPECT_TRUE(net.info(5).gating);
  EXPECT_EQ(net.info(6).name, "expert0.W0");
  EXPECT_EQ(net.info(6 + 6 * 2 + 3).name, "expert2.b1");
  EXPECT_FALSE(net.info(6 + 6 * 2 + 3).weight);
  EXPECT_EQ(&net.tensor(6 + 6 * 2 + 4), &net.experts[2][W2]);
}

TEST(Network, InitZeroBiasesAndXavierBounds) {
  const auto c = tiny_config();
  Rng rng(2);
  const auto net = init_network<float>(c, rng);
  for (std::size_t id = 0; id < net.tensor_count(); ++id) {
    const auto& t = net.tensor(id);
    if (!net.info(id).weight) {
      for (float v : t.data) EXPECT_EQ(v, 0.0f);
    } else {
      const double bound = std::sqrt(6.0 / static_cast<double>(t.rows + t.cols));
      for (float v : t.data) EXPECT_LE(std::abs(v), bound);
    }
  }
  Rng again(2);
  EXPECT_EQ(init_network<float>(c, again), net);
}

TEST(Network, ConfigValidationNamesField) {
  auto c = tiny_config();
  c.gating_indices = {0, 9};
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("gating_indices"), std::string::npos);
  }
  c = tiny_config();
  c.h_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.dropout_retention = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Network, GateIsDistribution) {
  const auto net = random_net(tiny_config(), 3);
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> x(5);
    for (auto& v : x) v = rng.normal();
    const auto w = gate(net, std::span<const double>(x));
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
    for (double v : w) EXPECT_GT(v, 0.0);
  }
}

TEST(Network, AllRoutesAgreeWithReference) {
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    const auto net = random_net(tiny_config(5, 7, 4, 3), seed);
    Rng rng(seed);
    Matrix<double> batch(6, 5);
    for (auto& v : batch.data) v = rng.normal();
    const auto pb = predict_batch(net, batch);
    for (std::size_t r = 0; r < batch.rows; ++r) {
      const std::vector<double> x(batch.row(r).begin(), batch.row(r).end());
      const auto ref = reference_forward(net, x);
      const auto p = predict(net, std::span<const double>(x));
      const auto w = gate(net, std::span<const double>(x));
      const auto mixed = predict_mixed(net, std::span<const double>(x), std::span<const double>(w));
      const SparseMoE<double> sparse(net);
      const auto sp = sparse.predict(x, sparse.gate(x));
      for (std::size_t k = 0; k < ref.size(); ++k) {
        EXPECT_NEAR(p[k], ref[k], 1e-12);
        EXPECT_NEAR(mixed[k], ref[k], 1e-12);
        EXPECT_NEAR(pb(r, k), ref[k], 1e-12);
        EXPECT_NEAR(sp[k], ref[k], 1e-12);
      }
    }
  }
}

TEST(Network, BlendIsConvexCombination) {
  const auto net = random_net(tiny_config(), 6);
  const std::vector<double> one_hot{0, 1, 0};
  EXPECT_EQ(blend(net.experts, std::span<const double>(one_hot)), net.experts[1]);
  const std::vector<double> bad{0.5, 0.5};
  EXPECT_THROW(blend(net.experts, std::span<const double>(bad)), ShapeError);
}

TEST(Network, DropoutOnlyInTrainMode) {
  const auto net = random_net(tiny_config(), 7);
  const std::vector<double> x{0.3, -1, 2, 0.5, 1};
  Rng a(1), b(1), c(2);
  const auto e1 = predict(net, std::span<const double>(x));
  const auto e2 = predict(net, std::span<const double>(x), Mode::eval, &a);
  EXPECT_EQ(e1, e2);
  const auto t1 = predict(net, std::span<const double>(x), Mode::train, &b);
  Rng b2(1);
  EXPECT_EQ(t1, predict(net, std::span<const double>(x), Mode::train, &b2));
  EXPECT_NE(t1, predict(net, std::span<const double>(x), Mode::train, &c));
}

TEST(Network, NonFiniteNamesLayer) {
  auto net = random_net(tiny_config(), 8);
  net.experts[1][W1].data[0] = std::numeric_limits<double>::infinity();
  const std::vector<double> x{0.3, -1, 2, 0.5, 1};
  try {
    predict(net, std::span<const double>(x));
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos);
  }
}

TEST(Network, NormalizationRoundTrip) {
  auto net = random_net(tiny_config(), 9);
  net.norm.in_mean = {1, 2, 3, 4, 5};
  net.norm.in_std = {2, 2, 2, 2, 2};
  net.norm.out_mean = {1, 1, 1, 1};
  net.norm.out_std = {3, 3, 3, 3};
  const std::vector<double> raw{3, 2, 1, 0, -1};
  EXPECT_EQ(normalize_input(net, std::span<const double>(raw)), (std::vector<double>{1, 0, -1, -2, -3}));
  const std::vector<double> y{0, 1, -1, 2};
  EXPECT_EQ(denormalize_output(net, std::span<const double>(y)), (std::vector<double>{1, 4, -2, 7}));
}

TEST(Network, CastPreservesValues) {
  const auto net = random_net(tiny_config(), 11);
  const auto f = net.cast<float>();
  EXPECT_EQ(f.cast<double>().config, net.config);
  EXPECT_FLOAT_EQ(f.experts[2][W0](1, 1), static_cast<float>(net.experts[2][W0](1, 1)));
}

TEST(Network, SingleExpertGateAndBlend) {
  const auto net = random_net(tiny_config(5, 6, 1, 4), 7);
  ASSERT_EQ(net.experts.size(), 1u);
  const std::vector<double> x{0.3, -1, 2, 0.5, -0.2};
  EXPECT_EQ(gate(net, std::span<const double>(x)), std::vector<double>{1.0});
  const std::vector<double> one{1.0};
  EXPECT_EQ(blend(net.experts, std::span<const double>(one)), net.experts[0]);
}

TEST(Network, DefaultDogParameterCountNearTarget) {
  const auto c = network_for_schema(build_schema());
  const double target = 178e6 / 32.0;
  EXPECT_NEAR(static_cast<double>(parameter_count(c)), target, 0.02 * target);
}

TEST(Network, ScalarBlendOfTwoExperts) {
  ExpertBank<double> bank(2, make_param_set<double>(1, 1, 1, 1));
  bank[0][B2].data = {1.0};
  bank[1][B2].data = {3.0};
  const std::vector<double> w{0.25, 0.75};
  EXPECT_DOUBLE_EQ(blend(bank, std::span<const double>(w))[B2].data[0], 2.5);
}

TEST(Network, ZeroWeightsGiveZeroOutput) {
  auto net = random_net(tiny_config(), 8);
  for (std::size_t id = 0; id < net.tensor_count(); ++id)
    for (auto& v : net.tensor(id).data) v = 0.0;
  const std::vector<double> x{1, 2, 3, 4, 5};
  EXPECT_EQ(predict(net, std::span<const double>(x)), std::vector<double>(4, 0.0));
}

TEST(Network, IdentitySlicesPassPositiveInputThrough) {
  NetworkConfig c = tiny_config(4, 4, 1, 2);
  c.d_out = 4;
  Rng rng(1);
  auto net = init_network<double>(c, rng);
  for (Slot s : {W0, W1, W2}) net.experts[0][s] = Matrix<double>::identity(4);
  const std::vector<double> x{0.5, 1, 2, 3};
  EXPECT_EQ(predict(net, std::span<const double>(x)), x);
}

TEST(Network, FloatSeedOneMatchesDoubleReference) {
  Rng rng(1);
  const auto net = init_network<float>(tiny_config(5, 7, 3, 4), rng);
  const std::vector<float> x{0.4f, -1.2f, 0.7f, 2.0f, -0.3f};
  const auto got = predict(net, std::span<const float>(x));
  const auto ref = reference_forward(net.cast<double>(), std::vector<double>(x.begin(), x.end()));
  for (std::size_t k = 0; k < ref.size(); ++k) EXPECT_NEAR(got[k], ref[k], 1e-5);
}
