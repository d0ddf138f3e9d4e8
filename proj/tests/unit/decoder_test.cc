#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "adaptvc/decoder.h"
#include "adaptvc/flow.h"
#include "adaptvc/grad_check.h"
#include "adaptvc/ops.h"

namespace adaptvc {

void PrintTo(Conditioning c, std::ostream* os) { *os << to_string(c); }

namespace {

const Scalar kLog2Pi = std::log(2.0 * std::numbers::pi);

DecoderConfig small_config(Conditioning c = Conditioning::kCrossAttention) {
  DecoderConfig cfg;
  cfg.mel_bins = 6;
  cfg.feature_dim = 4;
  cfg.hidden = 8;
  cfg.heads = 2;
  cfg.time_dim = 8;
  cfg.conditioning = c;
  return cfg;
}

TEST(FlowPath, EndpointsAreExact) {
  Rng rng(1);
  const Tensor x0 = rng.normal_tensor({3, 5}), x1 = rng.normal_tensor({3, 5});
  EXPECT_EQ(ot_flow_point(x0, x1, 0.0, 1e-4), x0);
  EXPECT_EQ(ot_flow_point(x0, x1, 1.0, 0.0), x1);
  const Tensor end = ot_flow_point(x0, x1, 1.0, 0.1);
  for (int64_t i = 0; i < end.size(); ++i) EXPECT_DOUBLE_EQ(end[i], 0.1 * x0[i] + x1[i]);
}

TEST(FlowPath, HandEvaluatedMidpoint) {
  EXPECT_DOUBLE_EQ(ot_flow_point(Tensor::scalar(0), Tensor::scalar(2), 0.5, 0.0).item(), 1.0);
}

TEST(FlowPath, RejectsTimeOutsideUnitInterval) {
  EXPECT_THROW(ot_flow_point(Tensor::scalar(0), Tensor::scalar(1), 1.5, 0.0),
               std::invalid_argument);
  EXPECT_THROW(ot_flow_point(Tensor::scalar(0), Tensor::scalar(1), -0.1, 0.0),
               std::invalid_argument);
}

TEST(TargetField, Examples) {
  EXPECT_DOUBLE_EQ(ot_target_field(Tensor::scalar(3), Tensor::scalar(5), 0.0).item(), 2.0);
  EXPECT_DOUBLE_EQ(ot_target_field(Tensor::scalar(1), Tensor::scalar(0), 0.1).item(), -0.9);
  EXPECT_THROW(ot_target_field(Tensor({2}), Tensor({3}), 0.0), std::invalid_argument);
}

TEST(TargetField, MatchesFiniteDifferenceOfPath) {
  Rng rng(2);
  const Scalar h = 1e-4;
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor x0 = rng.normal_tensor({2, 3}), x1 = rng.normal_tensor({2, 3});
    const Scalar t = rng.uniform(h, 1 - h), s = rng.uniform(0, 0.5);
    const Tensor a = ot_flow_point(x0, x1, t + h, s), b = ot_flow_point(x0, x1, t - h, s);
    const Tensor u = ot_target_field(x0, x1, s);
    for (int64_t i = 0; i < u.size(); ++i) EXPECT_NEAR((a[i] - b[i]) / (2 * h), u[i], 1e-5);
  }
}

TEST(FlowConfig, Validation) {
  FlowConfig cfg;
  cfg.steps = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.steps = 1;
  cfg.sigma_min = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_EQ(flow_source_from_string("prior-mean"), FlowSource::kPriorMean);
  EXPECT_THROW(flow_source_from_string("gaussian"), std::invalid_argument);
}

TEST(CfmLoss, OracleFieldGivesZero) {
  Rng rng(3);
  const Tensor x1 = rng.normal_tensor({5, 4});
  FlowConfig cfg;
  // The oracle recovers x0 from phi_t and returns the exact target.
  TapeField oracle = [&](Tape& tape, Var x_t, const Tensor& t) {
    const Scalar tt = t[0];
    const Scalar a = 1 - (1 - cfg.sigma_min) * tt;
    Tensor u(x1.shape());
    for (int64_t i = 0; i < u.size(); ++i) {
      const Scalar x0 = (x_t.value()[i] - tt * x1[i]) / a;
      u[i] = x1[i] - (1 - cfg.sigma_min) * x0;
    }
    return tape.constant(u);
  };
  for (int trial = 0; trial < 20; ++trial) {
    Tape tape;
    EXPECT_NEAR(cfm_loss(tape, x1, oracle, rng, cfg).value().item(), 0.0, 1e-20);
  }
}

TEST(CfmLoss, ZeroFieldMatchesMonteCarloExpectation) {
  Rng rng(4);
  const Tensor x1 = rng.normal_tensor({10, 8}, 2.0);
  Scalar mean_sq = 0;
  for (int64_t i = 0; i < x1.size(); ++i) mean_sq += x1[i] * x1[i] / x1.size();
  FlowConfig cfg;
  cfg.sigma_min = 0;
  TapeField zero = [](Tape& tape, Var x_t, const Tensor&) {
    return tape.constant(Tensor::zeros_like(x_t.value()));
  };
  Scalar acc = 0;
  const int draws = 400;
  for (int i = 0; i < draws; ++i) {
    Tape tape;
    const Scalar l = cfm_loss(tape, x1, zero, rng, cfg).value().item();
    EXPECT_GE(l, 0.0);
    acc += l / draws;
  }
  EXPECT_NEAR(acc, mean_sq + 1.0, 0.05 * (mean_sq + 1.0));
}

TEST(CfmLoss, PriorMeanSourceShiftsNoise) {
  Rng rng(5);
  FlowConfig cfg;
  cfg.source = FlowSource::kPriorMean;
  const Tensor mean({200, 3}, 7.0);
  const Tensor x0 = draw_source(200, 3, rng, cfg, &mean);
  Scalar avg = 0;
  for (int64_t i = 0; i < x0.size(); ++i) avg += x0[i] / x0.size();
  EXPECT_NEAR(avg, 7.0, 0.2);
  EXPECT_THROW(draw_source(2, 3, rng, cfg, nullptr), std::invalid_argument);
}

TEST(Euler, ConstantFieldTelescopes) {
  const Tensor x0 = Tensor::matrix(1, 2, {0.5, -1.0});
  for (int n : {1, 3, 7, 32}) {
    const Tensor x = euler_integrate(x0, n, [](const Tensor& x, Scalar) {
      return Tensor(x.shape(), 2.0);
    });
    EXPECT_NEAR(x[0], 2.5, 1e-12);
    EXPECT_NEAR(x[1], 1.0, 1e-12);
  }
}

TEST(Euler, SingleStepEvaluatesAtTimeZero) {
  std::vector<Scalar> times;
  const Tensor x = euler_integrate(Tensor::scalar(1.0), 1, [&](const Tensor& x, Scalar t) {
    times.push_back(t);
    return Tensor(x.shape(), 3.0 * x.item());
  });
  EXPECT_EQ(times, std::vector<Scalar>{0.0});
  EXPECT_DOUBLE_EQ(x.item(), 4.0);
  EXPECT_THROW(euler_integrate(Tensor::scalar(1.0), 0, {}), std::invalid_argument);
}

TEST(PriorLoss, AnalyticConstant) {
  const Tensor mu({1, 80}, 0.3);
  EXPECT_NEAR(prior_loss(mu, mu), 40 * kLog2Pi, 1e-9);
  EXPECT_NEAR(40 * kLog2Pi, 73.5151, 1e-4);
  Tensor x = mu;
  for (int64_t i = 0; i < x.size(); ++i) x[i] += 1.0;
  EXPECT_NEAR(prior_loss(mu, x), 40 * kLog2Pi + 40, 1e-9);
}

TEST(PriorLoss, AdditiveOverFrames) {
  Rng rng(6);
  const Tensor mu = rng.normal_tensor({1, 80}), x = rng.normal_tensor({1, 80});
  Tensor mu2({2, 80}), x2({2, 80});
  for (int64_t j = 0; j < 80; ++j) {
    mu2.at(0, j) = mu2.at(1, j) = mu[j];
    x2.at(0, j) = x2.at(1, j) = x[j];
  }
  EXPECT_NEAR(prior_loss(mu2, x2), 2 * prior_loss(mu, x), 1e-9);
  EXPECT_THROW(prior_loss(mu, mu2), std::invalid_argument);
}

TEST(PriorLoss, ExcessOverConstantIsHalfSquaredResidual) {
  Rng rng(7);
  const Tensor mu = rng.normal_tensor({9, 80}), x = rng.normal_tensor({9, 80});
  Scalar half_sq = 0;
  for (int64_t i = 0; i < mu.size(); ++i) half_sq += 0.5 * (x[i] - mu[i]) * (x[i] - mu[i]);
  EXPECT_NEAR(prior_loss(mu, x) - prior_loss_constant(9, 80), half_sq, 1e-9);
}

TEST(Saln, IdentityStyleGivesLayerNorm) {
  Tape tape;
  Rng rng(8);
  Var f = tape.constant(rng.normal_tensor({4, 3}));
  Var style = tape.constant(rng.normal_tensor({1, 2}));
  Var zeros = tape.constant(Tensor({2, 3}));
  Var out = saln_condition(f, style, zeros, tape.constant(Tensor({3}, 1.0)), zeros,
                           tape.constant(Tensor({3})));
  EXPECT_EQ(out.value(), ops::layer_norm(f).value());
}

TEST(Saln, ConstantFrameNormalizesToZero) {
  Tape tape;
  Var f = tape.constant(Tensor({2, 4}, 5.0));
  Var w = tape.constant(Tensor({1, 4}));
  Var out = saln_condition(f, tape.constant(Tensor({1, 1})), w, tape.constant(Tensor({4}, 1.0)),
                           w, tape.constant(Tensor({4})));
  for (int64_t i = 0; i < out.value().size(); ++i) EXPECT_EQ(out.value()[i], 0.0);
}

class FusionTest : public ::testing::Test {
 protected:
  DecoderConfig cfg = [] {
    DecoderConfig c;
    c.feature_dim = 8;
    return c;
  }();
  ParameterStore store;
  Rng rng{9};
};

TEST_F(FusionTest, OutputFollowsContentLength) {
  PriorFusion fusion(cfg, store, rng);
  const Tensor mu = fusion.fuse(rng.normal_tensor({50, 8}), rng.normal_tensor({73, 8}));
  EXPECT_EQ(mu.shape(), (Shape{50, 80}));
}

TEST_F(FusionTest, SingleKeyIgnoresQuery) {
  PriorFusion fusion(cfg, store, rng);
  const Tensor mu = fusion.fuse(rng.normal_tensor({6, 8}), rng.normal_tensor({1, 8}));
  for (int64_t t = 1; t < 6; ++t) {
    for (int64_t j = 0; j < 80; ++j) EXPECT_NEAR(mu.at(t, j), mu.at(0, j), 1e-12);
  }
}

TEST_F(FusionTest, PermutingIdenticalRowsLeavesPriorUnchanged) {
  PriorFusion fusion(cfg, store, rng);
  const Tensor content = rng.normal_tensor({5, 8});
  const Tensor a = rng.normal_tensor({1, 8}), b = rng.normal_tensor({1, 8});
  Tensor spk1({3, 8}), spk2({3, 8});
  for (int64_t j = 0; j < 8; ++j) {
    spk1.at(0, j) = a[j];
    spk1.at(1, j) = a[j];
    spk1.at(2, j) = b[j];
    spk2.at(0, j) = a[j];
    spk2.at(1, j) = b[j];
    spk2.at(2, j) = a[j];
  }
  const Tensor m1 = fusion.fuse(content, spk1), m2 = fusion.fuse(content, spk2);
  for (int64_t i = 0; i < m1.size(); ++i) EXPECT_NEAR(m1[i], m2[i], 1e-12);
}

TEST_F(FusionTest, AttentionRowsSumToOne) {
  PriorFusion fusion(cfg, store, rng);
  Tape tape;
  AttentionProbe probe;
  fusion.forward(tape, tape.constant(rng.normal_tensor({7, 8})),
                 tape.constant(rng.normal_tensor({11, 8})), &probe);
  ASSERT_EQ(probe.weights.size(), 1u);
  for (int64_t r = 0; r < 7; ++r) {
    Scalar s = 0;
    for (int64_t c = 0; c < 11; ++c) s += probe.weights[0].at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST_F(FusionTest, DimensionMismatchRejected) {
  PriorFusion fusion(cfg, store, rng);
  EXPECT_THROW(fusion.fuse(rng.normal_tensor({5, 7}), rng.normal_tensor({3, 8})),
               std::invalid_argument);
}

TEST(VectorField, OutputShapeMatchesInput) {
  for (Conditioning c : {Conditioning::kCrossAttention, Conditioning::kSaln, Conditioning::kMeanAdd}) {
    ParameterStore store;
    Rng rng(10);
    DecoderConfig cfg;
    cfg.feature_dim = 16;
    cfg.hidden = 32;
    cfg.conditioning = c;
    VectorFieldNet net(cfg, store, rng);
    for (int64_t t : {8, 50, 64, 3}) {
      const Tensor v = net.evaluate(rng.normal_tensor({t, 80}), 0.3, rng.normal_tensor({t, 80}),
                                    rng.normal_tensor({13, 16}));
      EXPECT_EQ(v.shape(), (Shape{t, 80})) << to_string(c);
      EXPECT_TRUE(v.all_finite());
    }
  }
}

TEST(VectorField, SpeakerConditioningChangesOutput) {
  ParameterStore store;
  Rng rng(11);
  DecoderConfig cfg;
  cfg.feature_dim = 16;
  cfg.hidden = 32;
  VectorFieldNet net(cfg, store, rng);
  const Tensor x = rng.normal_tensor({20, 80}), mu = rng.normal_tensor({20, 80});
  const Tensor a = net.evaluate(x, 0.5, mu, rng.normal_tensor({15, 16}));
  const Tensor b = net.evaluate(x, 0.5, mu, rng.normal_tensor({15, 16}));
  Scalar diff = 0;
  for (int64_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  EXPECT_GT(diff, 0.0);
}

TEST(VectorField, AttentionRowsSumToOne) {
  ParameterStore store;
  Rng rng(12);
  const DecoderConfig cfg = small_config();
  VectorFieldNet net(cfg, store, rng);
  Tape tape;
  AttentionProbe probe;
  Var h = tape.constant(rng.normal_tensor({9, 4}));
  net.forward(tape, tape.constant(rng.normal_tensor({12, 6})), 0.2,
              tape.constant(rng.normal_tensor({12, 6})), net.prepare(tape, h), &probe);
  // heads x (down + mid + up) blocks
  EXPECT_EQ(probe.weights.size(), static_cast<size_t>(2 * (2 * 2 + 1 + 2 * 2)));
  for (const Tensor& w : probe.weights) {
    for (int64_t r = 0; r < w.rows(); ++r) {
      Scalar s = 0;
      for (int64_t c = 0; c < w.cols(); ++c) s += w.at(r, c);
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(VectorField, RejectsBadInputs) {
  ParameterStore store;
  Rng rng(13);
  const DecoderConfig cfg = small_config();
  VectorFieldNet net(cfg, store, rng);
  Tensor x = rng.normal_tensor({4, 6});
  const Tensor spk = rng.normal_tensor({3, 4});
  EXPECT_THROW(net.evaluate(x, 0.5, rng.normal_tensor({5, 6}), spk), std::invalid_argument);
  EXPECT_THROW(net.evaluate(x, 0.5, x, rng.normal_tensor({3, 5})), std::invalid_argument);
  Tensor bad = x;
  bad[2] = std::nan("");
  EXPECT_THROW(net.evaluate(bad, 0.5, x, spk), std::invalid_argument);
}

class VectorFieldGradient : public ::testing::TestWithParam<Conditioning> {};

TEST_P(VectorFieldGradient, MatchesFiniteDifferences) {
  ParameterStore store;
  Rng rng(14);
  VectorFieldNet net(small_config(GetParam()), store, rng);
  const Tensor x = rng.normal_tensor({4, 6}), mu = rng.normal_tensor({4, 6});
  const Tensor spk = rng.normal_tensor({3, 4}), target = rng.normal_tensor({4, 6});
  auto fn = [&](Tape& t) {
    Var v = net.forward(t, t.constant(x), 0.37, t.constant(mu), t.constant(spk));
    return ops::mse(v, t.constant(target));
  };
  GradCheckOptions opts;
  opts.max_elements_per_param = 6;
  const GradCheckResult r = grad_check(fn, store.all(), opts);
  EXPECT_LT(r.max_relative_error, 1e-3) << r.worst_parameter << "[" << r.worst_index << "]";
}

INSTANTIATE_TEST_SUITE_P(AllConditions, VectorFieldGradient,
                         ::testing::Values(Conditioning::kCrossAttention, Conditioning::kSaln,
                                           Conditioning::kMeanAdd),
                         [](const auto& info) {
                           std::string name = to_string(info.param);
                           std::replace(name.begin(), name.end(), '-', '_');
                           return name;
                         });

TEST(Sampler, ConstantFieldNetworkStub) {
  // With zeroed output weights the field is the output bias everywhere.
  ParameterStore store;
  Rng rng(15);
  const DecoderConfig cfg = small_config();
  VectorFieldNet net(cfg, store, rng);
  store.get("decoder.out.weight").value = Tensor({8, 6});
  store.get("decoder.out.bias").value = Tensor({6}, 0.25);
  const Tensor mu = rng.normal_tensor({5, 6}), spk = rng.normal_tensor({2, 4});
  for (int n : {1, 4, 10}) {
    FlowConfig flow;
    flow.steps = n;
    Rng a(99), b(99);
    const Tensor x = net.sample(mu, spk, flow, a);
    const Tensor x0 = draw_source(5, 6, b, flow, &mu);
    for (int64_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x[i], x0[i] + 0.25, 1e-12);
  }
}

TEST(MlpField, GradientMatchesFiniteDifferences) {
  ParameterStore store;
  Rng rng(16);
  MlpField field(2, 8, 4, store, rng);
  const Tensor x1 = rng.normal_tensor({5, 2});
  auto fn = [&](Tape& t) {
    Rng r(3);
    return cfm_loss(t, x1, std::cref(field), r, {}, {.time_per_row = true});
  };
  EXPECT_LT(grad_check(fn, store.all()).max_relative_error, 1e-3);
}

}  // namespace
}  // namespace adaptvc
