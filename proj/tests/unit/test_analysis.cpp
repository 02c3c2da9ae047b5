#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "fusiongan/analysis.hpp"
#include "fusiongan/io.hpp"

using namespace fgan;

namespace {

TEST(Activation, Values) {
  EXPECT_EQ(ActivationFn::relu()(-2.0), 0.0);
  EXPECT_EQ(ActivationFn::relu()(0.0), 0.0);
  EXPECT_DOUBLE_EQ(ActivationFn::leaky_relu(0.2)(-2.0), -0.4);
  EXPECT_DOUBLE_EQ(ActivationFn::elu()(-1.0), std::expm1(-1.0));
  EXPECT_DOUBLE_EQ(ActivationFn::elu()(3.0), 3.0);
  EXPECT_EQ(ActivationFn::leaky_relu(0.01).name(), "leaky_relu(0.01)");
  EXPECT_THROW(parse_activation("leaky_relu", 1.5), ConfigError);
  EXPECT_THROW(parse_activation("swish", 0.1), ConfigError);
}

TEST(FusionInequality, HandExample) {
  // a = 2, b = -3: fused relu(2) + relu(-3) = 2, concat relu(-1) = 0.
  const auto inst = FusionInstance::from_preactivations({2.0, -1.0}, {-3.0, -1.0}, ActivationFn::relu());
  EXPECT_EQ(inst.fused_signal(), (std::vector<double>{2.0, 0.0}));
  EXPECT_EQ(inst.concat_signal(), (std::vector<double>{0.0, 0.0}));
  const auto r = check_fusion_inequality(inst);
  EXPECT_TRUE(r.holds);
  EXPECT_EQ(r.margin, (std::vector<double>{2.0, 0.0}));
}

TEST(FusionInequality, DetectsAViolation) {
  auto inst = FusionInstance::from_preactivations({1.0}, {1.0}, ActivationFn::relu());
  EXPECT_TRUE(check_fusion_inequality(inst).holds);
  inst.activation = ActivationFn::leaky_relu(0.2);
  EXPECT_THROW(check_fusion_inequality(inst), ConfigError);
}

TEST(FusionInequality, RandomSweepHasNoViolations) {
  const SweepReport r = sweep_fusion_inequality(2000, 3);
  EXPECT_EQ(r.trials, 2000);
  EXPECT_EQ(r.violations, 0);
  EXPECT_GE(r.min_margin, -kInequalityTolerance);
}

TEST(Lemma1, ApplicabilityAndHandExamples) {
  const auto agree = FusionInstance::from_preactivations({1.0, -1.0}, {2.0, -3.0},
                                                         ActivationFn::leaky_relu(0.2));
  const Lemma1Result r = check_lemma1(agree);
  EXPECT_TRUE(r.applicable);
  EXPECT_TRUE(r.holds);
  EXPECT_NEAR(r.margin[0], 0.0, 1e-12);
  const auto disagree = FusionInstance::from_preactivations({1.0}, {-2.0}, ActivationFn::leaky_relu(0.2));
  EXPECT_FALSE(check_lemma1(disagree).applicable);
  const auto elu = FusionInstance::from_preactivations({-1.0}, {-2.0}, ActivationFn::elu());
  const Lemma1Result e = check_lemma1(elu);
  EXPECT_TRUE(e.applicable);
  EXPECT_NEAR(e.margin[0], -std::expm1(-1.0) - std::expm1(-2.0) + std::expm1(-3.0), 1e-12);
  EXPECT_GT(e.margin[0], 0.0);
}

TEST(Lemma1, SweepsHaveNoViolations) {
  for (const ActivationFn act : {ActivationFn::leaky_relu(0.01), ActivationFn::leaky_relu(0.2),
                                 ActivationFn::elu()}) {
    const SweepReport r = sweep_lemma1(act, 2000, 9);
    EXPECT_GT(r.applicable, 0) << act.name();
    EXPECT_EQ(r.violations, 0) << act.name();
  }
}

TEST(Counterexample, HandFixture) {
  const auto inst = FusionInstance::from_preactivations({1.0}, {-2.0}, ActivationFn::leaky_relu(0.2));
  EXPECT_NEAR(inst.fused_signal()[0], 0.6, 1e-12);
  EXPECT_NEAR(inst.concat_signal()[0], -0.2, 1e-12);
  EXPECT_TRUE(is_leaky_counterexample(inst));
  const auto same_sign = FusionInstance::from_preactivations({1.0}, {2.0}, ActivationFn::leaky_relu(0.2));
  EXPECT_FALSE(is_leaky_counterexample(same_sign));
}

TEST(Counterexample, SearchSucceedsAcrossSeeds) {
  int found = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const auto inst = find_leaky_counterexample(0.2, rng, 1000);
    if (inst) {
      EXPECT_TRUE(is_leaky_counterexample(*inst));
      ++found;
    }
  }
  EXPECT_GE(found, 99);
  Rng rng(1);
  EXPECT_THROW(find_leaky_counterexample(1.0, rng, 10), ConfigError);
}

TEST(Decomposition, DenseLayerIdentity) {
  Rng rng(4);
  Matrix w(3, 6);
  for (double& v : w.data) v = rng.normal();
  const std::vector<double> b{0.5, -1.0, 2.0};
  const ConcatDecomposition dec = decompose_concat_layer(w, b);
  EXPECT_EQ(dec.U.cols, 3);
  EXPECT_EQ(dec.V.cols, 3);
  const std::vector<double> x{1.0, 2.0, -1.0};
  const std::vector<double> y{0.5, 0.0, 3.0};
  std::vector<double> xy = x;
  xy.insert(xy.end(), y.begin(), y.end());
  const auto direct = mat_vec(w, xy);
  const auto inst = dec.instance(x, y, ActivationFn::relu());
  const auto concat = inst.concat_signal();
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(concat[i], std::max(0.0, direct[i] + b[i]), 1e-12);
  const auto re = resplit_bias(dec, rng);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(re.c[i] + re.d[i], b[i], 1e-12);
  EXPECT_THROW(decompose_concat_layer(Matrix(2, 5), {0.0, 0.0}), ConfigError);
  EXPECT_NO_THROW(decompose_concat_layer(Matrix(2, 5), {0.0, 0.0}, 2));
}

TEST(Decomposition, ConvLayerMatchesConvolution) {
  const Discriminator d(DiscriminatorKind::Concat4, 3, 2, 6);
  Rng rng(5);
  const Tensor x = Tensor::randn({1, 3, 8, 8}, rng);
  const Tensor y = Tensor::randn({1, 2, 8, 8}, rng);
  const ConvLayer& first = *d.layers().front();
  const Tensor w = first.effective_weight();
  const Tensor pre = conv2d(concat_channels(x, y), w, first.params().bias, 2, 1);
  const ConcatDecomposition dec = decompose_concat_conv(w, first.params().bias, 3);
  const auto px = extract_patches(x, 4, 2, 1);
  const auto py = extract_patches(y, 4, 2, 1);
  ASSERT_EQ(px.size(), 16u);
  const ActivationFn identity = ActivationFn::leaky_relu(1.0);
  const int plane = 16;
  for (int pos = 0; pos < plane; ++pos) {
    const auto s = dec.instance(px[pos], py[pos], identity).concat_signal();
    for (int c = 0; c < static_cast<int>(s.size()); ++c) {
      EXPECT_NEAR(s[c], pre.data()[static_cast<std::size_t>(c) * plane + pos], 1e-4);
    }
  }
}

TEST(Decomposition, TrainedLayerCheckOnPair) {
  const Discriminator d(DiscriminatorKind::Concat4, 3, 5, 6);
  Rng rng(2);
  const Tensor x = Tensor::randn({1, 3, 16, 16}, rng);
  const Tensor y = Tensor::randn({1, 5, 16, 16}, rng);
  const LayerCheckReport r = check_concat_layer_on_pair(d, x, y, 2, rng);
  EXPECT_EQ(r.instances, 3 * 64);
  EXPECT_EQ(r.violations, 0);
  const Discriminator f(DiscriminatorKind::Fusion4, 3, 5, 6);
  EXPECT_THROW(check_concat_layer_on_pair(f, x, y, 0, rng), ConfigError);
}

TEST(GradCam, Contract) {
  const Discriminator d(DiscriminatorKind::Fusion4, 3, 3, 1);
  Rng rng(3);
  const Tensor x = Tensor::randn({1, 3, 32, 32}, rng);
  const Tensor y = Tensor::randn({1, 3, 32, 32}, rng);
  for (CamTarget target : {CamTarget::RealScore, CamTarget::FakeScore}) {
    const CamMap cam = grad_cam(d, x, y, "stage3", target);
    EXPECT_EQ(cam.height, 32);
    EXPECT_EQ(cam.width, 32);
    EXPECT_EQ(cam.source_layer, "stage3");
    for (double v : cam.heatmap) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_TRUE(cam.max() == 0.0 || std::fabs(cam.max() - 1.0) < 1e-12);
  }
  for (const ConvLayer* l : d.layers()) {
    const Tensor& w = l->params().weight;
    if (w.has_grad()) {
      for (float g : w.grad()) EXPECT_EQ(g, 0.0f);
    }
  }
  EXPECT_THROW(grad_cam(d, x, y, "stage7", CamTarget::RealScore), ConfigError);
  EXPECT_THROW(grad_cam(d, Tensor::zeros({2, 3, 32, 32}), Tensor::zeros({2, 3, 32, 32}), "stage1",
                        CamTarget::RealScore),
               DimensionError);
}

TEST(GradCam, PgmAndMass) {
  CamMap cam;
  cam.height = 2;
  cam.width = 2;
  cam.heatmap = {1.0, 0.5, 0.0, 0.5};
  EXPECT_DOUBLE_EQ(foreground_mass_fraction(cam, {true, false, false, true}), 0.75);
  EXPECT_DOUBLE_EQ(foreground_mass_fraction(CamMap{1, 1, {0.0}}, {true}), 0.0);
  const auto path = std::filesystem::temp_directory_path() / "fusiongan_cam_test.pgm";
  write_cam_pgm(path, cam);
  const PnmImage img = read_pnm(path);
  EXPECT_EQ(img.width, 2);
  EXPECT_EQ(img.height, 2);
  EXPECT_EQ(img.channels, 1);
  EXPECT_EQ(img.maxval, 255);
  EXPECT_EQ(img.samples, (std::vector<std::uint16_t>{255, 128, 0, 128}));
  std::filesystem::remove(path);
}

TEST(GradCam, TargetNames) {
  EXPECT_EQ(parse_cam_target("real"), CamTarget::RealScore);
  EXPECT_EQ(parse_cam_target("fake"), CamTarget::FakeScore);
  EXPECT_THROW(parse_cam_target("both"), ConfigError);
}

}  // namespace
