#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fusiongan/discriminator.hpp"
#include "fusiongan/rng.hpp"

namespace fgan {

enum class ActivationKind { Relu, LeakyRelu, Elu };

// Scalar activation evaluated in double precision.
struct ActivationFn {
  ActivationKind kind = ActivationKind::Relu;
  double alpha = 0.0;  // leaky slope or ELU scale

  static ActivationFn relu() { return {ActivationKind::Relu, 0.0}; }
  static ActivationFn leaky_relu(double alpha) { return {ActivationKind::LeakyRelu, alpha}; }
  static ActivationFn elu(double alpha = 1.0) { return {ActivationKind::Elu, alpha}; }

  double operator()(double z) const;
  std::string name() const;
};

ActivationFn parse_activation(std::string_view name, double alpha);

// Dense row-major matrix.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
  double& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
  static Matrix identity(int n);
};

std::vector<double> mat_vec(const Matrix& m, const std::vector<double>& v);

// One stage of a two-input layer: the concatenated form computes
// act(U x + V y + c + d), the fused form act(U x + c) + act(V y + d).
struct FusionInstance {
  std::vector<double> x;
  std::vector<double> y;
  Matrix U;
  Matrix V;
  std::vector<double> c;
  std::vector<double> d;
  ActivationFn activation;

  // Instance with identity weights and zero bias whose branch
  // pre-activations are exactly `a` and `b`.
  static FusionInstance from_preactivations(const std::vector<double>& a,
                                            const std::vector<double>& b, ActivationFn act);

  void validate() const;
  int output_dim() const { return U.rows; }
  std::vector<double> branch_x() const;  // U x + c
  std::vector<double> branch_y() const;  // V y + d
  std::vector<double> concat_signal() const;
  std::vector<double> fused_signal() const;
};

// Gaussian instance: entries of x, y, U, V, c, d all ~ N(0, 1).
FusionInstance random_instance(Rng& rng, int x_dim, int y_dim, int out_dim, ActivationFn act);

inline constexpr double kInequalityTolerance = 1e-6;

struct InequalityResult {
  bool holds = true;
  std::vector<double> margin;  // fused - concat
};

// ReLU only: fused >= concat - 1e-6 elementwise.
InequalityResult check_fusion_inequality(const FusionInstance& inst);

struct Lemma1Result {
  bool applicable = false;  // branch activations agree in sign at every element
  bool holds = true;        // meaningful only when applicable
  std::vector<double> margin;  // |act(a)| + |act(b)| - |act(a + b)|
};

Lemma1Result check_lemma1(const FusionInstance& inst);

// Sign disagreement between the two branch activations at some element where
// |fused| > |concat|.
bool is_leaky_counterexample(const FusionInstance& inst);

std::optional<FusionInstance> find_leaky_counterexample(double alpha, Rng& rng, int max_trials);

struct SweepReport {
  int trials = 0;
  int applicable = 0;
  int violations = 0;
  double min_margin = 0.0;  // smallest margin seen over checked elements
};

SweepReport sweep_fusion_inequality(int trials, std::uint64_t seed, int x_dim = 4, int y_dim = 4,
                                    int out_dim = 8);
SweepReport sweep_lemma1(ActivationFn act, int trials, std::uint64_t seed, int x_dim = 4,
                         int y_dim = 4);

// ---------------------------------------------------------------------------
// Weight decomposition of a concatenation layer.

struct ConcatDecomposition {
  Matrix U;
  Matrix V;
  std::vector<double> c;
  std::vector<double> d;

  FusionInstance instance(const std::vector<double>& x, const std::vector<double>& y,
                          ActivationFn act) const;
};

// Splits the columns of W at `split` (default: half) and the bias evenly.
ConcatDecomposition decompose_concat_layer(const Matrix& weight, const std::vector<double>& bias,
                                           std::optional<int> split = std::nullopt);

// Re-splits the bias as c = t * b, d = (1 - t) * b with t ~ U(-1, 2) per element.
ConcatDecomposition resplit_bias(const ConcatDecomposition& dec, Rng& rng);

// Conv weight (C_out, C_x + C_y, k, k) matricized over im2col patches; the
// split point is x_channels * k * k.
ConcatDecomposition decompose_concat_conv(const Tensor& weight, const Tensor& bias,
                                          int x_channels);

// Flattened (C, k, k) patches of a 1 x C x H x W image, one per output
// position, in row-major position order.
std::vector<std::vector<double>> extract_patches(const Tensor& image, int kernel, int stride,
                                                 int pad);

struct LayerCheckReport {
  std::int64_t instances = 0;
  std::int64_t elements = 0;
  std::int64_t violations = 0;
  double min_margin = 0.0;
};

// Checks the ReLU inequality at every output position of the first layer of a
// concatenation discriminator for one (x, y) pair. `extra_splits` random bias
// splits are checked in addition to the even split.
LayerCheckReport check_concat_layer_on_pair(const Discriminator& net, const Tensor& x,
                                            const Tensor& y, int extra_splits, Rng& rng);

// ---------------------------------------------------------------------------
// Grad-CAM

enum class CamTarget { RealScore, FakeScore };

std::string to_string(CamTarget t);
CamTarget parse_cam_target(std::string_view name);

struct CamMap {
  int height = 0;
  int width = 0;
  std::vector<double> heatmap;  // row-major, values in [0, 1]
  std::string source_layer;
  CamTarget target = CamTarget::RealScore;

  double at(int i, int j) const { return heatmap[static_cast<std::size_t>(i) * width + j]; }
  double max() const;
};

// Target score is the mean patch logit (negated for FakeScore). Channel
// weights are the spatial means of d(score)/d(features); the map is
// relu(sum_k weight_k * feature_k), scaled to max 1 and upsampled (nearest)
// to the input size. x and y must hold a single sample.
CamMap grad_cam(const Discriminator& net, const Tensor& x, const Tensor& y,
                const std::string& layer, CamTarget target);

// Share of heatmap mass on pixels where mask is true; 0 for an empty map.
double foreground_mass_fraction(const CamMap& cam, const std::vector<bool>& mask);

// 8-bit P5 image, value round(255 * v).
void write_cam_pgm(const std::filesystem::path& path, const CamMap& cam);

}  // namespace fgan
