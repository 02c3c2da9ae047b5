#include "fusiongan/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "fusiongan/io.hpp"

namespace fgan {

double ActivationFn::operator()(double z) const {
  switch (kind) {
    case ActivationKind::Relu: return z > 0.0 ? z : 0.0;
    case ActivationKind::LeakyRelu: return z >= 0.0 ? z : alpha * z;
    case ActivationKind::Elu: return z >= 0.0 ? z : alpha * std::expm1(z);
  }
  return z;
}

namespace {

std::string format_alpha(double alpha) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", alpha);
  return buf;
}

}  // namespace

std::string ActivationFn::name() const {
  switch (kind) {
    case ActivationKind::Relu: return "relu";
    case ActivationKind::LeakyRelu: return "leaky_relu(" + format_alpha(alpha) + ")";
    case ActivationKind::Elu: return "elu(" + format_alpha(alpha) + ")";
  }
  return "?";
}

ActivationFn parse_activation(std::string_view name, double alpha) {
  if (name == "relu") return ActivationFn::relu();
  if (name == "leaky_relu" || name == "leaky") {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("leaky_relu alpha must lie in (0, 1)");
    return ActivationFn::leaky_relu(alpha);
  }
  if (name == "elu") {
    if (!(alpha > 0.0)) throw ConfigError("elu alpha must be positive");
    return ActivationFn::elu(alpha);
  }
  throw ConfigError("unknown activation '" + std::string(name) +
                    "' (allowed: relu, leaky_relu, elu)");
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::vector<double> mat_vec(const Matrix& m, const std::vector<double>& v) {
  if (static_cast<int>(v.size()) != m.cols) {
    throw DimensionError("matrix " + std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                         " times vector of length " + std::to_string(v.size()));
  }
  std::vector<double> out(m.rows, 0.0);
  for (int i = 0; i < m.rows; ++i) {
    const double* row = m.data.data() + static_cast<std::size_t>(i) * m.cols;
    double acc = 0.0;
    for (int j = 0; j < m.cols; ++j) acc += row[j] * v[j];
    out[i] = acc;
  }
  return out;
}

FusionInstance FusionInstance::from_preactivations(const std::vector<double>& a,
                                                   const std::vector<double>& b,
                                                   ActivationFn act) {
  if (a.size() != b.size()) throw DimensionError("branch pre-activations differ in length");
  const int n = static_cast<int>(a.size());
  FusionInstance inst;
  inst.x = a;
  inst.y = b;
  inst.U = Matrix::identity(n);
  inst.V = Matrix::identity(n);
  inst.c.assign(n, 0.0);
  inst.d.assign(n, 0.0);
  inst.activation = act;
  return inst;
}

void FusionInstance::validate() const {
  if (U.rows != V.rows) {
    throw DimensionError("U has " + std::to_string(U.rows) + " outputs but V has " +
                         std::to_string(V.rows));
  }
  if (static_cast<int>(c.size()) != U.rows || static_cast<int>(d.size()) != U.rows) {
    throw DimensionError("bias length must equal the output dimension " + std::to_string(U.rows));
  }
  if (static_cast<int>(x.size()) != U.cols || static_cast<int>(y.size()) != V.cols) {
    throw DimensionError("feature vector lengths do not match U/V columns");
  }
}

std::vector<double> FusionInstance::branch_x() const {
  std::vector<double> a = mat_vec(U, x);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += c[i];
  return a;
}

std::vector<double> FusionInstance::branch_y() const {
  std::vector<double> b = mat_vec(V, y);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] += d[i];
  return b;
}

std::vector<double> FusionInstance::concat_signal() const {
  validate();
  std::vector<double> a = branch_x();
  const std::vector<double> b = branch_y();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = activation(a[i] + b[i]);
  return a;
}

std::vector<double> FusionInstance::fused_signal() const {
  validate();
  std::vector<double> a = branch_x();
  const std::vector<double> b = branch_y();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = activation(a[i]) + activation(b[i]);
  return a;
}

namespace {

std::vector<double> gaussian_vector(Rng& rng, int n) {
  std::vector<double> v(n);
  for (auto& e : v) e = rng.normal();
  return v;
}

Matrix gaussian_matrix(Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (auto& e : m.data) e = rng.normal();
  return m;
}

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

FusionInstance random_instance(Rng& rng, int x_dim, int y_dim, int out_dim, ActivationFn act) {
  FusionInstance inst;
  inst.x = gaussian_vector(rng, x_dim);
  inst.y = gaussian_vector(rng, y_dim);
  inst.U = gaussian_matrix(rng, out_dim, x_dim);
  inst.V = gaussian_matrix(rng, out_dim, y_dim);
  inst.c = gaussian_vector(rng, out_dim);
  inst.d = gaussian_vector(rng, out_dim);
  inst.activation = act;
  return inst;
}

InequalityResult check_fusion_inequality(const FusionInstance& inst) {
  if (inst.activation.kind != ActivationKind::Relu) {
    throw ConfigError("the fusion inequality is stated for relu, got " + inst.activation.name());
  }
  const auto fused = inst.fused_signal();
  const auto concat = inst.concat_signal();
  InequalityResult r;
  r.margin.resize(fused.size());
  for (std::size_t i = 0; i < fused.size(); ++i) {
    r.margin[i] = fused[i] - concat[i];
    if (r.margin[i] < -kInequalityTolerance) r.holds = false;
  }
  return r;
}

Lemma1Result check_lemma1(const FusionInstance& inst) {
  inst.validate();
  const auto a = inst.branch_x();
  const auto b = inst.branch_y();
  const ActivationFn& act = inst.activation;
  Lemma1Result r;
  r.applicable = true;
  r.margin.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double sa = act(a[i]);
    const double sb = act(b[i]);
    if (sign_of(sa) != sign_of(sb)) r.applicable = false;
    r.margin[i] = std::fabs(sa) + std::fabs(sb) - std::fabs(act(a[i] + b[i]));
  }
  if (r.applicable) {
    for (double m : r.margin) {
      if (m < -kInequalityTolerance) r.holds = false;
    }
  }
  return r;
}

bool is_leaky_counterexample(const FusionInstance& inst) {
  inst.validate();
  const auto a = inst.branch_x();
  const auto b = inst.branch_y();
  const ActivationFn& act = inst.activation;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double sa = act(a[i]);
    const double sb = act(b[i]);
    if (sign_of(sa) * sign_of(sb) >= 0) continue;
    if (std::fabs(sa + sb) > std::fabs(act(a[i] + b[i]))) return true;
  }
  return false;
}

std::optional<FusionInstance> find_leaky_counterexample(double alpha, Rng& rng, int max_trials) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("counterexample search needs 0 < alpha < 1, got " + std::to_string(alpha));
  }
  const ActivationFn act = ActivationFn::leaky_relu(alpha);
  for (int t = 0; t < max_trials; ++t) {
    FusionInstance inst = random_instance(rng, 3, 3, 1, act);
    if (is_leaky_counterexample(inst)) return inst;
  }
  return std::nullopt;
}

SweepReport sweep_fusion_inequality(int trials, std::uint64_t seed, int x_dim, int y_dim,
                                    int out_dim) {
  SweepReport rep;
  double min_margin = std::numeric_limits<double>::infinity();
  for (int t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    const FusionInstance inst = random_instance(rng, x_dim, y_dim, out_dim, ActivationFn::relu());
    const InequalityResult r = check_fusion_inequality(inst);
    ++rep.trials;
    ++rep.applicable;
    if (!r.holds) ++rep.violations;
    for (double m : r.margin) min_margin = std::min(min_margin, m);
  }
  rep.min_margin = std::isfinite(min_margin) ? min_margin : 0.0;
  return rep;
}

SweepReport sweep_lemma1(ActivationFn act, int trials, std::uint64_t seed, int x_dim, int y_dim) {
  SweepReport rep;
  double min_margin = std::numeric_limits<double>::infinity();
  for (int t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    const FusionInstance inst = random_instance(rng, x_dim, y_dim, 1, act);
    const Lemma1Result r = check_lemma1(inst);
    ++rep.trials;
    if (!r.applicable) continue;
    ++rep.applicable;
    if (!r.holds) ++rep.violations;
    for (double m : r.margin) min_margin = std::min(min_margin, m);
  }
  rep.min_margin = std::isfinite(min_margin) ? min_margin : 0.0;
  return rep;
}

// ---------------------------------------------------------------------------

FusionInstance ConcatDecomposition::instance(const std::vector<double>& x,
                                             const std::vector<double>& y,
                                             ActivationFn act) const {
  FusionInstance inst;
  inst.x = x;
  inst.y = y;
  inst.U = U;
  inst.V = V;
  inst.c = c;
  inst.d = d;
  inst.activation = act;
  return inst;
}

ConcatDecomposition decompose_concat_layer(const Matrix& weight, const std::vector<double>& bias,
                                           std::optional<int> split) {
  if (static_cast<int>(bias.size()) != weight.rows) {
    throw DimensionError("bias length " + std::to_string(bias.size()) + " does not match " +
                         std::to_string(weight.rows) + " weight rows");
  }
  int s = 0;
  if (split) {
    s = *split;
  } else {
    if (weight.cols % 2 != 0) {
      throw ConfigError("weight has " + std::to_string(weight.cols) +
                        " input columns; an uneven x/y split needs an explicit split point");
    }
    s = weight.cols / 2;
  }
  if (s <= 0 || s >= weight.cols) {
    throw ConfigError("split point " + std::to_string(s) + " must lie in (0, " +
                      std::to_string(weight.cols) + ")");
  }
  ConcatDecomposition dec;
  dec.U = Matrix(weight.rows, s);
  dec.V = Matrix(weight.rows, weight.cols - s);
  for (int i = 0; i < weight.rows; ++i) {
    for (int j = 0; j < weight.cols; ++j) {
      if (j < s) dec.U(i, j) = weight(i, j);
      else dec.V(i, j - s) = weight(i, j);
    }
  }
  dec.c.resize(bias.size());
  dec.d.resize(bias.size());
  for (std::size_t i = 0; i < bias.size(); ++i) {
    dec.c[i] = bias[i] / 2.0;
    dec.d[i] = bias[i] - dec.c[i];
  }
  return dec;
}

ConcatDecomposition resplit_bias(const ConcatDecomposition& dec, Rng& rng) {
  ConcatDecomposition out = dec;
  for (std::size_t i = 0; i < dec.c.size(); ++i) {
    const double b = dec.c[i] + dec.d[i];
    const double t = rng.uniform(-1.0, 2.0);
    out.c[i] = t * b;
    out.d[i] = b - out.c[i];
  }
  return out;
}

ConcatDecomposition decompose_concat_conv(const Tensor& weight, const Tensor& bias,
                                          int x_channels) {
  const Shape& s = weight.shape();
  if (x_channels <= 0 || x_channels >= s.c) {
    throw ConfigError("x channel count " + std::to_string(x_channels) + " must lie in (0, " +
                      std::to_string(s.c) + ") for weight " + s.str());
  }
  Matrix w(s.n, s.c * s.h * s.w);
  auto wd = weight.data();
  for (std::size_t k = 0; k < wd.size(); ++k) w.data[k] = wd[k];
  std::vector<double> b(s.n, 0.0);
  if (bias.defined()) {
    auto bd = bias.data();
    if (bd.size() != static_cast<std::size_t>(s.n)) {
      throw DimensionError("bias " + bias.shape().str() + " does not match weight " + s.str());
    }
    for (int i = 0; i < s.n; ++i) b[i] = bd[i];
  }
  return decompose_concat_layer(w, b, x_channels * s.h * s.w);
}

std::vector<std::vector<double>> extract_patches(const Tensor& image, int kernel, int stride,
                                                 int pad) {
  const Shape& s = image.shape();
  if (s.n != 1) throw DimensionError("extract_patches expects one image, got " + s.str());
  const int oh = (s.h + 2 * pad - kernel) / stride + 1;
  const int ow = (s.w + 2 * pad - kernel) / stride + 1;
  auto v = image.data();
  std::vector<std::vector<double>> out;
  out.reserve(static_cast<std::size_t>(oh) * ow);
  for (int oi = 0; oi < oh; ++oi) {
    for (int oj = 0; oj < ow; ++oj) {
      std::vector<double> p;
      p.reserve(static_cast<std::size_t>(s.c) * kernel * kernel);
      for (int ch = 0; ch < s.c; ++ch) {
        for (int ki = 0; ki < kernel; ++ki) {
          for (int kj = 0; kj < kernel; ++kj) {
            const int i = oi * stride - pad + ki;
            const int j = oj * stride - pad + kj;
            const bool inside = i >= 0 && i < s.h && j >= 0 && j < s.w;
            p.push_back(inside ? v[(static_cast<std::size_t>(ch) * s.h + i) * s.w + j] : 0.0);
          }
        }
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

LayerCheckReport check_concat_layer_on_pair(const Discriminator& net, const Tensor& x,
                                            const Tensor& y, int extra_splits, Rng& rng) {
  if (is_fusion(net.kind()) || net.kind() == DiscriminatorKind::Projection) {
    throw ConfigError("layer decomposition needs a concatenation discriminator, got " +
                      to_string(net.kind()));
  }
  const ConvLayer& first = *net.layers().front();
  const ConvBlockSpec& spec = first.spec();
  const ConcatDecomposition even =
      decompose_concat_conv(first.effective_weight(), first.params().bias, net.in_channels_x());
  const auto px = extract_patches(x, spec.kernel, spec.stride, spec.pad);
  const auto py = extract_patches(y, spec.kernel, spec.stride, spec.pad);
  std::vector<ConcatDecomposition> decs{even};
  for (int k = 0; k < extra_splits; ++k) decs.push_back(resplit_bias(even, rng));

  LayerCheckReport rep;
  double min_margin = std::numeric_limits<double>::infinity();
  for (const auto& dec : decs) {
    for (std::size_t p = 0; p < px.size(); ++p) {
      const InequalityResult r =
          check_fusion_inequality(dec.instance(px[p], py[p], ActivationFn::relu()));
      ++rep.instances;
      rep.elements += static_cast<std::int64_t>(r.margin.size());
      for (double m : r.margin) {
        if (m < -kInequalityTolerance) ++rep.violations;
        min_margin = std::min(min_margin, m);
      }
    }
  }
  rep.min_margin = std::isfinite(min_margin) ? min_margin : 0.0;
  return rep;
}

// ---------------------------------------------------------------------------

std::string to_string(CamTarget t) { return t == CamTarget::RealScore ? "real" : "fake"; }

CamTarget parse_cam_target(std::string_view name) {
  if (name == "real") return CamTarget::RealScore;
  if (name == "fake") return CamTarget::FakeScore;
  throw ConfigError("unknown Grad-CAM target '" + std::string(name) + "' (allowed: real, fake)");
}

double CamMap::max() const {
  double m = 0.0;
  for (double v : heatmap) m = std::max(m, v);
  return m;
}

CamMap grad_cam(const Discriminator& net, const Tensor& x, const Tensor& y,
                const std::string& layer, CamTarget target) {
  if (x.shape().n != 1 || y.shape().n != 1) {
    throw DimensionError("grad_cam takes a single sample, got x " + x.shape().str());
  }
  const auto names = net.feature_names();
  if (std::find(names.begin(), names.end(), layer) == names.end()) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    throw ConfigError("no feature layer '" + layer + "' (available: " + list + ")");
  }
  if (!grad_enabled()) throw GraphError("grad_cam needs gradient recording enabled");

  const DiscriminatorOutput out = net.forward(x, y);
  const Tensor& feat = out.feature(layer);
  Tensor score = mean(out.logits);
  if (target == CamTarget::FakeScore) score = neg(score);

  const Shape fs = feat.shape();
  std::vector<double> cam(fs.plane(), 0.0);
  if (score.requires_grad()) {
    backward(score);
    if (feat.has_grad()) {
      auto g = feat.grad();
      auto f = feat.data();
      for (int ch = 0; ch < fs.c; ++ch) {
        const std::size_t base = static_cast<std::size_t>(ch) * fs.plane();
        double w = 0.0;
        for (std::size_t k = 0; k < fs.plane(); ++k) w += g[base + k];
        w /= static_cast<double>(fs.plane());
        for (std::size_t k = 0; k < fs.plane(); ++k) cam[k] += w * f[base + k];
      }
    }
  }
  for (auto& p : net.parameters()) {
    Tensor t = p.tensor;
    t.zero_grad();
  }

  double peak = 0.0;
  for (auto& v : cam) {
    v = std::max(v, 0.0);
    peak = std::max(peak, v);
  }
  if (peak > 0.0) {
    for (auto& v : cam) v /= peak;
  }
  CamMap m;
  m.height = x.shape().h;
  m.width = x.shape().w;
  m.source_layer = layer;
  m.target = target;
  m.heatmap.resize(static_cast<std::size_t>(m.height) * m.width);
  for (int i = 0; i < m.height; ++i) {
    const int si = i * fs.h / m.height;
    for (int j = 0; j < m.width; ++j) {
      const int sj = j * fs.w / m.width;
      m.heatmap[static_cast<std::size_t>(i) * m.width + j] =
          cam[static_cast<std::size_t>(si) * fs.w + sj];
    }
  }
  return m;
}

double foreground_mass_fraction(const CamMap& cam, const std::vector<bool>& mask) {
  if (mask.size() != cam.heatmap.size()) {
    throw DimensionError("mask has " + std::to_string(mask.size()) + " pixels, heatmap " +
                         std::to_string(cam.heatmap.size()));
  }
  double total = 0.0;
  double inside = 0.0;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    total += cam.heatmap[k];
    if (mask[k]) inside += cam.heatmap[k];
  }
  return total > 0.0 ? inside / total : 0.0;
}

void write_cam_pgm(const std::filesystem::path& path, const CamMap& cam) {
  PnmImage img;
  img.width = cam.width;
  img.height = cam.height;
  img.channels = 1;
  img.maxval = 255;
  img.samples.resize(cam.heatmap.size());
  for (std::size_t k = 0; k < cam.heatmap.size(); ++k) {
    const double v = std::clamp(cam.heatmap[k], 0.0, 1.0);
    img.samples[k] = static_cast<std::uint16_t>(std::lround(255.0 * v));
  }
  write_pnm(path, img);
}

}  // namespace fgan
