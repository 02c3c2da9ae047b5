#include "fusiongan/taskgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "fusiongan/io.hpp"
#include "fusiongan/rng.hpp"

namespace fgan {

std::string to_string(Task task) {
  switch (task) {
    case Task::MaskToImage: return "mask2image";
    case Task::Segmentation: return "segmentation";
    case Task::Depth: return "depth";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  if (name == "mask2image") return Task::MaskToImage;
  if (name == "segmentation") return Task::Segmentation;
  if (name == "depth") return Task::Depth;
  throw ConfigError("unknown task '" + std::string(name) +
                    "' (allowed: mask2image, segmentation, depth)");
}

int input_channels(Task) { return 3; }

int output_channels(Task task, int class_count) {
  switch (task) {
    case Task::MaskToImage: return 3;
    case Task::Segmentation: return class_count;
    case Task::Depth: return 1;
  }
  return 0;
}

bool ScenePrimitive::covers(int i, int j) const {
  const double yi = i + 0.5;
  const double xj = j + 0.5;
  if (yi < top || yi > top + height || xj < left || xj > left + width) return false;
  switch (kind) {
    case ShapeKind::Rectangle: return true;
    case ShapeKind::Ellipse: {
      const double ry = height / 2.0;
      const double rx = width / 2.0;
      const double dy = (yi - (top + ry)) / ry;
      const double dx = (xj - (left + rx)) / rx;
      return dx * dx + dy * dy <= 1.0;
    }
    case ShapeKind::Triangle: {
      const double t = (yi - top) / height;
      const double apex_x = left + apex * width;
      const double lo = apex_x + (left - apex_x) * t;
      const double hi = apex_x + (left + width - apex_x) * t;
      return xj >= lo && xj <= hi;
    }
  }
  return false;
}

void SceneSpec::validate() const {
  if (image_size <= 0) throw ConfigError("scene image_size must be positive");
  if (min_shapes < 0 || max_shapes < min_shapes) {
    throw ConfigError("scene shape count range [" + std::to_string(min_shapes) + ", " +
                      std::to_string(max_shapes) + "] is invalid");
  }
  if (min_shape_size < 1 || max_shape_size < min_shape_size) {
    throw ConfigError("scene shape size range is invalid");
  }
  if (max_shape_size > image_size) {
    throw ConfigError("shape size " + std::to_string(max_shape_size) + " exceeds canvas " +
                      std::to_string(image_size));
  }
  if (class_count < 2) throw ConfigError("class_count must be at least 2 (background + 1)");
  if (!(depth_min > 0.0f) || !(depth_max > depth_min)) {
    throw ConfigError("depth range must satisfy 0 < depth_min < depth_max");
  }
  if (noise_std < 0.0f) throw ConfigError("noise_std must be non-negative");
}

Scene layout_scene(const SceneSpec& spec, std::int64_t id) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(id)));
  Scene scene;
  const int count = rng.uniform_int(spec.min_shapes, spec.max_shapes);
  for (int s = 0; s < count; ++s) {
    ScenePrimitive p;
    p.kind = static_cast<ShapeKind>(rng.below(3));
    p.class_id = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.class_count - 1)));
    p.height = rng.uniform_int(spec.min_shape_size, spec.max_shape_size);
    p.width = rng.uniform_int(spec.min_shape_size, spec.max_shape_size);
    p.top = rng.uniform_int(0, spec.image_size - p.height);
    p.left = rng.uniform_int(0, spec.image_size - p.width);
    p.depth = static_cast<float>(rng.uniform(spec.depth_min, spec.depth_max));
    p.apex = static_cast<float>(rng.uniform());
    scene.shapes.push_back(p);
  }
  std::stable_sort(scene.shapes.begin(), scene.shapes.end(),
                   [](const ScenePrimitive& a, const ScenePrimitive& b) { return a.depth > b.depth; });
  return scene;
}

std::array<std::uint8_t, 3> class_color(int class_id) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 10> kPalette{{
      {0, 0, 0},
      {220, 20, 60},
      {0, 128, 255},
      {50, 205, 50},
      {255, 215, 0},
      {148, 0, 211},
      {255, 140, 0},
      {0, 206, 209},
      {255, 105, 180},
      {139, 69, 19},
  }};
  if (class_id >= 0 && class_id < static_cast<int>(kPalette.size())) return kPalette[class_id];
  const std::uint64_t h = derive_seed(0xC01042ULL, static_cast<std::uint64_t>(class_id));
  return {static_cast<std::uint8_t>(h & 0xFF), static_cast<std::uint8_t>((h >> 8) & 0xFF),
          static_cast<std::uint8_t>((h >> 16) & 0xFF)};
}

namespace {

// Base texture colour in [0, 1]; deliberately different from the mask palette.
std::array<float, 3> texture_base(int class_id) {
  static constexpr std::array<std::array<float, 3>, 5> kBase{{
      {0.45f, 0.45f, 0.45f},
      {0.85f, 0.30f, 0.25f},
      {0.25f, 0.40f, 0.90f},
      {0.30f, 0.80f, 0.35f},
      {0.90f, 0.80f, 0.30f},
  }};
  if (class_id >= 0 && class_id < static_cast<int>(kBase.size())) return kBase[class_id];
  const std::uint64_t h = derive_seed(0x7E47ULL, static_cast<std::uint64_t>(class_id));
  return {0.2f + 0.7f * static_cast<float>(h & 0xFF) / 255.0f,
          0.2f + 0.7f * static_cast<float>((h >> 8) & 0xFF) / 255.0f,
          0.2f + 0.7f * static_cast<float>((h >> 16) & 0xFF) / 255.0f};
}

float texture_pattern(int class_id, int i, int j) {
  if (class_id == 0) return ((i / 8 + j / 8) % 2 == 0) ? 0.04f : -0.04f;
  static constexpr int kDir[4][2] = {{1, 0}, {0, 1}, {1, 1}, {1, -1}};
  const int k = (class_id - 1) % 4;
  const double period = 4.0 + 2.0 * ((class_id - 1) % 3);
  const double phase = (kDir[k][0] * i + kDir[k][1] * j) / period;
  return static_cast<float>(0.12 * std::sin(2.0 * std::numbers::pi * phase));
}

float depth_shading(float depth, float dmin, float dmax) {
  return 1.0f - 0.5f * (depth - dmin) / (dmax - dmin);
}

float to_unit_range(float v01) { return 2.0f * v01 - 1.0f; }

}  // namespace

RenderedScene render_scene(const SceneSpec& spec, const Scene& scene, std::int64_t id) {
  const int size = spec.image_size;
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  RenderedScene out;
  out.labels = LabelMap{size, size, std::vector<int>(plane, 0)};
  out.depth.assign(plane, spec.background_depth());
  for (const auto& shape : scene.shapes) {
    for (int i = 0; i < size; ++i) {
      for (int j = 0; j < size; ++j) {
        if (!shape.covers(i, j)) continue;
        out.labels.labels[static_cast<std::size_t>(i) * size + j] = shape.class_id;
        out.depth[static_cast<std::size_t>(i) * size + j] = shape.depth;
      }
    }
  }
  Rng noise(derive_seed(derive_seed(spec.seed, static_cast<std::uint64_t>(id)), 7));
  out.texture.resize(3 * plane);
  out.mask.resize(3 * plane);
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const std::size_t p = static_cast<std::size_t>(i) * size + j;
      const int cls = out.labels.labels[p];
      const auto base = texture_base(cls);
      const float shade = depth_shading(out.depth[p], spec.depth_min, spec.depth_max);
      const float pattern = texture_pattern(cls, i, j);
      const auto palette = class_color(cls);
      for (int ch = 0; ch < 3; ++ch) {
        float v = shade * base[ch] + pattern + static_cast<float>(noise.normal() * spec.noise_std);
        v = std::clamp(v, 0.0f, 1.0f);
        out.texture[ch * plane + p] = to_unit_range(v);
        out.mask[ch * plane + p] = to_unit_range(static_cast<float>(palette[ch]) / 255.0f);
      }
    }
  }
  return out;
}

float DepthCodec::encode(float depth) const {
  const float inv_lo = 1.0f / depth_max;
  const float inv_hi = 1.0f / depth_min;
  return 2.0f * (1.0f / depth - inv_lo) / (inv_hi - inv_lo) - 1.0f;
}

float DepthCodec::decode(float code) const {
  const float inv_lo = 1.0f / depth_max;
  const float inv_hi = 1.0f / depth_min;
  const float inv = inv_lo + (code + 1.0f) * 0.5f * (inv_hi - inv_lo);
  return inv > 0.0f ? 1.0f / inv : std::numeric_limits<float>::infinity();
}

namespace {

Tensor one_hot(const LabelMap& labels, int class_count) {
  const std::size_t plane = labels.size();
  std::vector<float> v(class_count * plane, -1.0f);
  for (std::size_t p = 0; p < plane; ++p) v[labels.labels[p] * plane + p] = 1.0f;
  return Tensor::from(Shape{1, class_count, labels.height, labels.width}, std::move(v));
}

Tensor depth_tensor(const std::vector<float>& depth, int size, const DepthCodec& codec) {
  std::vector<float> v(depth.size());
  for (std::size_t p = 0; p < depth.size(); ++p) v[p] = codec.encode(depth[p]);
  return Tensor::from(Shape{1, 1, size, size}, std::move(v));
}

}  // namespace

SamplePair generate_sample(const SceneSpec& spec, Task task, std::int64_t id) {
  const Scene scene = layout_scene(spec, id);
  RenderedScene r = render_scene(spec, scene, id);
  const int size = spec.image_size;
  const DepthCodec codec{spec.depth_min, spec.depth_max};
  SamplePair pair;
  pair.task = task;
  pair.class_count = spec.class_count;
  pair.id = id;
  const Shape rgb{1, 3, size, size};
  switch (task) {
    case Task::MaskToImage:
      pair.x = Tensor::from(rgb, std::move(r.mask));
      pair.y = Tensor::from(rgb, std::move(r.texture));
      break;
    case Task::Segmentation:
      pair.x = Tensor::from(rgb, std::move(r.texture));
      pair.y = one_hot(r.labels, spec.class_count);
      break;
    case Task::Depth:
      pair.x = Tensor::from(rgb, std::move(r.texture));
      pair.y = depth_tensor(r.depth, size, codec);
      break;
  }
  pair.labels = std::move(r.labels);
  pair.depth = std::move(r.depth);
  return pair;
}

std::vector<SamplePair> generate_dataset(const SceneSpec& spec, int n, Task task,
                                         std::int64_t first_id) {
  if (n <= 0) throw ConfigError("dataset size must be positive, got " + std::to_string(n));
  spec.validate();
  std::vector<SamplePair> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) out.push_back(generate_sample(spec, task, first_id + k));
  return out;
}

// ---------------------------------------------------------------------------

ConfusionMatrix::ConfusionMatrix(int class_count)
    : classes_(class_count), counts_(static_cast<std::size_t>(class_count) * class_count, 0) {
  if (class_count <= 0) throw ConfigError("class_count must be positive");
}

void ConfusionMatrix::add(const LabelMap& pred, const LabelMap& gt) {
  if (pred.height != gt.height || pred.width != gt.width || pred.size() != gt.size()) {
    throw DimensionError("label maps differ in size: " + std::to_string(pred.height) + "x" +
                         std::to_string(pred.width) + " vs " + std::to_string(gt.height) + "x" +
                         std::to_string(gt.width));
  }
  for (std::size_t p = 0; p < gt.size(); ++p) {
    const int g = gt.labels[p];
    const int q = pred.labels[p];
    if (g < 0 || g >= classes_ || q < 0 || q >= classes_) {
      throw DataError("label " + std::to_string(g < 0 || g >= classes_ ? g : q) +
                      " outside [0, " + std::to_string(classes_) + ")");
    }
    ++counts_[static_cast<std::size_t>(g) * classes_ + q];
  }
}

double ConfusionMatrix::class_iou(int c) const {
  std::int64_t inter = counts_[static_cast<std::size_t>(c) * classes_ + c];
  std::int64_t gt_total = 0;
  std::int64_t pred_total = 0;
  for (int k = 0; k < classes_; ++k) {
    gt_total += counts_[static_cast<std::size_t>(c) * classes_ + k];
    pred_total += counts_[static_cast<std::size_t>(k) * classes_ + c];
  }
  const std::int64_t uni = gt_total + pred_total - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double ConfusionMatrix::mean_iou() const {
  double total = 0.0;
  int present = 0;
  for (int c = 0; c < classes_; ++c) {
    std::int64_t touched = 0;
    for (int k = 0; k < classes_; ++k) {
      touched += counts_[static_cast<std::size_t>(c) * classes_ + k];
      touched += counts_[static_cast<std::size_t>(k) * classes_ + c];
    }
    if (touched == 0) continue;
    total += class_iou(c);
    ++present;
  }
  return present == 0 ? 1.0 : total / present;
}

double ConfusionMatrix::pixel_accuracy() const {
  std::int64_t correct = 0;
  std::int64_t all = 0;
  for (int g = 0; g < classes_; ++g) {
    for (int q = 0; q < classes_; ++q) {
      const auto n = counts_[static_cast<std::size_t>(g) * classes_ + q];
      all += n;
      if (g == q) correct += n;
    }
  }
  return all == 0 ? 1.0 : static_cast<double>(correct) / static_cast<double>(all);
}

double mean_iou(const LabelMap& pred, const LabelMap& gt, int class_count) {
  ConfusionMatrix cm(class_count);
  cm.add(pred, gt);
  return cm.mean_iou();
}

double pixel_accuracy(const LabelMap& pred, const LabelMap& gt) {
  if (pred.size() != gt.size() || pred.height != gt.height || pred.width != gt.width) {
    throw DimensionError("pixel_accuracy: label maps differ in size");
  }
  if (gt.size() == 0) return 1.0;
  std::size_t same = 0;
  for (std::size_t p = 0; p < gt.size(); ++p) same += pred.labels[p] == gt.labels[p];
  return static_cast<double>(same) / static_cast<double>(gt.size());
}

DepthMetrics depth_metrics(std::span<const float> pred, std::span<const float> gt) {
  if (pred.size() != gt.size()) {
    throw DimensionError("depth_metrics: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(gt.size()) + " targets");
  }
  if (gt.empty()) throw DataError("depth_metrics: empty depth map");
  double rel = 0.0;
  double sq = 0.0;
  double lg = 0.0;
  for (std::size_t p = 0; p < gt.size(); ++p) {
    const double g = gt[p];
    if (!(g > 0.0)) throw DataError("depth_metrics: ground truth must be positive everywhere");
    const double q = std::max(static_cast<double>(pred[p]), static_cast<double>(kDepthFloor));
    rel += std::fabs(q - g) / g;
    sq += (q - g) * (q - g);
    lg += std::fabs(std::log10(q) - std::log10(g));
  }
  const double n = static_cast<double>(gt.size());
  return {rel / n, std::sqrt(sq / n), lg / n};
}

std::vector<LabelMap> labels_from_logits(const Tensor& y, int class_count) {
  const Shape& s = y.shape();
  if (s.c != class_count) {
    throw DimensionError("labels_from_logits: tensor " + s.str() + " does not have " +
                         std::to_string(class_count) + " channels");
  }
  std::vector<LabelMap> out;
  const std::size_t plane = s.plane();
  std::span<const float> v = y.data();
  for (int n = 0; n < s.n; ++n) {
    LabelMap m{s.h, s.w, std::vector<int>(plane, 0)};
    const float* base = v.data() + static_cast<std::size_t>(n) * s.c * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      int best = 0;
      float best_v = base[p];
      for (int c = 1; c < s.c; ++c) {
        const float val = base[c * plane + p];
        if (val > best_v) {
          best_v = val;
          best = c;
        }
      }
      m.labels[p] = best;
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<float> decode_depth(const Tensor& y, int n, const DepthCodec& codec) {
  const Shape& s = y.shape();
  const std::size_t plane = s.plane();
  std::vector<float> out(plane);
  std::span<const float> v = y.data();
  for (std::size_t p = 0; p < plane; ++p) {
    out[p] = codec.decode(v[static_cast<std::size_t>(n) * s.c * plane + p]);
  }
  return out;
}

std::vector<LabelMap> labels_from_texture(const Tensor& rgb, int class_count) {
  const Shape& s = rgb.shape();
  if (s.c != 3) throw DimensionError("labels_from_texture needs RGB input, got " + s.str());
  std::vector<std::array<float, 3>> bases;
  for (int c = 0; c < class_count; ++c) bases.push_back(texture_base(c));
  const std::size_t plane = s.plane();
  std::span<const float> v = rgb.data();
  std::vector<LabelMap> out;
  for (int n = 0; n < s.n; ++n) {
    LabelMap m{s.h, s.w, std::vector<int>(plane, 0)};
    const float* img = v.data() + static_cast<std::size_t>(n) * 3 * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      const float px[3] = {(img[p] + 1.0f) * 0.5f, (img[plane + p] + 1.0f) * 0.5f,
                           (img[2 * plane + p] + 1.0f) * 0.5f};
      int best = 0;
      float best_err = std::numeric_limits<float>::max();
      for (int c = 0; c < class_count; ++c) {
        const auto& b = bases[c];
        const float bb = b[0] * b[0] + b[1] * b[1] + b[2] * b[2];
        const float f = std::clamp((px[0] * b[0] + px[1] * b[1] + px[2] * b[2]) / bb, 0.5f, 1.0f);
        float err = 0.0f;
        for (int ch = 0; ch < 3; ++ch) err += (px[ch] - f * b[ch]) * (px[ch] - f * b[ch]);
        if (err < best_err) {
          best_err = err;
          best = c;
        }
      }
      m.labels[p] = best;
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<bool> foreground_mask(const SamplePair& pair, float background_depth) {
  if (!pair.labels.labels.empty()) {
    std::vector<bool> fg(pair.labels.size());
    for (std::size_t p = 0; p < fg.size(); ++p) fg[p] = pair.labels.labels[p] != 0;
    return fg;
  }
  std::vector<bool> fg(pair.depth.size());
  for (std::size_t p = 0; p < fg.size(); ++p) fg[p] = pair.depth[p] < background_depth - 1e-4f;
  return fg;
}

// ---------------------------------------------------------------------------

namespace {

std::uint16_t quantize8(float v) {
  return static_cast<std::uint16_t>(std::lround(std::clamp((v + 1.0f) * 0.5f, 0.0f, 1.0f) * 255.0f));
}

PnmImage rgb_image(const Tensor& t) {
  const Shape& s = t.shape();
  PnmImage img{s.w, s.h, 3, 255, {}};
  img.samples.resize(static_cast<std::size_t>(s.h) * s.w * 3);
  const std::size_t plane = s.plane();
  std::span<const float> v = t.data();
  for (std::size_t p = 0; p < plane; ++p) {
    for (int ch = 0; ch < 3; ++ch) img.samples[3 * p + ch] = quantize8(v[ch * plane + p]);
  }
  return img;
}

PnmImage label_image(const LabelMap& labels) {
  PnmImage img{labels.width, labels.height, 3, 255, {}};
  img.samples.resize(labels.size() * 3);
  for (std::size_t p = 0; p < labels.size(); ++p) {
    const auto c = class_color(labels.labels[p]);
    for (int ch = 0; ch < 3; ++ch) img.samples[3 * p + ch] = c[ch];
  }
  return img;
}

Tensor tensor_from_rgb(const PnmImage& img) {
  if (img.channels != 3) throw DataError("expected an RGB (P6) image");
  const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
  std::vector<float> v(3 * plane);
  for (std::size_t p = 0; p < plane; ++p) {
    for (int ch = 0; ch < 3; ++ch) {
      v[ch * plane + p] = to_unit_range(static_cast<float>(img.samples[3 * p + ch]) / img.maxval);
    }
  }
  return Tensor::from(Shape{1, 3, img.height, img.width}, std::move(v));
}

LabelMap labels_from_palette(const PnmImage& img, int class_count, const std::filesystem::path& path) {
  std::map<std::array<std::uint8_t, 3>, int> lookup;
  for (int c = 0; c < class_count; ++c) lookup.emplace(class_color(c), c);
  LabelMap m{img.height, img.width, std::vector<int>(static_cast<std::size_t>(img.width) * img.height)};
  for (std::size_t p = 0; p < m.size(); ++p) {
    const std::array<std::uint8_t, 3> rgb{static_cast<std::uint8_t>(img.samples[3 * p]),
                                          static_cast<std::uint8_t>(img.samples[3 * p + 1]),
                                          static_cast<std::uint8_t>(img.samples[3 * p + 2])};
    auto it = lookup.find(rgb);
    if (it == lookup.end()) throw DataError("pixel colour is not a class colour in " + path.string());
    m.labels[p] = it->second;
  }
  return m;
}

std::string sample_stem(std::int64_t id) {
  std::ostringstream os;
  os << id;
  return os.str();
}

}  // namespace

void write_dataset(const std::filesystem::path& root, std::string_view split,
                   const std::vector<SamplePair>& pairs, std::uint64_t seed) {
  if (pairs.empty()) throw ConfigError("refusing to write an empty dataset");
  const Task task = pairs.front().task;
  const std::filesystem::path dir = root / to_string(task) / std::string(split);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.txt").string());
  for (const auto& pair : pairs) {
    const std::string stem = sample_stem(pair.id);
    write_pnm(dir / (stem + "_x.ppm"), rgb_image(pair.x));
    switch (pair.task) {
      case Task::MaskToImage:
        write_pnm(dir / (stem + "_y.ppm"), rgb_image(pair.y));
        break;
      case Task::Segmentation:
        write_pnm(dir / (stem + "_y.ppm"), label_image(pair.labels));
        break;
      case Task::Depth: {
        PnmImage img{pair.y.shape().w, pair.y.shape().h, 1, 65535, {}};
        img.samples.resize(pair.depth.size());
        for (std::size_t p = 0; p < pair.depth.size(); ++p) {
          img.samples[p] = static_cast<std::uint16_t>(
              std::clamp(std::lround(pair.depth[p] * 1000.0f), 1L, 65535L));
        }
        write_pnm(dir / (stem + "_y.pgm"), img);
        break;
      }
    }
    manifest << pair.id << " " << to_string(pair.task) << " " << seed << "\n";
  }
  if (!manifest) throw IoError("failed writing " + (dir / "manifest.txt").string());
}

std::vector<SamplePair> read_dataset(const std::filesystem::path& root, Task task,
                                     std::string_view split, int class_count,
                                     const DepthCodec& codec) {
  const std::filesystem::path dir = root / to_string(task) / std::string(split);
  const std::filesystem::path manifest_path = dir / "manifest.txt";
  if (!std::filesystem::exists(root)) throw IoError("dataset root does not exist: " + root.string());
  std::ifstream manifest(manifest_path);
  if (!manifest) throw IoError("missing dataset manifest: " + manifest_path.string());
  std::vector<SamplePair> out;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::int64_t id = 0;
    std::string task_name;
    std::uint64_t seed = 0;
    if (!(ls >> id >> task_name >> seed)) throw DataError("malformed manifest line: " + line);
    if (parse_task(task_name) != task) throw DataError("manifest task mismatch: " + line);
    const std::string stem = sample_stem(id);
    SamplePair pair;
    pair.task = task;
    pair.class_count = class_count;
    pair.id = id;
    const PnmImage ximg = read_pnm(dir / (stem + "_x.ppm"));
    pair.x = tensor_from_rgb(ximg);
    switch (task) {
      case Task::MaskToImage:
        pair.labels = labels_from_palette(ximg, class_count, dir / (stem + "_x.ppm"));
        pair.y = tensor_from_rgb(read_pnm(dir / (stem + "_y.ppm")));
        break;
      case Task::Segmentation:
        pair.labels = labels_from_palette(read_pnm(dir / (stem + "_y.ppm")), class_count,
                                          dir / (stem + "_y.ppm"));
        pair.y = one_hot(pair.labels, class_count);
        break;
      case Task::Depth: {
        const PnmImage d = read_pnm(dir / (stem + "_y.pgm"));
        if (d.channels != 1) throw DataError("depth target must be a P5 image");
        pair.depth.resize(d.samples.size());
        for (std::size_t p = 0; p < d.samples.size(); ++p) pair.depth[p] = d.samples[p] / 1000.0f;
        pair.y = depth_tensor(pair.depth, d.width, codec);
        break;
      }
    }
    out.push_back(std::move(pair));
  }
  if (out.empty()) throw DataError("dataset split is empty: " + dir.string());
  return out;
}

}  // namespace fgan
