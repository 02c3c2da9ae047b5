#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fusiongan/tensor.hpp"

namespace fgan {

enum class Task { MaskToImage, Segmentation, Depth };

std::string to_string(Task task);
Task parse_task(std::string_view name);

struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<int> labels;  // row-major

  int at(int i, int j) const { return labels[static_cast<std::size_t>(i) * width + j]; }
  std::size_t size() const { return labels.size(); }
};

// One training/evaluation unit. x and y are 1xCxHxW in [-1, 1]. `labels` and
// `depth` carry the raw ground truth the tensors were encoded from; `depth`
// is empty for data without depth.
struct SamplePair {
  Tensor x;
  Tensor y;
  Task task = Task::Segmentation;
  int class_count = 0;
  std::int64_t id = 0;
  LabelMap labels;
  std::vector<float> depth;
};

enum class ShapeKind { Rectangle, Ellipse, Triangle };

struct ScenePrimitive {
  ShapeKind kind = ShapeKind::Rectangle;
  int class_id = 1;
  float depth = 1.0f;
  int top = 0;
  int left = 0;
  int height = 1;
  int width = 1;
  float apex = 0.5f;  // triangle apex position along the top edge, in [0, 1]

  bool covers(int i, int j) const;
};

struct SceneSpec {
  int image_size = 64;
  int min_shapes = 1;
  int max_shapes = 4;
  int min_shape_size = 12;
  int max_shape_size = 32;
  int class_count = 5;  // background + 4 shape classes
  float depth_min = 0.5f;
  float depth_max = 10.0f;
  float noise_std = 0.04f;
  std::uint64_t seed = 0;

  void validate() const;
  float background_depth() const { return depth_max; }
};

// Shapes painted far to near (painter's algorithm).
struct Scene {
  std::vector<ScenePrimitive> shapes;
};

Scene layout_scene(const SceneSpec& spec, std::int64_t id);

struct RenderedScene {
  LabelMap labels;
  std::vector<float> depth;
  std::vector<float> texture;  // 3 x H x W in [-1, 1]
  std::vector<float> mask;     // 3 x H x W palette colours in [-1, 1]
};

RenderedScene render_scene(const SceneSpec& spec, const Scene& scene, std::int64_t id);

// Deterministic function of (spec, task, id).
SamplePair generate_sample(const SceneSpec& spec, Task task, std::int64_t id);
std::vector<SamplePair> generate_dataset(const SceneSpec& spec, int n, Task task,
                                         std::int64_t first_id = 0);

int input_channels(Task task);
int output_channels(Task task, int class_count);

// Palette colour of a class in 8-bit RGB (used for masks and label files).
std::array<std::uint8_t, 3> class_color(int class_id);

// Inverse-depth encoding to [-1, 1]: depth_min -> +1, depth_max -> -1.
struct DepthCodec {
  float depth_min = 0.5f;
  float depth_max = 10.0f;
  float encode(float depth) const;
  float decode(float code) const;
};

// ---------------------------------------------------------------------------
// Metrics

// Accumulates a confusion matrix so dataset-level scores aggregate pixels
// across samples.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int class_count);
  void add(const LabelMap& pred, const LabelMap& gt);
  // Mean over classes present in gt or pred; absent classes are excluded.
  double mean_iou() const;
  double pixel_accuracy() const;
  double class_iou(int c) const;
  int class_count() const { return classes_; }

 private:
  int classes_;
  std::vector<std::int64_t> counts_;  // [gt * classes + pred]
};

double mean_iou(const LabelMap& pred, const LabelMap& gt, int class_count);
double pixel_accuracy(const LabelMap& pred, const LabelMap& gt);

struct DepthMetrics {
  double rel = 0.0;
  double rms = 0.0;
  double log10 = 0.0;
};

inline constexpr float kDepthFloor = 1e-3f;

// Predictions are clamped to kDepthFloor; non-positive ground truth is a
// DataError.
DepthMetrics depth_metrics(std::span<const float> pred, std::span<const float> gt);

// Per-pixel argmax over channels for every batch item; ties go to the lowest
// class index.
std::vector<LabelMap> labels_from_logits(const Tensor& y, int class_count);

// Decodes channel 0 of batch item n into raw depth.
std::vector<float> decode_depth(const Tensor& y, int n, const DepthCodec& codec);

// Recovers class labels from a rendered RGB image by matching the per-class
// base colours under the renderer's depth shading (proxy evaluation for
// mask-to-image synthesis).
std::vector<LabelMap> labels_from_texture(const Tensor& rgb, int class_count);

// Pixels belonging to a shape (class != 0), falling back to depth nearer than
// the background when labels are unavailable.
std::vector<bool> foreground_mask(const SamplePair& pair, float background_depth);

// ---------------------------------------------------------------------------
// Dataset directory: <root>/<task>/<split>/<id>_x.ppm, <id>_y.ppm or
// <id>_y.pgm (16-bit, depth * 1000), plus manifest.txt ("id task seed").

void write_dataset(const std::filesystem::path& root, std::string_view split,
                   const std::vector<SamplePair>& pairs, std::uint64_t seed);
std::vector<SamplePair> read_dataset(const std::filesystem::path& root, Task task,
                                     std::string_view split, int class_count,
                                     const DepthCodec& codec = {});

}  // namespace fgan
