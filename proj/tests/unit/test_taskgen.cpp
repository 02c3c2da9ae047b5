#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "fusiongan/io.hpp"
#include "fusiongan/rng.hpp"
#include "fusiongan/taskgen.hpp"

using namespace fgan;

namespace {

LabelMap random_labels(Rng& rng, int h, int w, int classes) {
  LabelMap m{h, w, std::vector<int>(static_cast<std::size_t>(h) * w)};
  for (int& v : m.labels) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
  return m;
}

// Per-class IoU by direct pixel counting, averaged over classes that occur in
// either map.
double brute_mean_iou(const LabelMap& pred, const LabelMap& gt, int classes) {
  double total = 0.0;
  int present = 0;
  for (int c = 0; c < classes; ++c) {
    int inter = 0;
    int uni = 0;
    for (std::size_t p = 0; p < gt.size(); ++p) {
      const bool a = pred.labels[p] == c;
      const bool b = gt.labels[p] == c;
      inter += a && b;
      uni += a || b;
    }
    if (uni == 0) continue;
    total += static_cast<double>(inter) / uni;
    ++present;
  }
  return total / present;
}

TEST(Metrics, MeanIouMatchesBruteForce) {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    const int h = 1 + static_cast<int>(rng.below(8));
    const int w = 1 + static_cast<int>(rng.below(8));
    const int k = 2 + static_cast<int>(rng.below(4));
    const LabelMap a = random_labels(rng, h, w, k);
    const LabelMap b = random_labels(rng, h, w, k);
    EXPECT_EQ(mean_iou(a, b, k), brute_mean_iou(a, b, k));
    EXPECT_EQ(mean_iou(a, b, k), mean_iou(b, a, k));
    int same = 0;
    for (std::size_t p = 0; p < a.size(); ++p) same += a.labels[p] == b.labels[p];
    EXPECT_EQ(pixel_accuracy(a, b), static_cast<double>(same) / a.size());
  }
}

TEST(Metrics, HandExample) {
  const LabelMap gt{1, 4, {0, 0, 1, 1}};
  const LabelMap pred{1, 4, {0, 1, 1, 1}};
  EXPECT_DOUBLE_EQ(pixel_accuracy(pred, gt), 0.75);
  EXPECT_DOUBLE_EQ(mean_iou(pred, gt, 3), (0.5 + 2.0 / 3.0) / 2.0);
}

TEST(Metrics, DepthMatchesBruteForce) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.below(40);
    std::vector<float> pred(n);
    std::vector<float> gt(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = static_cast<float>(rng.uniform(0.1, 12.0));
      gt[i] = static_cast<float>(rng.uniform(0.5, 10.0));
    }
    double rel = 0.0, sq = 0.0, lg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      rel += std::fabs(pred[i] - gt[i]) / gt[i];
      sq += (static_cast<double>(pred[i]) - gt[i]) * (static_cast<double>(pred[i]) - gt[i]);
      lg += std::fabs(std::log10(static_cast<double>(pred[i])) - std::log10(static_cast<double>(gt[i])));
    }
    const DepthMetrics m = depth_metrics(pred, gt);
    EXPECT_NEAR(m.rel, rel / n, 1e-6);
    EXPECT_NEAR(m.rms, std::sqrt(sq / n), 1e-6);
    EXPECT_NEAR(m.log10, lg / n, 1e-6);
  }
}

TEST(Metrics, RelIsAsymmetric) {
  const std::vector<float> a{1.0f};
  const std::vector<float> b{2.0f};
  EXPECT_DOUBLE_EQ(depth_metrics(a, b).rel, 0.5);
  EXPECT_DOUBLE_EQ(depth_metrics(b, a).rel, 1.0);
}

TEST(Metrics, Errors) {
  const std::vector<float> a{1.0f, 2.0f};
  const std::vector<float> zero{0.0f, 1.0f};
  EXPECT_THROW(depth_metrics(a, zero), DataError);
  EXPECT_THROW(depth_metrics(a, std::vector<float>{1.0f}), DimensionError);
  EXPECT_THROW(mean_iou(LabelMap{1, 1, {5}}, LabelMap{1, 1, {0}}, 3), DataError);
}

TEST(Metrics, RangesOnRandomMaps) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const LabelMap a = random_labels(rng, 5, 5, 4);
    const LabelMap b = random_labels(rng, 5, 5, 4);
    const double iou = mean_iou(a, b, 4);
    EXPECT_GE(iou, 0.0);
    EXPECT_LE(iou, 1.0);
  }
}

TEST(Scene, PaintersAlgorithmOracle) {
  SceneSpec spec;
  spec.image_size = 32;
  spec.min_shapes = 3;
  spec.max_shapes = 6;
  spec.min_shape_size = 6;
  spec.max_shape_size = 20;
  for (int id = 0; id < 20; ++id) {
    const Scene scene = layout_scene(spec, id);
    for (std::size_t k = 1; k < scene.shapes.size(); ++k) {
      EXPECT_GE(scene.shapes[k - 1].depth, scene.shapes[k].depth);
    }
    const RenderedScene r = render_scene(spec, scene, id);
    for (int i = 0; i < spec.image_size; ++i) {
      for (int j = 0; j < spec.image_size; ++j) {
        int label = 0;
        float depth = spec.background_depth();
        float nearest = std::numeric_limits<float>::infinity();
        for (const auto& s : scene.shapes) {
          if (s.covers(i, j) && s.depth <= nearest) {
            nearest = s.depth;
            label = s.class_id;
            depth = s.depth;
          }
        }
        EXPECT_EQ(r.labels.at(i, j), label);
        EXPECT_EQ(r.depth[static_cast<std::size_t>(i) * spec.image_size + j], depth);
      }
    }
  }
}

TEST(Scene, PrimitivesCoverExpectedPixels) {
  ScenePrimitive rect{ShapeKind::Rectangle, 1, 1.0f, 2, 3, 4, 5};
  EXPECT_TRUE(rect.covers(2, 3));
  EXPECT_TRUE(rect.covers(5, 7));
  EXPECT_FALSE(rect.covers(6, 3));
  EXPECT_FALSE(rect.covers(2, 8));
  ScenePrimitive ell{ShapeKind::Ellipse, 1, 1.0f, 0, 0, 10, 10};
  EXPECT_TRUE(ell.covers(5, 5));
  EXPECT_FALSE(ell.covers(0, 0));
  ScenePrimitive tri{ShapeKind::Triangle, 1, 1.0f, 0, 0, 10, 10, 0.5f};
  EXPECT_TRUE(tri.covers(9, 1));
  EXPECT_FALSE(tri.covers(0, 0));
}

TEST(Dataset, DeterministicBytes) {
  SceneSpec spec;
  spec.seed = 77;
  std::ostringstream a;
  std::ostringstream b;
  for (const auto& p : generate_dataset(spec, 4, Task::Depth)) write_ften(a, p.y);
  for (const auto& p : generate_dataset(spec, 4, Task::Depth)) write_ften(b, p.y);
  EXPECT_EQ(a.str(), b.str());
  spec.seed = 78;
  std::ostringstream c;
  for (const auto& p : generate_dataset(spec, 4, Task::Depth)) write_ften(c, p.y);
  EXPECT_NE(a.str(), c.str());
}

TEST(Dataset, SegmentationRoundTripIsPerfect) {
  SceneSpec spec;
  for (int id = 0; id < 5; ++id) {
    const SamplePair p = generate_sample(spec, Task::Segmentation, id);
    const auto labels = labels_from_logits(p.y, spec.class_count);
    EXPECT_EQ(mean_iou(labels[0], p.labels, spec.class_count), 1.0);
  }
}

TEST(Dataset, TaskChannelsAndRanges) {
  SceneSpec spec;
  for (Task t : {Task::MaskToImage, Task::Segmentation, Task::Depth}) {
    const SamplePair p = generate_sample(spec, t, 3);
    EXPECT_EQ(p.x.shape().c, input_channels(t));
    EXPECT_EQ(p.y.shape().c, output_channels(t, spec.class_count));
    for (float v : p.x.data()) {
      EXPECT_GE(v, -1.0f);
      EXPECT_LE(v, 1.0f);
    }
    for (float v : p.y.data()) {
      EXPECT_GE(v, -1.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(Dataset, DepthCodecInverts) {
  const DepthCodec c{0.5f, 10.0f};
  EXPECT_NEAR(c.encode(0.5f), 1.0f, 1e-6);
  EXPECT_NEAR(c.encode(10.0f), -1.0f, 1e-6);
  for (float d : {0.7f, 1.0f, 3.3f, 9.0f}) EXPECT_NEAR(c.decode(c.encode(d)), d, 1e-4 * d);
}

TEST(Dataset, MaskToImageLabelsRecoverable) {
  SceneSpec spec;
  spec.noise_std = 0.0f;
  const SamplePair p = generate_sample(spec, Task::MaskToImage, 2);
  const auto labels = labels_from_texture(p.y, spec.class_count);
  EXPECT_GT(pixel_accuracy(labels[0], p.labels), 0.95);
}

TEST(Dataset, DirectoryRoundTrip) {
  const auto root = std::filesystem::temp_directory_path() / "fusiongan_dataset_test";
  std::filesystem::remove_all(root);
  SceneSpec spec;
  spec.image_size = 16;
  spec.min_shape_size = 4;
  spec.max_shape_size = 8;
  for (Task t : {Task::Segmentation, Task::Depth, Task::MaskToImage}) {
    const auto pairs = generate_dataset(spec, 3, t);
    write_dataset(root, "train", pairs, spec.seed);
    const auto back = read_dataset(root, t, "train", spec.class_count);
    ASSERT_EQ(back.size(), pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      EXPECT_EQ(back[i].id, pairs[i].id);
      EXPECT_EQ(back[i].x.shape(), pairs[i].x.shape());
      EXPECT_EQ(back[i].y.shape(), pairs[i].y.shape());
      if (t != Task::Depth) EXPECT_EQ(back[i].labels.labels, pairs[i].labels.labels);
      for (std::size_t k = 0; k < pairs[i].x.numel(); ++k) {
        EXPECT_NEAR(back[i].x.data()[k], pairs[i].x.data()[k], 1.0 / 255.0);
      }
      if (t == Task::Depth) {
        for (std::size_t k = 0; k < pairs[i].depth.size(); ++k) {
          EXPECT_NEAR(back[i].depth[k], pairs[i].depth[k], 1e-3);
        }
      }
    }
  }
  std::filesystem::remove_all(root);
}

TEST(Dataset, MissingDirectoryIsIoError) {
  EXPECT_THROW(read_dataset("/nonexistent/fusiongan", Task::Depth, "train", 5), IoError);
}

TEST(SceneSpec, Validation) {
  SceneSpec s;
  s.max_shape_size = 100;
  EXPECT_THROW(s.validate(), ConfigError);
  s = SceneSpec{};
  s.class_count = 1;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Io, FtenRoundTripAndVersion) {
  Rng rng(1);
  const Tensor t = Tensor::randn({2, 3, 4, 5}, rng);
  std::stringstream ss;
  write_ften(ss, t);
  const Tensor back = read_ften(ss);
  EXPECT_EQ(back.shape(), t.shape());
  EXPECT_TRUE(std::equal(t.data().begin(), t.data().end(), back.data().begin()));
  std::string bytes;
  {
    std::stringstream s2;
    write_ften(s2, t);
    bytes = s2.str();
  }
  bytes[4] = 9;
  std::stringstream bad(bytes);
  EXPECT_THROW(read_ften(bad), IoError);
}

TEST(Io, PnmRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "fusiongan_pnm_test.pgm";
  PnmImage img;
  img.width = 3;
  img.height = 2;
  img.channels = 1;
  img.maxval = 65535;
  img.samples = {0, 1, 256, 40000, 65535, 7};
  write_pnm(path, img);
  const PnmImage back = read_pnm(path);
  EXPECT_EQ(back.samples, img.samples);
  EXPECT_EQ(back.maxval, 65535);
  std::filesystem::remove(path);
}

}  // namespace
