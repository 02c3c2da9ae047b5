#pragma once

#include "fusiongan/config.hpp"

namespace fgan::testing {

// Small 32 px configuration that trains in about a second per handful of
// iterations on one core.
inline RunConfig tiny_config(DiscriminatorKind kind = DiscriminatorKind::Concat4,
                             Task task = Task::Segmentation) {
  RunConfig c;
  c.task = task;
  c.discriminator = kind;
  c.scene.image_size = 32;
  c.scene.min_shape_size = 6;
  c.scene.max_shape_size = 16;
  c.encoder_channels = {16, 32, 64, 64, 64};
  c.train.total_iters = 6;
  c.train.eval_every = 3;
  c.train.batch_size = 4;
  c.train.seed = 1;
  c.train_samples = 16;
  c.eval_samples = 8;
  return c;
}

}  // namespace fgan::testing
