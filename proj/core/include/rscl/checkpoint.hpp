#pragma once

#include <string>
#include <vector>

#include "rscl/dataset.hpp"
#include "rscl/model.hpp"
#include "rscl/optim.hpp"
#include "rscl/rng.hpp"

namespace rscl {

// The three random streams a training run consumes, in draw order.
struct TrainerRngs {
  Rng batch{0};
  Rng noise{0};
  Rng aug{0};
};

// Everything needed to resume training bit-exactly, or to run a trained
// policy standalone (model + dataset stats).
struct CheckpointData {
  long step = 0;
  Model model;
  // One state per trainable group, aligned with Model::trainable_groups().
  std::vector<AdamState> opt;
  TrainerRngs rngs;
  DatasetStats stats;
  bool normalize_actions = true;
  bool freeze_backbone = false;
};

// JSON with tensors as base64 little-endian doubles. Writes are atomic and
// the byte stream is a pure function of the contents (no paths, no clocks).
void save_checkpoint(const CheckpointData& ck, const std::string& path);
CheckpointData load_checkpoint(const std::string& path);

}  // namespace rscl
