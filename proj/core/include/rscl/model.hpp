#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rscl/config.hpp"
#include "rscl/encoder.hpp"
#include "rscl/flow.hpp"

namespace rscl {

// The full parameter bundle: tokenizer backbone, adapter (with u), projector,
// and the flow-matching decoder.
struct Model {
  EncoderDims enc;
  DecoderDims dec;
  BackboneParams backbone;
  AdapterParams adapter;
  ProjectorParams projector;
  DecoderParams decoder;

  static Model init(const TrainConfig& cfg, Rng& rng);

  // Canonical name/tensor listing; order is stable and drives serialization.
  std::vector<std::pair<std::string, Var>> named_params() const;

  struct Group {
    std::string name;
    std::vector<Var> params;
  };
  // Optimizer groups; the backbone group is omitted when frozen.
  std::vector<Group> trainable_groups() const;
  std::vector<Var> all_trainable() const;
};

EncoderDims encoder_dims_from(const TrainConfig& cfg);
DecoderDims decoder_dims_from(const TrainConfig& cfg);

}  // namespace rscl
