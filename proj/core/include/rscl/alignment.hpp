#pragma once

#include <string>

#include "rscl/checkpoint.hpp"
#include "rscl/dataset.hpp"
#include "rscl/tensor.hpp"

namespace rscl {

// Linear centered kernel alignment between two row-paired embedding sets.
// Columns are centered, then HSIC(K,L)/sqrt(HSIC(K,K)*HSIC(L,L)) with
// inner-product kernels.
double linear_cka(const Tensor& x, const Tensor& y);

// Nearest-neighbor-masked variant: the HSIC sums run only over ordered pairs
// (i, j), i != j, where j is within the k nearest neighbors of i in BOTH
// spaces (nearest by kernel value on centered data; ties broken by lower
// index). Kernel entries are centered by their means over the masked pair
// sample, then normalized by the same-masked self-alignments — i.e. a
// correlation over mutual-neighbor pairs, which is ~0 for independent inputs.
double cknna(const Tensor& x, const Tensor& y, int k);

// Paired (pooled adapter embedding, normalized proprio) rows harvested from a
// dataset slice: the first 10 trajectories per task, timesteps strided by
// `window`.
struct EmbeddingDump {
  Tensor x;  // [n, d_model]
  Tensor q;  // [n, d_q]
  std::string checkpoint;  // provenance labels, free-form
  std::string dataset;
  int window = 16;
};

EmbeddingDump dump_embeddings(const CheckpointData& ck, const Dataset& ds,
                              int window, const std::string& checkpoint_label,
                              const std::string& dataset_label);

// JSON with base64 little-endian doubles + shape metadata; atomic write.
void write_embedding_dump(const EmbeddingDump& dump, const std::string& path);
EmbeddingDump read_embedding_dump(const std::string& path);

}  // namespace rscl
