#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tora/report.hpp"
#include "tora/transform.hpp"
#include "tora/types.hpp"

namespace tora::sim {

/// Per-modality parameters of one joint-attention block. Projections act on
/// row vectors (h * W).
struct ModalityWeights {
  Matrix query;
  Matrix key;
  Matrix value;
  Matrix output;
  Vector scale;  // AdaLN gamma
  Vector shift;  // AdaLN beta
  double gate = 1.0;
};

struct BlockWeights {
  ModalityWeights text;
  ModalityWeights image;
};

struct ToyModelWeights {
  std::vector<BlockWeights> blocks;
  std::uint64_t seed = 0;
  Index dim = 0;

  Index block_count() const { return static_cast<Index>(blocks.size()); }
};

/// Seeded weights: projection entries ~ N(0, 1/d), AdaLN scale 1 + 0.1 z,
/// shift 0.1 z, residual gates 1. Bit-identical for identical (seed, B, d).
ToyModelWeights init_weights(std::uint64_t seed, Index blocks, Index dim);

enum class AttentionCombine {
  kConcat,  // one softmax over the concatenated [text keys | image keys] row
  kSum,     // separate softmax per key modality, outputs summed
};

AttentionCombine parse_attention_combine(const std::string& name);

struct ToyBlockState {
  EmbeddingMatrix text;    // V x d
  EmbeddingMatrix latent;  // N x d
  int block = 0;
  int timestep = 0;
};

struct AttentionMap {
  Matrix text_to_text;          // V x V, row-stochastic
  std::optional<Matrix> joint;  // V x (V + N), text keys first (concat mode only)
};

struct BlockOutput {
  ToyBlockState state;
  AttentionMap attention;
};

/// AdaLN -> per-modality Q/K/V -> joint attention -> gated residual update.
BlockOutput joint_attention_block(const ToyBlockState& state, const BlockWeights& weights,
                                  AttentionCombine combine = AttentionCombine::kConcat);

enum class InterventionKind { kTora, kVarianceScaleUp };

struct Intervention {
  InterventionKind kind = InterventionKind::kTora;
  ToraConfig config;
  SemanticVector semantic;
  std::vector<int> blocks;  // 0-based blocks to intervene on; empty means all

  bool applies_to(int block) const;
};

struct PipelineOptions {
  int timesteps = 4;
  AttentionCombine combine = AttentionCombine::kConcat;
  Index clusters = 0;  // 0 selects gmm::default_cluster_count(V)
  std::uint64_t metric_seed = 0;
  bool record_states = false;
};

struct PipelineResult {
  io::MetricReport report;
  Matrix averaged_text_map;
  // Inputs seen by each block (post-intervention), in (timestep, block) order,
  // when record_states is set.
  std::vector<ToyBlockState> states;
};

/// Runs `timesteps` passes over all blocks. Each timestep restarts the text
/// stream from e_init; the latent stream carries over between timesteps.
PipelineResult run_pipeline(const EmbeddingMatrix& e_init, const EmbeddingMatrix& x_init,
                            const ToyModelWeights& weights, const PipelineOptions& options,
                            const std::optional<Intervention>& intervention = std::nullopt);

}  // namespace tora::sim
