#pragma once

#include <cstdint>

#include "tora/types.hpp"

namespace tora::synthetic {

/// Parameters of the anisotropic clustered generator. Cluster centres sit on a
/// cone of half-angle `cone_angle` around the fixed unit axis (1, ..., 1)/sqrt(d)
/// at distance `center_radius` from the origin; tokens are assigned to clusters
/// round-robin and scattered with isotropic Gaussian noise of scale `spread`.
struct AnisotropicSpec {
  Index tokens = 16;
  Index dim = 64;
  Index clusters = 4;
  double cone_angle = 0.8;  // radians
  double center_radius = 4.0;
  double spread = 0.5;
  double semantic_norm = 1.0;  // norm of the conditional/null offset
};

struct SyntheticEmbeddings {
  EmbeddingMatrix tokens;       // conditional embeddings
  EmbeddingMatrix null_tokens;  // tokens minus a seeded offset of norm semantic_norm
};

SyntheticEmbeddings make_anisotropic(std::uint64_t seed, const AnisotropicSpec& spec = {});

/// Standard-normal latent tokens (N x d).
EmbeddingMatrix make_latents(std::uint64_t seed, Index count, Index dim);

}  // namespace tora::synthetic
