#include "tora/synthetic.hpp"

#include <cmath>

#include "tora/error.hpp"
#include "tora/rng.hpp"

namespace tora::synthetic {
namespace {

Vector gaussian_vector(SplitMix64& rng, Index dim) {
  Vector v(dim);
  for (Index j = 0; j < dim; ++j) v(j) = rng.normal();
  return v;
}

}  // namespace

SyntheticEmbeddings make_anisotropic(std::uint64_t seed, const AnisotropicSpec& spec) {
  require(spec.tokens >= 1 && spec.dim >= 2 && spec.clusters >= 1, ErrorCode::kValidation,
          "synthetic generator needs tokens >= 1, dim >= 2, clusters >= 1");
  SplitMix64 rng(seed);
  const Vector axis = Vector::Ones(spec.dim) / std::sqrt(static_cast<double>(spec.dim));

  Matrix centers(spec.clusters, spec.dim);
  for (Index c = 0; c < spec.clusters; ++c) {
    Vector side = gaussian_vector(rng, spec.dim);
    side -= axis.dot(side) * axis;
    side.normalize();
    centers.row(c) = spec.center_radius *
                     (std::cos(spec.cone_angle) * axis + std::sin(spec.cone_angle) * side).transpose();
  }

  SyntheticEmbeddings out;
  out.tokens.resize(spec.tokens, spec.dim);
  for (Index i = 0; i < spec.tokens; ++i) {
    out.tokens.row(i) = centers.row(i % spec.clusters) + spec.spread * gaussian_vector(rng, spec.dim).transpose();
  }
  Vector offset = gaussian_vector(rng, spec.dim);
  offset *= spec.semantic_norm / offset.norm();
  out.null_tokens = out.tokens.rowwise() - offset.transpose();
  return out;
}

EmbeddingMatrix make_latents(std::uint64_t seed, Index count, Index dim) {
  SplitMix64 rng(seed);
  EmbeddingMatrix latents(count, dim);
  for (Index i = 0; i < count; ++i) {
    for (Index j = 0; j < dim; ++j) latents(i, j) = rng.normal();
  }
  return latents;
}

}  // namespace tora::synthetic
