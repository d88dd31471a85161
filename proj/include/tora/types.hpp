#pragma once

#include <Eigen/Dense>

namespace tora {

/// Token embeddings, one row per token (V x d). Also used for latent tokens.
using EmbeddingMatrix = Eigen::MatrixXd;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

}  // namespace tora
