#include "tora/toy_mmdit.hpp"

#include <algorithm>
#include <cmath>

#include "tora/error.hpp"
#include "tora/gmm.hpp"
#include "tora/metrics.hpp"
#include "tora/rng.hpp"

namespace tora::sim {
namespace {

constexpr double kLayerNormEps = 1e-6;

Matrix random_matrix(SplitMix64& rng, Index dim, double scale) {
  Matrix m(dim, dim);
  for (Index i = 0; i < dim; ++i) {
    for (Index j = 0; j < dim; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

ModalityWeights random_modality(SplitMix64& rng, Index dim) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  ModalityWeights w;
  w.query = random_matrix(rng, dim, scale);
  w.key = random_matrix(rng, dim, scale);
  w.value = random_matrix(rng, dim, scale);
  w.output = random_matrix(rng, dim, scale);
  w.scale.resize(dim);
  w.shift.resize(dim);
  for (Index j = 0; j < dim; ++j) w.scale(j) = 1.0 + 0.1 * rng.normal();
  for (Index j = 0; j < dim; ++j) w.shift(j) = 0.1 * rng.normal();
  w.gate = 1.0;
  return w;
}

Matrix adaptive_layer_norm(const Matrix& x, const ModalityWeights& w) {
  Matrix h(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const Eigen::RowVectorXd offset = x.row(i).array() - mean;
    const double variance = offset.squaredNorm() / static_cast<double>(x.cols());
    h.row(i) = offset / std::sqrt(variance + kLayerNormEps);
  }
  return (h.array().rowwise() * w.scale.transpose().array()).rowwise() + w.shift.transpose().array();
}

Matrix row_softmax(const Matrix& scores) {
  Matrix out(scores.rows(), scores.cols());
  for (Index i = 0; i < scores.rows(); ++i) {
    const double peak = scores.row(i).maxCoeff();
    const Eigen::RowVectorXd expd = (scores.row(i).array() - peak).exp();
    out.row(i) = expd / expd.sum();
  }
  return out;
}

struct Projections {
  Matrix q, k, v;
};

Projections project(const Matrix& h, const ModalityWeights& w) {
  return {h * w.query, h * w.key, h * w.value};
}

struct AttentionOutput {
  Matrix output;    // rows x d
  Matrix own;       // weights over the query modality's keys
  Matrix other;     // weights over the other modality's keys
};

// Attention for queries of one modality over [own keys | other keys].
AttentionOutput attend(const Matrix& query, const Projections& own, const Projections& other,
                       double inv_sqrt_d, AttentionCombine combine) {
  const Matrix own_scores = (query * own.k.transpose()) * inv_sqrt_d;
  const Matrix other_scores = (query * other.k.transpose()) * inv_sqrt_d;
  AttentionOutput out;
  if (combine == AttentionCombine::kConcat) {
    Matrix joint(query.rows(), own_scores.cols() + other_scores.cols());
    joint << own_scores, other_scores;
    const Matrix weights = row_softmax(joint);
    out.own = weights.leftCols(own_scores.cols());
    out.other = weights.rightCols(other_scores.cols());
  } else {
    out.own = row_softmax(own_scores);
    out.other = row_softmax(other_scores);
  }
  out.output = out.own * own.v + out.other * other.v;
  return out;
}

}  // namespace

ToyModelWeights init_weights(std::uint64_t seed, Index blocks, Index dim) {
  require(blocks >= 1 && dim >= 2, ErrorCode::kValidation, "toy model needs B >= 1 and d >= 2");
  SplitMix64 rng(seed);
  ToyModelWeights weights;
  weights.seed = seed;
  weights.dim = dim;
  weights.blocks.reserve(static_cast<std::size_t>(blocks));
  for (Index b = 0; b < blocks; ++b) {
    BlockWeights block;
    block.text = random_modality(rng, dim);
    block.image = random_modality(rng, dim);
    weights.blocks.push_back(std::move(block));
  }
  return weights;
}

AttentionCombine parse_attention_combine(const std::string& name) {
  if (name == "concat") return AttentionCombine::kConcat;
  if (name == "sum") return AttentionCombine::kSum;
  fail(ErrorCode::kConfig, "unknown attention combine mode '" + name + "'");
}

BlockOutput joint_attention_block(const ToyBlockState& state, const BlockWeights& weights,
                                  AttentionCombine combine) {
  const Index dim = state.text.cols();
  require(state.latent.cols() == dim && weights.text.query.rows() == dim &&
              weights.image.query.rows() == dim,
          ErrorCode::kValidation, "block weights and states disagree on d");
  require(state.text.rows() >= 1 && state.latent.rows() >= 1, ErrorCode::kValidation,
          "joint attention needs at least one text and one latent token");

  const Projections text = project(adaptive_layer_norm(state.text, weights.text), weights.text);
  const Projections image = project(adaptive_layer_norm(state.latent, weights.image), weights.image);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dim));

  const AttentionOutput text_attn = attend(text.q, text, image, inv_sqrt_d, combine);
  const AttentionOutput image_attn = attend(image.q, image, text, inv_sqrt_d, combine);

  BlockOutput out;
  out.state.block = state.block + 1;
  out.state.timestep = state.timestep;
  out.state.text = state.text + weights.text.gate * (text_attn.output * weights.text.output);
  out.state.latent = state.latent + weights.image.gate * (image_attn.output * weights.image.output);
  if (!out.state.text.allFinite() || !out.state.latent.allFinite()) {
    fail(ErrorCode::kNumerical, "non-finite activations in block " + std::to_string(state.block) +
                                    " at timestep " + std::to_string(state.timestep));
  }

  // The text self-attention map is the text-key part renormalised per row,
  // which equals softmax(Q_txt K_txt^T / sqrt(d)) in both combine modes.
  out.attention.text_to_text = row_softmax((text.q * text.k.transpose()) * inv_sqrt_d);
  if (combine == AttentionCombine::kConcat) {
    Matrix joint(state.text.rows(), state.text.rows() + state.latent.rows());
    joint << text_attn.own, text_attn.other;
    out.attention.joint = std::move(joint);
  }
  return out;
}

bool Intervention::applies_to(int block) const {
  return blocks.empty() || std::find(blocks.begin(), blocks.end(), block) != blocks.end();
}

namespace {

EmbeddingMatrix intervene(const Intervention& intervention, const EmbeddingMatrix& e) {
  if (intervention.kind == InterventionKind::kVarianceScaleUp) {
    return variance_scale_up(e, intervention.config.sigma);
  }
  return apply_tora(e, intervention.semantic, intervention.config).embedding;
}

template <typename Fn>
void record_if_defined(io::MetricReport& report, int t, int b, const char* name, Fn&& compute) {
  try {
    report.add(t, b, name, compute());
  } catch (const Error& error) {
    // Degenerate geometry (e.g. no cluster with two members) leaves the metric out.
    if (error.code() != ErrorCode::kDegenerate) throw;
  }
}

void record_metrics(io::MetricReport& report, int t, int b, const EmbeddingMatrix& e,
                    const PipelineOptions& options) {
  report.add(t, b, "eigen_sum", metrics::eigen_sum(e));
  record_if_defined(report, t, b, "global_anisotropy", [&] { return metrics::global_anisotropy(e); });
  record_if_defined(report, t, b, "iso_score",
                    [&] { return metrics::iso_score(e, metrics::iso_score_components(e)); });
  record_if_defined(report, t, b, "xi_local", [&] {
    const Index clusters = options.clusters > 0 ? options.clusters : gmm::default_cluster_count(e.rows());
    const auto model = gmm::fit_gmm(e, clusters, options.metric_seed);
    const auto assignment = gmm::assign(model, e);
    return metrics::local_isotropy(e, assignment.labels);
  });
}

}  // namespace

PipelineResult run_pipeline(const EmbeddingMatrix& e_init, const EmbeddingMatrix& x_init,
                            const ToyModelWeights& weights, const PipelineOptions& options,
                            const std::optional<Intervention>& intervention) {
  require(options.timesteps >= 1, ErrorCode::kConfig, "need at least one timestep");
  require(weights.block_count() >= 1, ErrorCode::kConfig, "need at least one block");
  require(e_init.cols() == weights.dim && x_init.cols() == weights.dim, ErrorCode::kValidation,
          "initial embeddings do not match the model dimension");
  require(e_init.rows() >= 2, ErrorCode::kValidation, "pipeline metrics need at least two text tokens");

  PipelineResult result;
  result.averaged_text_map = Matrix::Zero(e_init.rows(), e_init.rows());
  const bool semantic_defined =
      intervention && intervention->semantic.direction.size() == e_init.cols() &&
      intervention->semantic.direction.norm() > 1e-12;

  EmbeddingMatrix latent = x_init;
  for (int t = 0; t < options.timesteps; ++t) {
    ToyBlockState state{e_init, latent, 0, t};
    for (int b = 0; b < static_cast<int>(weights.block_count()); ++b) {
      state.block = b;
      if (intervention && intervention->applies_to(b)) {
        EmbeddingMatrix adjusted = intervene(*intervention, state.text);
        if (semantic_defined) {
          record_if_defined(result.report, t, b, "delta_gamma", [&] {
            return metrics::delta_gamma(intervention->semantic, state.text, adjusted).delta;
          });
        }
        state.text = std::move(adjusted);
      }
      record_metrics(result.report, t, b, state.text, options);
      if (options.record_states) result.states.push_back(state);

      BlockOutput out = joint_attention_block(state, weights.blocks[static_cast<std::size_t>(b)],
                                              options.combine);
      result.averaged_text_map += out.attention.text_to_text;
      state = std::move(out.state);
    }
    latent = state.latent;
  }
  result.averaged_text_map /= static_cast<double>(options.timesteps * weights.block_count());
  result.report.sort();
  return result;
}

}  // namespace tora::sim
