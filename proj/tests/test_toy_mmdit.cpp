#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"
#include "tora/error.hpp"
#include "tora/report.hpp"
#include "tora/synthetic.hpp"
#include "tora/toy_mmdit.hpp"

using namespace tora;
using namespace tora::sim;

namespace {

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

BlockWeights hand_block() {
  BlockWeights w;
  w.text = {mat2(1, 0.5, 0, 1), mat2(0.5, 0, 1, 1), mat2(1, -1, 0.5, 2), mat2(1, 0, 0, -1),
            vec2(1.1, 0.9), vec2(0.1, -0.2), 1.0};
  w.image = {mat2(0, 1, 1, 0), mat2(1, 0, 0, 2), mat2(2, 0, 1, 1), mat2(0.5, 0.5, -0.5, 1),
             vec2(1, 1), vec2(0, 0), 0.5};
  return w;
}

ToyBlockState hand_state() {
  ToyBlockState state;
  state.text = mat2(1, 2, 3, -1);
  state.latent.resize(1, 2);
  state.latent << 0.5, -0.5;
  return state;
}

struct Setup {
  ToyModelWeights weights;
  Matrix text;
  Matrix latent;
  SemanticVector semantic;
};

Setup small_setup(std::uint64_t seed, Index blocks = 3, Index dim = 16) {
  synthetic::AnisotropicSpec spec;
  spec.tokens = 8;
  spec.dim = dim;
  const auto data = synthetic::make_anisotropic(seed, spec);
  return {init_weights(seed + 1, blocks, dim), data.tokens, synthetic::make_latents(seed + 2, 5, dim),
          pool_semantic_vector(data.tokens, data.null_tokens)};
}

}  // namespace

TEST_CASE("hand computed block, concatenated scores") {
  // Reference values from an independent numpy transcription of the block.
  const auto out = joint_attention_block(hand_state(), hand_block(), AttentionCombine::kConcat);
  CHECK(testing::max_abs(out.state.text - mat2(1.2122061203149017, 2.869249445728752,
                                               3.7187338484358428, -0.1250568796575986)) < 1e-10);
  CHECK(std::abs(out.state.latent(0, 0) - 0.3346316258972792) < 1e-10);
  CHECK(std::abs(out.state.latent(0, 1) + 0.2990953257508874) < 1e-10);
  REQUIRE(out.attention.joint.has_value());
  Matrix joint(2, 3);
  joint << 0.3760133953371791, 0.4782055307978151, 0.14578107386500574,
           0.13957386643863998, 0.1456228912909435, 0.7148032422704165;
  CHECK(testing::max_abs(*out.attention.joint - joint) < 1e-10);
  CHECK(testing::max_abs(out.attention.text_to_text - mat2(0.44018387304820356, 0.5598161269517964,
                                                           0.48939499715834944, 0.5106050028416506)) < 1e-10);
  CHECK(out.state.block == 1);
}

TEST_CASE("hand computed block, separate softmaxes") {
  const auto out = joint_attention_block(hand_state(), hand_block(), AttentionCombine::kSum);
  CHECK(testing::max_abs(out.state.text - mat2(2.077759491795602, 3.8469338864519163,
                                               4.013785098425085, 0.5615096698757629)) < 1e-10);
  CHECK(std::abs(out.state.latent(0, 0) - 0.7962541670464811) < 1e-10);
  CHECK(std::abs(out.state.latent(0, 1) + 0.5230879817688034) < 1e-10);
  CHECK_FALSE(out.attention.joint.has_value());
}

TEST_CASE("attention rows are distributions") {
  SplitMix64 rng(51);
  for (int trial = 0; trial < 20; ++trial) {
    const auto weights = init_weights(rng.next(), 1, 12);
    ToyBlockState state{testing::gaussian(rng, 7, 12) * 3.0, testing::gaussian(rng, 5, 12), 0, 0};
    const auto out = joint_attention_block(state, weights.blocks[0]);
    for (Index i = 0; i < 7; ++i) {
      CHECK(std::abs(out.attention.text_to_text.row(i).sum() - 1.0) < 1e-12);
      CHECK(std::abs(out.attention.joint->row(i).sum() - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("zero output projection leaves every state unchanged") {
  auto setup = small_setup(52);
  for (auto& block : setup.weights.blocks) {
    block.text.output.setZero();
    block.image.output.setZero();
  }
  PipelineOptions options;
  options.timesteps = 2;
  options.record_states = true;
  const auto result = run_pipeline(setup.text, setup.latent, setup.weights, options);
  REQUIRE(result.states.size() == 6);
  for (const auto& state : result.states) {
    CHECK(state.text == setup.text);
    CHECK(state.latent == setup.latent);
  }
}

TEST_CASE("text resets each timestep while the latent carries over") {
  const auto setup = small_setup(53);
  PipelineOptions options;
  options.timesteps = 3;
  options.record_states = true;
  const auto result = run_pipeline(setup.text, setup.latent, setup.weights, options);
  REQUIRE(result.states.size() == 9);
  CHECK(result.states[0].latent == setup.latent);
  for (int t = 0; t < 3; ++t) {
    CHECK(result.states[static_cast<std::size_t>(3 * t)].text == setup.text);
    CHECK(result.states[static_cast<std::size_t>(3 * t)].timestep == t);
  }
  CHECK(result.states[3].latent != setup.latent);
  for (Index i = 0; i < result.averaged_text_map.rows(); ++i) {
    CHECK(std::abs(result.averaged_text_map.row(i).sum() - 1.0) < 1e-12);
  }
}

TEST_CASE("reports are reproducible byte for byte") {
  const auto setup = small_setup(54);
  PipelineOptions options;
  options.timesteps = 2;
  Intervention intervention;
  intervention.semantic = setup.semantic;
  const auto a = run_pipeline(setup.text, setup.latent, setup.weights, options, intervention);
  const auto b = run_pipeline(setup.text, setup.latent, setup.weights, options, intervention);
  for (auto format : {io::ReportFormat::kJson, io::ReportFormat::kCsv}) {
    CHECK(io::render_report(a.report, format) == io::render_report(b.report, format));
  }
  CHECK(a.averaged_text_map == b.averaged_text_map);
}

TEST_CASE("intervention records delta gamma and changes the metrics") {
  const auto setup = small_setup(55);
  PipelineOptions options;
  options.timesteps = 1;
  const auto baseline = run_pipeline(setup.text, setup.latent, setup.weights, options);
  Intervention intervention;
  intervention.semantic = setup.semantic;
  intervention.blocks = {1};
  const auto tora = run_pipeline(setup.text, setup.latent, setup.weights, options, intervention);

  CHECK_FALSE(baseline.report.find(0, 0, "delta_gamma").has_value());
  CHECK_FALSE(tora.report.find(0, 0, "delta_gamma").has_value());
  CHECK(tora.report.find(0, 1, "delta_gamma").has_value());
  CHECK(*baseline.report.find(0, 0, "eigen_sum") == *tora.report.find(0, 0, "eigen_sum"));
  CHECK(*baseline.report.find(0, 1, "eigen_sum") != *tora.report.find(0, 1, "eigen_sum"));
  for (const char* metric : {"eigen_sum", "global_anisotropy", "iso_score", "xi_local"}) {
    CHECK(tora.report.find(0, 2, metric).has_value());
  }
}

TEST_CASE("variance scale-up intervention") {
  const auto setup = small_setup(56, 2);
  PipelineOptions options;
  options.timesteps = 1;
  Intervention intervention;
  intervention.kind = InterventionKind::kVarianceScaleUp;
  intervention.config.sigma = 2.0;
  const auto result = run_pipeline(setup.text, setup.latent, setup.weights, options, intervention);
  CHECK(*result.report.find(0, 0, "eigen_sum") == doctest::Approx(16.0 * 4.0));
}

TEST_CASE("weights and configuration checks") {
  const auto a = init_weights(9, 2, 4);
  const auto b = init_weights(9, 2, 4);
  CHECK(a.blocks[1].image.value == b.blocks[1].image.value);
  CHECK(a.blocks[0].text.query != a.blocks[0].image.query);
  CHECK(a.blocks[0].text.gate == 1.0);
  CHECK_THROWS_AS(init_weights(1, 0, 4), Error);
  CHECK_THROWS_AS(parse_attention_combine("mean"), Error);

  auto setup = small_setup(57);
  PipelineOptions options;
  options.timesteps = 0;
  CHECK_THROWS_AS(run_pipeline(setup.text, setup.latent, setup.weights, options), Error);
  CHECK_THROWS_AS(run_pipeline(setup.text, Matrix::Ones(2, 3), setup.weights, PipelineOptions{}), Error);

  setup.weights.blocks[0].text.value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    run_pipeline(setup.text, setup.latent, setup.weights, PipelineOptions{});
    FAIL("expected a numerical failure");
  } catch (const Error& error) {
    CHECK(error.code() == ErrorCode::kNumerical);
    CHECK(std::string(error.what()).find("block 0") != std::string::npos);
  }
}
