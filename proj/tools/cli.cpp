#include "cli.hpp"

#include <spdlog/sinks/null_sink.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "tora/error.hpp"
#include "tora/gmm.hpp"
#include "tora/io.hpp"
#include "tora/metrics.hpp"
#include "tora/report.hpp"
#include "tora/rng.hpp"
#include "tora/synthetic.hpp"
#include "tora/toy_mmdit.hpp"
#include "tora/transform.hpp"

namespace tora::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::shared_ptr<spdlog::logger>& current_logger() {
  static std::shared_ptr<spdlog::logger> logger =
      std::make_shared<spdlog::logger>("tora", std::make_shared<spdlog::sinks::null_sink_mt>());
  return logger;
}

spdlog::logger& log() { return *current_logger(); }

spdlog::level::level_enum level_from_env() {
  const char* value = std::getenv("TORA_LOG");
  if (value == nullptr) return spdlog::level::warn;
  const std::string level(value);
  if (level == "error") return spdlog::level::err;
  if (level == "warn") return spdlog::level::warn;
  if (level == "info") return spdlog::level::info;
  if (level == "debug") return spdlog::level::debug;
  return spdlog::level::warn;
}

std::string format_sigma(double sigma) { return io::format_double(sigma); }

// ---------------------------------------------------------------------------
// shared helpers

struct LoadedStack {
  std::vector<EmbeddingMatrix> blocks;
  io::ArrayFile array;
  std::string digest;
};

LoadedStack load_stack(const std::string& path) {
  const auto bytes = io::read_file_bytes(path);
  LoadedStack loaded;
  loaded.array = io::decode_array(bytes);
  loaded.blocks = io::to_stack(loaded.array);
  loaded.digest = io::digest_hex(bytes);
  log().debug("read {} ({} block(s), {}x{})", path, loaded.blocks.size(),
              loaded.blocks.front().rows(), loaded.blocks.front().cols());
  return loaded;
}

// One semantic vector for all blocks (rank-2 pair) or one per block (rank-3 pair).
std::vector<SemanticVector> load_semantics(const CliConfig& config, std::size_t blocks, Index dim) {
  const bool has_cond = !config.cond_path.empty();
  const bool has_null = !config.null_path.empty();
  require(has_cond == has_null, ErrorCode::kConfig, "--cond and --null must be given together");
  if (!has_cond) return {SemanticVector::zero(dim)};

  const auto cond = load_stack(config.cond_path);
  const auto null = load_stack(config.null_path);
  require(cond.blocks.size() == null.blocks.size(), ErrorCode::kValidation,
          "conditional and null inputs hold different block counts");
  require(cond.blocks.size() == 1 || cond.blocks.size() == blocks, ErrorCode::kValidation,
          "semantic pair must be a single matrix or one per input block");
  std::vector<SemanticVector> semantics;
  for (std::size_t b = 0; b < cond.blocks.size(); ++b) {
    semantics.push_back(pool_semantic_vector(cond.blocks[b], null.blocks[b]));
    require(semantics.back().direction.size() == dim, ErrorCode::kValidation,
            "semantic vector dimension does not match the input embeddings");
  }
  return semantics;
}

ToraConfig tora_config(const CliConfig& config) {
  ToraConfig tora;
  tora.sigma = config.sigma;
  tora.enable_alignment = !config.no_align;
  if (config.elbow_k) tora.elbow_override = *config.elbow_k;
  return tora;
}

void emit_report(const CliConfig& config, const io::MetricReport& report, std::ostream& out) {
  const auto format = io::parse_report_format(config.format);
  if (config.report.empty()) {
    out << io::render_report(report, format);
  } else {
    io::write_report(config.report, report, format);
    log().info("wrote report {}", config.report);
  }
}

std::string report_extension(const CliConfig& config) {
  return io::parse_report_format(config.format) == io::ReportFormat::kJson ? ".json" : ".csv";
}

// ---------------------------------------------------------------------------
// simulation setup shared by simulate and sweep

struct Simulation {
  sim::ToyModelWeights weights;
  EmbeddingMatrix text;
  EmbeddingMatrix latent;
  SemanticVector semantic;
  sim::PipelineOptions options;
  std::string input_digest = "synthetic";
};

Simulation build_simulation(const CliConfig& config) {
  require(config.blocks >= 1 && config.timesteps >= 1 && config.tokens >= 2 &&
              config.latents >= 1 && config.dim >= 2,
          ErrorCode::kConfig, "simulate needs blocks, timesteps, latents >= 1, tokens >= 2, dim >= 2");
  SplitMix64 root(config.seed);
  const std::uint64_t weight_seed = root.next();
  const std::uint64_t text_seed = root.next();
  const std::uint64_t latent_seed = root.next();

  Simulation simulation;
  if (!config.inputs.empty()) {
    const auto loaded = load_stack(config.inputs.front());
    require(loaded.blocks.size() == 1, ErrorCode::kValidation, "simulate expects a single (V, d) input");
    simulation.text = loaded.blocks.front();
    simulation.input_digest = loaded.digest;
    simulation.semantic = load_semantics(config, 1, simulation.text.cols()).front();
  } else {
    synthetic::AnisotropicSpec spec;
    spec.tokens = config.tokens;
    spec.dim = config.dim;
    const auto generated = synthetic::make_anisotropic(text_seed, spec);
    simulation.text = generated.tokens;
    if (config.cond_path.empty() && config.null_path.empty()) {
      simulation.semantic = pool_semantic_vector(generated.tokens, generated.null_tokens);
    } else {
      simulation.semantic = load_semantics(config, 1, simulation.text.cols()).front();
    }
  }
  const Index dim = simulation.text.cols();
  simulation.weights = sim::init_weights(weight_seed, config.blocks, dim);
  simulation.latent = synthetic::make_latents(latent_seed, config.latents, dim);
  simulation.options.timesteps = config.timesteps;
  simulation.options.combine = sim::parse_attention_combine(config.attn_combine);
  simulation.options.clusters = config.clusters;
  simulation.options.metric_seed = config.seed;
  return simulation;
}

std::map<std::string, std::string> simulation_echo(const CliConfig& config, const std::string& variant,
                                                   double sigma) {
  return {
      {"align", config.no_align ? "false" : "true"},
      {"attn_combine", config.attn_combine},
      {"blocks", std::to_string(config.blocks)},
      {"clusters", std::to_string(config.clusters)},
      {"dim", std::to_string(config.dim)},
      {"elbow_k", config.elbow_k ? std::to_string(*config.elbow_k) : "mdc"},
      {"latents", std::to_string(config.latents)},
      {"sigma", format_sigma(sigma)},
      {"subcommand", config.subcommand},
      {"timesteps", std::to_string(config.timesteps)},
      {"tokens", std::to_string(config.tokens)},
      {"variant", variant},
  };
}

sim::PipelineResult run_variant(const CliConfig& config, const Simulation& simulation, bool intervene,
                                double sigma) {
  std::optional<sim::Intervention> intervention;
  if (intervene) {
    sim::Intervention tora;
    tora.config = tora_config(config);
    tora.config.sigma = sigma;
    tora.semantic = simulation.semantic;
    intervention = std::move(tora);
  }
  auto result = sim::run_pipeline(simulation.text, simulation.latent, simulation.weights,
                                  simulation.options, intervention);
  result.report.metadata.config = simulation_echo(config, intervene ? "tora" : "baseline", sigma);
  result.report.metadata.seed = config.seed;
  result.report.metadata.input_digest = simulation.input_digest;
  return result;
}

void validate_increasing(const std::vector<double>& grid) {
  require(!grid.empty(), ErrorCode::kConfig, "sigma grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    require(std::isfinite(grid[i]) && grid[i] > 0.0, ErrorCode::kConfig, "sigma grid values must be positive");
    if (i > 0) require(grid[i] > grid[i - 1], ErrorCode::kConfig, "sigma grid must be strictly increasing");
  }
}

}  // namespace

std::vector<double> parse_grid(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream stream(text);
  std::string part;
  while (std::getline(stream, part, ':')) parts.push_back(part);

  auto number = [&](const std::string& token) {
    try {
      std::size_t used = 0;
      const double value = std::stod(token, &used);
      if (used != token.size()) throw std::invalid_argument(token);
      return value;
    } catch (const std::exception&) {
      fail(ErrorCode::kConfig, "bad sigma grid '" + text + "'");
    }
  };

  std::vector<double> grid;
  if (parts.size() == 1) {
    grid.push_back(number(parts[0]));
  } else if (parts.size() == 3) {
    const double start = number(parts[0]);
    const double stop = number(parts[1]);
    const double step = number(parts[2]);
    require(step > 0.0 && stop >= start, ErrorCode::kConfig, "sigma grid needs STEP > 0 and B >= A");
    const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
    for (long i = 0; i < count; ++i) {
      // Snap to 12 decimals so 1.0 + 2 * 0.1 prints as 1.2.
      grid.push_back(std::round((start + static_cast<double>(i) * step) * 1e12) / 1e12);
    }
  } else {
    fail(ErrorCode::kConfig, "sigma grid must be A:B:STEP or a single value, got '" + text + "'");
  }
  validate_increasing(grid);
  return grid;
}

int cmd_transform(const CliConfig& config, std::ostream& /*out*/) {
  require(config.inputs.size() == 1, ErrorCode::kConfig, "transform takes exactly one --input");
  require(!config.output.empty(), ErrorCode::kConfig, "transform needs --output");
  const auto input = load_stack(config.inputs.front());
  const Index dim = input.blocks.front().cols();
  const auto semantics = load_semantics(config, input.blocks.size(), dim);
  const ToraConfig tora = tora_config(config);

  const auto results = apply_tora_blocks(input.blocks, semantics, tora);

  std::vector<EmbeddingMatrix> transformed;
  json blocks = json::array();
  for (std::size_t b = 0; b < results.size(); ++b) {
    const auto& result = results[b];
    transformed.push_back(result.embedding);
    blocks.push_back({
        {"block", b},
        {"k", result.k},
        {"theta", result.theta},
        {"alignment", alignment_status_name(result.alignment)},
        {"singular_values", std::vector<double>(result.singular_values.begin(), result.singular_values.end())},
        {"scaled_singular_values", std::vector<double>(result.scaled_singular_values.begin(),
                                                       result.scaled_singular_values.end())},
    });
    log().info("block {}: k={} theta={} alignment={}", b, result.k, result.theta,
               alignment_status_name(result.alignment));
  }

  const io::ArrayFile output = input.array.shape.size() == 2
                                   ? io::from_matrix(transformed.front(), input.array.dtype)
                                   : io::from_stack(transformed, input.array.dtype);
  io::write_array(config.output, output);

  json manifest = {
      {"input", config.inputs.front()},
      {"input_digest", input.digest},
      {"output", config.output},
      {"dtype", io::descr_of(input.array.dtype)},
      {"shape", input.array.shape},
      {"sigma", config.sigma},
      {"alignment_enabled", !config.no_align},
      {"semantic_pair", !config.cond_path.empty()},
      {"elbow_override", config.elbow_k ? json(*config.elbow_k) : json(nullptr)},
      {"blocks", blocks},
  };
  const std::string manifest_path =
      config.report.empty() ? config.output + ".manifest.json" : config.report;
  io::write_text(manifest_path, manifest.dump(2) + "\n");
  return 0;
}

int cmd_analyze(const CliConfig& config, std::ostream& out) {
  require(config.inputs.size() == 1 || config.inputs.size() == 2, ErrorCode::kConfig,
          "analyze takes one --input, or two for a before/after pair");
  const auto before = load_stack(config.inputs.front());
  std::optional<LoadedStack> after;
  if (config.inputs.size() == 2) {
    after = load_stack(config.inputs[1]);
    require(after->array.shape == before.array.shape, ErrorCode::kValidation,
            "before/after inputs differ in shape");
  }
  const Index dim = before.blocks.front().cols();
  const bool with_semantic = !config.cond_path.empty() || !config.null_path.empty();
  const auto semantics = load_semantics(config, before.blocks.size(), dim);

  io::MetricReport report;
  for (std::size_t b = 0; b < before.blocks.size(); ++b) {
    const int block = static_cast<int>(b);
    const auto& e = before.blocks[b];
    const Index clusters = config.clusters > 0 ? config.clusters : gmm::default_cluster_count(e.rows());
    const auto labels = gmm::assign(gmm::fit_gmm(e, clusters, config.seed), e).labels;

    auto record = [&](const std::string& prefix, const EmbeddingMatrix& m) {
      report.add(0, block, prefix + "eigen_sum", metrics::eigen_sum(m));
      report.add(0, block, prefix + "global_anisotropy", metrics::global_anisotropy(m));
      report.add(0, block, prefix + "iso_score", metrics::iso_score(m, metrics::iso_score_components(m)));
      // The token grouping comes from the first input so pairs compare like with like.
      report.add(0, block, prefix + "xi_local", metrics::local_isotropy(m, labels));
    };
    record("", e);
    if (after) {
      const auto& e_after = after->blocks[b];
      record("after.", e_after);
      if (with_semantic) {
        const auto& s = semantics[semantics.size() == 1 ? 0 : b];
        const auto dg = metrics::delta_gamma(s, e, e_after);
        report.add(0, block, "delta_gamma", dg.delta);
        report.add(0, block, "gamma_before", dg.gamma_before);
        report.add(0, block, "gamma_after", dg.gamma_after);
        report.add(0, block, "sign_rule_value", dg.sign_rule_value);
      }
    }
  }

  report.metadata.seed = config.seed;
  report.metadata.input_digest = before.digest + (after ? "+" + after->digest : "");
  report.metadata.config = {
      {"clusters", std::to_string(config.clusters)},
      {"inputs", std::to_string(config.inputs.size())},
      {"semantic_pair", with_semantic ? "true" : "false"},
      {"subcommand", "analyze"},
  };
  report.sort();
  emit_report(config, report, out);
  return 0;
}

int cmd_simulate(const CliConfig& config, std::ostream& /*out*/) {
  require(!config.output.empty(), ErrorCode::kConfig, "simulate needs --output DIR");
  const Simulation simulation = build_simulation(config);
  const auto format = io::parse_report_format(config.format);
  const fs::path dir(config.output);
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create output directory " + dir.string());

  for (const bool intervene : {false, true}) {
    const std::string variant = intervene ? "tora" : "baseline";
    const auto result = run_variant(config, simulation, intervene, config.sigma);
    io::write_report(dir / (variant + "_report" + report_extension(config)), result.report, format);
    io::write_array(dir / (variant + "_attention.npy"),
                    io::from_matrix(result.averaged_text_map, io::DType::kFloat64));
    log().info("{}: {} report entries", variant, result.report.entries.size());
  }
  return 0;
}

int cmd_sweep(const CliConfig& config, std::ostream& out) {
  const auto grid = parse_grid(config.grid);
  require(config.jobs >= 1, ErrorCode::kConfig, "--jobs must be >= 1");
  const Simulation simulation = build_simulation(config);

  std::vector<io::MetricReport> reports(grid.size());
  for (std::size_t start = 0; start < grid.size(); start += static_cast<std::size_t>(config.jobs)) {
    const std::size_t stop = std::min(grid.size(), start + static_cast<std::size_t>(config.jobs));
    std::vector<std::future<io::MetricReport>> pending;
    for (std::size_t i = start; i < stop; ++i) {
      pending.push_back(std::async(std::launch::async, [&, i] {
        return run_variant(config, simulation, true, grid[i]).report;
      }));
    }
    for (std::size_t i = start; i < stop; ++i) reports[i] = pending[i - start].get();
  }

  std::ostringstream csv;
  csv << "# seed=" << config.seed << "\n";
  csv << "# input_digest=" << simulation.input_digest << "\n";
  for (const auto& [key, value] : simulation_echo(config, "tora", config.sigma)) {
    if (key != "sigma") csv << "# config." << key << "=" << value << "\n";
  }
  csv << "sigma,timestep,block,metric,value\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    reports[i].validate();
    for (const auto& entry : reports[i].entries) {
      csv << format_sigma(grid[i]) << ',' << entry.timestep << ',' << entry.block << ','
          << entry.metric << ',' << io::format_double(entry.value) << "\n";
    }
  }
  if (config.report.empty()) {
    out << csv.str();
  } else {
    io::write_text(config.report, csv.str());
  }
  return 0;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("tora", sink);
  logger->set_level(level_from_env());
  logger->set_pattern("[tora] [%l] %v");
  current_logger() = logger;

  CliConfig config;
  CLI::App app{"Token spacing and residual alignment for text embeddings"};
  app.require_subcommand(1);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", config.seed, "Base seed");
    sub->add_option("--clusters", config.clusters, "GMM component count (default max(2, V/8))");
    sub->add_option("--format", config.format, "Report format")->check(CLI::IsMember({"json", "csv"}));
    sub->add_option("--report", config.report, "Report/manifest path (default: stdout or derived)");
  };
  auto add_transform_flags = [&](CLI::App* sub) {
    sub->add_option("--sigma", config.sigma, "Token spacing factor");
    sub->add_flag("--no-align", config.no_align, "Disable residual alignment");
    sub->add_option("--elbow-k", config.elbow_k, "Fixed principal dimension count");
    sub->add_option("--cond", config.cond_path, "Conditional embeddings");
    sub->add_option("--null", config.null_path, "Null (unconditional) embeddings");
  };
  auto add_sim_flags = [&](CLI::App* sub) {
    sub->add_option("--blocks", config.blocks, "Joint-attention blocks");
    sub->add_option("--timesteps", config.timesteps, "Timesteps");
    sub->add_option("--tokens", config.tokens, "Text tokens V");
    sub->add_option("--latents", config.latents, "Latent tokens N");
    sub->add_option("--dim", config.dim, "Embedding dimension d");
    sub->add_option("--attn-combine", config.attn_combine, "Score combination")
        ->check(CLI::IsMember({"concat", "sum"}));
  };

  auto* transform = app.add_subcommand("transform", "Apply the transform to (V,d) or (B,V,d) embeddings");
  transform->add_option("--input", config.inputs, "Input array file")->required();
  transform->add_option("--output", config.output, "Output array file")->required();
  add_transform_flags(transform);
  add_common(transform);

  auto* analyze = app.add_subcommand("analyze", "Geometry metrics for one matrix or a before/after pair");
  analyze->add_option("--input", config.inputs, "Input array file (repeat for a pair)")->required();
  analyze->add_option("--cond", config.cond_path, "Conditional embeddings");
  analyze->add_option("--null", config.null_path, "Null (unconditional) embeddings");
  add_common(analyze);

  auto* simulate = app.add_subcommand("simulate", "Run the toy joint-attention model with and without the transform");
  simulate->add_option("--input", config.inputs, "Initial text embeddings (default: synthetic)");
  simulate->add_option("--output", config.output, "Output directory")->required();
  add_transform_flags(simulate);
  add_sim_flags(simulate);
  add_common(simulate);

  auto* sweep = app.add_subcommand("sweep", "Simulator metrics over a sigma grid (CSV)");
  sweep->add_option("--input", config.inputs, "Initial text embeddings (default: synthetic)");
  sweep->add_option("--grid", config.grid, "Sigma grid A:B:STEP");
  sweep->add_option("--jobs", config.jobs, "Concurrent sweep points");
  add_transform_flags(sweep);
  add_sim_flags(sweep);
  add_common(sweep);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& error) {
    err << json{{"code", "usage_error"}, {"message", error.what()}}.dump() << "\n";
    return 2;
  }

  try {
    if (transform->parsed()) return config.subcommand = "transform", cmd_transform(config, out);
    if (analyze->parsed()) return config.subcommand = "analyze", cmd_analyze(config, out);
    if (simulate->parsed()) return config.subcommand = "simulate", cmd_simulate(config, out);
    if (sweep->parsed()) return config.subcommand = "sweep", cmd_sweep(config, out);
  } catch (const Error& error) {
    log().debug("{}", error.what());
    err << json{{"code", std::string(error.code_name())}, {"message", error.what()}}.dump() << "\n";
    return 1;
  } catch (const std::exception& error) {
    err << json{{"code", "internal_error"}, {"message", error.what()}}.dump() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace tora::cli
