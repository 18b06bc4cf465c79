#pragma once

#include "ctok/backbone.hpp"
#include "ctok/embedding.hpp"
#include "ctok/encoder.hpp"
#include "ctok/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ctok {

enum class Optimizer { Sgd, Momentum, Adam };

std::string_view to_string(Optimizer optimizer);
Optimizer parse_optimizer(std::string_view text);

struct TrainingConfig {
  double lambda_sd = 1.0;
  double lambda_ce = 1e-5;
  double learning_rate = 5e-4;
  std::size_t iterations = 20000;
  std::size_t batch_size = 4;
  std::size_t num_tokens = 10;
  std::optional<std::size_t> subspace_rank;  // unset: min(|A| - 1, d)
  std::size_t negatives_k = 32;
  double temperature = 100.0;
  double init_jitter = 1e-3;
  std::uint64_t seed = 0;
  PromptOrder prompt_order = PromptOrder::TokenThenParent;
  Optimizer optimizer = Optimizer::Sgd;
  double momentum = 0.9;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainingConfig from_json(const nlohmann::json& doc);
  std::string fingerprint() const;
};

struct TrainingBatch {
  std::vector<Image> positives;
  std::vector<Image> negatives;

  // x'' = [x, x']
  std::vector<Image> merged() const;
  // 1 for positives, 0 for negatives, aligned with merged().
  std::vector<int> labels() const;
};

// Generated parent-concept negatives: generate_batch(g("image of a <parent>"), k, seed).
// With a cache directory the images are stored keyed by (parent, backbone, seed);
// a cached run of at least k images is reused since batches are seed-prefix stable.
std::vector<Image> sample_negatives(std::string_view parent, std::size_t k, const Backbone& backbone,
                                    std::uint64_t seed,
                                    const std::optional<std::filesystem::path>& cache_dir = std::nullopt);

struct BalancedCrossEntropy {
  double value = 0.0;
  std::vector<double> grad_token_logits;
};

// Two-class softmax cross-entropy over (token, parent) logits, averaged per
// class and then across the two classes.
BalancedCrossEntropy balanced_cross_entropy(std::span<const double> token_logits,
                                            std::span<const double> parent_logits, std::span<const int> labels);

// Logits are temperature * cos(f(x), tau); the gradient is taken w.r.t. the
// token condition only (the parent prompt carries no learned rows).
LossAndGradient classification_loss(const Vec& token_condition, const Vec& parent_condition,
                                    std::span<const Vec> positive_features, std::span<const Vec> negative_features,
                                    double temperature);

double classification_loss(const TokenEmbedding& token, const TrainingBatch& batch, std::string_view parent,
                           const Encoders& encoders, std::string_view tmpl = "image of a {*} {c}",
                           double temperature = 100.0);

struct LossInputs {
  std::string tmpl;  // ordered paraphrase with {*} and {c}
  std::string parent;
  const AttributeSubspace* subspace = nullptr;
  std::span<const Vec> positive_latents;
  std::span<const Vec> positive_features;  // unit-normalised
  std::span<const Vec> negative_features;  // unit-normalised
  std::uint64_t noise_seed = 0;
};

struct TotalLoss {
  double total = 0.0;
  double sd = 0.0;
  double ce = 0.0;
  Mat grad_rows;  // w.r.t. the raw (pre-projection) rows
};

// lambda_sd * l_SD + lambda_ce * l_CE evaluated at project(raw_rows). A term
// whose weight is zero is still reported when its inputs are present.
TotalLoss total_loss(const Mat& raw_rows, const LossInputs& inputs, const TrainingConfig& config,
                     const Backbone& backbone);

struct TrainingProgress {
  std::size_t iteration = 0;
  std::size_t iterations = 0;
  double total = 0.0;
  double sd = 0.0;
  double ce = 0.0;
};

struct TrainOptions {
  PromptTemplate templates = PromptTemplate::standard();
  std::optional<std::filesystem::path> negative_cache;
  std::string concept_id = "concept";
  std::function<void(const TrainingProgress&)> on_progress;
  std::size_t progress_every = 100;
};

struct TokenArtifact {
  TokenEmbedding token;
  std::optional<AttributeSubspace> subspace;
  nlohmann::json config;
  nlohmann::json metrics;
};

// Parent-word embedding (projected when a subspace is given) replicated k
// times plus seeded jitter: the raw rows before the first step.
Mat initial_token_rows(std::string_view parent, const AttributeSubspace* subspace, const TrainingConfig& config,
                       const TextBackbone& text);

// Optimises the raw rows with the projection in the forward pass; rows are
// stored post-projection and rounded to float32. A null subspace trains
// unprojected rows.
TokenArtifact train_token(const std::vector<Image>& positives, std::string_view parent,
                          const AttributeSubspace* subspace, const TrainingConfig& config, const Backbone& backbone,
                          const TrainOptions& options = {});

nlohmann::json token_artifact_to_json(const TokenArtifact& artifact);
TokenArtifact token_artifact_from_json(const nlohmann::json& doc);
std::string serialize_token_artifact(const TokenArtifact& artifact);
TokenArtifact parse_token_artifact(std::string_view text);

}  // namespace ctok
