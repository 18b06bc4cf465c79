#pragma once

#include "ctok/diffusion.hpp"
#include "ctok/embedding.hpp"
#include "ctok/encoder.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ctok {

// {0.0, 0.1, ..., 1.0}
std::vector<double> default_weight_grid();

struct GairRequest {
  std::string caption = "image of a {*} {c}";  // t, with token and parent slots
  std::string parent;
  std::vector<std::string> attributes;
  std::vector<double> weight_grid = default_weight_grid();
  std::size_t previews_per_weight = 4;
  std::uint64_t seed = 0;
  std::vector<Image> reference_images;  // x
  std::size_t workers = 1;

  void validate() const;
};

struct GairResult {
  double optimal_weight = 0.0;
  std::size_t optimal_index = 0;
  std::vector<double> weights;
  std::vector<double> scores;                     // S, aligned with weights
  std::vector<std::vector<double>> preview_scores;  // min(object, context) per preview
  std::vector<std::vector<Image>> previews;
  std::vector<Image> context_images;  // x_c
};

// Mean of the component features g([t, a_i, c]) (each unit-normalised).
Vec context_condition(const QueryComposer& composer);
std::vector<Image> context_images(const QueryComposer& composer, const ImageGenerator& generator, std::size_t m,
                                  std::uint64_t seed);
std::vector<Image> context_images(std::string_view caption, const std::vector<std::string>& attributes,
                                  std::string_view parent, const TextBackbone& text,
                                  const ImageGenerator& generator, std::size_t m, std::uint64_t seed);

// Seed of preview j at weight w. Keyed by the weight's value, so adding or
// removing other grid points leaves a weight's previews unchanged.
std::uint64_t preview_seed(std::uint64_t request_seed, double weight, std::size_t preview);
std::uint64_t context_seed(std::uint64_t request_seed, std::size_t image);

// Mean over pairwise cosine similarities between two feature sets.
double set_similarity(const Vec& feature, std::span<const Vec> references);

// argmax with ties broken toward the largest weight.
std::size_t select_optimal_weight(std::span<const double> weights, std::span<const double> scores);

GairResult run_gair(const GairRequest& request, const TokenEmbedding& token, const TextBackbone& text,
                    const ImageEncoder& image, const ImageGenerator& generator);

nlohmann::json gair_result_to_json(const GairResult& result, const std::vector<std::vector<std::string>>& preview_paths = {});
std::string gair_curve_csv(const GairResult& result);

}  // namespace ctok
