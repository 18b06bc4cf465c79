#include "ctok/gair.hpp"

#include "ctok/error.hpp"
#include "ctok/util.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <future>

namespace ctok {

std::vector<double> default_weight_grid() {
  std::vector<double> w;
  for (int i = 0; i <= 10; ++i) w.push_back(i / 10.0);
  return w;
}

void GairRequest::validate() const {
  if (weight_grid.empty()) throw Error(ErrorCode::NoWeights, "weight grid is empty");
  for (std::size_t i = 0; i < weight_grid.size(); ++i) {
    const double w = weight_grid[i];
    if (!(w >= 0.0 && w <= 1.0)) throw Error(ErrorCode::WeightOutOfRange, "grid weight outside [0, 1]");
    if (i > 0 && !(w > weight_grid[i - 1])) {
      throw Error(ErrorCode::InvalidArgument, "weight grid must be strictly ascending");
    }
  }
  if (previews_per_weight < 1) throw Error(ErrorCode::InvalidArgument, "previews_per_weight must be >= 1");
  if (reference_images.empty()) throw Error(ErrorCode::NoImages, "GAIR needs reference concept images");
  if (attributes.empty()) throw Error(ErrorCode::EmptyAttributes, "GAIR needs at least one attribute");
  if (workers < 1) throw Error(ErrorCode::InvalidArgument, "workers must be >= 1");
  validate_template(caption);
}

Vec context_condition(const QueryComposer& composer) {
  if (composer.attribute_features().empty()) throw Error(ErrorCode::EmptyAttributes, "no attributes to average");
  return composer.attribute_mean();
}

std::uint64_t preview_seed(std::uint64_t request_seed, double weight, std::size_t preview) {
  return mix_seed(mix_seed(request_seed, std::bit_cast<std::uint64_t>(weight)), preview);
}

std::uint64_t context_seed(std::uint64_t request_seed, std::size_t image) {
  return mix_seed(mix_seed(request_seed, 0xC0C7E47ULL), image);
}

std::vector<Image> context_images(const QueryComposer& composer, const ImageGenerator& generator, std::size_t m,
                                  std::uint64_t seed) {
  const Vec condition = context_condition(composer);
  std::vector<Image> out;
  for (std::size_t j = 0; j < m; ++j) out.push_back(generator.generate(condition, context_seed(seed, j)));
  return out;
}

namespace {

// Context images depend only on the attribute prompts, never on the token.
class AttributeOnlyComposer {
 public:
  AttributeOnlyComposer(const TextBackbone& text, std::string_view caption, const std::vector<std::string>& attributes,
                        std::string_view parent) {
    if (attributes.empty()) throw Error(ErrorCode::EmptyAttributes, "context images need attributes");
    Vec sum;
    for (const auto& a : attributes) {
      const Vec f = normalized(encode_text(assemble_text(caption, a, parent, text), text).values);
      sum = sum.size() == 0 ? f : Vec(sum + f);
    }
    mean_ = sum / static_cast<double>(attributes.size());
  }
  const Vec& mean() const { return mean_; }

 private:
  Vec mean_;
};

}  // namespace

std::vector<Image> context_images(std::string_view caption, const std::vector<std::string>& attributes,
                                  std::string_view parent, const TextBackbone& text,
                                  const ImageGenerator& generator, std::size_t m, std::uint64_t seed) {
  const AttributeOnlyComposer composer(text, caption, attributes, parent);
  std::vector<Image> out;
  for (std::size_t j = 0; j < m; ++j) out.push_back(generator.generate(composer.mean(), context_seed(seed, j)));
  return out;
}

double set_similarity(const Vec& feature, std::span<const Vec> references) {
  if (references.empty()) throw Error(ErrorCode::NoImages, "empty reference set");
  double acc = 0.0;
  for (const auto& r : references) acc += cosine(feature, r);
  return acc / static_cast<double>(references.size());
}

std::size_t select_optimal_weight(std::span<const double> weights, std::span<const double> scores) {
  if (weights.empty()) throw Error(ErrorCode::NoWeights, "no weights to choose from");
  if (weights.size() != scores.size()) throw Error(ErrorCode::DimensionMismatch, "weights and scores differ");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best] || (scores[i] == scores[best] && weights[i] > weights[best])) best = i;
  }
  return best;
}

GairResult run_gair(const GairRequest& request, const TokenEmbedding& token, const TextBackbone& text,
                    const ImageEncoder& image, const ImageGenerator& generator) {
  request.validate();
  const QueryComposer composer(text, request.caption, token, request.parent, request.attributes);

  GairResult result;
  result.weights = request.weight_grid;
  result.context_images = context_images(composer, generator, request.previews_per_weight, request.seed);

  std::vector<Vec> object_refs, context_refs;
  for (const auto& img : request.reference_images) object_refs.push_back(image.encode(img));
  for (const auto& img : result.context_images) context_refs.push_back(image.encode(img));

  struct WeightEval {
    std::vector<Image> previews;
    std::vector<double> scores;
    double mean = 0.0;
  };
  auto evaluate = [&](double w) {
    WeightEval out;
    const auto query = composer.compose(w);
    for (std::size_t j = 0; j < request.previews_per_weight; ++j) {
      Image preview = generator.generate(query.feature.values, preview_seed(request.seed, w, j));
      const Vec f = image.encode(preview);
      const double s = std::min(set_similarity(f, object_refs), set_similarity(f, context_refs));
      out.scores.push_back(s);
      out.mean += s / static_cast<double>(request.previews_per_weight);
      out.previews.push_back(std::move(preview));
    }
    return out;
  };

  std::vector<WeightEval> evals(request.weight_grid.size());
  if (request.workers <= 1) {
    for (std::size_t i = 0; i < evals.size(); ++i) evals[i] = evaluate(request.weight_grid[i]);
  } else {
    for (std::size_t start = 0; start < evals.size(); start += request.workers) {
      std::vector<std::future<WeightEval>> batch;
      const std::size_t stop = std::min(evals.size(), start + request.workers);
      for (std::size_t i = start; i < stop; ++i) {
        batch.push_back(std::async(std::launch::async, evaluate, request.weight_grid[i]));
      }
      for (std::size_t i = start; i < stop; ++i) evals[i] = batch[i - start].get();
    }
  }
  for (auto& e : evals) {
    result.scores.push_back(e.mean);
    result.preview_scores.push_back(std::move(e.scores));
    result.previews.push_back(std::move(e.previews));
  }
  result.optimal_index = select_optimal_weight(result.weights, result.scores);
  result.optimal_weight = result.weights[result.optimal_index];
  return result;
}

nlohmann::json gair_result_to_json(const GairResult& result, const std::vector<std::vector<std::string>>& preview_paths) {
  nlohmann::json doc;
  doc["optimal_weight"] = result.optimal_weight;
  doc["optimal_index"] = result.optimal_index;
  doc["weights"] = result.weights;
  doc["scores"] = result.scores;
  doc["preview_scores"] = result.preview_scores;
  if (!preview_paths.empty()) doc["preview_images"] = preview_paths;
  return doc;
}

std::string gair_curve_csv(const GairResult& result) {
  auto shortest = [](double v) {
    char buf[32];
    const auto end = std::to_chars(buf, buf + sizeof buf, v).ptr;
    return std::string(buf, end);
  };
  std::string out = "w,score\n";
  for (std::size_t i = 0; i < result.weights.size(); ++i) {
    out += shortest(result.weights[i]) + "," + shortest(result.scores[i]) + "\n";
  }
  return out;
}

}  // namespace ctok
