#pragma once

#include "ctok/backbone.hpp"
#include "ctok/embedding.hpp"
#include "ctok/encoder.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ctok {

struct EvalReport {
  std::string metric;
  double value = 0.0;
  std::vector<double> per_query;
  double std = 0.0;  // over repeats; 0 for a single run
  nlohmann::json details = nlohmann::json::object();

  nlohmann::json to_json() const;
};

double mrr(std::span<const std::size_t> gt_ranks);
// Mann-Whitney statistic with mid-ranks: P(score+ > score-) with ties as 1/2.
double auc_roc(std::span<const double> scores, std::span<const int> labels);
double balanced_accuracy(std::span<const int> predicted, std::span<const int> labels);
double chance_accuracy(std::size_t num_choices);

// Mean and population standard deviation of repeated metric values.
EvalReport aggregate(const std::string& metric, std::span<const double> values);

// Which text query scores the third (parent vs other classes) split.
enum class ParentSplitQuery { Token, Parent };

struct RecognitionSets {
  std::vector<Image> target;
  std::vector<Image> parent;
  std::vector<Image> other;
};

// AUC-ROC for target vs parent, target vs other and parent vs other. The
// first two score images against the token prompt; the third uses `third`.
std::array<EvalReport, 3> recognition_splits(std::span<const Vec> target, std::span<const Vec> parent,
                                             std::span<const Vec> other, const Vec& token_query,
                                             const Vec& parent_query, ParentSplitQuery third);
std::array<EvalReport, 3> recognition_splits(const TokenEmbedding& token, std::string_view tmpl,
                                             const RecognitionSets& sets, const Encoders& encoders,
                                             ParentSplitQuery third = ParentSplitQuery::Token);

// Image predicted as the concept when cos(f(x), g(tmpl with token)) exceeds
// cos(f(x), g(tmpl without token)).
double token_vs_parent_accuracy(const TokenEmbedding& token, std::string_view tmpl, std::span<const Image> positives,
                                std::span<const Image> negatives, const Encoders& encoders);

struct ContextSpec {
  std::string name;    // scored against g(name)
  std::string prompt;  // template with {*} and {c}, e.g. "a photo of a {*} {c} on the beach"
};

// Feature-level core: generated[i] holds image features produced for context
// i. Context accuracy picks the nearest context text feature, object accuracy
// the nearest class-mean reference feature.
std::pair<EvalReport, EvalReport> object_context_accuracy(const std::vector<std::vector<Vec>>& generated,
                                                          std::span<const Vec> context_features,
                                                          std::span<const Vec> class_mean_features,
                                                          std::size_t true_class);

std::pair<EvalReport, EvalReport> object_context_accuracy(const TokenEmbedding& token,
                                                          const std::vector<ContextSpec>& contexts,
                                                          const std::vector<std::vector<Image>>& class_references,
                                                          std::size_t true_class, std::size_t images_per_context,
                                                          std::uint64_t seed, const Backbone& backbone);

}  // namespace ctok
