#include "ctok/metrics.hpp"

#include "ctok/error.hpp"
#include "ctok/util.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ctok {

nlohmann::json EvalReport::to_json() const {
  return {{"metric", metric}, {"value", value}, {"std", std}, {"per_query", per_query}, {"details", details}};
}

double mrr(std::span<const std::size_t> gt_ranks) {
  if (gt_ranks.empty()) throw Error(ErrorCode::EmptyInput, "mrr needs at least one rank");
  double acc = 0.0;
  for (auto r : gt_ranks) {
    if (r < 1) throw Error(ErrorCode::InvalidArgument, "ranks are 1-based");
    acc += 1.0 / static_cast<double>(r);
  }
  return acc / static_cast<double>(gt_ranks.size());
}

double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::DimensionMismatch, "scores and labels differ in length");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (auto l : labels) {
    if (l != 0 && l != 1) throw Error(ErrorCode::InvalidArgument, "labels must be 0 or 1");
    n_pos += static_cast<std::size_t>(l);
  }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error(ErrorCode::OneClassMissing, "auc needs both classes");
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t m = i; m < j; ++m)
      if (labels[idx[m]] == 1) pos_rank_sum += mid_rank;
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

double balanced_accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw Error(ErrorCode::DimensionMismatch, "predictions and labels differ");
  std::size_t tp = 0, tn = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      ++pos;
      tp += predicted[i] == 1;
    } else {
      ++neg;
      tn += predicted[i] != 1;
    }
  }
  if (pos == 0 || neg == 0) throw Error(ErrorCode::OneClassMissing, "balanced accuracy needs both classes");
  return 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) + static_cast<double>(tn) / static_cast<double>(neg));
}

double chance_accuracy(std::size_t num_choices) {
  if (num_choices == 0) throw Error(ErrorCode::InvalidArgument, "no choices");
  return 1.0 / static_cast<double>(num_choices);
}

EvalReport aggregate(const std::string& metric, std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "nothing to aggregate");
  EvalReport r;
  r.metric = metric;
  r.per_query.assign(values.begin(), values.end());
  r.value = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - r.value) * (v - r.value);
  r.std = std::sqrt(var / static_cast<double>(values.size()));
  return r;
}

namespace {

EvalReport split_auc(const std::string& name, std::span<const Vec> positives, std::span<const Vec> negatives,
                     const Vec& query) {
  if (positives.empty() || negatives.empty()) {
    throw Error(ErrorCode::EmptyInput, "recognition split '" + name + "' is empty");
  }
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& f : positives) {
    scores.push_back(cosine(f, query));
    labels.push_back(1);
  }
  for (const auto& f : negatives) {
    scores.push_back(cosine(f, query));
    labels.push_back(0);
  }
  EvalReport r;
  r.metric = "auc_roc";
  r.value = auc_roc(scores, labels);
  r.per_query = scores;
  r.details = {{"split", name}, {"positives", positives.size()}, {"negatives", negatives.size()}};
  return r;
}

std::vector<Vec> features_of(std::span<const Image> images, const ImageEncoder& encoder) {
  std::vector<Vec> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(encoder.encode(img));
  return out;
}

std::size_t argmax_cosine(const Vec& f, std::span<const Vec> refs) {
  std::size_t best = 0;
  double best_score = -2.0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const double s = cosine(f, refs[i]);
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  return best;
}

}  // namespace

std::array<EvalReport, 3> recognition_splits(std::span<const Vec> target, std::span<const Vec> parent,
                                             std::span<const Vec> other, const Vec& token_query,
                                             const Vec& parent_query, ParentSplitQuery third) {
  auto third_report =
      split_auc("parent_vs_other", parent, other, third == ParentSplitQuery::Token ? token_query : parent_query);
  third_report.details["query"] = third == ParentSplitQuery::Token ? "token" : "parent";
  return {split_auc("target_vs_parent", target, parent, token_query),
          split_auc("target_vs_other", target, other, token_query), std::move(third_report)};
}

std::array<EvalReport, 3> recognition_splits(const TokenEmbedding& token, std::string_view tmpl,
                                             const RecognitionSets& sets, const Encoders& encoders,
                                             ParentSplitQuery third) {
  const auto& text = *encoders.text;
  const Vec token_query = encode_text(assemble(tmpl, token, token.parent_concept, text), text).values;
  const Vec parent_query = encode_text(assemble_text(tmpl, "", token.parent_concept, text), text).values;
  const auto t = features_of(sets.target, *encoders.image);
  const auto p = features_of(sets.parent, *encoders.image);
  const auto o = features_of(sets.other, *encoders.image);
  return recognition_splits(t, p, o, token_query, parent_query, third);
}

double token_vs_parent_accuracy(const TokenEmbedding& token, std::string_view tmpl, std::span<const Image> positives,
                                std::span<const Image> negatives, const Encoders& encoders) {
  const auto& text = *encoders.text;
  const Vec token_query = encode_text(assemble(tmpl, token, token.parent_concept, text), text).values;
  const Vec parent_query = encode_text(assemble_text(tmpl, "", token.parent_concept, text), text).values;
  std::vector<int> predicted, labels;
  auto classify = [&](std::span<const Image> set, int label) {
    for (const auto& img : set) {
      const Vec f = encoders.image->encode(img);
      predicted.push_back(cosine(f, token_query) > cosine(f, parent_query) ? 1 : 0);
      labels.push_back(label);
    }
  };
  classify(positives, 1);
  classify(negatives, 0);
  return balanced_accuracy(predicted, labels);
}

std::pair<EvalReport, EvalReport> object_context_accuracy(const std::vector<std::vector<Vec>>& generated,
                                                          std::span<const Vec> context_features,
                                                          std::span<const Vec> class_mean_features,
                                                          std::size_t true_class) {
  if (generated.size() != context_features.size()) {
    throw Error(ErrorCode::DimensionMismatch, "one generated set per context is required");
  }
  if (context_features.size() < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 contexts");
  if (class_mean_features.size() < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 classes");
  if (true_class >= class_mean_features.size()) throw Error(ErrorCode::InvalidArgument, "true class out of range");
  std::vector<double> ctx_per, obj_per;
  std::size_t total = 0, ctx_hits = 0, obj_hits = 0;
  for (std::size_t c = 0; c < generated.size(); ++c) {
    if (generated[c].empty()) throw Error(ErrorCode::EmptyInput, "no generated images for a context");
    std::size_t ch = 0, oh = 0;
    for (const auto& f : generated[c]) {
      ch += argmax_cosine(f, context_features) == c;
      oh += argmax_cosine(f, class_mean_features) == true_class;
    }
    const auto n = static_cast<double>(generated[c].size());
    ctx_per.push_back(static_cast<double>(ch) / n);
    obj_per.push_back(static_cast<double>(oh) / n);
    ctx_hits += ch;
    obj_hits += oh;
    total += generated[c].size();
  }
  EvalReport obj, ctx;
  obj.metric = "object_accuracy";
  obj.value = static_cast<double>(obj_hits) / static_cast<double>(total);
  obj.per_query = obj_per;
  obj.details = {{"chance", chance_accuracy(class_mean_features.size())}};
  ctx.metric = "context_accuracy";
  ctx.value = static_cast<double>(ctx_hits) / static_cast<double>(total);
  ctx.per_query = ctx_per;
  ctx.details = {{"chance", chance_accuracy(context_features.size())}};
  return {obj, ctx};
}

std::pair<EvalReport, EvalReport> object_context_accuracy(const TokenEmbedding& token,
                                                          const std::vector<ContextSpec>& contexts,
                                                          const std::vector<std::vector<Image>>& class_references,
                                                          std::size_t true_class, std::size_t images_per_context,
                                                          std::uint64_t seed, const Backbone& backbone) {
  if (contexts.size() < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 contexts");
  if (class_references.size() < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 classes");
  if (images_per_context < 1) throw Error(ErrorCode::InvalidArgument, "images_per_context must be >= 1");
  const auto& text = backbone.text();
  std::vector<Vec> context_features, class_means;
  for (const auto& c : contexts) context_features.push_back(encode_plain_text(c.name, text).values);
  for (const auto& refs : class_references) {
    if (refs.empty()) throw Error(ErrorCode::NoImages, "a class has no reference images");
    Vec mean = Vec::Zero(static_cast<Eigen::Index>(backbone.image().feature_dim()));
    for (const auto& img : refs) mean += normalized(backbone.image().encode(img));
    class_means.push_back(mean / static_cast<double>(refs.size()));
  }
  std::vector<std::vector<Vec>> generated;
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    const auto query = encode_text(assemble(contexts[c].prompt, token, token.parent_concept, text), text);
    const auto images = backbone.diffusion->generate_batch(query.values, images_per_context, mix_seed(seed, c));
    generated.push_back(features_of(images, backbone.image()));
  }
  return object_context_accuracy(generated, context_features, class_means, true_class);
}

}  // namespace ctok
