#pragma once

#include "ctok/encoder.hpp"
#include "ctok/types.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ctok {

// Learned custom-token rows (k x d). When is_projected is set the rows are
// stored after projection onto the attribute subspace.
struct TokenEmbedding {
  std::string concept_id;
  std::string parent_concept;
  Mat vectors;
  std::optional<std::string> subspace_id;
  bool is_projected = false;
  std::string training_fingerprint;

  std::size_t num_tokens() const { return static_cast<std::size_t>(vectors.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors.cols()); }
  Vec mean_vector() const { return vectors.colwise().mean().transpose(); }
  // Content reference used by composed queries and the artifact store.
  std::string ref() const;
};

enum class SubspaceSource { Manual, CorrelationSelected };

std::string_view to_string(SubspaceSource source);
SubspaceSource parse_subspace_source(std::string_view text);

// Affine attribute subspace: mean plus orthonormal basis rows (r x d).
// The projection operator is basis^T * basis applied about the mean.
struct AttributeSubspace {
  std::vector<std::string> attributes;
  Vec mean;
  Mat basis;
  SubspaceSource source = SubspaceSource::Manual;
  std::vector<std::string> warnings;

  std::size_t rank() const { return static_cast<std::size_t>(basis.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
  std::string id() const;
};

struct AffinityReport {
  std::vector<std::string> labels;
  Mat matrix;
  double clip_at = 0.4;
};

struct NormReport {
  std::vector<double> per_attribute_norms;
  double mean = 0.0;
  double std = 0.0;  // population convention
  double learned_token_norm = 0.0;  // mean over the token rows
  std::vector<double> learned_row_norms;
  double learned_mean_vector_norm = 0.0;
};

// Mean of the sub-token embedding rows of an attribute word.
Vec attribute_embedding(std::string_view attribute, const TextBackbone& text);
std::vector<Vec> attribute_embeddings(const std::vector<std::string>& attributes, const TextBackbone& text);

// min(count - 1, d), the full span of the attribute set.
std::size_t default_subspace_rank(std::size_t count, std::size_t dim);

// Mean-centred PCA. Directions are ordered by descending singular value and
// sign-normalised so each row's largest-magnitude entry is positive. Retained
// directions with singular value < 1e-10 are dropped and recorded in warnings.
AttributeSubspace build_subspace(std::span<const Vec> vectors, std::size_t rank);
AttributeSubspace build_subspace(const std::vector<std::string>& attributes, std::span<const Vec> vectors,
                                 std::size_t rank, SubspaceSource source = SubspaceSource::Manual);

Vec project(const Vec& v, const AttributeSubspace& subspace);
Mat project_rows(const Mat& rows, const AttributeSubspace& subspace);
// Jacobian-transpose of the projection applied to row gradients (P is symmetric).
Mat project_rows_vjp(const Mat& grad_rows, const AttributeSubspace& subspace);

struct ScoredAttribute {
  std::string name;
  double similarity = 0.0;
};

// Orders candidates by similarity (descending, ties lexicographic) and keeps top_n.
std::vector<ScoredAttribute> rank_attributes(const std::vector<std::string>& names,
                                             const std::vector<Vec>& text_features,
                                             const Vec& mean_image_feature, std::size_t top_n);

std::vector<std::string> select_attributes(const std::vector<std::string>& candidates,
                                           const std::vector<Image>& concept_images, std::size_t top_n,
                                           const Encoders& encoders);

AffinityReport affinity(std::span<const std::pair<std::string, Vec>> labeled, double clip_at = 0.4);
NormReport norm_report(std::span<const Vec> attribute_vectors, const TokenEmbedding& learned);

// {version, attributes, dim, rank, mean, basis, source}; float32 payloads.
nlohmann::json subspace_to_json(const AttributeSubspace& subspace);
AttributeSubspace subspace_from_json(const nlohmann::json& doc);
std::string serialize_subspace(const AttributeSubspace& subspace);
AttributeSubspace parse_subspace(std::string_view text);

}  // namespace ctok
