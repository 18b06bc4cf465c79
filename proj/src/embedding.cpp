#include "ctok/embedding.hpp"

#include "ctok/error.hpp"
#include "ctok/util.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ctok {

std::string TokenEmbedding::ref() const {
  return sha256_hex(concept_id + "|" + parent_concept + "|" + fingerprint(vectors)).substr(0, 16);
}

std::string_view to_string(SubspaceSource source) {
  return source == SubspaceSource::Manual ? "manual" : "correlation-selected";
}

SubspaceSource parse_subspace_source(std::string_view text) {
  if (text == "manual") return SubspaceSource::Manual;
  if (text == "correlation-selected") return SubspaceSource::CorrelationSelected;
  throw Error(ErrorCode::Format, "unknown subspace source '" + std::string(text) + "'");
}

std::string AttributeSubspace::id() const { return sha256_hex(serialize_subspace(*this)).substr(0, 16); }

Vec attribute_embedding(std::string_view attribute, const TextBackbone& text) {
  const auto ids = text.tokenize(attribute);
  if (ids.empty()) throw Error(ErrorCode::UnknownToken, "attribute '" + std::string(attribute) + "' has no tokens");
  const Mat rows = text.embed(ids);
  return rows.colwise().mean().transpose();
}

std::vector<Vec> attribute_embeddings(const std::vector<std::string>& attributes, const TextBackbone& text) {
  std::vector<Vec> out;
  out.reserve(attributes.size());
  for (const auto& a : attributes) out.push_back(attribute_embedding(a, text));
  return out;
}

std::size_t default_subspace_rank(std::size_t count, std::size_t dim) {
  if (count == 0) return 0;
  return std::min(count - 1, dim);
}

AttributeSubspace build_subspace(std::span<const Vec> vectors, std::size_t rank) {
  if (vectors.empty()) throw Error(ErrorCode::EmptyInput, "build_subspace needs at least one vector");
  const auto d = vectors.front().size();
  for (const auto& v : vectors) {
    if (v.size() != d) throw Error(ErrorCode::DimensionMismatch, "attribute vectors differ in dimension");
    if (!v.allFinite()) throw Error(ErrorCode::DegenerateInput, "attribute vector has non-finite entries");
  }
  const auto n = static_cast<Eigen::Index>(vectors.size());
  if (rank > std::min<std::size_t>(vectors.size(), static_cast<std::size_t>(d))) {
    throw Error(ErrorCode::RankTooLarge, "rank " + std::to_string(rank) + " exceeds min(count=" +
                                             std::to_string(vectors.size()) + ", d=" + std::to_string(d) + ")");
  }

  AttributeSubspace out;
  out.mean = Vec::Zero(d);
  for (const auto& v : vectors) out.mean += v;
  out.mean /= static_cast<double>(n);

  Mat centered(n, d);
  for (Eigen::Index i = 0; i < n; ++i) centered.row(i) = (vectors[static_cast<std::size_t>(i)] - out.mean).transpose();

  if (rank == 0) {
    out.basis = Mat(0, d);
    return out;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const Eigen::MatrixXd& v = svd.matrixV();

  std::size_t kept = 0;
  for (std::size_t i = 0; i < rank; ++i) {
    if (static_cast<Eigen::Index>(i) < sv.size() && sv[static_cast<Eigen::Index>(i)] >= 1e-10) ++kept;
  }
  if (kept < rank) {
    out.warnings.push_back("rank reduced from " + std::to_string(rank) + " to " + std::to_string(kept) +
                           ": zero-variance directions dropped");
  }

  out.basis = Mat(static_cast<Eigen::Index>(kept), d);
  for (std::size_t i = 0; i < kept; ++i) {
    Vec dir = v.col(static_cast<Eigen::Index>(i));
    Eigen::Index arg = 0;
    dir.cwiseAbs().maxCoeff(&arg);
    if (dir[arg] < 0) dir = -dir;
    out.basis.row(static_cast<Eigen::Index>(i)) = dir.transpose();
  }
  return out;
}

AttributeSubspace build_subspace(const std::vector<std::string>& attributes, std::span<const Vec> vectors,
                                 std::size_t rank, SubspaceSource source) {
  if (attributes.size() != vectors.size()) {
    throw Error(ErrorCode::InvalidArgument, "attribute names and vectors differ in length");
  }
  auto out = build_subspace(vectors, rank);
  out.attributes = attributes;
  out.source = source;
  return out;
}

Vec project(const Vec& v, const AttributeSubspace& subspace) {
  if (v.size() != subspace.mean.size()) {
    throw Error(ErrorCode::DimensionMismatch, "vector has dimension " + std::to_string(v.size()) +
                                                  ", subspace has " + std::to_string(subspace.mean.size()));
  }
  if (!v.allFinite()) throw Error(ErrorCode::DegenerateInput, "cannot project a non-finite vector");
  const Vec coeffs = subspace.basis * (v - subspace.mean);
  return subspace.basis.transpose() * coeffs + subspace.mean;
}

Mat project_rows(const Mat& rows, const AttributeSubspace& subspace) {
  Mat out(rows.rows(), rows.cols());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out.row(i) = project(rows.row(i).transpose(), subspace).transpose();
  return out;
}

Mat project_rows_vjp(const Mat& grad_rows, const AttributeSubspace& subspace) {
  if (grad_rows.cols() != subspace.mean.size()) {
    throw Error(ErrorCode::DimensionMismatch, "gradient rows do not match subspace dimension");
  }
  return (grad_rows * subspace.basis.transpose()) * subspace.basis;
}

std::vector<ScoredAttribute> rank_attributes(const std::vector<std::string>& names,
                                             const std::vector<Vec>& text_features,
                                             const Vec& mean_image_feature, std::size_t top_n) {
  if (names.empty()) throw Error(ErrorCode::EmptyCandidates, "no candidate attributes");
  if (names.size() != text_features.size()) {
    throw Error(ErrorCode::InvalidArgument, "names and features differ in length");
  }
  std::vector<ScoredAttribute> scored;
  scored.reserve(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    scored.push_back({names[i], cosine(text_features[i], mean_image_feature)});
  }
  std::sort(scored.begin(), scored.end(), [](const ScoredAttribute& a, const ScoredAttribute& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.name < b.name;
  });
  if (scored.size() > top_n) scored.resize(top_n);
  return scored;
}

std::vector<std::string> select_attributes(const std::vector<std::string>& candidates,
                                           const std::vector<Image>& concept_images, std::size_t top_n,
                                           const Encoders& encoders) {
  if (candidates.empty()) throw Error(ErrorCode::EmptyCandidates, "no candidate attributes");
  if (concept_images.empty()) throw Error(ErrorCode::NoImages, "select_attributes needs concept images");
  Vec mean = Vec::Zero(static_cast<Eigen::Index>(encoders.image->feature_dim()));
  for (const auto& img : concept_images) mean += normalized(encoders.image->encode(img));
  mean /= static_cast<double>(concept_images.size());

  std::vector<Vec> features;
  features.reserve(candidates.size());
  for (const auto& c : candidates) features.push_back(encode_plain_text(c, *encoders.text).values);

  std::vector<std::string> out;
  for (auto& s : rank_attributes(candidates, features, mean, top_n)) out.push_back(std::move(s.name));
  return out;
}

AffinityReport affinity(std::span<const std::pair<std::string, Vec>> labeled, double clip_at) {
  if (labeled.size() < 2) throw Error(ErrorCode::InvalidArgument, "affinity needs at least two vectors");
  const auto n = static_cast<Eigen::Index>(labeled.size());
  std::vector<Vec> unit;
  AffinityReport report;
  report.clip_at = clip_at;
  for (const auto& [label, v] : labeled) {
    const double norm = v.norm();
    if (!(norm > 0.0)) throw Error(ErrorCode::ZeroVector, "zero vector for label '" + label + "'");
    if (!unit.empty() && v.size() != unit.front().size()) {
      throw Error(ErrorCode::DimensionMismatch, "affinity vectors differ in dimension");
    }
    unit.push_back(v / norm);
    report.labels.push_back(label);
  }
  report.matrix = Mat::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double c = std::clamp(unit[static_cast<std::size_t>(i)].dot(unit[static_cast<std::size_t>(j)]), -1.0, 1.0);
      report.matrix(i, j) = c;
      report.matrix(j, i) = c;
    }
  }
  return report;
}

NormReport norm_report(std::span<const Vec> attribute_vectors, const TokenEmbedding& learned) {
  if (attribute_vectors.empty()) throw Error(ErrorCode::EmptyInput, "norm_report needs attribute vectors");
  NormReport report;
  for (const auto& v : attribute_vectors) {
    if (static_cast<std::size_t>(v.size()) != learned.dim()) {
      throw Error(ErrorCode::DimensionMismatch, "attribute vector does not match token dimension");
    }
    report.per_attribute_norms.push_back(v.norm());
  }
  const double n = static_cast<double>(report.per_attribute_norms.size());
  report.mean = std::accumulate(report.per_attribute_norms.begin(), report.per_attribute_norms.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : report.per_attribute_norms) ss += (x - report.mean) * (x - report.mean);
  report.std = std::sqrt(ss / n);

  for (Eigen::Index i = 0; i < learned.vectors.rows(); ++i) report.learned_row_norms.push_back(learned.vectors.row(i).norm());
  if (!report.learned_row_norms.empty()) {
    report.learned_token_norm = std::accumulate(report.learned_row_norms.begin(), report.learned_row_norms.end(), 0.0) /
                                static_cast<double>(report.learned_row_norms.size());
    report.learned_mean_vector_norm = learned.mean_vector().norm();
  }
  return report;
}

nlohmann::json subspace_to_json(const AttributeSubspace& s) {
  nlohmann::json doc;
  doc["version"] = 1;
  doc["attributes"] = s.attributes;
  doc["dim"] = s.dim();
  doc["rank"] = s.rank();
  doc["source"] = std::string(to_string(s.source));
  doc["mean"] = encode_f32(std::span<const double>(s.mean.data(), static_cast<std::size_t>(s.mean.size())));
  doc["basis"] = encode_f32(std::span<const double>(s.basis.data(), static_cast<std::size_t>(s.basis.size())));
  if (!s.warnings.empty()) doc["warnings"] = s.warnings;
  return doc;
}

AttributeSubspace subspace_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("version").get<int>() != 1) throw Error(ErrorCode::Format, "unsupported subspace version");
    AttributeSubspace s;
    s.attributes = doc.at("attributes").get<std::vector<std::string>>();
    const auto dim = doc.at("dim").get<std::size_t>();
    const auto rank = doc.at("rank").get<std::size_t>();
    if (doc.contains("source")) s.source = parse_subspace_source(doc.at("source").get<std::string>());
    if (doc.contains("warnings")) s.warnings = doc.at("warnings").get<std::vector<std::string>>();
    const auto mean = decode_f32(doc.at("mean").get<std::string>());
    const auto basis = decode_f32(doc.at("basis").get<std::string>());
    if (mean.size() != dim || basis.size() != rank * dim) {
      throw Error(ErrorCode::Format, "subspace payload sizes do not match dim/rank");
    }
    s.mean = Eigen::Map<const Vec>(mean.data(), static_cast<Eigen::Index>(dim));
    s.basis = Eigen::Map<const Mat>(basis.data(), static_cast<Eigen::Index>(rank), static_cast<Eigen::Index>(dim));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("malformed subspace document: ") + e.what());
  }
}

std::string serialize_subspace(const AttributeSubspace& subspace) { return subspace_to_json(subspace).dump(2) + "\n"; }

AttributeSubspace parse_subspace(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("subspace is not valid JSON: ") + e.what());
  }
  return subspace_from_json(doc);
}

}  // namespace ctok
