#pragma once

#include "ctok/encoder.hpp"
#include "ctok/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ctok {

struct IndexEntry {
  std::string id;
  Vec feature;  // unit norm, float32-representable
  std::optional<std::string> label;
};

struct RetrievalIndex {
  std::vector<IndexEntry> entries;
  std::size_t dim = 0;
  std::string encoder_checksum;

  std::size_t size() const { return entries.size(); }
  // Content hash of the serialised form.
  std::string id() const;
};

struct IndexImage {
  std::string id;
  Image image;
  std::optional<std::string> label;
};

RetrievalIndex build_index(std::span<const IndexImage> images, const ImageEncoder& encoder);
// Feature-level builder; features are normalised and rounded to float32.
RetrievalIndex build_index(const std::vector<std::string>& ids, std::span<const Vec> features,
                           const std::vector<std::optional<std::string>>& labels = {});

struct RankedId {
  std::string id;
  double score = 0.0;
};

// Descending cosine score, ties by ascending id.
std::vector<RankedId> rank_scored(const Vec& query, const RetrievalIndex& index);
std::vector<std::string> rank(const Vec& query, const RetrievalIndex& index);
// 1-based position of `id` in `ranking`; 0 when absent.
std::size_t rank_of(const std::vector<std::string>& ranking, std::string_view id);

// u64 LE header length, header JSON, then count x dim float32 LE.
std::vector<std::uint8_t> serialize_index(const RetrievalIndex& index);
RetrievalIndex parse_index(std::span<const std::uint8_t> bytes);
void save_index(const RetrievalIndex& index, const std::filesystem::path& path);
RetrievalIndex load_index(const std::filesystem::path& path);

struct ManifestRow {
  std::string image_path;
  std::string class_id;
  std::string caption;
};

// CSV with header image_path,class_id,caption; quoted fields may contain commas.
std::vector<ManifestRow> parse_manifest(std::string_view text);
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);
std::string write_manifest(const std::vector<ManifestRow>& rows);

}  // namespace ctok
