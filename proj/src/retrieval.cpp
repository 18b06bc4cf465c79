#include "ctok/retrieval.hpp"

#include "ctok/error.hpp"
#include "ctok/util.hpp"

#include <boost/tokenizer.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>
#include <sstream>

namespace ctok {

std::string RetrievalIndex::id() const {
  const auto bytes = serialize_index(*this);
  return sha256_hex(std::span<const std::uint8_t>(bytes)).substr(0, 16);
}

RetrievalIndex build_index(const std::vector<std::string>& ids, std::span<const Vec> features,
                           const std::vector<std::optional<std::string>>& labels) {
  if (ids.empty()) throw Error(ErrorCode::EmptyInput, "cannot index an empty image set");
  if (ids.size() != features.size()) throw Error(ErrorCode::DimensionMismatch, "ids and features differ in length");
  if (!labels.empty() && labels.size() != ids.size()) {
    throw Error(ErrorCode::DimensionMismatch, "labels and ids differ in length");
  }
  std::set<std::string> seen;
  RetrievalIndex index;
  index.dim = static_cast<std::size_t>(features.front().size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!seen.insert(ids[i]).second) throw Error(ErrorCode::DuplicateId, "duplicate image id '" + ids[i] + "'");
    if (static_cast<std::size_t>(features[i].size()) != index.dim) {
      throw Error(ErrorCode::DimensionMismatch, "feature dimensions differ");
    }
    IndexEntry e;
    e.id = ids[i];
    e.feature = round_f32(normalized(features[i]));
    if (!labels.empty()) e.label = labels[i];
    index.entries.push_back(std::move(e));
  }
  return index;
}

RetrievalIndex build_index(std::span<const IndexImage> images, const ImageEncoder& encoder) {
  std::vector<std::string> ids;
  std::vector<Vec> features;
  std::vector<std::optional<std::string>> labels;
  for (const auto& item : images) {
    ids.push_back(item.id);
    features.push_back(encoder.encode(item.image));
    labels.push_back(item.label);
  }
  auto index = build_index(ids, features, labels);
  index.encoder_checksum = encoder.checksum();
  return index;
}

std::vector<RankedId> rank_scored(const Vec& query, const RetrievalIndex& index) {
  if (index.entries.empty()) throw Error(ErrorCode::EmptyIndex, "index is empty");
  if (static_cast<std::size_t>(query.size()) != index.dim) {
    throw Error(ErrorCode::DimensionMismatch, "query dimension does not match index");
  }
  const Vec q = normalized(query);
  std::vector<RankedId> out;
  out.reserve(index.entries.size());
  for (const auto& e : index.entries) out.push_back({e.id, e.feature.dot(q)});
  std::sort(out.begin(), out.end(), [](const RankedId& a, const RankedId& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  return out;
}

std::vector<std::string> rank(const Vec& query, const RetrievalIndex& index) {
  std::vector<std::string> ids;
  for (auto& r : rank_scored(query, index)) ids.push_back(std::move(r.id));
  return ids;
}

std::size_t rank_of(const std::vector<std::string>& ranking, std::string_view id) {
  const auto it = std::find(ranking.begin(), ranking.end(), id);
  return it == ranking.end() ? 0 : static_cast<std::size_t>(it - ranking.begin()) + 1;
}

std::vector<std::uint8_t> serialize_index(const RetrievalIndex& index) {
  nlohmann::json header;
  header["version"] = 1;
  header["dim"] = index.dim;
  header["count"] = index.entries.size();
  header["encoder_checksum"] = index.encoder_checksum;
  nlohmann::json ids = nlohmann::json::array(), labels = nlohmann::json::array();
  for (const auto& e : index.entries) {
    ids.push_back(e.id);
    labels.push_back(e.label ? nlohmann::json(*e.label) : nlohmann::json(nullptr));
  }
  header["ids"] = ids;
  header["labels"] = labels;
  const std::string text = header.dump();
  std::vector<std::uint8_t> out;
  const std::uint64_t len = text.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& e : index.entries)
    for (Eigen::Index j = 0; j < e.feature.size(); ++j) append_f32_le(out, e.feature[j]);
  return out;
}

RetrievalIndex parse_index(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw Error(ErrorCode::Format, "index file is truncated");
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(bytes[static_cast<std::size_t>(i)]) << (8 * i);
  if (len > bytes.size() - 8) throw Error(ErrorCode::Format, "index header length exceeds file size");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("bad index header: ") + e.what());
  }
  RetrievalIndex index;
  try {
    if (header.at("version").get<int>() != 1) throw Error(ErrorCode::Format, "unsupported index version");
    index.dim = header.at("dim").get<std::size_t>();
    index.encoder_checksum = header.value("encoder_checksum", "");
    const auto count = header.at("count").get<std::size_t>();
    const auto& ids = header.at("ids");
    const auto& labels = header.at("labels");
    if (ids.size() != count || labels.size() != count) throw Error(ErrorCode::Format, "index header is inconsistent");
    const std::size_t payload = count * index.dim * 4;
    if (bytes.size() - 8 - len != payload) throw Error(ErrorCode::Format, "index payload size mismatch");
    const std::uint8_t* p = bytes.data() + 8 + len;
    for (std::size_t i = 0; i < count; ++i) {
      IndexEntry e;
      e.id = ids[i].get<std::string>();
      if (!labels[i].is_null()) e.label = labels[i].get<std::string>();
      e.feature = Vec(static_cast<Eigen::Index>(index.dim));
      for (std::size_t j = 0; j < index.dim; ++j, p += 4) e.feature[static_cast<Eigen::Index>(j)] = read_f32_le(p);
      index.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("bad index header: ") + e.what());
  }
  return index;
}

void save_index(const RetrievalIndex& index, const std::filesystem::path& path) {
  const auto bytes = serialize_index(index);
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

RetrievalIndex load_index(const std::filesystem::path& path) {
  const auto text = read_file(path);
  return parse_index(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<ManifestRow> parse_manifest(std::string_view text) {
  using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;
  std::vector<ManifestRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  bool header = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    try {
      Tokenizer tok(line, boost::escaped_list_separator<char>('\\', ',', '"'));
      for (const auto& f : tok) fields.push_back(trim(f));
    } catch (const boost::escaped_list_error& e) {
      throw Error(ErrorCode::Format, "manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    if (header) {
      header = false;
      if (fields.size() < 3 || fields[0] != "image_path" || fields[1] != "class_id" || fields[2] != "caption") {
        throw Error(ErrorCode::Format, "manifest header must be image_path,class_id,caption");
      }
      continue;
    }
    if (fields.size() != 3) {
      throw Error(ErrorCode::Format, "manifest line " + std::to_string(line_no) + " has " +
                                         std::to_string(fields.size()) + " fields, expected 3");
    }
    rows.push_back({fields[0], fields[1], fields[2]});
  }
  if (header) throw Error(ErrorCode::Format, "manifest is empty");
  return rows;
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) { return parse_manifest(read_file(path)); }

std::string write_manifest(const std::vector<ManifestRow>& rows) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\\") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
      if (c == '"' || c == '\\') out.push_back('\\');
      out.push_back(c);
    }
    return out + "\"";
  };
  std::string out = "image_path,class_id,caption\n";
  for (const auto& r : rows) out += quote(r.image_path) + "," + quote(r.class_id) + "," + quote(r.caption) + "\n";
  return out;
}

}  // namespace ctok
