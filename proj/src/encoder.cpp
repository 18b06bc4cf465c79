#include "ctok/encoder.hpp"

#include "ctok/embedding.hpp"
#include "ctok/error.hpp"

#include <algorithm>
#include <cmath>

namespace ctok {

PromptOrder parse_prompt_order(std::string_view text) {
  if (text == "t*c" || text == "[t,*,c]" || text == "token-parent") return PromptOrder::TokenThenParent;
  if (text == "tc*" || text == "[t,c,*]" || text == "parent-token") return PromptOrder::ParentThenToken;
  throw Error(ErrorCode::InvalidArgument, "unknown prompt order '" + std::string(text) + "'");
}

std::string_view to_string(PromptOrder order) {
  return order == PromptOrder::TokenThenParent ? "[t,*,c]" : "[t,c,*]";
}

PromptTemplate PromptTemplate::standard() {
  PromptTemplate t;
  t.context_text = "image of a {*} {c}";
  t.paraphrase_set = {
      "a photo of a {*} {c}",
      "a rendering of a {*} {c}",
      "a cropped photo of the {*} {c}",
      "a dark photo of a {*} {c}",
      "a close-up photo of a {*} {c}",
  };
  return t;
}

void PromptTemplate::validate() const {
  validate_template(context_text);
  for (const auto& p : paraphrase_set) validate_template(p);
}

namespace {

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t count = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

struct Piece {
  enum Kind { Literal, TokenSlot, ParentSlot } kind;
  std::string_view text;
};

std::vector<Piece> split_template(std::string_view tmpl) {
  std::vector<Piece> pieces;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto tok = tmpl.find(kTokenSlot, pos);
    const auto par = tmpl.find(kParentSlot, pos);
    const auto next = std::min(tok, par);
    if (next == std::string_view::npos) {
      pieces.push_back({Piece::Literal, tmpl.substr(pos)});
      break;
    }
    if (next > pos) pieces.push_back({Piece::Literal, tmpl.substr(pos, next - pos)});
    pieces.push_back({next == tok ? Piece::TokenSlot : Piece::ParentSlot, {}});
    pos = next + kTokenSlot.size();
  }
  return pieces;
}

void append_rows(Mat& rows, std::vector<int>& ids, const Mat& block, const std::vector<int>& block_ids) {
  if (block.rows() == 0) return;
  const auto start = rows.rows();
  rows.conservativeResize(start + block.rows(), block.cols());
  rows.bottomRows(block.rows()) = block;
  ids.insert(ids.end(), block_ids.begin(), block_ids.end());
}

// Shared by the learned-row and plain-word variants: `slot` yields the rows
// that replace "{*}".
template <typename SlotFn>
TokenSequence assemble_impl(std::string_view tmpl, std::string_view parent, const TextBackbone& text, SlotFn slot) {
  validate_template(tmpl);
  const auto d = static_cast<Eigen::Index>(text.token_dim());
  TokenSequence seq;
  seq.rows = Mat(0, d);
  for (const auto& piece : split_template(tmpl)) {
    switch (piece.kind) {
      case Piece::Literal: {
        auto ids = text.tokenize(piece.text);
        if (!ids.empty()) append_rows(seq.rows, seq.ids, text.embed(ids), ids);
        break;
      }
      case Piece::ParentSlot: {
        auto ids = text.tokenize(parent);
        if (!ids.empty()) append_rows(seq.rows, seq.ids, text.embed(ids), ids);
        break;
      }
      case Piece::TokenSlot: {
        seq.token_offset = static_cast<std::size_t>(seq.rows.rows());
        auto [block, ids] = slot();
        if (block.rows() > 0 && block.cols() != d) {
          throw Error(ErrorCode::DimensionMismatch, "token rows have dimension " + std::to_string(block.cols()) +
                                                        ", encoder expects " + std::to_string(d));
        }
        seq.token_count = static_cast<std::size_t>(block.rows());
        append_rows(seq.rows, seq.ids, block, ids);
        break;
      }
    }
  }
  if (static_cast<std::size_t>(seq.rows.rows()) > text.context_length()) {
    throw Error(ErrorCode::SequenceTooLong, std::to_string(seq.rows.rows()) + " tokens exceed context length " +
                                                std::to_string(text.context_length()));
  }
  return seq;
}

}  // namespace

void validate_template(std::string_view text) {
  const auto tokens = count_occurrences(text, kTokenSlot);
  if (tokens == 0) throw Error(ErrorCode::SlotMissing, "template '" + std::string(text) + "' has no {*} slot");
  if (tokens > 1) throw Error(ErrorCode::InvalidTemplate, "template '" + std::string(text) + "' repeats {*}");
  if (count_occurrences(text, kParentSlot) > 1) {
    throw Error(ErrorCode::InvalidTemplate, "template '" + std::string(text) + "' repeats {c}");
  }
}

std::string apply_order(std::string_view text, PromptOrder order) {
  std::string out(text);
  if (order == PromptOrder::TokenThenParent) return out;
  const auto tok = out.find(kTokenSlot);
  const auto par = out.find(kParentSlot);
  if (tok == std::string::npos || par == std::string::npos) return out;
  out.replace(tok, kTokenSlot.size(), "\x01\x01\x01");
  out.replace(out.find(kParentSlot), kParentSlot.size(), kTokenSlot);
  out.replace(out.find("\x01\x01\x01"), 3, kParentSlot);
  return out;
}

TokenSequence assemble(std::string_view tmpl, const Mat& token_rows, std::string_view parent,
                       const TextBackbone& text) {
  return assemble_impl(tmpl, parent, text, [&] {
    return std::pair<Mat, std::vector<int>>(token_rows, std::vector<int>(static_cast<std::size_t>(token_rows.rows()), -1));
  });
}

TokenSequence assemble(std::string_view tmpl, const TokenEmbedding& token, std::string_view parent,
                       const TextBackbone& text) {
  return assemble(tmpl, token.vectors, parent, text);
}

TokenSequence assemble_text(std::string_view tmpl, std::string_view slot_text, std::string_view parent,
                            const TextBackbone& text) {
  return assemble_impl(tmpl, parent, text, [&] {
    auto ids = text.tokenize(slot_text);
    Mat rows = ids.empty() ? Mat(0, static_cast<Eigen::Index>(text.token_dim())) : text.embed(ids);
    return std::pair<Mat, std::vector<int>>(std::move(rows), std::move(ids));
  });
}

ConditionVector encode_text(const TokenSequence& sequence, const TextBackbone& text) {
  if (static_cast<std::size_t>(sequence.rows.rows()) > text.context_length()) {
    throw Error(ErrorCode::SequenceTooLong, "sequence exceeds encoder context length");
  }
  return {text.encode(sequence.rows), false};
}

ConditionVector encode_plain_text(std::string_view sentence, const TextBackbone& text) {
  const auto ids = text.tokenize(sentence);
  if (ids.size() > text.context_length()) throw Error(ErrorCode::SequenceTooLong, "sentence exceeds context length");
  return {text.encode(text.embed(ids)), false};
}

ConditionVector encode_image(const Image& image, const ImageEncoder& encoder) { return {encoder.encode(image), false}; }

Vec normalized(const Vec& v) {
  const double n = v.norm();
  if (!(n > 0.0)) throw Error(ErrorCode::ZeroVector, "cannot normalise a zero vector");
  return v / n;
}

double cosine(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "cosine of vectors with different dimensions");
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw Error(ErrorCode::ZeroVector, "cosine with a zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double score(const ConditionVector& text_feature, const ConditionVector& image_feature) {
  if (!text_feature.values.allFinite() || !image_feature.values.allFinite()) {
    throw Error(ErrorCode::DegenerateInput, "non-finite feature");
  }
  return cosine(text_feature.values, image_feature.values);
}

QueryComposer::QueryComposer(const TextBackbone& text, std::string tmpl, const TokenEmbedding& token,
                             std::string parent, std::vector<std::string> attributes)
    : template_(std::move(tmpl)), token_ref_(token.ref()), attributes_(std::move(attributes)) {
  token_feature_ = normalized(encode_text(assemble(template_, token, parent, text), text).values);
  for (const auto& a : attributes_) {
    attribute_features_.push_back(normalized(encode_text(assemble_text(template_, a, parent, text), text).values));
  }
  if (!attribute_features_.empty()) {
    attribute_mean_ = Vec::Zero(token_feature_.size());
    for (const auto& f : attribute_features_) attribute_mean_ += f;
    attribute_mean_ /= static_cast<double>(attribute_features_.size());
  }
}

ComposedQuery QueryComposer::compose(double weight) const {
  if (!(weight >= 0.0 && weight <= 1.0)) {
    throw Error(ErrorCode::WeightOutOfRange, "weight " + std::to_string(weight) + " is outside [0, 1]");
  }
  if (weight < 1.0 && attribute_features_.empty()) {
    throw Error(ErrorCode::EmptyAttributes, "weight below 1 needs at least one attribute");
  }
  ComposedQuery q;
  q.weight = weight;
  q.attributes = attributes_;
  q.template_text = template_;
  q.token_ref = token_ref_;
  if (attribute_features_.empty()) {
    q.feature = {token_feature_, true};
  } else {
    q.feature = {weight * token_feature_ + (1.0 - weight) * attribute_mean_, false};
    q.feature.normalized = weight == 1.0 || (weight == 0.0 && attribute_features_.size() == 1);
  }
  return q;
}

ComposedQuery compose_query(std::string_view tmpl, const TokenEmbedding& token, std::string_view parent,
                            const std::vector<std::string>& attributes, double weight, const TextBackbone& text) {
  if (!(weight >= 0.0 && weight <= 1.0)) {
    throw Error(ErrorCode::WeightOutOfRange, "weight " + std::to_string(weight) + " is outside [0, 1]");
  }
  if (weight < 1.0 && attributes.empty()) {
    throw Error(ErrorCode::EmptyAttributes, "weight below 1 needs at least one attribute");
  }
  return QueryComposer(text, std::string(tmpl), token, std::string(parent), attributes).compose(weight);
}

}  // namespace ctok
