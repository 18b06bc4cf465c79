#pragma once

#include "ctok/types.hpp"

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ctok {

struct TokenEmbedding;

// Frozen text side of a dual encoder (g). Implementations must be immutable
// after construction; all methods are called concurrently.
class TextBackbone {
 public:
  virtual ~TextBackbone() = default;

  virtual std::vector<int> tokenize(std::string_view text) const = 0;
  virtual Mat embed(std::span<const int> ids) const = 0;
  virtual Vec encode(const Mat& rows) const = 0;
  // Vector-Jacobian product of encode at `rows`: d<grad, encode(rows)>/d rows.
  virtual Mat encode_vjp(const Mat& rows, const Vec& grad_feature) const = 0;

  virtual std::size_t token_dim() const = 0;
  virtual std::size_t feature_dim() const = 0;
  virtual std::size_t context_length() const = 0;
  virtual std::string checksum() const = 0;
};

// Frozen image side of a dual encoder (f).
class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;

  virtual Vec encode(const Image& image) const = 0;
  virtual std::size_t feature_dim() const = 0;
  virtual std::string checksum() const = 0;
};

struct Encoders {
  std::shared_ptr<const TextBackbone> text;
  std::shared_ptr<const ImageEncoder> image;
};

struct ConditionVector {
  Vec values;
  bool normalized = false;
};

inline constexpr std::string_view kTokenSlot = "{*}";
inline constexpr std::string_view kParentSlot = "{c}";

enum class PromptOrder { TokenThenParent, ParentThenToken };

PromptOrder parse_prompt_order(std::string_view text);
std::string_view to_string(PromptOrder order);

struct PromptTemplate {
  std::string context_text = "image of a {*} {c}";
  std::vector<std::string> paraphrase_set;

  // Textual-inversion style paraphrases.
  static PromptTemplate standard();
  void validate() const;
};

// Throws SlotMissing when there is no token slot and InvalidTemplate when a
// slot is repeated.
void validate_template(std::string_view text);
// Swaps the token and parent slots when the order asks for "[t, c, *]".
std::string apply_order(std::string_view text, PromptOrder order);

struct TokenSequence {
  Mat rows;
  std::vector<int> ids;  // -1 marks an injected row
  std::size_t token_offset = 0;
  std::size_t token_count = 0;
};

TokenSequence assemble(std::string_view tmpl, const Mat& token_rows, std::string_view parent,
                       const TextBackbone& text);
TokenSequence assemble(std::string_view tmpl, const TokenEmbedding& token, std::string_view parent,
                       const TextBackbone& text);
// Fills the token slot with plain words instead of learned rows ("" drops it).
TokenSequence assemble_text(std::string_view tmpl, std::string_view slot_text, std::string_view parent,
                            const TextBackbone& text);

ConditionVector encode_text(const TokenSequence& sequence, const TextBackbone& text);
ConditionVector encode_plain_text(std::string_view sentence, const TextBackbone& text);
ConditionVector encode_image(const Image& image, const ImageEncoder& encoder);

Vec normalized(const Vec& v);
double cosine(const Vec& a, const Vec& b);
double score(const ConditionVector& text_feature, const ConditionVector& image_feature);

struct ComposedQuery {
  double weight = 1.0;
  std::vector<std::string> attributes;
  std::string template_text;
  std::string token_ref;
  ConditionVector feature;
};

// Caches g([t,*,c]) and every g([t,a_i,c]) so a weight sweep only pays for
// the linear combination.
class QueryComposer {
 public:
  QueryComposer(const TextBackbone& text, std::string tmpl, const TokenEmbedding& token, std::string parent,
                std::vector<std::string> attributes);

  ComposedQuery compose(double weight) const;

  const Vec& token_feature() const { return token_feature_; }
  const std::vector<Vec>& attribute_features() const { return attribute_features_; }
  // (1/|A|) sum_i g([t,a_i,c]); empty when no attributes were given.
  const Vec& attribute_mean() const { return attribute_mean_; }
  const std::string& template_text() const { return template_; }

 private:
  std::string template_;
  std::string token_ref_;
  std::vector<std::string> attributes_;
  Vec token_feature_;
  std::vector<Vec> attribute_features_;
  Vec attribute_mean_;
};

ComposedQuery compose_query(std::string_view tmpl, const TokenEmbedding& token, std::string_view parent,
                            const std::vector<std::string>& attributes, double weight, const TextBackbone& text);

}  // namespace ctok
