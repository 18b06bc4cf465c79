#include "ctok/toy.hpp"

#include "ctok/error.hpp"
#include "ctok/util.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

namespace ctok::toy {

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (words_[i].empty()) throw Error(ErrorCode::InvalidArgument, "empty vocabulary entry");
    if (!index_.emplace(words_[i], static_cast<int>(i)).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate vocabulary entry '" + words_[i] + "'");
    }
    max_len_ = std::max(max_len_, words_[i].size());
  }
}

std::optional<int> Vocabulary::id(std::string_view word) const {
  const auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<int> Vocabulary::tokenize(std::string_view text) const {
  std::vector<int> ids;
  std::string word;
  auto flush = [&] {
    std::size_t pos = 0;
    while (pos < word.size()) {
      int match = -1;
      std::size_t match_len = 0;
      for (std::size_t len = std::min(max_len_, word.size() - pos); len > 0; --len) {
        if (auto found = id(std::string_view(word).substr(pos, len))) {
          match = *found;
          match_len = len;
          break;
        }
      }
      if (match < 0) throw Error(ErrorCode::UnknownToken, "'" + word + "' is not covered by the vocabulary");
      ids.push_back(match);
      pos += match_len;
    }
    word.clear();
  };
  for (char ch : text) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    } else if (!word.empty()) {
      flush();
    }
  }
  if (!word.empty()) flush();
  return ids;
}

namespace {

const std::vector<std::pair<std::string, Rgb>>& palette() {
  static const std::vector<std::pair<std::string, Rgb>> p = {
      {"red", {220, 40, 40}},     {"green", {40, 170, 60}},   {"blue", {40, 70, 220}},
      {"yellow", {235, 215, 40}}, {"orange", {240, 140, 30}}, {"purple", {130, 50, 170}},
      {"pink", {240, 130, 180}},  {"white", {245, 245, 245}}, {"black", {20, 20, 20}},
      {"gray", {100, 100, 100}},  {"brown", {130, 80, 40}},   {"cyan", {40, 200, 210}},
  };
  return p;
}

const std::vector<std::pair<std::string, Rgb>>& backgrounds() {
  static const std::vector<std::pair<std::string, Rgb>> b = {
      {"beach", {225, 205, 150}}, {"grass", {70, 150, 60}},    {"sink", {205, 210, 220}},
      {"table", {130, 90, 55}},   {"snow", {245, 248, 252}},   {"wall", {160, 70, 55}},
      {"road", {75, 75, 80}},     {"sky", {130, 185, 240}},    {"night", {20, 25, 60}},
      {"kitchen", {200, 180, 150}}, {"forest", {30, 90, 40}}, {"water", {40, 110, 170}},
      {"sand", {215, 190, 130}},  {"floor", {150, 120, 90}},
  };
  return b;
}

bool is_function_word(std::string_view word) {
  static const std::vector<std::string_view> words = {"a",    "an",    "the",     "of",    "on",        "in",
                                                      "at",   "by",    "with",    "and",   "my",        "this",
                                                      "is",   "photo", "image",   "picture", "rendering", "cropped",
                                                      "close", "up",   "view",    "shot"};
  return std::find(words.begin(), words.end(), word) != words.end();
}

const std::vector<std::string>& modifier_words() {
  static const std::vector<std::string> m = {"bright", "dark", "pale"};
  return m;
}

Rgb apply_modifier(Rgb c, std::string_view modifier) {
  auto blend = [](Rgb x, Rgb y, double a) {
    return Rgb{x.r + a * (y.r - x.r), x.g + a * (y.g - x.g), x.b + a * (y.b - x.b)};
  };
  if (modifier == "bright") return blend(c, {255, 255, 255}, 0.35);
  if (modifier == "dark") return Rgb{c.r * 0.55, c.g * 0.55, c.b * 0.55};
  if (modifier == "pale") return blend(c, {235, 235, 235}, 0.6);
  return c;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

Mat gaussian_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * dist(rng);
  return m;
}

std::string matrix_checksum(std::initializer_list<const Mat*> mats, std::initializer_list<const Vec*> vecs,
                            std::string extra) {
  std::string acc = std::move(extra);
  for (const auto* m : mats) acc += fingerprint(*m);
  for (const auto* v : vecs) acc += fingerprint(*v);
  return sha256_hex(acc);
}

}  // namespace

const std::vector<std::string>& color_words() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> w;
    for (const auto& [name, _] : palette()) w.push_back(name);
    return w;
  }();
  return words;
}

const std::vector<std::string>& context_words() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> w;
    for (const auto& [name, _] : backgrounds()) w.push_back(name);
    return w;
  }();
  return words;
}

const std::vector<std::string>& attribute_candidates() {
  static const std::vector<std::string> words = {
      // colour
      "red", "green", "blue", "yellow", "orange", "purple", "pink", "white", "black", "gray", "brown", "cyan",
      "bright", "dark", "pale", "colorful", "golden", "silver",
      // material
      "ceramic", "metal", "wooden", "plastic", "glass", "leather", "cotton", "silk", "wool", "denim", "velvet",
      "paper", "stone", "copper", "rubber", "porcelain", "steel", "linen",
      // condition
      "old", "new", "worn", "broken", "clean", "dirty", "shiny", "dull", "wet", "dry", "torn", "faded",
      "polished", "rusty", "dusty", "cracked", "vintage", "modern", "antique", "fresh",
      // pattern
      "striped", "dotted", "checkered", "floral", "plain", "spotted", "patterned", "printed", "painted",
      "glazed",
      // size and shape
      "small", "large", "tiny", "huge", "round", "tall", "short", "long", "thin", "thick", "wide", "narrow",
      "flat", "curved", "pointed",
      // texture
      "smooth", "rough", "soft", "hard", "fluffy", "fuzzy", "furry", "sleek", "glossy", "matte",
      // style
      "elegant", "cute", "fancy", "simple", "ornate", "decorative", "casual", "formal", "heavy", "light",
      "empty", "full", "hot", "cold", "warm", "cool",
  };
  return words;
}

const std::vector<std::string>& default_vocabulary() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> w = {
        // prompt scaffolding
        "a", "an", "the", "of", "on", "in", "at", "by", "with", "and", "my", "this", "is", "photo", "image",
        "picture", "rendering", "cropped", "close", "up", "view", "shot",
        // parent concepts
        "square", "teapot", "dress", "mug", "cup", "shirt", "box", "tile", "object", "toy",
        // sub-word pieces
        "sea", "side", "ish", "dish",
    };
    for (const auto& c : context_words()) w.push_back(c);
    w.push_back("brick");
    for (const auto& a : attribute_candidates()) {
      if (std::find(w.begin(), w.end(), a) == w.end()) w.push_back(a);
    }
    return w;
  }();
  return words;
}

std::optional<Rgb> color_of(std::string_view word) {
  for (const auto& [name, rgb] : palette())
    if (name == word) return rgb;
  return std::nullopt;
}

std::optional<Rgb> background_of(std::string_view context_word) {
  for (const auto& [name, rgb] : backgrounds())
    if (name == context_word) return rgb;
  return std::nullopt;
}

Rgb default_background() { return {170, 170, 170}; }

Rgb generic_object_color() {
  Rgb acc;
  for (const auto& [_, c] : palette()) {
    acc.r += c.r;
    acc.g += c.g;
    acc.b += c.b;
  }
  const double n = static_cast<double>(palette().size());
  return {acc.r / n, acc.g / n, acc.b / n};
}

Image render(const Scene& scene, int image_size) {
  Image img(image_size, image_size);
  const int x0 = scene.cx - scene.size / 2;
  const int y0 = scene.cy - scene.size / 2;
  for (int y = 0; y < image_size; ++y) {
    for (int x = 0; x < image_size; ++x) {
      const bool inside = x >= x0 && x < x0 + scene.size && y >= y0 && y < y0 + scene.size;
      const Rgb& c = inside ? scene.object : scene.background;
      img.at(x, y, 0) = to_byte(c.r);
      img.at(x, y, 1) = to_byte(c.g);
      img.at(x, y, 2) = to_byte(c.b);
    }
  }
  return img;
}

namespace {

Scene jittered_scene(std::mt19937_64& rng, Rgb base, int image_size) {
  std::uniform_int_distribution<int> offset(-2, 2);
  std::uniform_int_distribution<int> size(9, 11);
  std::uniform_real_distribution<double> color(-12.0, 12.0);
  std::uniform_real_distribution<double> shade(-6.0, 6.0);
  Scene s;
  s.cx = image_size / 2 + offset(rng);
  s.cy = image_size / 2 + offset(rng);
  s.size = size(rng);
  s.object = {base.r + color(rng), base.g + color(rng), base.b + color(rng)};
  const double bg = shade(rng);
  const Rgb d = default_background();
  s.background = {d.r + bg, d.g + bg, d.b + bg};
  return s;
}

}  // namespace

std::vector<Image> concept_images(std::string_view color, std::size_t n, std::uint64_t seed, int image_size) {
  const auto base = color_of(color);
  if (!base) throw Error(ErrorCode::InvalidArgument, "unknown toy colour '" + std::string(color) + "'");
  std::mt19937_64 rng(mix_seed(seed, 0xC0));
  std::vector<Image> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(render(jittered_scene(rng, *base, image_size), image_size));
  return out;
}

std::vector<Image> class_images(const std::vector<std::string>& colors, std::size_t n, std::uint64_t seed,
                                int image_size) {
  if (colors.empty()) throw Error(ErrorCode::InvalidArgument, "class_images needs colours");
  std::mt19937_64 rng(mix_seed(seed, 0xC1));
  std::uniform_int_distribution<std::size_t> pick(0, colors.size() - 1);
  std::vector<Image> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto base = color_of(colors[pick(rng)]);
    if (!base) throw Error(ErrorCode::InvalidArgument, "unknown toy colour");
    out.push_back(render(jittered_scene(rng, *base, image_size), image_size));
  }
  return out;
}

std::vector<std::string> contrasting_colors(std::string_view concept_color) {
  const auto base = color_of(concept_color);
  if (!base) throw Error(ErrorCode::InvalidArgument, "unknown toy colour '" + std::string(concept_color) + "'");
  std::vector<std::string> out;
  for (const auto& [name, c] : palette()) {
    const double dist = std::sqrt((c.r - base->r) * (c.r - base->r) + (c.g - base->g) * (c.g - base->g) +
                                  (c.b - base->b) * (c.b - base->b));
    if (dist > 150.0) out.push_back(name);
  }
  return out;
}

std::vector<Caption> fitting_captions() {
  auto templates = PromptTemplate::standard();
  templates.paraphrase_set.push_back(templates.context_text);
  const std::vector<std::string> nouns = {"square", "teapot", "mug", "dress"};

  std::vector<std::pair<std::string, Rgb>> slots = {{"", generic_object_color()}};
  for (const auto& [name, c] : palette()) {
    slots.emplace_back(name, c);
    for (const auto& m : modifier_words()) slots.emplace_back(m + " " + name, apply_modifier(c, m));
  }
  std::vector<std::pair<std::string, Rgb>> contexts = {{"", default_background()}};
  for (const auto& [name, c] : backgrounds()) contexts.emplace_back(" on the " + name, c);

  std::vector<Caption> out;
  for (const auto& tmpl : templates.paraphrase_set) {
    for (const auto& noun : nouns) {
      for (const auto& [slot, color] : slots) {
        for (const auto& [ctx, bg] : contexts) {
          std::string text = tmpl;
          text.replace(text.find(kTokenSlot), kTokenSlot.size(), slot);
          text.replace(text.find(kParentSlot), kParentSlot.size(), noun);
          Scene scene;
          scene.object = color;
          scene.background = bg;
          out.push_back({text + ctx, scene});
        }
      }
    }
  }
  return out;
}

ToyTextBackbone::ToyTextBackbone(Vocabulary vocab, Mat embeddings, Mat projection, std::size_t context_length)
    : vocab_(std::move(vocab)), embeddings_(std::move(embeddings)), projection_(std::move(projection)),
      context_length_(context_length) {
  if (static_cast<std::size_t>(embeddings_.rows()) != vocab_.size()) {
    throw Error(ErrorCode::DimensionMismatch, "embedding table does not match vocabulary size");
  }
  if (projection_.cols() != embeddings_.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "projection does not match token dimension");
  }
}

Mat ToyTextBackbone::embed(std::span<const int> ids) const {
  Mat rows(static_cast<Eigen::Index>(ids.size()), embeddings_.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= embeddings_.rows()) throw Error(ErrorCode::UnknownToken, "token id out of range");
    rows.row(static_cast<Eigen::Index>(i)) = embeddings_.row(ids[i]);
  }
  return rows;
}

Vec ToyTextBackbone::encode(const Mat& rows) const {
  if (rows.rows() == 0) throw Error(ErrorCode::EmptyInput, "cannot encode an empty token sequence");
  if (rows.cols() != embeddings_.cols()) throw Error(ErrorCode::DimensionMismatch, "token rows have wrong dimension");
  if (static_cast<std::size_t>(rows.rows()) > context_length_) {
    throw Error(ErrorCode::SequenceTooLong, "sequence exceeds context length");
  }
  const Vec mean = rows.colwise().mean().transpose();
  return projection_ * mean;
}

Mat ToyTextBackbone::encode_vjp(const Mat& rows, const Vec& grad_feature) const {
  if (rows.rows() == 0) throw Error(ErrorCode::EmptyInput, "cannot differentiate an empty token sequence");
  const Vec per_row = projection_.transpose() * grad_feature / static_cast<double>(rows.rows());
  Mat grad(rows.rows(), rows.cols());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) grad.row(i) = per_row.transpose();
  return grad;
}

std::string ToyTextBackbone::checksum() const {
  std::string words;
  for (const auto& w : vocab_.words()) words += w + ",";
  return matrix_checksum({&embeddings_, &projection_}, {}, words + std::to_string(context_length_));
}

ToyImageEncoder::ToyImageEncoder(int image_size, int patch, Mat weights, Vec bias)
    : image_size_(image_size), patch_(patch), weights_(std::move(weights)), bias_(std::move(bias)) {
  if (patch_ < 1 || image_size_ % patch_ != 0) throw Error(ErrorCode::InvalidArgument, "patch must divide image size");
  if (weights_.cols() != patch_ * patch_ * 3 || weights_.rows() != bias_.size()) {
    throw Error(ErrorCode::DimensionMismatch, "image encoder weights have the wrong shape");
  }
}

Vec ToyImageEncoder::patch_mean(const Image& image) const {
  if (!image.valid() || image.width != image_size_ || image.height != image_size_) {
    throw Error(ErrorCode::BadImage, "expected a " + std::to_string(image_size_) + "x" + std::to_string(image_size_) +
                                         " RGB image, got " + std::to_string(image.width) + "x" +
                                         std::to_string(image.height));
  }
  Vec pm = Vec::Zero(patch_ * patch_ * 3);
  const int per_side = image_size_ / patch_;
  for (int py = 0; py < per_side; ++py)
    for (int px = 0; px < per_side; ++px)
      for (int y = 0; y < patch_; ++y)
        for (int x = 0; x < patch_; ++x)
          for (int c = 0; c < 3; ++c) pm[(y * patch_ + x) * 3 + c] += image.at(px * patch_ + x, py * patch_ + y, c);
  return pm / (255.0 * per_side * per_side);
}

Vec ToyImageEncoder::encode(const Image& image) const { return weights_ * patch_mean(image) + bias_; }

std::string ToyImageEncoder::checksum() const {
  return matrix_checksum({&weights_}, {&bias_}, std::to_string(image_size_) + "/" + std::to_string(patch_));
}

PoolingCodec::PoolingCodec(int image_size, int factor) : image_size_(image_size), factor_(factor) {
  if (factor_ < 1 || image_size_ % factor_ != 0) throw Error(ErrorCode::InvalidArgument, "factor must divide image size");
}

LatentShape PoolingCodec::latent_shape() const { return {image_size_ / factor_, image_size_ / factor_, 3}; }

Vec PoolingCodec::encode(const Image& image) const {
  if (!image.valid() || image.width != image_size_ || image.height != image_size_) {
    throw Error(ErrorCode::BadImage, "codec expects " + std::to_string(image_size_) + "x" + std::to_string(image_size_));
  }
  const auto shape = latent_shape();
  Vec z(shape.size());
  const double norm = 255.0 * factor_ * factor_;
  for (int ly = 0; ly < shape.height; ++ly)
    for (int lx = 0; lx < shape.width; ++lx)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int y = 0; y < factor_; ++y)
          for (int x = 0; x < factor_; ++x) acc += image.at(lx * factor_ + x, ly * factor_ + y, c);
        z[(ly * shape.width + lx) * 3 + c] = 2.0 * acc / norm - 1.0;
      }
  return z;
}

Image PoolingCodec::decode(const Vec& latent) const {
  const auto shape = latent_shape();
  if (latent.size() != shape.size()) throw Error(ErrorCode::DimensionMismatch, "latent has the wrong size");
  Image img(image_size_, image_size_);
  for (int y = 0; y < image_size_; ++y)
    for (int x = 0; x < image_size_; ++x)
      for (int c = 0; c < 3; ++c) {
        const double z = latent[((y / factor_) * shape.width + x / factor_) * 3 + c];
        img.at(x, y, c) = to_byte((z + 1.0) * 0.5 * 255.0);
      }
  return img;
}

std::string PoolingCodec::checksum() const {
  return sha256_hex("pooling/" + std::to_string(image_size_) + "/" + std::to_string(factor_));
}

GaussianDenoiser::GaussianDenoiser(Mat condition_map, Vec offset, NoiseSchedule schedule, double data_variance)
    : condition_map_(std::move(condition_map)), offset_(std::move(offset)), schedule_(std::move(schedule)),
      data_variance_(data_variance) {
  if (condition_map_.rows() != offset_.size()) throw Error(ErrorCode::DimensionMismatch, "offset/map mismatch");
  if (!(data_variance_ > 0.0)) throw Error(ErrorCode::InvalidArgument, "data variance must be positive");
}

double GaussianDenoiser::gain(int t) const {
  const double ab = schedule_.alpha_bar(t);
  return std::sqrt(1.0 - ab) / (ab * data_variance_ + 1.0 - ab);
}

Vec GaussianDenoiser::latent_mean(const Vec& condition) const {
  if (condition.size() != condition_map_.cols()) throw Error(ErrorCode::DimensionMismatch, "condition has wrong size");
  return condition_map_ * normalized(condition) + offset_;
}

Vec GaussianDenoiser::predict(const Vec& z_t, int t, const Vec& condition) const {
  if (z_t.size() != offset_.size()) throw Error(ErrorCode::DimensionMismatch, "latent has the wrong size");
  return gain(t) * (z_t - std::sqrt(schedule_.alpha_bar(t)) * latent_mean(condition));
}

Vec GaussianDenoiser::condition_vjp(const Vec& z_t, int t, const Vec& condition, const Vec& grad_out) const {
  (void)z_t;
  const double norm = condition.norm();
  if (!(norm > 0.0)) throw Error(ErrorCode::ZeroVector, "zero condition vector");
  const Vec unit = condition / norm;
  const Vec grad_mean = -gain(t) * std::sqrt(schedule_.alpha_bar(t)) * grad_out;
  const Vec grad_unit = condition_map_.transpose() * grad_mean;
  return (grad_unit - unit * unit.dot(grad_unit)) / norm;
}

std::string GaussianDenoiser::checksum() const {
  return matrix_checksum({&condition_map_}, {&offset_},
                         std::to_string(data_variance_) + "/" + std::to_string(schedule_.num_steps()));
}

ToyModel build_toy_model(const ToyConfig& config) {
  if (config.image_size % config.patch != 0 || config.image_size % config.downsample != 0) {
    throw Error(ErrorCode::InvalidArgument, "patch and downsample must divide image_size");
  }
  const Eigen::Index d = config.token_dim;
  const Eigen::Index feat = config.feature_dim;

  Vocabulary vocab(default_vocabulary());
  std::mt19937_64 embed_rng(mix_seed(config.seed, 1));
  std::normal_distribution<double> unit(0.0, 1.0);
  Mat embeddings(static_cast<Eigen::Index>(vocab.size()), d);
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    double scale = std::exp(config.embedding_norm_spread * unit(embed_rng)) / std::sqrt(static_cast<double>(d));
    if (is_function_word(vocab.word(static_cast<int>(i)))) scale *= config.function_word_scale;
    for (Eigen::Index j = 0; j < d; ++j) embeddings(i, j) = scale * unit(embed_rng);
  }
  std::mt19937_64 text_rng(mix_seed(config.seed, 2));
  Mat text_proj = gaussian_matrix(text_rng, feat, d, 1.0 / std::sqrt(static_cast<double>(d)));

  const int patch_dim = config.patch * config.patch * 3;
  std::mt19937_64 image_rng(mix_seed(config.seed, 3));
  Mat image_w = gaussian_matrix(image_rng, feat, patch_dim, 1.0 / std::sqrt(static_cast<double>(patch_dim)));
  std::mt19937_64 bias_rng(mix_seed(config.seed, 4));
  Vec bias = standard_normal(bias_rng, feat);
  bias *= config.image_bias_norm / bias.norm();

  ToyModel model;
  model.text = std::make_shared<ToyTextBackbone>(std::move(vocab), std::move(embeddings), std::move(text_proj),
                                                 config.context_length);
  model.image = std::make_shared<ToyImageEncoder>(config.image_size, config.patch, std::move(image_w), std::move(bias));
  model.codec = std::make_shared<PoolingCodec>(config.image_size, config.downsample);

  // Reduced-rank ridge fit: latents are regressed on the leading principal
  // coordinates of the normalised caption features, so directions outside
  // that span do not move the generator.
  const auto captions = fitting_captions();
  const auto latent_dim = model.codec->latent_shape().size();
  const auto n = static_cast<Eigen::Index>(captions.size());
  Eigen::MatrixXd x(feat, n);
  Eigen::MatrixXd z(latent_dim, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& cap = captions[static_cast<std::size_t>(i)];
    x.col(i) = normalized(encode_plain_text(cap.text, *model.text).values);
    z.col(i) = model.codec->encode(render(cap.scene, config.image_size));
  }
  const Eigen::VectorXd x_mean = x.rowwise().mean();
  const Eigen::VectorXd z_mean = z.rowwise().mean();
  x.colwise() -= x_mean;
  z.colwise() -= z_mean;
  const Eigen::Index rank =
      config.condition_rank > 0 ? std::min<Eigen::Index>(config.condition_rank, feat) : feat;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(x * x.transpose() / static_cast<double>(n));
  const Eigen::MatrixXd dirs = eig.eigenvectors().rightCols(rank);  // ascending eigenvalues
  const Eigen::MatrixXd y = dirs.transpose() * x;
  Eigen::MatrixXd gram = y * y.transpose();
  gram.diagonal().array() += config.ridge * static_cast<double>(n);
  const Eigen::MatrixXd coeffs = gram.ldlt().solve(y * z.transpose()).transpose();  // latent x rank
  Mat cond_map = coeffs * dirs.transpose();
  Vec offset = z_mean - cond_map * x_mean;

  auto schedule = NoiseSchedule::linear(config.train_steps);
  model.denoiser = std::make_shared<GaussianDenoiser>(std::move(cond_map), std::move(offset), schedule,
                                                      config.data_std * config.data_std);
  model.diffusion = std::make_shared<DiffusionModel>(model.codec, schedule, model.denoiser, config.sample_steps);
  return model;
}

}  // namespace ctok::toy
