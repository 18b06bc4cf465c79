#pragma once

// Desk-scale reference backbone: a world of coloured squares on context
// backgrounds, a mean-of-embeddings text encoder, a patch-mean image encoder,
// a pooling latent codec and a conditional Gaussian denoiser whose condition
// map is fitted in closed form to captioned renders.

#include "ctok/diffusion.hpp"
#include "ctok/encoder.hpp"
#include "ctok/types.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctok::toy {

struct Rgb {
  double r = 0, g = 0, b = 0;  // 0..255
};

struct ToyConfig {
  std::uint64_t seed = 7;
  int token_dim = 64;
  int feature_dim = 64;
  int image_size = 16;
  int patch = 2;
  int downsample = 2;
  int train_steps = 1000;
  int sample_steps = 50;
  double data_std = 0.15;
  double ridge = 1e-3;
  int condition_rank = 16;  // 0 keeps every feature direction
  double image_bias_norm = 1.0;
  double embedding_norm_spread = 0.25;
  double function_word_scale = 0.2;  // prompt scaffolding words carry small embeddings
  std::size_t context_length = 77;
};

class Vocabulary {
 public:
  explicit Vocabulary(std::vector<std::string> words);

  // Lower-cases, splits on non-alphanumerics, then greedily matches the
  // longest vocabulary prefix inside each word.
  std::vector<int> tokenize(std::string_view text) const;
  std::optional<int> id(std::string_view word) const;
  const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::map<std::string, int, std::less<>> index_;
  std::size_t max_len_ = 0;
};

const std::vector<std::string>& default_vocabulary();
// Colour words the renderer understands.
const std::vector<std::string>& color_words();
// Context words that set the background.
const std::vector<std::string>& context_words();
// Attribute candidate pool (>= 100 adjectives) for attribute selection.
const std::vector<std::string>& attribute_candidates();

std::optional<Rgb> color_of(std::string_view word);
std::optional<Rgb> background_of(std::string_view context_word);
Rgb default_background();
Rgb generic_object_color();

struct Scene {
  Rgb object = generic_object_color();
  Rgb background = default_background();
  int cx = 8;
  int cy = 8;
  int size = 10;
};

Image render(const Scene& scene, int image_size);

// Jittered renders of one coloured square: the "concept" images.
std::vector<Image> concept_images(std::string_view color, std::size_t n, std::uint64_t seed, int image_size = 16);
// Jittered squares whose colour is drawn from `colors`: real parent-class images.
std::vector<Image> class_images(const std::vector<std::string>& colors, std::size_t n, std::uint64_t seed,
                                int image_size = 16);
// Parent colours used for held-out evaluation of a concept colour.
std::vector<std::string> contrasting_colors(std::string_view concept_color);

struct Caption {
  std::string text;
  Scene scene;
};
// Captioned canonical renders used to fit the generator's condition map.
std::vector<Caption> fitting_captions();

class ToyTextBackbone final : public TextBackbone {
 public:
  ToyTextBackbone(Vocabulary vocab, Mat embeddings, Mat projection, std::size_t context_length);

  std::vector<int> tokenize(std::string_view text) const override { return vocab_.tokenize(text); }
  Mat embed(std::span<const int> ids) const override;
  Vec encode(const Mat& rows) const override;
  Mat encode_vjp(const Mat& rows, const Vec& grad_feature) const override;
  std::size_t token_dim() const override { return static_cast<std::size_t>(embeddings_.cols()); }
  std::size_t feature_dim() const override { return static_cast<std::size_t>(projection_.rows()); }
  std::size_t context_length() const override { return context_length_; }
  std::string checksum() const override;

  const Vocabulary& vocabulary() const { return vocab_; }
  const Mat& embeddings() const { return embeddings_; }
  const Mat& projection() const { return projection_; }

 private:
  Vocabulary vocab_;
  Mat embeddings_;  // V x d
  Mat projection_;  // D x d
  std::size_t context_length_;
};

class ToyImageEncoder final : public ImageEncoder {
 public:
  ToyImageEncoder(int image_size, int patch, Mat weights, Vec bias);

  Vec encode(const Image& image) const override;
  std::size_t feature_dim() const override { return static_cast<std::size_t>(bias_.size()); }
  std::string checksum() const override;

  // Mean over non-overlapping patches of the flattened (row, col, channel)
  // patch contents, pixels scaled to [0, 1].
  Vec patch_mean(const Image& image) const;
  const Mat& weights() const { return weights_; }
  const Vec& bias() const { return bias_; }

 private:
  int image_size_;
  int patch_;
  Mat weights_;  // D x (patch*patch*3)
  Vec bias_;
};

// Average-pool encoder / nearest-neighbour decoder, latent in [-1, 1].
class PoolingCodec final : public LatentCodec {
 public:
  PoolingCodec(int image_size, int factor);

  Vec encode(const Image& image) const override;
  Image decode(const Vec& latent) const override;
  LatentShape latent_shape() const override;
  std::string checksum() const override;

 private:
  int image_size_;
  int factor_;
};

// Posterior-mean noise predictor for clean latents distributed as
// N(mu(tau), s^2 I) with mu(tau) = A * tau / |tau| + c:
//   nu(z_t, t, tau) = sqrt(1 - ab_t) / (ab_t s^2 + 1 - ab_t) * (z_t - sqrt(ab_t) mu(tau)).
// Layer one maps the normalised condition to the latent mean; layer two is
// the timestep-modulated output.
class GaussianDenoiser final : public Denoiser {
 public:
  GaussianDenoiser(Mat condition_map, Vec offset, NoiseSchedule schedule, double data_variance);

  Vec predict(const Vec& z_t, int t, const Vec& condition) const override;
  Vec condition_vjp(const Vec& z_t, int t, const Vec& condition, const Vec& grad_out) const override;
  std::string checksum() const override;

  Vec latent_mean(const Vec& condition) const;

 private:
  double gain(int t) const;

  Mat condition_map_;  // latent x D
  Vec offset_;
  NoiseSchedule schedule_;
  double data_variance_;
};

struct ToyModel {
  std::shared_ptr<const ToyTextBackbone> text;
  std::shared_ptr<const ToyImageEncoder> image;
  std::shared_ptr<const PoolingCodec> codec;
  std::shared_ptr<const GaussianDenoiser> denoiser;
  std::shared_ptr<const DiffusionModel> diffusion;
};

ToyModel build_toy_model(const ToyConfig& config);

}  // namespace ctok::toy
