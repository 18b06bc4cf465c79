#pragma once

#include "ctok/types.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ctok {

struct LatentShape {
  int height = 0;
  int width = 0;
  int channels = 0;
  Eigen::Index size() const { return static_cast<Eigen::Index>(height) * width * channels; }
};

// Image <-> latent autoencoder (the encoder/decoder pair of a latent diffusion model).
class LatentCodec {
 public:
  virtual ~LatentCodec() = default;
  virtual Vec encode(const Image& image) const = 0;
  virtual Image decode(const Vec& latent) const = 0;
  virtual LatentShape latent_shape() const = 0;
  virtual std::string checksum() const = 0;
};

// Linear beta schedule. Timesteps run 1..T; alpha_bar(0) = 1 is the clean latent.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  static NoiseSchedule linear(int num_steps, double beta_start = 1e-4, double beta_end = 2e-2);

  int num_steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const;
  double alpha_bar(int t) const;
  // z_t = sqrt(alpha_bar) z_0 + sqrt(1 - alpha_bar) eta
  Vec q_sample(const Vec& z0, int t, const Vec& eta) const;
  // Evenly strided timesteps, ascending; the last entry is T.
  std::vector<int> sampling_timesteps(int steps) const;

 private:
  std::vector<double> betas_;       // index t-1
  std::vector<double> alpha_bars_;  // index t, alpha_bars_[0] = 1
};

// Noise predictor nu_theta(z_t, t, tau). Frozen; implementations are immutable.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Vec predict(const Vec& z_t, int t, const Vec& condition) const = 0;
  // d<grad_out, predict(z_t, t, condition)> / d condition
  virtual Vec condition_vjp(const Vec& z_t, int t, const Vec& condition, const Vec& grad_out) const = 0;
  virtual std::string checksum() const = 0;
};

class ImageGenerator {
 public:
  virtual ~ImageGenerator() = default;
  virtual Image generate(const Vec& condition, std::uint64_t seed) const = 0;
};

struct LossAndGradient {
  double value = 0.0;
  Vec grad_condition;
};

class DiffusionModel : public ImageGenerator {
 public:
  DiffusionModel(std::shared_ptr<const LatentCodec> codec, NoiseSchedule schedule,
                 std::shared_ptr<const Denoiser> denoiser, int sample_steps);

  // l_DM = mean over items of mean_j (eta_j - nu(z_t, t, tau)_j)^2 with t ~ U{1..T}
  // and eta ~ N(0, I) drawn from a stream seeded by `seed`.
  LossAndGradient diffusion_loss(std::span<const Vec> latents, const Vec& condition, std::uint64_t seed) const;
  LossAndGradient diffusion_loss(std::span<const Image> images, const Vec& condition, std::uint64_t seed) const;

  // Seeded ancestral sampler over `steps` strided timesteps, decoded through the codec.
  Image sample(const Vec& condition, int steps, std::uint64_t seed) const;
  Vec sample_latent(const Vec& condition, int steps, std::uint64_t seed) const;
  // Element i equals sample(condition, sample_steps(), seed + i).
  std::vector<Image> generate_batch(const Vec& condition, std::size_t n, std::uint64_t seed) const;

  Image generate(const Vec& condition, std::uint64_t seed) const override {
    return sample(condition, sample_steps_, seed);
  }

  const LatentCodec& codec() const { return *codec_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const Denoiser& denoiser() const { return *denoiser_; }
  int sample_steps() const { return sample_steps_; }
  std::string checksum() const;

 private:
  std::shared_ptr<const LatentCodec> codec_;
  NoiseSchedule schedule_;
  std::shared_ptr<const Denoiser> denoiser_;
  int sample_steps_;
};

// One reverse update from t to t_prev given a noise prediction; x0 estimates are
// clipped to [-1, 1]. No noise is added when t_prev == 0.
Vec reverse_step(const NoiseSchedule& schedule, const Vec& z_t, int t, int t_prev, const Vec& predicted_noise,
                 const Vec& fresh_noise);

}  // namespace ctok
