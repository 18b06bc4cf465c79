#include "ctok/diffusion.hpp"

#include "ctok/error.hpp"
#include "ctok/util.hpp"

#include <cmath>
#include <random>

namespace ctok {

NoiseSchedule NoiseSchedule::linear(int num_steps, double beta_start, double beta_end) {
  if (num_steps < 1) throw Error(ErrorCode::InvalidArgument, "noise schedule needs at least one step");
  NoiseSchedule s;
  s.betas_.resize(static_cast<std::size_t>(num_steps));
  s.alpha_bars_.resize(static_cast<std::size_t>(num_steps) + 1);
  s.alpha_bars_[0] = 1.0;
  for (int t = 1; t <= num_steps; ++t) {
    const double frac = num_steps == 1 ? 0.0 : static_cast<double>(t - 1) / (num_steps - 1);
    const double beta = beta_start + frac * (beta_end - beta_start);
    s.betas_[static_cast<std::size_t>(t - 1)] = beta;
    s.alpha_bars_[static_cast<std::size_t>(t)] = s.alpha_bars_[static_cast<std::size_t>(t - 1)] * (1.0 - beta);
  }
  return s;
}

double NoiseSchedule::beta(int t) const {
  if (t < 1 || t > num_steps()) throw Error(ErrorCode::InvalidArgument, "timestep out of range");
  return betas_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > num_steps()) throw Error(ErrorCode::InvalidArgument, "timestep out of range");
  return alpha_bars_[static_cast<std::size_t>(t)];
}

Vec NoiseSchedule::q_sample(const Vec& z0, int t, const Vec& eta) const {
  const double ab = alpha_bar(t);
  return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eta;
}

std::vector<int> NoiseSchedule::sampling_timesteps(int steps) const {
  if (steps < 1) throw Error(ErrorCode::InvalidArgument, "sampler needs at least one step");
  if (steps > num_steps()) throw Error(ErrorCode::InvalidArgument, "more sampling steps than training timesteps");
  std::vector<int> ts(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    ts[static_cast<std::size_t>(i)] =
        static_cast<int>(std::lround(static_cast<double>(i + 1) * num_steps() / static_cast<double>(steps)));
  }
  return ts;
}

Vec reverse_step(const NoiseSchedule& schedule, const Vec& z_t, int t, int t_prev, const Vec& predicted_noise,
                 const Vec& fresh_noise) {
  const double ab = schedule.alpha_bar(t);
  const double ab_prev = schedule.alpha_bar(t_prev);
  const double alpha = ab / ab_prev;
  const double beta = 1.0 - alpha;
  const Vec x0 = ((z_t - std::sqrt(1.0 - ab) * predicted_noise) / std::sqrt(ab)).cwiseMax(-1.0).cwiseMin(1.0);
  const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
  const double ct = std::sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab);
  Vec mean = c0 * x0 + ct * z_t;
  if (t_prev > 0) {
    const double var = beta * (1.0 - ab_prev) / (1.0 - ab);
    mean += std::sqrt(var) * fresh_noise;
  }
  return mean;
}

DiffusionModel::DiffusionModel(std::shared_ptr<const LatentCodec> codec, NoiseSchedule schedule,
                               std::shared_ptr<const Denoiser> denoiser, int sample_steps)
    : codec_(std::move(codec)), schedule_(std::move(schedule)), denoiser_(std::move(denoiser)),
      sample_steps_(sample_steps) {
  if (!codec_ || !denoiser_) throw Error(ErrorCode::InvalidArgument, "diffusion model needs a codec and a denoiser");
  if (sample_steps_ < 1) throw Error(ErrorCode::InvalidArgument, "sample_steps must be >= 1");
}

LossAndGradient DiffusionModel::diffusion_loss(std::span<const Vec> latents, const Vec& condition,
                                               std::uint64_t seed) const {
  if (latents.empty()) throw Error(ErrorCode::EmptyBatch, "diffusion loss on an empty batch");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> step(1, schedule_.num_steps());
  const auto n_items = static_cast<double>(latents.size());

  LossAndGradient out;
  out.grad_condition = Vec::Zero(condition.size());
  for (const auto& z0 : latents) {
    const int t = step(rng);
    const Vec eta = standard_normal(rng, z0.size());
    const Vec z_t = schedule_.q_sample(z0, t, eta);
    const Vec predicted = denoiser_->predict(z_t, t, condition);
    if (predicted.size() != z0.size()) throw Error(ErrorCode::DimensionMismatch, "denoiser output shape mismatch");
    const Vec residual = predicted - eta;
    const double dim = static_cast<double>(z0.size());
    out.value += residual.squaredNorm() / dim / n_items;
    out.grad_condition += denoiser_->condition_vjp(z_t, t, condition, (2.0 / (dim * n_items)) * residual);
  }
  return out;
}

LossAndGradient DiffusionModel::diffusion_loss(std::span<const Image> images, const Vec& condition,
                                               std::uint64_t seed) const {
  std::vector<Vec> latents;
  latents.reserve(images.size());
  for (const auto& img : images) latents.push_back(codec_->encode(img));
  return diffusion_loss(std::span<const Vec>(latents), condition, seed);
}

Vec DiffusionModel::sample_latent(const Vec& condition, int steps, std::uint64_t seed) const {
  const auto ts = schedule_.sampling_timesteps(steps);
  std::mt19937_64 rng(seed);
  const auto n = codec_->latent_shape().size();
  Vec z = standard_normal(rng, n);
  for (std::size_t i = ts.size(); i-- > 0;) {
    const int t = ts[i];
    const int t_prev = i > 0 ? ts[i - 1] : 0;
    const Vec eps = denoiser_->predict(z, t, condition);
    const Vec noise = t_prev > 0 ? standard_normal(rng, n) : Vec::Zero(n);
    z = reverse_step(schedule_, z, t, t_prev, eps, noise);
  }
  return z;
}

Image DiffusionModel::sample(const Vec& condition, int steps, std::uint64_t seed) const {
  return codec_->decode(sample_latent(condition, steps, seed));
}

std::vector<Image> DiffusionModel::generate_batch(const Vec& condition, std::size_t n, std::uint64_t seed) const {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "generate_batch needs n >= 1");
  std::vector<Image> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample(condition, sample_steps_, seed + i));
  return out;
}

std::string DiffusionModel::checksum() const {
  return sha256_hex(codec_->checksum() + "|" + denoiser_->checksum() + "|" + std::to_string(schedule_.num_steps()) +
                    "|" + std::to_string(sample_steps_));
}

}  // namespace ctok
