#include "ctok/diffusion.hpp"
#include "ctok/error.hpp"
#include "ctok/toy.hpp"
#include "ctok/util.hpp"
#include "support/denoisers.hpp"
#include "support/fixtures.hpp"

#include <doctest.h>

#include <random>

using namespace ctok;
using fixtures::to_vec;

namespace {

using stub::LinearDenoiser;
using stub::PerfectDenoiser;
using stub::ZeroDenoiser;

std::shared_ptr<const LatentCodec> codec() { return std::make_shared<toy::PoolingCodec>(16, 2); }

}  // namespace

TEST_CASE("linear schedule matches a hand-rolled product") {
  const auto s = NoiseSchedule::linear(1000);
  double ab = 1.0;
  for (int t = 1; t <= 1000; ++t) {
    const double beta = 1e-4 + (t - 1) / 999.0 * (2e-2 - 1e-4);
    ab *= 1.0 - beta;
    CHECK(std::abs(s.beta(t) - beta) <= 1e-15);
    CHECK(std::abs(s.alpha_bar(t) - ab) <= 1e-12);
  }
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK_THROWS_AS(s.alpha_bar(1001), Error);
  const auto ts = s.sampling_timesteps(50);
  CHECK(ts.size() == 50);
  CHECK(ts.back() == 1000);
  CHECK(std::is_sorted(ts.begin(), ts.end()));
}

TEST_CASE("pooling codec round-trips block-constant images") {
  const toy::PoolingCodec c(16, 2);
  Image img(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = static_cast<std::uint8_t>(((x / 2) * 31 + (y / 2) * 17 + ch * 80) % 256);
  const Vec z = c.encode(img);
  CHECK(z.size() == 8 * 8 * 3);
  CHECK(z.cwiseAbs().maxCoeff() <= 1.0);
  CHECK(c.decode(z).rgb == img.rgb);
}

TEST_CASE("diffusion loss of a perfect predictor is zero") {
  const auto schedule = NoiseSchedule::linear(1000);
  const Vec z0 = to_vec(oracle::Rng(31).normal_vector(192)) * 0.3;
  const DiffusionModel model(codec(), schedule, std::make_shared<PerfectDenoiser>(z0, schedule), 50);
  const std::vector<Vec> batch = {z0, z0, z0};
  const auto loss = model.diffusion_loss(std::span<const Vec>(batch), Vec::Ones(4), 7);
  CHECK(loss.value <= 1e-20);
}

TEST_CASE("diffusion loss of a zero predictor is the second moment of the noise") {
  const DiffusionModel model(codec(), NoiseSchedule::linear(1000), std::make_shared<ZeroDenoiser>(), 50);
  std::vector<Vec> batch(100, Vec::Zero(192));
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    // 100 items x 192 dims = 19200 squared standard normals.
    const auto loss = model.diffusion_loss(std::span<const Vec>(batch), Vec::Ones(4), seed);
    CHECK(std::abs(loss.value - 1.0) <= 0.05);
  }
}

TEST_CASE("property: diffusion loss is non-negative and its condition gradient matches finite differences") {
  oracle::Rng rng(32);
  for (int trial = 0; trial < 10; ++trial) {
    Mat map(192, 5);
    for (Eigen::Index i = 0; i < map.rows(); ++i) map.row(i) = to_vec(rng.normal_vector(5)).transpose() * 0.1;
    const DiffusionModel model(codec(), NoiseSchedule::linear(1000), std::make_shared<LinearDenoiser>(map), 10);
    std::vector<Vec> batch;
    for (int i = 0; i < 3; ++i) batch.push_back(to_vec(rng.normal_vector(192)) * 0.4);
    const Vec c = to_vec(rng.normal_vector(5));
    const std::uint64_t seed = rng.next();
    const auto loss = model.diffusion_loss(std::span<const Vec>(batch), c, seed);
    CHECK(loss.value >= 0.0);
    const double h = 1e-5;
    for (Eigen::Index j = 0; j < 5; ++j) {
      Vec plus = c, minus = c;
      plus[j] += h;
      minus[j] -= h;
      const double numeric = (model.diffusion_loss(std::span<const Vec>(batch), plus, seed).value -
                              model.diffusion_loss(std::span<const Vec>(batch), minus, seed).value) /
                             (2 * h);
      CHECK(std::abs(numeric - loss.grad_condition[j]) <= 1e-3 * std::max(1e-6, std::abs(numeric)));
    }
  }
}

TEST_CASE("diffusion loss rejects an empty batch") {
  const DiffusionModel model(codec(), NoiseSchedule::linear(1000), std::make_shared<ZeroDenoiser>(), 50);
  CHECK_THROWS_AS(model.diffusion_loss(std::span<const Vec>(), Vec::Ones(2), 0), Error);
}

TEST_CASE("sampler is bit-deterministic and condition sensitive") {
  const auto& bb = fixtures::toy();
  const Vec tau = encode_plain_text("image of a red square", bb.text()).values;
  const Vec other = encode_plain_text("image of a blue square", bb.text()).values;
  const Image a = bb.diffusion->sample(tau, 50, 99);
  const Image b = bb.diffusion->sample(tau, 50, 99);
  CHECK(a.rgb == b.rgb);
  CHECK(bb.diffusion->sample(other, 50, 99).rgb != a.rgb);

  oracle::Rng rng(33);
  Mat map(192, 4);
  for (Eigen::Index i = 0; i < map.rows(); ++i) map.row(i) = to_vec(rng.normal_vector(4)).transpose();
  const DiffusionModel stub(codec(), NoiseSchedule::linear(1000), std::make_shared<LinearDenoiser>(map), 20);
  CHECK(stub.sample(to_vec({1, 0, 0, 0}), 20, 5).rgb != stub.sample(to_vec({0, 1, 0, 0}), 20, 5).rgb);
}

TEST_CASE("single-step sampling with a zero predictor matches the closed-form update") {
  const auto schedule = NoiseSchedule::linear(1000);
  const DiffusionModel model(codec(), schedule, std::make_shared<ZeroDenoiser>(), 1);
  const std::uint64_t seed = 1234;
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double ab = 1.0;
  for (int t = 1; t <= 1000; ++t) ab *= 1.0 - (1e-4 + (t - 1) / 999.0 * (2e-2 - 1e-4));
  // From t=T straight to 0: the update is the clipped clean-latent estimate.
  Vec expected(192);
  for (Eigen::Index i = 0; i < 192; ++i) expected[i] = std::clamp(normal(gen) / std::sqrt(ab), -1.0, 1.0);
  CHECK((model.sample_latent(Vec::Ones(3), 1, seed) - expected).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(model.sample(Vec::Ones(3), 1, seed).rgb == toy::PoolingCodec(16, 2).decode(expected).rgb);
}

TEST_CASE("generate_batch equals independent sample calls and overlaps across calls") {
  const auto& bb = fixtures::toy();
  const Vec tau = encode_plain_text("image of a square", bb.text()).values;
  const auto one = bb.diffusion->generate_batch(tau, 1, 40);
  CHECK(one[0].rgb == bb.diffusion->sample(tau, bb.diffusion->sample_steps(), 40).rgb);
  const auto three = bb.diffusion->generate_batch(tau, 3, 40);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(three[i].rgb == bb.diffusion->sample(tau, bb.diffusion->sample_steps(), 40 + i).rgb);
  }
  const auto shifted = bb.diffusion->generate_batch(tau, 3, 41);
  CHECK(shifted[0].rgb == three[1].rgb);
  CHECK(shifted[1].rgb == three[2].rgb);
}

TEST_CASE("sampling and loss evaluation leave the frozen model unchanged") {
  const auto& bb = fixtures::toy();
  const std::string before = bb.checksum();
  const Vec tau = encode_plain_text("image of a green mug", bb.text()).values;
  bb.diffusion->generate_batch(tau, 2, 3);
  const auto imgs = toy::concept_images("green", 2, 4);
  bb.diffusion->diffusion_loss(std::span<const Image>(imgs), tau, 5);
  CHECK(bb.checksum() == before);
}
