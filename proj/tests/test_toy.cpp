#include "ctok/backbone.hpp"
#include "ctok/error.hpp"
#include "ctok/image.hpp"
#include "ctok/toy.hpp"
#include "support/fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace ctok;

namespace {

// Mean channel value over the central 4x4 block.
std::array<double, 3> centre_colour(const Image& img) {
  std::array<double, 3> out{};
  for (int y = img.height / 2 - 2; y < img.height / 2 + 2; ++y) {
    for (int x = img.width / 2 - 2; x < img.width / 2 + 2; ++x) {
      for (int c = 0; c < 3; ++c) out[static_cast<std::size_t>(c)] += img.at(x, y, c) / 16.0;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("vocabulary tokenizes by longest prefix and rejects uncovered words") {
  const toy::Vocabulary v({"a", "ab", "abc", "d", "photo"});
  CHECK(v.tokenize("ABC abd, photo") == std::vector<int>{2, 1, 3, 4});
  CHECK(v.tokenize("  ") == std::vector<int>{});
  CHECK_THROWS_AS(v.tokenize("zebra"), Error);
  CHECK_THROWS_AS(toy::Vocabulary({"a", "a"}), Error);
}

TEST_CASE("default vocabulary covers prompts, colours, contexts and attributes") {
  const auto& text = fixtures::toy().text();
  CHECK(toy::attribute_candidates().size() >= 100);
  const std::set<std::string> unique(toy::attribute_candidates().begin(), toy::attribute_candidates().end());
  CHECK(unique.size() == toy::attribute_candidates().size());
  for (const auto& w : toy::attribute_candidates()) CHECK_FALSE(text.tokenize(w).empty());
  for (const auto& w : toy::color_words()) CHECK(toy::color_of(w).has_value());
  for (const auto& w : toy::context_words()) CHECK(toy::background_of(w).has_value());
  CHECK_NOTHROW(text.tokenize("a photo of a blue square on the beach"));
  CHECK(text.context_length() == 77);
}

TEST_CASE("render draws the object over the background") {
  toy::Scene s;
  s.object = {255, 0, 0};
  s.background = {0, 0, 255};
  const Image img = toy::render(s, 16);
  CHECK(img.width == 16);
  CHECK(img.at(8, 8, 0) == 255);
  CHECK(img.at(8, 8, 2) == 0);
  CHECK(img.at(0, 0, 0) == 0);
  CHECK(img.at(0, 0, 2) == 255);
}

TEST_CASE("concept images are deterministic, jittered and coloured") {
  const auto a = toy::concept_images("red", 4, 3);
  const auto b = toy::concept_images("red", 4, 3);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a[i].rgb == b[i].rgb);
  CHECK(a[0].rgb != a[1].rgb);
  const auto c = centre_colour(a[0]);
  CHECK(c[0] > c[2] + 50);
  CHECK_FALSE(toy::contrasting_colors("red").empty());
  for (const auto& col : toy::contrasting_colors("red")) CHECK(col != "red");
}

TEST_CASE("png round trip and malformed input") {
  const auto img = toy::concept_images("green", 1, 2).front();
  const auto bytes = encode_png(img);
  const auto back = decode_png(bytes);
  CHECK(back.width == img.width);
  CHECK(back.rgb == img.rgb);
  CHECK_THROWS_AS(decode_png("not a png"), Error);
  const auto path = fixtures::scratch("png") / "x.png";
  write_png(path, img);
  CHECK(read_png(path).rgb == img.rgb);
}

TEST_CASE("toy backbone is deterministic per spec and validates options") {
  const auto a = load_backbone(default_toy_spec());
  const auto b = load_backbone(default_toy_spec());
  CHECK(a.checksum() == b.checksum());
  auto other = default_toy_spec();
  other["seed"] = 8;
  CHECK(load_backbone(other).checksum() != a.checksum());
  auto bad_shape = default_toy_spec();
  bad_shape["latent_shape"] = {4, 4, 3};
  CHECK_THROWS_AS(load_backbone(bad_shape), Error);
  auto bad_policy = default_toy_spec();
  bad_policy["seed_policy"] = "random";
  CHECK_THROWS_AS(load_backbone(bad_policy), Error);
  try {
    load_backbone({{"kind", "sd-1.4"}});
    FAIL("expected UnsupportedBackbone");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnsupportedBackbone);
  }
  CHECK_THROWS_AS(load_backbone(nlohmann::json::array()), Error);
}

TEST_CASE("registered adapters are used for their kind") {
  register_backbone("test-adapter", [](const nlohmann::json&) { return fixtures::toy(); });
  const auto b = load_backbone({{"kind", "test-adapter"}});
  CHECK(b.checksum() == fixtures::toy().checksum());
  CHECK(b.spec.at("kind") == "test-adapter");
}

TEST_CASE("generated images follow the colour named in the caption") {
  const auto& bb = fixtures::toy();
  const auto red = encode_plain_text("image of a red square", bb.text()).values;
  const auto blue = encode_plain_text("image of a blue square", bb.text()).values;
  double red_minus_blue_r = 0, red_minus_blue_b = 0;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto r = centre_colour(bb.diffusion->generate(red, seed));
    const auto b = centre_colour(bb.diffusion->generate(blue, seed));
    red_minus_blue_r += r[0] - b[0];
    red_minus_blue_b += r[2] - b[2];
  }
  CHECK(red_minus_blue_r > 0);
  CHECK(red_minus_blue_b < 0);
}

TEST_CASE("context words change the generated background") {
  const auto& bb = fixtures::toy();
  const auto plain = encode_plain_text("image of a square", bb.text()).values;
  const auto beach = encode_plain_text("image of a square on the beach", bb.text()).values;
  const auto p = bb.diffusion->generate(plain, 4);
  const auto q = bb.diffusion->generate(beach, 4);
  const auto sand = *toy::background_of("beach");
  const auto dist = [&](const Image& img) {
    return std::abs(img.at(0, 0, 0) - sand.r) + std::abs(img.at(0, 0, 1) - sand.g) + std::abs(img.at(0, 0, 2) - sand.b);
  };
  CHECK(dist(q) < dist(p));
}
