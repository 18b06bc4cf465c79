#include "ctok/embedding.hpp"
#include "ctok/error.hpp"
#include "ctok/toy.hpp"
#include "ctok/util.hpp"
#include "support/fixtures.hpp"

#include <doctest.h>

#include <algorithm>

using namespace ctok;
using fixtures::to_std;
using fixtures::to_vec;

namespace {

std::vector<Vec> random_vectors(oracle::Rng& rng, std::size_t n, std::size_t d) {
  std::vector<Vec> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(to_vec(rng.normal_vector(d)));
  return out;
}

double max_abs(const Vec& v) { return v.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("attribute embedding of a single sub-token word is its row") {
  const auto& text = fixtures::toy().text();
  const auto ids = text.tokenize("red");
  REQUIRE(ids.size() == 1);
  const Vec row = text.embed(ids).row(0).transpose();
  CHECK((attribute_embedding("red", text) - row).norm() == 0.0);
}

TEST_CASE("attribute embedding of a repeated sub-token is that vector") {
  const auto& text = fixtures::toy().text();
  const auto ids = text.tokenize("seasea");
  REQUIRE(ids.size() == 2);
  REQUIRE(ids[0] == ids[1]);
  const Vec row = text.embed(std::vector<int>{ids[0]}).row(0).transpose();
  CHECK(max_abs(attribute_embedding("seasea", text) - row) <= 1e-15);
}

TEST_CASE("attribute embedding of a split word is the elementwise mean of its rows") {
  const auto& text = fixtures::toy().text();
  const auto ids = text.tokenize("seaside");
  REQUIRE(ids.size() == 2);
  const Mat rows = text.embed(ids);
  const auto u = to_std(rows.row(0).transpose());
  const auto v = to_std(rows.row(1).transpose());
  oracle::Vector expected(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) expected[i] = (u[i] + v[i]) / 2.0;
  CHECK(max_abs(attribute_embedding("seaside", text) - to_vec(expected)) <= 1e-15);
}

TEST_CASE("attribute embedding rejects words without tokens") {
  CHECK_THROWS_AS(attribute_embedding("", fixtures::toy().text()), Error);
}

TEST_CASE("zero-variance subspace maps everything to the mean") {
  const Vec p = to_vec({1.0, -2.0, 0.5});
  const std::vector<Vec> same = {p, p, p};
  const auto s = build_subspace(same, 0);
  CHECK(s.rank() == 0);
  CHECK((s.mean - p).norm() == 0.0);
  CHECK((project(to_vec({9.0, 4.0, -1.0}), s) - p).norm() <= 1e-12);
}

TEST_CASE("plane in 5-D: projection matches the affine least-squares oracle") {
  oracle::Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<oracle::Vector> pts = {rng.normal_vector(5), rng.normal_vector(5), rng.normal_vector(5)};
    std::vector<Vec> vecs;
    for (const auto& p : pts) vecs.push_back(to_vec(p));
    const auto s = build_subspace(vecs, 2);
    const auto x = rng.normal_vector(5);
    const auto expected = oracle::affine_projection(pts, x);
    CHECK(max_abs(project(to_vec(x), s) - to_vec(expected)) <= 1e-9);
  }
}

TEST_CASE("full-rank subspace is the identity map") {
  oracle::Rng rng(12);
  const auto vecs = random_vectors(rng, 9, 6);
  const auto s = build_subspace(vecs, 6);
  for (int i = 0; i < 10; ++i) {
    const Vec x = to_vec(rng.normal_vector(6));
    CHECK(max_abs(project(x, s) - x) <= 1e-6);
  }
}

TEST_CASE("projection fixes the mean, is idempotent and leaves no residual along the complement") {
  oracle::Rng rng(13);
  const auto vecs = random_vectors(rng, 6, 8);
  const auto s = build_subspace(vecs, 3);
  CHECK(max_abs(project(s.mean, s) - s.mean) <= 1e-12);
  for (int i = 0; i < 25; ++i) {
    const Vec v = to_vec(rng.normal_vector(8));
    const Vec p = project(v, s);
    CHECK(max_abs(project(p, s) - p) <= 1e-6);
    std::vector<oracle::Vector> rows;
    for (Eigen::Index r = 0; r < s.basis.rows(); ++r) rows.push_back(to_std(s.basis.row(r).transpose()));
    CHECK(oracle::norm(oracle::orthogonal_residual(rows, to_std(p - s.mean))) <= 1e-6);
  }
}

TEST_CASE("property: projection is non-expansive about the mean and the basis is orthonormal") {
  oracle::Rng rng(14);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t d = 2 + rng.below(15);
    const std::size_t n = 1 + rng.below(12);
    const std::size_t r = rng.below(std::min(n, d) + 1);
    const auto vecs = random_vectors(rng, n, d);
    const auto s = build_subspace(vecs, r);
    if (s.rank() > 0) {
      const Mat gram = s.basis * s.basis.transpose();
      CHECK((gram - Mat::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() <= 1e-6);
    }
    const Vec v = to_vec(rng.normal_vector(d));
    CHECK((project(v, s) - s.mean).norm() <= (v - s.mean).norm() + 1e-9);
  }
}

TEST_CASE("property: affine combinations of the inputs are fixed points at rank count-1") {
  oracle::Rng rng(15);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t d = 3 + rng.below(10);
    const std::size_t n = 2 + rng.below(d - 1);
    const auto vecs = random_vectors(rng, n, d);
    const auto s = build_subspace(vecs, default_subspace_rank(n, d));
    oracle::Vector w(n);
    double total = 0.0;
    for (auto& x : w) total += (x = rng.uniform(-1.0, 2.0));
    Vec combo = Vec::Zero(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) combo += (w[i] / total) * vecs[i];
    CHECK(max_abs(project(combo, s) - combo) <= 1e-6);
  }
}

TEST_CASE("build_subspace preconditions") {
  oracle::Rng rng(16);
  const auto vecs = random_vectors(rng, 3, 4);
  CHECK_THROWS_AS(build_subspace(vecs, 4), Error);
  CHECK_THROWS_AS(build_subspace(std::vector<Vec>{}, 0), Error);
  std::vector<Vec> mixed = {to_vec({1.0, 2.0}), to_vec({1.0, 2.0, 3.0})};
  CHECK_THROWS_AS(build_subspace(mixed, 1), Error);
  try {
    build_subspace(vecs, 4);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RankTooLarge);
  }
}

TEST_CASE("rank_attributes keeps the most similar against a full-sort oracle") {
  const Vec image = to_vec({1.0, 0.0});
  const std::vector<std::string> names = {"alpha", "beta", "gamma"};
  const std::vector<double> sims = {0.9, 0.2, 0.5};
  std::vector<Vec> features;
  for (double c : sims) features.push_back(to_vec({c, std::sqrt(1.0 - c * c)}));
  const auto top = rank_attributes(names, features, image, 2);

  std::vector<std::pair<std::string, double>> scored;
  for (std::size_t i = 0; i < names.size(); ++i) scored.emplace_back(names[i], sims[i]);
  const auto order = oracle::sort_ranking(scored);
  REQUIRE(top.size() == 2);
  CHECK(top[0].name == order[0]);
  CHECK(top[1].name == order[1]);
  CHECK(top[0].name == "alpha");
  CHECK(top[1].name == "gamma");
}

TEST_CASE("rank_attributes with one perfectly correlated candidate") {
  const Vec image = to_vec({0.0, 3.0, 0.0});
  const std::vector<std::string> names = {"a", "b", "c"};
  const std::vector<Vec> features = {to_vec({1.0, 0.0, 0.0}), to_vec({0.0, 2.0, 0.0}), to_vec({0.0, 0.0, 1.0})};
  const auto top = rank_attributes(names, features, image, 1);
  REQUIRE(top.size() == 1);
  CHECK(top[0].name == "b");
}

TEST_CASE("select_attributes returns every candidate sorted and is permutation invariant") {
  const auto& bb = fixtures::toy();
  const auto images = toy::concept_images("blue", 4, 3);
  std::vector<std::string> candidates(toy::attribute_candidates().begin(), toy::attribute_candidates().begin() + 20);
  const auto all = select_attributes(candidates, images, candidates.size(), bb.encoders);
  CHECK(all.size() == candidates.size());
  std::vector<std::string> sorted_all = all, sorted_candidates = candidates;
  std::sort(sorted_all.begin(), sorted_all.end());
  std::sort(sorted_candidates.begin(), sorted_candidates.end());
  CHECK(sorted_all == sorted_candidates);

  oracle::Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    auto shuffled = candidates;
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    CHECK(select_attributes(shuffled, images, 7, bb.encoders) ==
          std::vector<std::string>(all.begin(), all.begin() + 7));
  }
  CHECK_THROWS_AS(select_attributes({}, images, 3, bb.encoders), Error);
  CHECK_THROWS_AS(select_attributes(candidates, {}, 3, bb.encoders), Error);
}

TEST_CASE("affinity of identical and orthogonal vectors") {
  const std::vector<std::pair<std::string, Vec>> same = {{"a", to_vec({1.0, 2.0})}, {"b", to_vec({1.0, 2.0})}};
  CHECK((affinity(same).matrix - Mat::Ones(2, 2)).cwiseAbs().maxCoeff() <= 1e-15);
  const std::vector<std::pair<std::string, Vec>> ortho = {
      {"x", to_vec({2.0, 0.0, 0.0})}, {"y", to_vec({0.0, 3.0, 0.0})}, {"z", to_vec({0.0, 0.0, 0.5})}};
  CHECK(affinity(ortho).matrix == Mat::Identity(3, 3));
}

TEST_CASE("affinity matches a direct cosine oracle and is symmetric with unit diagonal") {
  oracle::Rng rng(18);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.below(6);
    std::vector<oracle::Vector> raw;
    std::vector<std::pair<std::string, Vec>> labeled;
    for (std::size_t i = 0; i < n; ++i) {
      raw.push_back(rng.normal_vector(7));
      labeled.emplace_back("v" + std::to_string(i), to_vec(raw.back()));
    }
    const auto rep = affinity(labeled);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(rep.matrix(i, i) == 1.0);
      for (std::size_t j = 0; j < n; ++j) {
        CHECK(rep.matrix(i, j) == rep.matrix(j, i));
        if (i != j) CHECK(std::abs(rep.matrix(i, j) - oracle::cosine(raw[i], raw[j])) <= 1e-9);
      }
    }
  }
}

TEST_CASE("norm report moments") {
  TokenEmbedding token;
  token.vectors = Mat::Identity(2, 3);
  const std::vector<Vec> units = {to_vec({1.0, 0.0, 0.0}), to_vec({0.0, 1.0, 0.0}), to_vec({0.6, 0.8, 0.0})};
  const auto a = norm_report(units, token);
  CHECK(a.mean == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(a.std == doctest::Approx(0.0).epsilon(1e-12));

  const std::vector<Vec> graded = {to_vec({1.0, 0.0, 0.0}), to_vec({0.0, 2.0, 0.0}), to_vec({0.0, 0.0, 3.0})};
  const auto b = norm_report(graded, token);
  const double mean = (1.0 + 2.0 + 3.0) / 3.0;
  const double var = ((1 - mean) * (1 - mean) + (2 - mean) * (2 - mean) + (3 - mean) * (3 - mean)) / 3.0;
  CHECK(std::abs(b.mean - mean) <= 1e-12);
  CHECK(std::abs(b.std - std::sqrt(var)) <= 1e-12);
  CHECK(std::abs(b.std - std::sqrt(2.0 / 3.0)) <= 1e-12);
  CHECK(b.learned_token_norm == doctest::Approx(1.0));
}

TEST_CASE("subspace serialization round-trips bit-exactly") {
  oracle::Rng rng(19);
  const auto vecs = random_vectors(rng, 6, 5);
  auto s = build_subspace({"a", "b", "c", "d", "e", "f"}, vecs, 4, SubspaceSource::CorrelationSelected);
  s.mean = round_f32(s.mean);
  s.basis = round_f32(s.basis);
  const std::string text = serialize_subspace(s);
  const auto back = parse_subspace(text);
  CHECK(serialize_subspace(back) == text);
  CHECK(back.mean == s.mean);
  CHECK(back.basis == s.basis);
  CHECK(back.attributes == s.attributes);
  CHECK(back.source == SubspaceSource::CorrelationSelected);
  CHECK(back.id() == s.id());
}
