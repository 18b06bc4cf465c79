#include "ctok/backbone.hpp"

#include "ctok/error.hpp"
#include "ctok/toy.hpp"
#include "ctok/util.hpp"

#include <map>
#include <mutex>

namespace ctok {

namespace {

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, BackboneFactory>& registry() {
  static std::map<std::string, BackboneFactory> r;
  return r;
}

toy::ToyConfig toy_config_from(const nlohmann::json& spec) {
  toy::ToyConfig c;
  c.seed = spec.value("seed", c.seed);
  c.token_dim = spec.value("token_dim", c.token_dim);
  c.feature_dim = spec.value("feature_dim", c.feature_dim);
  c.image_size = spec.value("image_size", c.image_size);
  c.patch = spec.value("patch", c.patch);
  c.downsample = spec.value("downsample", c.downsample);
  c.train_steps = spec.value("T_train", c.train_steps);
  c.sample_steps = spec.value("T_sample", c.sample_steps);
  c.data_std = spec.value("data_std", c.data_std);
  c.ridge = spec.value("ridge", c.ridge);
  c.condition_rank = spec.value("condition_rank", c.condition_rank);
  c.image_bias_norm = spec.value("image_bias_norm", c.image_bias_norm);
  c.embedding_norm_spread = spec.value("embedding_norm_spread", c.embedding_norm_spread);
  c.function_word_scale = spec.value("function_word_scale", c.function_word_scale);
  c.context_length = spec.value("context_length", c.context_length);
  if (spec.contains("latent_shape")) {
    const auto& ls = spec.at("latent_shape");
    const int side = c.image_size / c.downsample;
    if (!ls.is_array() || ls.size() != 3 || ls[0].get<int>() != side || ls[1].get<int>() != side ||
        ls[2].get<int>() != 3) {
      throw Error(ErrorCode::InvalidArgument, "toy latent_shape must be [" + std::to_string(side) + ", " +
                                                  std::to_string(side) + ", 3] for this image size");
    }
  }
  if (spec.contains("seed_policy") && spec.at("seed_policy") != "fixed") {
    throw Error(ErrorCode::InvalidArgument, "toy backbone only supports seed_policy \"fixed\"");
  }
  return c;
}

Backbone load_toy(const nlohmann::json& spec) {
  // Building fits the condition map over every caption, so share models per spec.
  static std::mutex mutex;
  static std::map<std::string, toy::ToyModel> cache;
  const auto config = toy_config_from(spec);
  const auto key = spec.dump();
  toy::ToyModel model;
  {
    std::lock_guard lock(mutex);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, toy::build_toy_model(config)).first;
    model = it->second;
  }
  Backbone b;
  b.encoders.text = model.text;
  b.encoders.image = model.image;
  b.diffusion = model.diffusion;
  b.spec = spec;
  return b;
}

}  // namespace

std::string Backbone::checksum() const {
  return sha256_hex(encoders.text->checksum() + "|" + encoders.image->checksum() + "|" + diffusion->checksum());
}

std::string Backbone::spec_fingerprint() const { return sha256_hex(spec.dump()).substr(0, 16); }

nlohmann::json default_toy_spec() {
  return {{"kind", "toy"}, {"seed", 7}, {"T_train", 1000}, {"T_sample", 50}, {"seed_policy", "fixed"}};
}

Backbone load_backbone(const nlohmann::json& spec) {
  if (!spec.is_object() || !spec.contains("kind") || !spec.at("kind").is_string()) {
    throw Error(ErrorCode::Format, "backbone spec needs a string \"kind\"");
  }
  const auto kind = spec.at("kind").get<std::string>();
  if (kind == "toy") return load_toy(spec);
  BackboneFactory factory;
  {
    std::lock_guard lock(registry_mutex());
    auto it = registry().find(kind);
    if (it != registry().end()) factory = it->second;
  }
  if (!factory) throw Error(ErrorCode::UnsupportedBackbone, "no adapter registered for backbone kind '" + kind + "'");
  auto b = factory(spec);
  if (!b.encoders.text || !b.encoders.image || !b.diffusion) {
    throw Error(ErrorCode::UnsupportedBackbone, "adapter for '" + kind + "' returned an incomplete backbone");
  }
  b.spec = spec;
  return b;
}

Backbone load_backbone_file(const std::filesystem::path& path) {
  nlohmann::json spec;
  try {
    spec = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, path.string() + ": " + e.what());
  }
  return load_backbone(spec);
}

void register_backbone(const std::string& kind, BackboneFactory factory) {
  if (kind == "toy") throw Error(ErrorCode::InvalidArgument, "the toy backbone cannot be replaced");
  std::lock_guard lock(registry_mutex());
  registry()[kind] = std::move(factory);
}

}  // namespace ctok
