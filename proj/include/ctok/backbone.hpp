#pragma once

#include "ctok/diffusion.hpp"
#include "ctok/encoder.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <string>

namespace ctok {

// Frozen encoders plus the latent diffusion model they condition.
struct Backbone {
  Encoders encoders;
  std::shared_ptr<const DiffusionModel> diffusion;
  nlohmann::json spec;

  const TextBackbone& text() const { return *encoders.text; }
  const ImageEncoder& image() const { return *encoders.image; }
  // Hash over every frozen parameter; unchanged by training or sampling.
  std::string checksum() const;
  // Hash of the canonical spec document, used to key caches.
  std::string spec_fingerprint() const;
};

using BackboneFactory = std::function<Backbone(const nlohmann::json& spec)>;

// {kind: "toy" | "external", latent_shape?, T_train?, T_sample?, seed_policy?, ...}.
// "toy" builds the reference backbone; other kinds must be registered first.
Backbone load_backbone(const nlohmann::json& spec);
Backbone load_backbone_file(const std::filesystem::path& path);
void register_backbone(const std::string& kind, BackboneFactory factory);

nlohmann::json default_toy_spec();

}  // namespace ctok
