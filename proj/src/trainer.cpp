#include "ctok/trainer.hpp"

#include "ctok/error.hpp"
#include "ctok/util.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace ctok {

std::string_view to_string(Optimizer optimizer) {
  switch (optimizer) {
    case Optimizer::Sgd:
      return "sgd";
    case Optimizer::Momentum:
      return "momentum";
    case Optimizer::Adam:
      return "adam";
  }
  return "sgd";
}

Optimizer parse_optimizer(std::string_view text) {
  if (text == "sgd") return Optimizer::Sgd;
  if (text == "momentum") return Optimizer::Momentum;
  if (text == "adam") return Optimizer::Adam;
  throw Error(ErrorCode::InvalidArgument, "unknown optimizer '" + std::string(text) + "'");
}

void TrainingConfig::validate() const {
  if (lambda_sd < 0.0 || lambda_ce < 0.0) throw Error(ErrorCode::InvalidArgument, "loss weights must be >= 0");
  if (lambda_sd == 0.0 && lambda_ce == 0.0) throw Error(ErrorCode::InvalidArgument, "both loss weights are zero");
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "learning_rate must be finite and >= 0");
  }
  if (iterations < 1) throw Error(ErrorCode::InvalidArgument, "iterations must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  if (num_tokens < 1) throw Error(ErrorCode::InvalidArgument, "num_tokens must be >= 1");
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be > 0");
  if (init_jitter < 0.0) throw Error(ErrorCode::InvalidArgument, "init_jitter must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw Error(ErrorCode::InvalidArgument, "momentum must be in [0, 1)");
}

nlohmann::json TrainingConfig::to_json() const {
  nlohmann::json doc = {
      {"lambda_sd", lambda_sd},
      {"lambda_ce", lambda_ce},
      {"learning_rate", learning_rate},
      {"iterations", iterations},
      {"batch_size", batch_size},
      {"num_tokens", num_tokens},
      {"negatives_k", negatives_k},
      {"temperature", temperature},
      {"init_jitter", init_jitter},
      {"seed", seed},
      {"prompt_order", std::string(to_string(prompt_order))},
      {"optimizer", std::string(to_string(optimizer))},
      {"momentum", momentum},
  };
  doc["subspace_rank"] = subspace_rank ? nlohmann::json(*subspace_rank) : nlohmann::json(nullptr);
  return doc;
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::Format, "training config must be an object");
  TrainingConfig c;
  try {
    c.lambda_sd = doc.value("lambda_sd", c.lambda_sd);
    c.lambda_ce = doc.value("lambda_ce", c.lambda_ce);
    c.learning_rate = doc.value("learning_rate", c.learning_rate);
    c.iterations = doc.value("iterations", c.iterations);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.num_tokens = doc.value("num_tokens", c.num_tokens);
    c.negatives_k = doc.value("negatives_k", c.negatives_k);
    c.temperature = doc.value("temperature", c.temperature);
    c.init_jitter = doc.value("init_jitter", c.init_jitter);
    c.seed = doc.value("seed", c.seed);
    c.momentum = doc.value("momentum", c.momentum);
    if (doc.contains("prompt_order")) c.prompt_order = parse_prompt_order(doc.at("prompt_order").get<std::string>());
    if (doc.contains("optimizer")) c.optimizer = parse_optimizer(doc.at("optimizer").get<std::string>());
    if (doc.contains("subspace_rank") && !doc.at("subspace_rank").is_null()) {
      c.subspace_rank = doc.at("subspace_rank").get<std::size_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("bad training config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string TrainingConfig::fingerprint() const { return sha256_hex(to_json().dump()).substr(0, 16); }

std::vector<Image> TrainingBatch::merged() const {
  std::vector<Image> out = positives;
  out.insert(out.end(), negatives.begin(), negatives.end());
  return out;
}

std::vector<int> TrainingBatch::labels() const {
  std::vector<int> out(positives.size(), 1);
  out.resize(positives.size() + negatives.size(), 0);
  return out;
}

namespace {

nlohmann::json images_to_json(const std::vector<Image>& images) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& img : images) {
    arr.push_back({{"width", img.width}, {"height", img.height}, {"rgb", base64_encode(img.rgb)}});
  }
  return arr;
}

std::vector<Image> images_from_json(const nlohmann::json& arr) {
  std::vector<Image> out;
  for (const auto& item : arr) {
    Image img;
    img.width = item.at("width").get<int>();
    img.height = item.at("height").get<int>();
    img.rgb = base64_decode(item.at("rgb").get<std::string>());
    if (!img.valid()) throw Error(ErrorCode::Format, "cached negative has inconsistent size");
    out.push_back(std::move(img));
  }
  return out;
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// d cos(f, tau) / d tau for unit f.
Vec cosine_grad(const Vec& unit_feature, const Vec& tau) {
  const double norm = tau.norm();
  const Vec unit = tau / norm;
  return (unit_feature - unit * unit.dot(unit_feature)) / norm;
}

}  // namespace

std::vector<Image> sample_negatives(std::string_view parent, std::size_t k, const Backbone& backbone,
                                    std::uint64_t seed, const std::optional<std::filesystem::path>& cache_dir) {
  if (k == 0) return {};
  std::filesystem::path cache_file;
  if (cache_dir) {
    const auto key = sha256_hex(std::string(parent) + "|" + backbone.checksum() + "|" + std::to_string(seed));
    cache_file = *cache_dir / (key.substr(0, 32) + ".json");
    std::error_code ec;
    if (std::filesystem::exists(cache_file, ec)) {
      try {
        auto cached = images_from_json(nlohmann::json::parse(read_file(cache_file)).at("images"));
        if (cached.size() >= k) {
          cached.resize(k);
          return cached;
        }
      } catch (const std::exception&) {
        // unreadable cache entries are regenerated below
      }
    }
  }
  const auto condition = encode_plain_text("image of a " + std::string(parent), backbone.text());
  auto images = backbone.diffusion->generate_batch(condition.values, k, seed);
  if (cache_dir) {
    std::filesystem::create_directories(*cache_dir);
    nlohmann::json doc = {{"parent", parent}, {"seed", seed}, {"images", images_to_json(images)}};
    write_file_atomic(cache_file, doc.dump());
  }
  return images;
}

BalancedCrossEntropy balanced_cross_entropy(std::span<const double> token_logits,
                                            std::span<const double> parent_logits, std::span<const int> labels) {
  if (token_logits.size() != labels.size() || parent_logits.size() != labels.size()) {
    throw Error(ErrorCode::DimensionMismatch, "logits and labels differ in length");
  }
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const auto n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw Error(ErrorCode::OneClassMissing, "balanced cross-entropy needs positives and negatives");
  }
  BalancedCrossEntropy out;
  out.grad_token_logits.assign(labels.size(), 0.0);
  double pos = 0.0, neg = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double margin = token_logits[i] - parent_logits[i];
    if (labels[i] == 1) {
      pos += softplus(-margin);
      out.grad_token_logits[i] = -0.5 * sigmoid(-margin) / static_cast<double>(n_pos);
    } else if (labels[i] == 0) {
      neg += softplus(margin);
      out.grad_token_logits[i] = 0.5 * sigmoid(margin) / static_cast<double>(n_neg);
    } else {
      throw Error(ErrorCode::InvalidArgument, "labels must be 0 or 1");
    }
  }
  out.value = 0.5 * (pos / static_cast<double>(n_pos) + neg / static_cast<double>(n_neg));
  return out;
}

LossAndGradient classification_loss(const Vec& token_condition, const Vec& parent_condition,
                                    std::span<const Vec> positive_features, std::span<const Vec> negative_features,
                                    double temperature) {
  const Vec token_unit = normalized(token_condition);
  const Vec parent_unit = normalized(parent_condition);
  std::vector<double> token_logits, parent_logits;
  std::vector<int> labels;
  std::vector<const Vec*> features;
  auto add = [&](std::span<const Vec> set, int label) {
    for (const auto& f : set) {
      token_logits.push_back(temperature * f.dot(token_unit));
      parent_logits.push_back(temperature * f.dot(parent_unit));
      labels.push_back(label);
      features.push_back(&f);
    }
  };
  add(positive_features, 1);
  add(negative_features, 0);
  const auto bce = balanced_cross_entropy(token_logits, parent_logits, labels);
  LossAndGradient out;
  out.value = bce.value;
  out.grad_condition = Vec::Zero(token_condition.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    out.grad_condition += bce.grad_token_logits[i] * temperature * cosine_grad(*features[i], token_condition);
  }
  return out;
}

double classification_loss(const TokenEmbedding& token, const TrainingBatch& batch, std::string_view parent,
                           const Encoders& encoders, std::string_view tmpl, double temperature) {
  const auto token_seq = assemble(tmpl, token, parent, *encoders.text);
  const auto parent_seq = assemble_text(tmpl, "", parent, *encoders.text);
  std::vector<Vec> pos, neg;
  for (const auto& img : batch.positives) pos.push_back(normalized(encoders.image->encode(img)));
  for (const auto& img : batch.negatives) neg.push_back(normalized(encoders.image->encode(img)));
  return classification_loss(encode_text(token_seq, *encoders.text).values,
                             encode_text(parent_seq, *encoders.text).values, pos, neg, temperature)
      .value;
}

TotalLoss total_loss(const Mat& raw_rows, const LossInputs& inputs, const TrainingConfig& config,
                     const Backbone& backbone) {
  const auto& text = backbone.text();
  const Mat rows = inputs.subspace ? project_rows(raw_rows, *inputs.subspace) : raw_rows;
  const auto seq = assemble(inputs.tmpl, rows, inputs.parent, text);
  const Vec tau = text.encode(seq.rows);

  TotalLoss out;
  Vec grad_tau = Vec::Zero(tau.size());
  const bool have_sd = !inputs.positive_latents.empty();
  const bool have_ce = !inputs.positive_features.empty() && !inputs.negative_features.empty();
  if (config.lambda_sd > 0.0 && !have_sd) throw Error(ErrorCode::EmptyBatch, "diffusion term needs positives");
  if (config.lambda_ce > 0.0 && !have_ce) {
    throw Error(ErrorCode::OneClassMissing, "classification term needs positives and negatives");
  }
  if (have_sd) {
    const auto sd = backbone.diffusion->diffusion_loss(inputs.positive_latents, tau, inputs.noise_seed);
    out.sd = sd.value;
    grad_tau += config.lambda_sd * sd.grad_condition;
  }
  if (have_ce) {
    const auto parent_seq = assemble_text(inputs.tmpl, "", inputs.parent, text);
    const Vec tau_parent = text.encode(parent_seq.rows);
    const auto ce = classification_loss(tau, tau_parent, inputs.positive_features, inputs.negative_features,
                                        config.temperature);
    out.ce = ce.value;
    grad_tau += config.lambda_ce * ce.grad_condition;
  }
  out.total = config.lambda_sd * out.sd + config.lambda_ce * out.ce;

  const Mat grad_seq = text.encode_vjp(seq.rows, grad_tau);
  const Mat grad_token = grad_seq.middleRows(static_cast<Eigen::Index>(seq.token_offset),
                                             static_cast<Eigen::Index>(seq.token_count));
  out.grad_rows = inputs.subspace ? project_rows_vjp(grad_token, *inputs.subspace) : grad_token;
  return out;
}

Mat initial_token_rows(std::string_view parent, const AttributeSubspace* subspace, const TrainingConfig& config,
                       const TextBackbone& text) {
  Vec base = attribute_embedding(parent, text);
  if (subspace) base = project(base, *subspace);
  std::mt19937_64 rng(mix_seed(config.seed, 0x1417));
  Mat rows(static_cast<Eigen::Index>(config.num_tokens), base.size());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    rows.row(i) = (base + config.init_jitter * standard_normal(rng, base.size())).transpose();
  }
  return rows;
}

TokenArtifact train_token(const std::vector<Image>& positives, std::string_view parent,
                          const AttributeSubspace* subspace, const TrainingConfig& config, const Backbone& backbone,
                          const TrainOptions& options) {
  config.validate();
  if (positives.empty()) throw Error(ErrorCode::EmptyTrainingSet, "training needs at least one concept image");
  if (parent.empty()) throw Error(ErrorCode::InvalidArgument, "parent concept is empty");
  const auto& text = backbone.text();
  if (subspace && subspace->dim() != text.token_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "subspace dimension does not match the text encoder");
  }
  std::vector<std::string> templates = options.templates.paraphrase_set;
  if (std::find(templates.begin(), templates.end(), options.templates.context_text) == templates.end()) {
    templates.push_back(options.templates.context_text);
  }
  for (auto& t : templates) {
    validate_template(t);
    t = apply_order(t, config.prompt_order);
  }

  std::vector<Vec> latents, pos_features, neg_features;
  for (const auto& img : positives) {
    latents.push_back(backbone.diffusion->codec().encode(img));
    pos_features.push_back(normalized(backbone.image().encode(img)));
  }
  if (config.lambda_ce > 0.0) {
    const auto negatives =
        sample_negatives(parent, config.negatives_k, backbone, mix_seed(config.seed, 0x4E47), options.negative_cache);
    if (negatives.empty()) throw Error(ErrorCode::OneClassMissing, "classification term needs negatives_k >= 1");
    for (const auto& img : negatives) neg_features.push_back(normalized(backbone.image().encode(img)));
  }

  Mat raw = initial_token_rows(parent, subspace, config, text);
  Mat velocity = Mat::Zero(raw.rows(), raw.cols());
  Mat second = Mat::Zero(raw.rows(), raw.cols());
  const std::size_t n = positives.size();
  const std::size_t b = std::min(config.batch_size, n);
  std::vector<std::size_t> order(n);
  std::vector<Vec> batch_latents(b), batch_features(b);
  const std::size_t window = std::max<std::size_t>(1, std::min<std::size_t>(100, config.iterations));
  TrainingProgress tail;

  for (std::size_t it = 0; it < config.iterations; ++it) {
    std::mt19937_64 rng(mix_seed(mix_seed(config.seed, 0x17E4), it));
    std::uniform_int_distribution<std::size_t> pick_template(0, templates.size() - 1);
    const auto& tmpl = templates[pick_template(rng)];
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < b; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(order[i], order[pick(rng)]);
      batch_latents[i] = latents[order[i]];
      batch_features[i] = pos_features[order[i]];
    }

    LossInputs inputs;
    inputs.tmpl = tmpl;
    inputs.parent = std::string(parent);
    inputs.subspace = subspace;
    inputs.positive_latents = batch_latents;
    if (config.lambda_ce > 0.0) {
      inputs.positive_features = batch_features;
      inputs.negative_features = neg_features;
    }
    inputs.noise_seed = rng();
    const auto loss = total_loss(raw, inputs, config, backbone);
    if (!std::isfinite(loss.total) || !all_finite(loss.grad_rows)) {
      std::ostringstream msg;
      msg << "non-finite loss at iteration " << it << " (sd=" << loss.sd << ", ce=" << loss.ce
          << ", |rows|=" << raw.norm() << ")";
      throw Error(ErrorCode::NonFiniteLoss, msg.str());
    }

    const double lr = config.learning_rate;
    switch (config.optimizer) {
      case Optimizer::Sgd:
        raw -= lr * loss.grad_rows;
        break;
      case Optimizer::Momentum:
        velocity = config.momentum * velocity + loss.grad_rows;
        raw -= lr * velocity;
        break;
      case Optimizer::Adam: {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        velocity = b1 * velocity + (1.0 - b1) * loss.grad_rows;
        second = b2 * second + (1.0 - b2) * loss.grad_rows.cwiseAbs2();
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(it + 1));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(it + 1));
        raw.array() -= lr * (velocity.array() / c1) / ((second.array() / c2).sqrt() + eps);
        break;
      }
    }

    if (it + window >= config.iterations) {
      tail.total += loss.total / static_cast<double>(window);
      tail.sd += loss.sd / static_cast<double>(window);
      tail.ce += loss.ce / static_cast<double>(window);
    }
    if (options.on_progress && options.progress_every > 0 &&
        ((it + 1) % options.progress_every == 0 || it + 1 == config.iterations)) {
      options.on_progress({it + 1, config.iterations, loss.total, loss.sd, loss.ce});
    }
  }
  tail.iteration = config.iterations;
  tail.iterations = config.iterations;

  TokenArtifact out;
  out.token.concept_id = options.concept_id;
  out.token.parent_concept = std::string(parent);
  out.token.vectors = round_f32(subspace ? project_rows(raw, *subspace) : raw);
  out.token.is_projected = subspace != nullptr;
  if (subspace) {
    out.token.subspace_id = subspace->id();
    out.subspace = *subspace;
  }
  out.token.training_fingerprint = config.fingerprint();
  out.config = config.to_json();
  out.metrics = {{"final_losses", {{"total", tail.total}, {"sd", tail.sd}, {"ce", tail.ce}}},
                 {"window", window}};
  return out;
}

nlohmann::json token_artifact_to_json(const TokenArtifact& a) {
  const auto& t = a.token;
  nlohmann::json doc;
  doc["version"] = 1;
  doc["concept_id"] = t.concept_id;
  doc["parent"] = t.parent_concept;
  doc["dim"] = t.dim();
  doc["num_tokens"] = t.num_tokens();
  doc["is_projected"] = t.is_projected;
  doc["vectors"] = encode_f32(std::span<const double>(t.vectors.data(), static_cast<std::size_t>(t.vectors.size())));
  doc["subspace"] = a.subspace ? subspace_to_json(*a.subspace) : nlohmann::json(nullptr);
  doc["config_fingerprint"] = t.training_fingerprint;
  doc["config"] = a.config.is_null() ? nlohmann::json::object() : a.config;
  doc["metrics"] = a.metrics.is_null() ? nlohmann::json::object() : a.metrics;
  return doc;
}

TokenArtifact token_artifact_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("version").get<int>() != 1) throw Error(ErrorCode::Format, "unsupported token artifact version");
    TokenArtifact a;
    auto& t = a.token;
    t.concept_id = doc.at("concept_id").get<std::string>();
    t.parent_concept = doc.at("parent").get<std::string>();
    const auto dim = doc.at("dim").get<std::size_t>();
    const auto k = doc.at("num_tokens").get<std::size_t>();
    const auto values = decode_f32(doc.at("vectors").get<std::string>());
    if (k < 1 || values.size() != k * dim) throw Error(ErrorCode::Format, "token payload does not match shape");
    t.vectors = Mat(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(dim));
    std::copy(values.begin(), values.end(), t.vectors.data());
    if (!all_finite(t.vectors)) throw Error(ErrorCode::Format, "token rows are not finite");
    t.is_projected = doc.value("is_projected", false);
    if (doc.contains("subspace") && !doc.at("subspace").is_null()) {
      a.subspace = subspace_from_json(doc.at("subspace"));
      t.subspace_id = a.subspace->id();
    }
    t.training_fingerprint = doc.at("config_fingerprint").get<std::string>();
    a.config = doc.value("config", nlohmann::json::object());
    a.metrics = doc.value("metrics", nlohmann::json::object());
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("bad token artifact: ") + e.what());
  }
}

std::string serialize_token_artifact(const TokenArtifact& artifact) {
  return token_artifact_to_json(artifact).dump(2) + "\n";
}

TokenArtifact parse_token_artifact(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("token artifact is not valid JSON: ") + e.what());
  }
  return token_artifact_from_json(doc);
}

}  // namespace ctok
