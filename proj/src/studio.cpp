#include "ctok/studio.hpp"

#include "ctok/error.hpp"
#include "ctok/gair.hpp"
#include "ctok/image.hpp"
#include "ctok/metrics.hpp"
#include "ctok/retrieval.hpp"
#include "ctok/schema.hpp"
#include "ctok/toy.hpp"
#include "ctok/util.hpp"

#include <cstdio>
#include <cstdlib>

namespace ctok {

namespace fs = std::filesystem;
using nlohmann::json;

nlohmann::json StudioConfig::to_json() const {
  return {{"root", root.string()},
          {"backbone", backbone},
          {"training", training},
          {"attribute_candidates", attribute_candidates},
          {"attribute_top_n", attribute_top_n},
          {"caption", caption},
          {"default_previews", default_previews}};
}

StudioConfig StudioConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::Format, "studio config must be an object");
  StudioConfig c;
  try {
    if (doc.contains("root")) c.root = doc.at("root").get<std::string>();
    if (doc.contains("backbone")) c.backbone = doc.at("backbone");
    if (doc.contains("training")) c.training = doc.at("training");
    c.attribute_candidates = doc.value("attribute_candidates", c.attribute_candidates);
    c.attribute_top_n = doc.value("attribute_top_n", c.attribute_top_n);
    c.caption = doc.value("caption", c.caption);
    c.default_previews = doc.value("default_previews", c.default_previews);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("bad studio config: ") + e.what());
  }
  TrainingConfig::from_json(c.training);
  validate_template(c.caption);
  return c;
}

StudioConfig load_studio_config(const std::optional<fs::path>& file) {
  StudioConfig c = file ? StudioConfig::from_json(json::parse(read_file(*file))) : StudioConfig{};
  if (const char* root = std::getenv("STUDIO_ROOT"); root && *root) c.root = root;
  if (const char* bb = std::getenv("STUDIO_BACKBONE"); bb && *bb) {
    c.backbone = std::string_view(bb) == "toy" ? default_toy_spec() : json::parse(read_file(bb));
  }
  return c;
}

nlohmann::json Concept::to_json() const {
  json doc = {{"id", id},
              {"parent_concept", parent_concept},
              {"image_paths", image_paths},
              {"image_fingerprints", image_fingerprints},
              {"attributes", attributes},
              {"attributes_selected", attributes_selected},
              {"fingerprint", fingerprint},
              {"token_path", nullptr}};
  if (token_path) doc["token_path"] = *token_path;
  return doc;
}

Concept Concept::from_json(const nlohmann::json& doc) {
  Concept c;
  c.id = doc.at("id").get<std::string>();
  c.parent_concept = doc.at("parent_concept").get<std::string>();
  c.image_paths = doc.at("image_paths").get<std::vector<std::string>>();
  c.image_fingerprints = doc.at("image_fingerprints").get<std::vector<std::string>>();
  c.attributes = doc.at("attributes").get<std::vector<std::string>>();
  c.attributes_selected = doc.at("attributes_selected").get<bool>();
  c.fingerprint = doc.at("fingerprint").get<std::string>();
  if (!doc.at("token_path").is_null()) c.token_path = doc.at("token_path").get<std::string>();
  return c;
}

std::string_view to_string(JobKind kind) {
  switch (kind) {
    case JobKind::Train: return "train";
    case JobKind::Gair: return "gair";
    case JobKind::Eval: return "eval";
  }
  return "train";
}

std::string_view to_string(JobState state) {
  switch (state) {
    case JobState::Queued: return "queued";
    case JobState::Running: return "running";
    case JobState::Done: return "done";
    case JobState::Failed: return "failed";
  }
  return "queued";
}

JobKind parse_job_kind(std::string_view text) {
  if (text == "train") return JobKind::Train;
  if (text == "gair") return JobKind::Gair;
  if (text == "eval") return JobKind::Eval;
  throw Error(ErrorCode::Format, "unknown job kind '" + std::string(text) + "'");
}

JobState parse_job_state(std::string_view text) {
  if (text == "queued") return JobState::Queued;
  if (text == "running") return JobState::Running;
  if (text == "done") return JobState::Done;
  if (text == "failed") return JobState::Failed;
  throw Error(ErrorCode::Format, "unknown job state '" + std::string(text) + "'");
}

nlohmann::json Job::to_json() const {
  return {{"id", id},
          {"kind", to_string(kind)},
          {"concept_id", concept_id},
          {"state", to_string(state)},
          {"progress", progress},
          {"result", result_ref ? json(*result_ref) : json(nullptr)},
          {"error", error ? json(*error) : json(nullptr)},
          {"params", params}};
}

Job Job::from_json(const nlohmann::json& doc) {
  Job j;
  j.id = doc.at("id").get<std::string>();
  j.kind = parse_job_kind(doc.at("kind").get<std::string>());
  j.concept_id = doc.at("concept_id").get<std::string>();
  j.state = parse_job_state(doc.at("state").get<std::string>());
  j.progress = doc.at("progress").get<double>();
  if (!doc.at("result").is_null()) j.result_ref = doc.at("result").get<std::string>();
  if (!doc.at("error").is_null()) j.error = doc.at("error").get<std::string>();
  j.params = doc.at("params");
  return j;
}

namespace {

constexpr const char* kDirs[] = {"concepts", "tokens", "indexes", "jobs", "previews", "images", "negatives"};

std::string sequential_id(std::string_view prefix, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", n);
  return std::string(prefix) + "-" + buf;
}

std::size_t id_number(const std::string& id) {
  const auto dash = id.rfind('-');
  if (dash == std::string::npos) return 0;
  try {
    return std::stoul(id.substr(dash + 1));
  } catch (const std::exception&) {
    return 0;
  }
}

// Rejects ids that would escape the store directory.
void check_id(const std::string& id, ErrorCode missing) {
  if (id.empty() || id.find_first_of("/\\.") != std::string::npos) {
    throw Error(missing, "invalid id '" + id + "'");
  }
}

Image decode_request_image(const json& entry) {
  if (entry.contains("path")) return read_png(entry.at("path").get<std::string>());
  const auto bytes = base64_decode(entry.at("png_base64").get<std::string>());
  return decode_png(std::string(bytes.begin(), bytes.end()));
}

}  // namespace

Studio::Studio(StudioConfig config) : config_(std::move(config)), backbone_(load_backbone(config_.backbone)) {
  for (const auto* d : kDirs) fs::create_directories(config_.root / d);
  for (const auto& e : fs::directory_iterator(config_.root / "concepts")) {
    if (e.path().extension() != ".json") continue;
    auto c = Concept::from_json(json::parse(read_file(e.path())));
    next_concept_ = std::max(next_concept_, id_number(c.id) + 1);
    concepts_.emplace(c.id, std::move(c));
  }
  for (const auto& e : fs::directory_iterator(config_.root / "jobs")) {
    if (e.path().extension() != ".json" || e.path().stem().string().ends_with(".result")) continue;
    auto j = Job::from_json(json::parse(read_file(e.path())));
    next_job_ = std::max(next_job_, id_number(j.id) + 1);
    if (j.state == JobState::Queued || j.state == JobState::Running) {
      j.state = JobState::Failed;
      j.error = "interrupted by restart";
      save_job(j);
    }
    jobs_.emplace(j.id, std::move(j));
  }
  worker_ = std::thread([this] { worker_loop(); });
}

Studio::~Studio() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  changed_.notify_all();
  if (worker_.joinable()) worker_.join();
}

std::string Studio::store_image(const Image& image, std::string_view dir) {
  const std::string fp = image_fingerprint(image);
  const std::string rel = std::string(dir) + "/" + fp + ".png";
  if (!fs::exists(path(rel))) write_png(path(rel), image);
  return rel;
}

std::string Studio::store_token(const TokenArtifact& artifact) {
  const std::string text = serialize_token_artifact(artifact);
  const std::string rel = "tokens/" + sha256_hex(text) + ".json";
  if (!fs::exists(path(rel))) write_file_atomic(path(rel), text);
  return rel;
}

void Studio::save_concept(const Concept& entry) {
  write_file_atomic(path("concepts/" + entry.id + ".json"), entry.to_json().dump(2) + "\n");
}

void Studio::save_job(const Job& job) {
  write_file_atomic(path("jobs/" + job.id + ".json"), job.to_json().dump(2) + "\n");
}

Concept Studio::ingest_concept(const std::vector<Image>& images, const std::string& parent,
                               const std::optional<std::vector<std::string>>& attributes) {
  if (images.empty()) throw Error(ErrorCode::NoImages, "a concept needs at least one image");
  if (trim(parent).empty()) throw Error(ErrorCode::InvalidArgument, "parent concept is empty");
  for (const auto& img : images) {
    if (!img.valid()) throw Error(ErrorCode::BadImage, "concept image has inconsistent dimensions");
  }
  Concept c;
  c.parent_concept = parent;
  if (attributes) {
    c.attributes = *attributes;
  } else {
    const auto& candidates =
        config_.attribute_candidates.empty() ? toy::attribute_candidates() : config_.attribute_candidates;
    c.attributes = select_attributes(candidates, images, config_.attribute_top_n, backbone_.encoders);
    c.attributes_selected = true;
  }
  std::string material = parent;
  for (const auto& img : images) {
    c.image_paths.push_back(store_image(img, "images"));
    c.image_fingerprints.push_back(image_fingerprint(img));
    material += "|" + c.image_fingerprints.back();
  }
  material += "|";
  for (const auto& a : c.attributes) material += a + ",";
  c.fingerprint = sha256_hex(material);

  std::lock_guard lock(mu_);
  c.id = sequential_id("concept", next_concept_++);
  save_concept(c);
  concepts_.emplace(c.id, c);
  return c;
}

Concept Studio::get_concept(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = concepts_.find(id);
  if (it == concepts_.end()) throw Error(ErrorCode::UnknownConcept, "no concept '" + id + "'");
  return it->second;
}

std::vector<Image> Studio::concept_images(const Concept& entry) const {
  std::vector<Image> out;
  for (const auto& rel : entry.image_paths) out.push_back(read_png(path(rel)));
  return out;
}

TokenArtifact Studio::concept_token(const Concept& entry) const {
  if (!entry.token_path) {
    throw Error(ErrorCode::InvalidArgument, "concept '" + entry.id + "' has no trained token yet");
  }
  return parse_token_artifact(read_file(path(*entry.token_path)));
}

Job Studio::start_job(JobKind kind, const std::string& concept_id, const nlohmann::json& params) {
  std::lock_guard lock(mu_);
  if (!concepts_.contains(concept_id)) throw Error(ErrorCode::UnknownConcept, "no concept '" + concept_id + "'");
  if (kind == JobKind::Train) {
    for (const auto& [_, j] : jobs_) {
      if (j.concept_id == concept_id && j.kind == JobKind::Train &&
          (j.state == JobState::Queued || j.state == JobState::Running)) {
        throw Error(ErrorCode::ConceptBusy, "concept '" + concept_id + "' already has training job " + j.id);
      }
    }
  }
  Job job;
  job.id = sequential_id("job", next_job_++);
  job.kind = kind;
  job.concept_id = concept_id;
  job.params = params;
  save_job(job);
  jobs_.emplace(job.id, job);
  queue_.push_back(job.id);
  changed_.notify_all();
  return job;
}

Job Studio::get_job(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) throw Error(ErrorCode::UnknownJob, "no job '" + id + "'");
  return it->second;
}

Job Studio::wait_job(const std::string& id) const {
  std::unique_lock lock(mu_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) throw Error(ErrorCode::UnknownJob, "no job '" + id + "'");
  changed_.wait(lock, [&] { return it->second.state == JobState::Done || it->second.state == JobState::Failed; });
  return it->second;
}

void Studio::update_job(const std::string& id, const std::function<void(Job&)>& change) {
  {
    std::lock_guard lock(mu_);
    Job& job = jobs_.at(id);
    change(job);
    save_job(job);
  }
  changed_.notify_all();
}

void Studio::worker_loop() {
  for (;;) {
    std::string id;
    {
      std::unique_lock lock(mu_);
      changed_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      id = queue_.front();
      queue_.pop_front();
    }
    run_job(id);
  }
}

void Studio::run_job(const std::string& id) {
  update_job(id, [](Job& j) { j.state = JobState::Running; });
  const Job job = get_job(id);
  try {
    std::string result;
    switch (job.kind) {
      case JobKind::Train: result = run_train(job); break;
      case JobKind::Gair: result = run_gair(job); break;
      case JobKind::Eval: result = run_eval(job); break;
    }
    update_job(id, [&](Job& j) {
      j.result_ref = result;
      j.progress = 1.0;
      j.state = JobState::Done;
    });
  } catch (const std::exception& e) {
    update_job(id, [&](Job& j) {
      j.error = e.what();
      j.state = JobState::Failed;
    });
  }
}

std::string Studio::run_train(const Job& job) {
  Concept entry = get_concept(job.concept_id);
  json merged = config_.training;
  if (job.params.contains("config")) merged.merge_patch(job.params.at("config"));
  const TrainingConfig tc = TrainingConfig::from_json(merged);
  const bool use_subspace = job.params.value("use_subspace", true);

  std::optional<AttributeSubspace> subspace;
  if (use_subspace) {
    if (entry.attributes.empty()) throw Error(ErrorCode::EmptyAttributes, "projected training needs attributes");
    const auto vecs = attribute_embeddings(entry.attributes, backbone_.text());
    const auto rank = tc.subspace_rank.value_or(default_subspace_rank(vecs.size(), backbone_.text().token_dim()));
    subspace = build_subspace(entry.attributes, vecs, rank);
    if (entry.attributes_selected) subspace->source = SubspaceSource::CorrelationSelected;
  }

  TrainOptions options;
  options.negative_cache = path("negatives");
  options.concept_id = entry.id;
  options.progress_every = std::max<std::size_t>(1, tc.iterations / 100);
  options.on_progress = [&](const TrainingProgress& p) {
    const double fraction = static_cast<double>(p.iteration) / static_cast<double>(std::max<std::size_t>(1, p.iterations));
    update_job(job.id, [&](Job& j) { j.progress = fraction; });
  };
  const auto artifact =
      train_token(concept_images(entry), entry.parent_concept, subspace ? &*subspace : nullptr, tc, backbone_, options);
  const std::string rel = store_token(artifact);

  std::lock_guard lock(mu_);
  Concept& stored = concepts_.at(entry.id);
  stored.token_path = rel;
  save_concept(stored);
  return rel;
}

std::string Studio::run_gair(const Job& job) {
  json body = job.params;
  body.erase("async");
  const json result = gair_response(body);
  const std::string rel = "jobs/" + job.id + ".result.json";
  write_file_atomic(path(rel), result.dump(2) + "\n");
  return rel;
}

std::string Studio::run_eval(const Job& job) {
  const Concept entry = get_concept(job.concept_id);
  const auto artifact = concept_token(entry);
  const auto positives = concept_images(entry);
  const std::size_t k = job.params.value("negatives", std::size_t{32});
  const std::uint64_t seed = job.params.value("seed", std::uint64_t{0});
  const auto negatives = sample_negatives(entry.parent_concept, k, backbone_, seed, path("negatives"));
  const double acc = token_vs_parent_accuracy(artifact.token, config_.caption, positives, negatives, backbone_.encoders);
  const json result = {{"metric", "token_vs_parent_accuracy"},
                       {"value", acc},
                       {"positives", positives.size()},
                       {"negatives", negatives.size()}};
  const std::string rel = "jobs/" + job.id + ".result.json";
  write_file_atomic(path(rel), result.dump(2) + "\n");
  return rel;
}

nlohmann::json Studio::post_concept(const nlohmann::json& body) {
  validate_request("concept", body);
  std::vector<Image> images;
  for (const auto& p : body.value("image_paths", json::array())) images.push_back(read_png(p.get<std::string>()));
  for (const auto& b : body.value("images_png_base64", json::array())) {
    images.push_back(decode_request_image({{"png_base64", b}}));
  }
  std::optional<std::vector<std::string>> attributes;
  if (body.contains("attributes")) attributes = body.at("attributes").get<std::vector<std::string>>();
  return ingest_concept(images, body.at("parent").get<std::string>(), attributes).to_json();
}

nlohmann::json Studio::post_train(const std::string& concept_id, const nlohmann::json& body) {
  validate_request("train", body);
  if (body.contains("config")) {
    json merged = config_.training;
    merged.merge_patch(body.at("config"));
    TrainingConfig::from_json(merged);
  }
  return start_job(JobKind::Train, concept_id, body).to_json();
}

nlohmann::json Studio::post_eval(const std::string& concept_id, const nlohmann::json& body) {
  validate_request("eval", body);
  return start_job(JobKind::Eval, concept_id, body).to_json();
}

Studio::QueryParts Studio::query_parts(const nlohmann::json& body) const {
  QueryParts q;
  q.owner = get_concept(body.at("concept_id").get<std::string>());
  q.artifact = concept_token(q.owner);
  q.caption = body.value("caption", config_.caption);
  q.attributes = body.value("attributes", std::vector<std::string>{});
  return q;
}

nlohmann::json Studio::post_compose(const nlohmann::json& body) const {
  validate_request("compose", body);
  const auto q = query_parts(body);
  const auto query = compose_query(q.caption, q.artifact.token, q.owner.parent_concept, q.attributes,
                                   body.at("weight").get<double>(), backbone_.text());
  json out = {{"concept_id", q.owner.id},
              {"weight", query.weight},
              {"components",
               {{"token_ref", query.token_ref},
                {"template", query.template_text},
                {"parent", q.owner.parent_concept},
                {"attributes", query.attributes}}},
              {"normalized", query.feature.normalized},
              {"fingerprint", fingerprint(query.feature.values)}};
  if (body.value("include_feature", false)) {
    out["feature"] = std::vector<double>(query.feature.values.begin(), query.feature.values.end());
  }
  return out;
}

nlohmann::json Studio::post_preview(const nlohmann::json& body) {
  validate_request("preview", body);
  const auto q = query_parts(body);
  const double w = body.at("weight").get<double>();
  const auto query = compose_query(q.caption, q.artifact.token, q.owner.parent_concept, q.attributes, w,
                                   backbone_.text());
  const std::size_t count = body.value("count", config_.default_previews);
  const std::uint64_t seed = body.value("seed", std::uint64_t{0});
  json previews = json::array();
  for (std::size_t j = 0; j < count; ++j) {
    const auto s = preview_seed(seed, w, j);
    const std::string rel = store_image(backbone_.diffusion->generate(query.feature.values, s), "previews");
    const std::string id = fs::path(rel).stem().string();
    previews.push_back({{"id", id}, {"url", "/previews/" + id + ".png"}, {"seed", s}});
  }
  return {{"concept_id", q.owner.id},
          {"weight", w},
          {"fingerprint", fingerprint(query.feature.values)},
          {"previews", previews}};
}

nlohmann::json Studio::post_retrieve(const nlohmann::json& body) const {
  validate_request("retrieve", body);
  const std::string index_id = body.at("index_id").get<std::string>();
  check_id(index_id, ErrorCode::UnknownIndex);
  const fs::path file = path("indexes/" + index_id + ".idx");
  if (!fs::exists(file)) throw Error(ErrorCode::UnknownIndex, "no index '" + index_id + "'");
  const auto index = load_index(file);

  Vec query;
  if (body.contains("feature")) {
    const auto values = body.at("feature").get<std::vector<double>>();
    query = Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
  } else if (body.contains("text")) {
    query = encode_plain_text(body.at("text").get<std::string>(), backbone_.text()).values;
  } else {
    const auto& qb = body.at("query");
    const auto q = query_parts(qb);
    query = compose_query(q.caption, q.artifact.token, q.owner.parent_concept, q.attributes,
                          qb.at("weight").get<double>(), backbone_.text())
                .feature.values;
  }
  const auto ranked = rank_scored(query, index);
  const std::size_t top_k = std::min<std::size_t>(body.value("top_k", std::size_t{10}), ranked.size());
  std::map<std::string, std::optional<std::string>> labels;
  for (const auto& e : index.entries) labels.emplace(e.id, e.label);
  json results = json::array();
  for (std::size_t i = 0; i < top_k; ++i) {
    json r = {{"rank", i + 1}, {"id", ranked[i].id}, {"score", ranked[i].score}};
    if (const auto& l = labels.at(ranked[i].id)) r["label"] = *l;
    results.push_back(std::move(r));
  }
  return {{"index_id", index_id}, {"count", index.size()}, {"results", results}};
}

nlohmann::json Studio::gair_response(const nlohmann::json& body) {
  const auto q = query_parts(body);
  GairRequest req;
  req.caption = q.caption;
  req.parent = q.owner.parent_concept;
  req.attributes = q.attributes;
  if (body.contains("weight_grid")) req.weight_grid = body.at("weight_grid").get<std::vector<double>>();
  req.previews_per_weight = body.value("previews_per_weight", config_.default_previews);
  req.seed = body.value("seed", std::uint64_t{0});
  req.reference_images = concept_images(q.owner);
  const auto result = ctok::run_gair(req, q.artifact.token, backbone_.text(), backbone_.image(), *backbone_.diffusion);

  std::vector<std::vector<std::string>> urls;
  for (const auto& row : result.previews) {
    auto& out = urls.emplace_back();
    for (const auto& img : row) out.push_back("/previews/" + fs::path(store_image(img, "previews")).stem().string() + ".png");
  }
  json doc = gair_result_to_json(result, urls);
  json context = json::array();
  for (const auto& img : result.context_images) {
    context.push_back("/previews/" + fs::path(store_image(img, "previews")).stem().string() + ".png");
  }
  doc["context_images"] = context;
  doc["concept_id"] = q.owner.id;
  doc["curve_csv"] = gair_curve_csv(result);
  return doc;
}

nlohmann::json Studio::post_gair(const nlohmann::json& body) {
  validate_request("gair", body);
  if (body.value("async", false)) {
    return start_job(JobKind::Gair, body.at("concept_id").get<std::string>(), body).to_json();
  }
  return gair_response(body);
}

nlohmann::json Studio::post_index(const nlohmann::json& body) {
  validate_request("index", body);
  std::vector<IndexImage> images;
  if (body.contains("manifest")) {
    const fs::path manifest = body.at("manifest").get<std::string>();
    for (const auto& row : read_manifest(manifest)) {
      images.push_back({row.image_path, read_png(manifest.parent_path() / row.image_path), row.class_id});
    }
  } else {
    for (const auto& e : body.at("images")) {
      std::optional<std::string> label;
      if (e.contains("label")) label = e.at("label").get<std::string>();
      images.push_back({e.at("id").get<std::string>(), decode_request_image(e), label});
    }
  }
  const auto index = build_index(images, backbone_.image());
  const std::string id = index.id();
  if (!fs::exists(path("indexes/" + id + ".idx"))) save_index(index, path("indexes/" + id + ".idx"));
  return get_index(id);
}

nlohmann::json Studio::get_index(const std::string& id) const {
  check_id(id, ErrorCode::UnknownIndex);
  const fs::path file = path("indexes/" + id + ".idx");
  if (!fs::exists(file)) throw Error(ErrorCode::UnknownIndex, "no index '" + id + "'");
  const auto index = load_index(file);
  json ids = json::array();
  for (const auto& e : index.entries) ids.push_back(e.id);
  return {{"id", id},
          {"dim", index.dim},
          {"count", index.size()},
          {"encoder_checksum", index.encoder_checksum},
          {"ids", ids}};
}

std::string Studio::preview_png(const std::string& preview_id) const {
  check_id(preview_id, ErrorCode::InvalidArgument);
  const fs::path file = path("previews/" + preview_id + ".png");
  if (!fs::exists(file)) throw Error(ErrorCode::InvalidArgument, "no preview '" + preview_id + "'");
  return read_file(file);
}

}  // namespace ctok
