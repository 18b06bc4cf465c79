#pragma once

#include "ctok/backbone.hpp"
#include "ctok/trainer.hpp"

#include <nlohmann/json.hpp>

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace ctok {

struct StudioConfig {
  std::filesystem::path root = "studio";
  nlohmann::json backbone = default_toy_spec();
  nlohmann::json training = nlohmann::json::object();  // TrainingConfig overrides
  std::vector<std::string> attribute_candidates;        // empty: the toy list
  std::size_t attribute_top_n = 100;
  std::string caption = "image of a {*} {c}";
  std::size_t default_previews = 4;

  nlohmann::json to_json() const;
  static StudioConfig from_json(const nlohmann::json& doc);
};

// Reads an optional JSON config file, then applies STUDIO_ROOT and
// STUDIO_BACKBONE (a backbone spec file, or "toy").
StudioConfig load_studio_config(const std::optional<std::filesystem::path>& file);

struct Concept {
  std::string id;
  std::string parent_concept;
  std::vector<std::string> image_paths;  // relative to the studio root
  std::vector<std::string> image_fingerprints;
  std::vector<std::string> attributes;
  bool attributes_selected = false;
  std::optional<std::string> token_path;
  std::string fingerprint;  // over parent, images and attributes; not the id

  nlohmann::json to_json() const;
  static Concept from_json(const nlohmann::json& doc);
};

enum class JobKind { Train, Gair, Eval };
enum class JobState { Queued, Running, Done, Failed };

std::string_view to_string(JobKind kind);
std::string_view to_string(JobState state);
JobKind parse_job_kind(std::string_view text);
JobState parse_job_state(std::string_view text);

struct Job {
  std::string id;
  JobKind kind = JobKind::Train;
  std::string concept_id;
  JobState state = JobState::Queued;
  double progress = 0.0;
  std::optional<std::string> result_ref;
  std::optional<std::string> error;
  nlohmann::json params = nlohmann::json::object();

  nlohmann::json to_json() const;
  static Job from_json(const nlohmann::json& doc);
};

// File-backed studio: concepts/, tokens/, indexes/, jobs/, previews/,
// images/ and negatives/ under one root. Blobs are named by content hash;
// concepts and jobs get sequential ids. One worker thread runs jobs in
// submission order.
class Studio {
 public:
  explicit Studio(StudioConfig config);
  ~Studio();
  Studio(const Studio&) = delete;
  Studio& operator=(const Studio&) = delete;

  const StudioConfig& config() const { return config_; }
  const Backbone& backbone() const { return backbone_; }
  std::filesystem::path path(std::string_view relative) const { return config_.root / relative; }

  Concept ingest_concept(const std::vector<Image>& images, const std::string& parent,
                         const std::optional<std::vector<std::string>>& attributes);
  Concept get_concept(const std::string& id) const;
  std::vector<Image> concept_images(const Concept& entry) const;
  TokenArtifact concept_token(const Concept& entry) const;

  Job start_job(JobKind kind, const std::string& concept_id, const nlohmann::json& params);
  Job get_job(const std::string& id) const;
  // Blocks until the job is done or failed.
  Job wait_job(const std::string& id) const;

  // JSON request handlers shared by the HTTP server and the tests. Bodies
  // are validated against the published schemas first.
  nlohmann::json post_concept(const nlohmann::json& body);
  nlohmann::json post_train(const std::string& concept_id, const nlohmann::json& body);
  nlohmann::json post_eval(const std::string& concept_id, const nlohmann::json& body);
  nlohmann::json post_compose(const nlohmann::json& body) const;
  nlohmann::json post_preview(const nlohmann::json& body);
  nlohmann::json post_retrieve(const nlohmann::json& body) const;
  nlohmann::json post_gair(const nlohmann::json& body);
  nlohmann::json post_index(const nlohmann::json& body);
  nlohmann::json get_index(const std::string& id) const;

  std::string preview_png(const std::string& preview_id) const;

 private:
  struct QueryParts {
    Concept owner;
    TokenArtifact artifact;
    std::string caption;
    std::vector<std::string> attributes;
  };
  QueryParts query_parts(const nlohmann::json& body) const;
  std::string store_image(const Image& image, std::string_view dir);
  std::string store_token(const TokenArtifact& artifact);
  void save_concept(const Concept& entry);
  void save_job(const Job& job);
  void update_job(const std::string& id, const std::function<void(Job&)>& change);
  void worker_loop();
  void run_job(const std::string& id);
  std::string run_train(const Job& job);
  std::string run_gair(const Job& job);
  std::string run_eval(const Job& job);
  nlohmann::json gair_response(const nlohmann::json& body);

  StudioConfig config_;
  Backbone backbone_;

  mutable std::mutex mu_;
  mutable std::condition_variable changed_;
  std::map<std::string, Concept> concepts_;
  std::map<std::string, Job> jobs_;
  std::size_t next_concept_ = 1;
  std::size_t next_job_ = 1;
  std::deque<std::string> queue_;
  bool stopping_ = false;
  std::thread worker_;
};

}  // namespace ctok
