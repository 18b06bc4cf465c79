#include "ctok/schema.hpp"

#include "ctok/error.hpp"

#include <rapidjson/document.h>
#include <rapidjson/error/en.h>
#include <rapidjson/schema.h>
#include <rapidjson/stringbuffer.h>

#include <map>
#include <memory>
#include <mutex>

namespace ctok {

namespace {

const char* kDefinitions = R"({
  "weight": {"type": "number", "minimum": 0, "maximum": 1},
  "seed": {"type": "integer", "minimum": 0},
  "attributes": {"type": "array", "items": {"type": "string", "minLength": 1}},
  "caption": {"type": "string", "minLength": 1, "pattern": "\\{\\*\\}"}
})";

const std::map<std::string, std::string, std::less<>>& raw_schemas() {
  static const std::map<std::string, std::string, std::less<>> schemas = {
      {"concept", R"({
        "type": "object",
        "required": ["parent"],
        "properties": {
          "parent": {"type": "string", "minLength": 1},
          "image_paths": {"type": "array", "items": {"type": "string", "minLength": 1}},
          "images_png_base64": {"type": "array", "items": {"type": "string", "minLength": 1}},
          "attributes": {"$ref": "#/definitions/attributes"}
        },
        "additionalProperties": false
      })"},
      {"train", R"({
        "type": "object",
        "properties": {
          "use_subspace": {"type": "boolean"},
          "config": {
            "type": "object",
            "properties": {
              "lambda_sd": {"type": "number", "minimum": 0},
              "lambda_ce": {"type": "number", "minimum": 0},
              "learning_rate": {"type": "number", "minimum": 0},
              "iterations": {"type": "integer", "minimum": 1},
              "batch_size": {"type": "integer", "minimum": 1},
              "num_tokens": {"type": "integer", "minimum": 1},
              "subspace_rank": {"type": ["integer", "null"], "minimum": 1},
              "negatives_k": {"type": "integer", "minimum": 1},
              "temperature": {"type": "number", "minimum": 0},
              "init_jitter": {"type": "number", "minimum": 0},
              "seed": {"$ref": "#/definitions/seed"},
              "prompt_order": {"type": "string"},
              "optimizer": {"enum": ["sgd", "momentum", "adam"]},
              "momentum": {"type": "number", "minimum": 0, "maximum": 1}
            },
            "additionalProperties": false
          }
        },
        "additionalProperties": false
      })"},
      {"compose", R"({
        "type": "object",
        "required": ["concept_id", "weight"],
        "properties": {
          "concept_id": {"type": "string", "minLength": 1},
          "caption": {"$ref": "#/definitions/caption"},
          "attributes": {"$ref": "#/definitions/attributes"},
          "weight": {"$ref": "#/definitions/weight"},
          "include_feature": {"type": "boolean"}
        },
        "additionalProperties": false
      })"},
      {"preview", R"({
        "type": "object",
        "required": ["concept_id", "weight"],
        "properties": {
          "concept_id": {"type": "string", "minLength": 1},
          "caption": {"$ref": "#/definitions/caption"},
          "attributes": {"$ref": "#/definitions/attributes"},
          "weight": {"$ref": "#/definitions/weight"},
          "count": {"type": "integer", "minimum": 1, "maximum": 64},
          "seed": {"$ref": "#/definitions/seed"}
        },
        "additionalProperties": false
      })"},
      {"retrieve", R"({
        "type": "object",
        "required": ["index_id"],
        "properties": {
          "index_id": {"type": "string", "minLength": 1},
          "feature": {"type": "array", "minItems": 1, "items": {"type": "number"}},
          "text": {"type": "string", "minLength": 1},
          "query": {
            "type": "object",
            "required": ["concept_id", "weight"],
            "properties": {
              "concept_id": {"type": "string", "minLength": 1},
              "caption": {"$ref": "#/definitions/caption"},
              "attributes": {"$ref": "#/definitions/attributes"},
              "weight": {"$ref": "#/definitions/weight"}
            },
            "additionalProperties": false
          },
          "top_k": {"type": "integer", "minimum": 1}
        },
        "oneOf": [
          {"required": ["feature"]},
          {"required": ["text"]},
          {"required": ["query"]}
        ],
        "additionalProperties": false
      })"},
      {"gair", R"({
        "type": "object",
        "required": ["concept_id"],
        "properties": {
          "concept_id": {"type": "string", "minLength": 1},
          "caption": {"$ref": "#/definitions/caption"},
          "attributes": {"$ref": "#/definitions/attributes"},
          "weight_grid": {"type": "array", "minItems": 1, "items": {"$ref": "#/definitions/weight"}},
          "previews_per_weight": {"type": "integer", "minimum": 1, "maximum": 64},
          "seed": {"$ref": "#/definitions/seed"},
          "async": {"type": "boolean"}
        },
        "additionalProperties": false
      })"},
      {"index", R"({
        "type": "object",
        "properties": {
          "images": {
            "type": "array",
            "minItems": 1,
            "items": {
              "type": "object",
              "required": ["id"],
              "properties": {
                "id": {"type": "string", "minLength": 1},
                "path": {"type": "string", "minLength": 1},
                "png_base64": {"type": "string", "minLength": 1},
                "label": {"type": "string"}
              },
              "oneOf": [{"required": ["path"]}, {"required": ["png_base64"]}],
              "additionalProperties": false
            }
          },
          "manifest": {"type": "string", "minLength": 1}
        },
        "oneOf": [{"required": ["images"]}, {"required": ["manifest"]}],
        "additionalProperties": false
      })"},
      {"eval", R"({
        "type": "object",
        "properties": {
          "negatives": {"type": "integer", "minimum": 1, "maximum": 512},
          "seed": {"$ref": "#/definitions/seed"}
        },
        "additionalProperties": false
      })"},
  };
  return schemas;
}

struct Compiled {
  nlohmann::json doc;
  std::unique_ptr<rapidjson::SchemaDocument> schema;
};

const Compiled& compiled(std::string_view name) {
  static std::mutex mu;
  static std::map<std::string, Compiled, std::less<>> cache;
  std::lock_guard lock(mu);
  if (auto it = cache.find(name); it != cache.end()) return it->second;
  const auto& raw = raw_schemas();
  const auto it = raw.find(name);
  if (it == raw.end()) throw Error(ErrorCode::InvalidArgument, "no schema named '" + std::string(name) + "'");

  nlohmann::json doc = nlohmann::json::parse(it->second);
  doc["$schema"] = "http://json-schema.org/draft-04/schema#";
  doc["title"] = std::string(name);
  doc["definitions"] = nlohmann::json::parse(kDefinitions);
  const std::string text = doc.dump();
  rapidjson::Document rj;
  rj.Parse(text.c_str());
  Compiled c{doc, std::make_unique<rapidjson::SchemaDocument>(rj)};
  return cache.emplace(std::string(name), std::move(c)).first->second;
}

}  // namespace

std::vector<std::string> schema_names() {
  std::vector<std::string> out;
  for (const auto& [name, _] : raw_schemas()) out.push_back(name);
  return out;
}

const nlohmann::json& request_schema(std::string_view name) { return compiled(name).doc; }

void validate_request(std::string_view name, const nlohmann::json& doc) {
  parse_request(name, doc.dump());
}

nlohmann::json parse_request(std::string_view name, std::string_view body) {
  const auto& c = compiled(name);
  const std::string text(body);
  rapidjson::Document rj;
  rj.Parse(text.c_str());
  if (rj.HasParseError()) {
    throw Error(ErrorCode::SchemaViolation, std::string("malformed JSON at offset ") +
                                                std::to_string(rj.GetErrorOffset()) + ": " +
                                                rapidjson::GetParseError_En(rj.GetParseError()));
  }
  rapidjson::SchemaValidator validator(*c.schema);
  if (!rj.Accept(validator)) {
    rapidjson::StringBuffer where;
    validator.GetInvalidDocumentPointer().StringifyUriFragment(where);
    rapidjson::StringBuffer rule;
    validator.GetInvalidSchemaPointer().StringifyUriFragment(rule);
    throw Error(ErrorCode::SchemaViolation, std::string(name) + " body fails '" + validator.GetInvalidSchemaKeyword() +
                                                "' at " + where.GetString() + " (schema " + rule.GetString() + ")");
  }
  return nlohmann::json::parse(text);
}

}  // namespace ctok
