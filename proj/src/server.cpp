#include "ctok/server.hpp"

#include "ctok/schema.hpp"

#include <httplib.h>

namespace ctok {

using nlohmann::json;

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownConcept:
    case ErrorCode::UnknownJob:
    case ErrorCode::UnknownIndex:
      return 404;
    case ErrorCode::ConceptBusy:
      return 409;
    case ErrorCode::Io:
      return 500;
    default:
      return 400;
  }
}

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(2) + "\n", "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
  send_json(res, {{"error", std::string(to_string(e.code()))}, {"message", e.what()}}, http_status(e.code()));
}

// Runs `fn`, mapping library errors onto HTTP status codes.
template <typename Fn>
void guarded(httplib::Response& res, Fn fn) {
  try {
    fn();
  } catch (const Error& e) {
    send_error(res, e);
  } catch (const json::exception& e) {
    send_error(res, Error(ErrorCode::SchemaViolation, e.what()));
  } catch (const std::exception& e) {
    send_json(res, {{"error", "Internal"}, {"message", e.what()}}, 500);
  }
}

json body_of(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

StudioServer::StudioServer(Studio& studio) : studio_(studio), http_(std::make_unique<httplib::Server>()) { routes(); }

StudioServer::~StudioServer() { stop(); }

int StudioServer::bind(const std::string& host, int port) {
  if (port == 0) return http_->bind_to_any_port(host);
  if (!http_->bind_to_port(host, port)) throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void StudioServer::run() { http_->listen_after_bind(); }

void StudioServer::stop() {
  if (http_) http_->stop();
}

void StudioServer::wait_until_ready() const { http_->wait_until_ready(); }

void StudioServer::routes() {
  auto& s = *http_;
  auto& st = studio_;

  s.Post("/concepts", [&st](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, st.post_concept(body_of(req)), 201); });
  });
  s.Get(R"(/concepts/([^/]+))", [&st](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, st.get_concept(req.matches[1]).to_json()); });
  });
  s.Post(R"(/concepts/([^/]+)/train)", [&st](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, st.post_train(req.matches[1], body_of(req)), 202); });
  });
  s.Post(R"(/concepts/([^/]+)/eval)", [&st](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, st.post_eval(req.matches[1], body_of(req)), 202); });
  });
  s.Get(R"(/jobs/([^/]+))", [&st](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, st.get_job(req.matches[1]).to_json()); });
  });
  s.Post("/queries/compose", [&st](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, st.post_compose(body_of(req))); });
  });
  s.Post("/queries/preview", [&st](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, st.post_preview(body_of(req))); });
  });
  s.Post("/queries/retrieve", [&st](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, st.post_retrieve(body_of(req))); });
  });
  s.Post("/queries/gair", [&st](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = body_of(req);
      const bool async = body.is_object() && body.value("async", false);
      send_json(res, st.post_gair(body), async ? 202 : 200);
    });
  });
  s.Post("/indexes", [&st](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, st.post_index(body_of(req)), 201); });
  });
  s.Get(R"(/indexes/([^/]+))", [&st](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, st.get_index(req.matches[1])); });
  });
  s.Get(R"(/previews/([0-9a-f]+)\.png)", [&st](const httplib::Request& req, httplib::Response& res) {
    try {
      res.set_content(st.preview_png(req.matches[1]), "image/png");
    } catch (const Error& e) {
      send_json(res, {{"error", "NotFound"}, {"message", e.what()}}, 404);
    }
  });
  s.Get("/schema", [](const httplib::Request&, httplib::Response& res) {
    json out = json::object();
    for (const auto& name : schema_names()) out[name] = "/schema/" + name;
    send_json(res, out);
  });
  s.Get(R"(/schema/([a-z_]+))", [](const httplib::Request& req, httplib::Response& res) {
    try {
      send_json(res, request_schema(req.matches[1].str()));
    } catch (const Error& e) {
      send_json(res, {{"error", "NotFound"}, {"message", e.what()}}, 404);
    }
  });
}

}  // namespace ctok
