// Copyright 2026 The alc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <optional>
#include <string>

#include "alc/review_store.hpp"
#include "httplib.h"

namespace alc {

struct ServiceOptions {
  std::filesystem::path images_dir;  // where image files named in the review set live
  std::optional<std::string> token;  // shared token; when set every /api request must carry it
  std::optional<std::filesystem::path> static_dir;  // built review UI
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string content_type_for(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".tif" || ext == ".tiff") return "image/tiff";
  if (ext == ".bmp") return "image/bmp";
  if (ext == ".svg") return "image/svg+xml";
  return "application/octet-stream";
}

/// JSON-over-HTTP front end of a ReviewStore.
///
///   GET  /api/queue?status=&image_id=&offset=&limit=
///   GET  /api/items/{id}
///   GET  /api/images/{id}            image bytes
///   GET  /api/images/{id}/overlay
///   POST /api/items/{id}/decision
///   GET  /api/progress
class ReviewService {
 public:
  ReviewService(ReviewStore& store, ServiceOptions opts) : store_(store), opts_(std::move(opts)) { routes(); }

  httplib::Server& server() { return server_; }

  int bind_any_port(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }
  bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  static void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, const std::string& msg) {
    send_json(res, {{"error", msg}}, status);
  }

  template <class F>
  static void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const NotFound& e) {
      send_error(res, 404, e.what());
    } catch (const SchemaError& e) {
      send_error(res, 400, e.what());
    } catch (const ConfigError& e) {
      send_error(res, 400, e.what());
    } catch (const std::invalid_argument& e) {
      send_error(res, 400, e.what());
    } catch (const IoError& e) {
      send_error(res, 500, e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  }

  static std::int64_t parse_id(const std::string& s, const char* what) {
    try {
      std::size_t pos = 0;
      const auto v = std::stoll(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw SchemaError(std::string("invalid ") + what + " '" + s + "'");
    }
  }

  void routes() {
    server_.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (!opts_.token || req.path.rfind("/api/", 0) != 0) return httplib::Server::HandlerResponse::Unhandled;
      const auto auth = req.get_header_value("Authorization");
      if (auth == "Bearer " + *opts_.token || req.get_header_value("X-Review-Token") == *opts_.token)
        return httplib::Server::HandlerResponse::Unhandled;
      send_error(res, 401, "missing or wrong review token");
      return httplib::Server::HandlerResponse::Handled;
    });

    server_.Get("/api/queue", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::optional<ReviewStatus> status;
        std::optional<ImageId> image;
        std::size_t offset = 0, limit = 50;
        if (req.has_param("status")) status = review_status_from_string(req.get_param_value("status"));
        if (req.has_param("image_id")) image = parse_id(req.get_param_value("image_id"), "image_id");
        if (req.has_param("offset")) offset = static_cast<std::size_t>(std::max<std::int64_t>(0, parse_id(req.get_param_value("offset"), "offset")));
        if (req.has_param("limit")) limit = static_cast<std::size_t>(std::clamp<std::int64_t>(parse_id(req.get_param_value("limit"), "limit"), 1, 1000));
        const auto page = store_.queue(status, image, offset, limit);
        json items = json::array();
        for (const auto& it : page.items) items.push_back(to_json(it));
        send_json(res, {{"items", items}, {"total", page.total}, {"offset", page.offset}, {"limit", limit}});
      });
    });

    server_.Get(R"(/api/items/(-?\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, to_json(store_.item(parse_id(req.matches[1], "item id")))); });
    });

    server_.Post(R"(/api/items/(-?\d+)/decision)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto id = parse_id(req.matches[1], "item id");
        auto d = decision_from_json(parse_json_text(req.body, "request body"), id);
        if (d.timestamp.empty()) d.timestamp = utc_timestamp();
        send_json(res, to_json(store_.decide(d)));
      });
    });

    server_.Get(R"(/api/images/(-?\d+)/overlay)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, store_.overlay(parse_id(req.matches[1], "image id"))); });
    });

    server_.Get(R"(/api/images/(-?\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto file = store_.image_file(parse_id(req.matches[1], "image id"));
        const auto path = opts_.images_dir / file;
        std::error_code ec;
        if (file.empty() || !std::filesystem::is_regular_file(path, ec))
          throw NotFound("image file " + path.string() + " not found");
        res.set_content(read_text(path), content_type_for(path));
      });
    });

    server_.Get("/api/progress", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { send_json(res, to_json(store_.progress())); });
    });

    if (opts_.static_dir) server_.set_mount_point("/", opts_.static_dir->string());
  }

  ReviewStore& store_;
  ServiceOptions opts_;
  httplib::Server server_;
};

}  // namespace alc
