#pragma once

#include <mutex>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>

#include "relink/ed_model.hpp"
#include "relink/pipeline.hpp"
#include "relink/store.hpp"

namespace httplib {
class Server;
}

namespace relink {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 5555;
  std::filesystem::path store_path;
  std::filesystem::path model_path;
  bool preload = false;
  std::size_t workers = 4;
  std::size_t max_text_bytes = 1 << 20;
  LinkerConfig linker;
};

// Store, model and linker bundled so the linker's references stay valid.
class LoadedModel {
 public:
  LoadedModel(KnowledgeStore store, EDModel model, const LinkerConfig& config);
  LoadedModel(const LoadedModel&) = delete;
  LoadedModel& operator=(const LoadedModel&) = delete;

  const KnowledgeStore& store() const { return store_; }
  const EDModel& model() const { return model_; }
  const Linker& linker() const { return linker_; }

 private:
  KnowledgeStore store_;
  EDModel model_;
  Linker linker_;
};

// Opens the store and model named in the config. Throws on any failure.
std::shared_ptr<const LoadedModel> load_resources(const ServiceConfig& config);

struct HttpReply {
  int status = 200;
  std::string body;  // JSON
};

// HTTP front end. Requests are answered with 503 until a model is installed.
class LinkService {
 public:
  explicit LinkService(ServiceConfig config);
  ~LinkService();

  void install(std::shared_ptr<const LoadedModel> loaded);
  bool ready() const;

  // Transport-independent handlers.
  HttpReply handle_link(const std::string& body) const;
  HttpReply handle_health() const;

  // Binds and serves until stop(). Returns false if binding fails.
  bool listen();
  // Binds to an ephemeral port; returns it, or -1.
  int bind_any_port();
  bool listen_after_bind();
  void wait_until_ready() const;
  void stop();

 private:
  void configure_routes();

  ServiceConfig config_;
  std::shared_ptr<const LoadedModel> current() const;

  mutable std::mutex mutex_;
  std::shared_ptr<const LoadedModel> loaded_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace relink
