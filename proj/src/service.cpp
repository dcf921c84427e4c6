#include "relink/service.hpp"

#include <httplib.h>

#include <json.hpp>

#include "relink/error.hpp"

namespace relink {
namespace {

using nlohmann::json;

HttpReply error_reply(int status, std::string_view code, const std::string& message) {
  return HttpReply{status, json{{"error", code}, {"message", message}}.dump()};
}

json annotation_record(const Annotation& a) {
  return json::array({a.start, a.length, a.surface, a.entity, a.ed_confidence, a.md_confidence ? json(*a.md_confidence) : json(nullptr),
                      a.tag ? json(*a.tag) : json(nullptr)});
}

}  // namespace

LoadedModel::LoadedModel(KnowledgeStore store, EDModel model, const LinkerConfig& config)
    : store_(std::move(store)), model_(std::move(model)), linker_(store_, model_, config) {}

std::shared_ptr<const LoadedModel> load_resources(const ServiceConfig& config) {
  KnowledgeStore store = KnowledgeStore::open(config.store_path, config.preload ? LoadMode::Preload : LoadMode::OnDemand);
  EDModel model = load_model(config.model_path);
  return std::make_shared<const LoadedModel>(std::move(store), std::move(model), config.linker);
}

LinkService::LinkService(ServiceConfig config) : config_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
  configure_routes();
}

LinkService::~LinkService() { stop(); }

void LinkService::install(std::shared_ptr<const LoadedModel> loaded) {
  std::lock_guard<std::mutex> lock(mutex_);
  loaded_ = std::move(loaded);
}

std::shared_ptr<const LoadedModel> LinkService::current() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return loaded_;
}

bool LinkService::ready() const { return current() != nullptr; }

HttpReply LinkService::handle_link(const std::string& body) const {
  auto loaded = current();
  if (!loaded) return error_reply(503, "Loading", "store and model are not loaded yet");

  json request;
  try {
    request = json::parse(body);
  } catch (const json::exception& e) {
    return error_reply(400, "MalformedBody", std::string("request body is not valid JSON: ") + e.what());
  }
  if (!request.is_object() || !request.contains("text") || !request["text"].is_string()) {
    return error_reply(400, "MalformedBody", "request needs a string \"text\" field");
  }
  const std::string& text = request["text"].get_ref<const std::string&>();
  if (text.size() > config_.max_text_bytes) {
    return error_reply(413, "PayloadTooLarge",
                       "text is " + std::to_string(text.size()) + " bytes; the limit is " + std::to_string(config_.max_text_bytes));
  }

  try {
    LinkOutput out;
    if (request.contains("spans") && !request["spans"].is_null()) {
      const json& raw = request["spans"];
      if (!raw.is_array()) return error_reply(400, "MalformedBody", "\"spans\" must be an array of [start, length] pairs");
      std::vector<Span> spans;
      for (std::size_t i = 0; i < raw.size(); ++i) {
        const json& s = raw[i];
        if (!s.is_array() || s.size() != 2 || !s[0].is_number_unsigned() || !s[1].is_number_unsigned()) {
          return error_reply(400, "MalformedBody", "span " + std::to_string(i) + " is not a [start, length] pair of non-negative integers");
        }
        spans.push_back(Span{s[0].get<std::size_t>(), s[1].get<std::size_t>(), std::nullopt, std::nullopt});
      }
      out = loaded->linker().disambiguate(text, std::move(spans));
    } else {
      out = loaded->linker().link(text);
    }
    json records = json::array();
    for (const auto& a : out.annotations) records.push_back(annotation_record(a));
    return HttpReply{200, records.dump()};
  } catch (const Error& e) {
    if (is_input_error(e.code())) return error_reply(400, error_code_name(e.code()), e.what());
    return error_reply(500, error_code_name(e.code()), e.what());
  } catch (const std::exception& e) {
    return error_reply(500, "Internal", e.what());
  }
}

HttpReply LinkService::handle_health() const {
  auto loaded = current();
  if (!loaded) return HttpReply{200, json{{"status", "loading"}}.dump()};
  json body = {{"status", "ok"},
               {"dim", loaded->store().dim()},
               {"entities", loaded->store().entity_count()},
               {"words", loaded->store().word_count()},
               {"surfaces", loaded->store().surface_count()},
               {"version", loaded->store().version()},
               {"preload", config_.preload}};
  return HttpReply{200, body.dump()};
}

void LinkService::configure_routes() {
  const std::size_t workers = config_.workers == 0 ? 1 : config_.workers;
  server_->new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
  // JSON escaping can grow the text; the text cap itself is enforced above.
  server_->set_payload_max_length(config_.max_text_bytes * 6 + 4096);
  server_->Post("/api/link", [this](const httplib::Request& req, httplib::Response& res) {
    HttpReply reply = handle_link(req.body);
    res.status = reply.status;
    res.set_content(reply.body, "application/json");
  });
  server_->Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    HttpReply reply = handle_health();
    res.status = reply.status;
    res.set_content(reply.body, "application/json");
  });
  server_->set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      std::string code = res.status == 413 ? "PayloadTooLarge" : "HttpError";
      res.set_content(json{{"error", code}, {"message", "HTTP status " + std::to_string(res.status)}}.dump(), "application/json");
    }
  });
}

bool LinkService::listen() { return server_->listen(config_.host, config_.port); }

int LinkService::bind_any_port() { return server_->bind_to_any_port(config_.host); }

bool LinkService::listen_after_bind() { return server_->listen_after_bind(); }

void LinkService::wait_until_ready() const { server_->wait_until_ready(); }

void LinkService::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

}  // namespace relink
