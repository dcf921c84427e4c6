#include "relink/pipeline.hpp"

#include <chrono>
#include <exception>

#include "relink/error.hpp"
#include "relink/text.hpp"

namespace relink {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

}  // namespace

Linker::Linker(const KnowledgeStore& store, const EDModel& model, LinkerConfig config)
    : store_(store), model_(model), config_(std::move(config)) {
  config_.selection.validate();
  model_.hyper.validate();
  if (model_.params.dim != store_.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "model dim " + std::to_string(model_.params.dim) + " does not match store dim " + std::to_string(store_.dim()));
  }
}

LinkOutput Linker::link(const std::string& text) const {
  LinkOutput out;
  auto t0 = Clock::now();
  Document doc(text);
  std::vector<Span> spans = detect_gazetteer(doc, store_, config_.detector);
  out.md_seconds = seconds_since(t0);
  auto t1 = Clock::now();
  out.annotations = disambiguate_document(doc, spans, store_, model_, config_.selection);
  out.ed_seconds = seconds_since(t1);
  return out;
}

LinkOutput Linker::disambiguate(const std::string& text, std::vector<Span> spans) const {
  LinkOutput out;
  Document doc(text);
  auto t0 = Clock::now();
  spans = adapt_external_spans(doc, std::move(spans));
  out.annotations = disambiguate_document(doc, spans, store_, model_, config_.selection);
  out.ed_seconds = seconds_since(t0);
  return out;
}

std::vector<LinkOutput> Linker::link_batch(std::span<const std::string> texts) const {
  std::vector<LinkOutput> out(texts.size());
  std::vector<std::exception_ptr> errors(texts.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < texts.size(); ++i) {
    try {
      out[i] = link(texts[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<LinkOutput> Linker::link_batch_serial(std::span<const std::string> texts) const {
  std::vector<LinkOutput> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(link(t));
  return out;
}

}  // namespace relink
