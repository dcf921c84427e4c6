#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "relink/candidates.hpp"
#include "relink/ed_model.hpp"
#include "relink/mention.hpp"
#include "relink/store.hpp"

namespace relink {

struct LinkerConfig {
  DetectorConfig detector;
  SelectionParams selection;
};

struct LinkOutput {
  std::vector<Annotation> annotations;  // ascending start
  double md_seconds = 0.0;
  double ed_seconds = 0.0;
};

// End-to-end linker over a shared immutable store and model. All methods
// are const and safe to call concurrently.
class Linker {
 public:
  Linker(const KnowledgeStore& store, const EDModel& model, LinkerConfig config = {});

  // Gazetteer mention detection followed by disambiguation.
  LinkOutput link(const std::string& text) const;
  // Disambiguation of caller-provided spans. Throws OutOfBounds / Overlap.
  LinkOutput disambiguate(const std::string& text, std::vector<Span> spans) const;

  // Document-parallel; output order equals input order.
  std::vector<LinkOutput> link_batch(std::span<const std::string> texts) const;
  std::vector<LinkOutput> link_batch_serial(std::span<const std::string> texts) const;

  const KnowledgeStore& store() const { return store_; }
  const EDModel& model() const { return model_; }
  const LinkerConfig& config() const { return config_; }

 private:
  const KnowledgeStore& store_;
  const EDModel& model_;
  LinkerConfig config_;
};

}  // namespace relink
