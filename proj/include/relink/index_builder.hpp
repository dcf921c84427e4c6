#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "relink/store.hpp"

namespace relink {

// alias title -> canonical title, with chains collapsed by close().
class RedirectTable {
 public:
  void add(const std::string& alias, const std::string& canonical);
  // Collapses chains. Titles on a cycle are left unresolved and reported.
  void close();
  const std::string& resolve(const std::string& title) const;
  const std::vector<std::string>& cycles() const { return cycles_; }
  std::size_t size() const { return map_.size(); }

 private:
  std::map<std::string, std::string> map_;
  std::vector<std::string> cycles_;
};

RedirectTable read_redirects(std::istream& in, const std::string& source_name);
RedirectTable read_redirects(const std::filesystem::path& path);

// Aggregated hyperlink counts keyed by (normalized surface, entity title).
struct AnchorCounts {
  std::map<std::pair<std::string, std::string>, std::uint64_t> counts;
  std::size_t warnings = 0;  // skipped anchors (unbalanced brackets etc.)

  void add(const std::string& surface, const std::string& entity, std::uint64_t count);
  void merge(const AnchorCounts& other);
};

struct AnchorParseOptions {
  bool case_sensitive = false;
};

// Wikitext link markup: [[Target]] and [[Target|anchor]]. Documents may be
// concatenated with "= = = DOC <title> = = =" separator lines.
void parse_wikitext(std::istream& in, const RedirectTable& redirects, AnchorCounts& into, const AnchorParseOptions& options = {});
// Pre-aggregated "surface<TAB>entity<TAB>count" lines.
void parse_anchor_tsv(std::istream& in, const std::string& source_name, const RedirectTable& redirects, AnchorCounts& into,
                      const AnchorParseOptions& options = {});
// Dispatches on extension: ".tsv" is the count format, anything else wikitext.
void parse_anchor_corpus(const std::filesystem::path& path, const RedirectTable& redirects, AnchorCounts& into,
                         const AnchorParseOptions& options = {});
// Parses files concurrently and merges; the result does not depend on order.
AnchorCounts parse_anchor_corpora(const std::vector<std::filesystem::path>& paths, const RedirectTable& redirects,
                                  const AnchorParseOptions& options = {});

// surface -> set of entity titles, each surface weighted uniformly.
using UniformDict = std::map<std::string, std::set<std::string>>;

void read_uniform_dict(std::istream& in, const std::string& source_name, const RedirectTable& redirects, UniformDict& into,
                       const AnchorParseOptions& options = {});
void read_uniform_dict(const std::filesystem::path& path, const RedirectTable& redirects, UniformDict& into,
                       const AnchorParseOptions& options = {});

using WikiPrior = std::map<std::string, std::map<std::string, double>>;

// P_wiki(e|m) = count(m,e) / sum_e' count(m,e').
WikiPrior compute_wiki_prior(const AnchorCounts& counts);

// P(e|m) = min(1, P_wiki + 1/|dict(m)|) over the union of both sources,
// sorted by prior descending then title, truncated to `max_candidates`.
TitledPriors combine_priors(const WikiPrior& wiki, const UniformDict& dict, std::size_t max_candidates = kMaxCandidatesStored);

struct BuildReport {
  std::size_t surfaces = 0;
  std::size_t entries = 0;
  std::size_t dropped_entities = 0;  // distinct titles without an embedding
  std::size_t dropped_entries = 0;
  std::size_t words = 0;
  std::size_t entities = 0;
};

// Drops prior entities lacking an embedding, then writes the store.
// Throws EmptyStore when no prior entry survives.
BuildReport build_store(EmbeddingPair embeddings, const TitledPriors& priors, const std::filesystem::path& out_path,
                        bool case_sensitive = false);
// Same, into memory.
std::vector<std::byte> build_store_bytes(EmbeddingPair embeddings, const TitledPriors& priors, BuildReport& report,
                                         bool case_sensitive = false);

}  // namespace relink
