#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace relink {

static_assert(std::endian::native == std::endian::little, "store payloads are read in place as little-endian");

using EntityId = std::uint32_t;

// One (entity, P(e|m)) pair. Layout matches the on-disk entry record.
struct PriorEntry {
  EntityId entity;
  std::uint32_t reserved = 0;
  double prior;

  friend bool operator==(const PriorEntry& a, const PriorEntry& b) {
    return a.entity == b.entity && a.prior == b.prior;
  }
};
static_assert(sizeof(PriorEntry) == 16);

inline constexpr std::size_t kMaxCandidatesStored = 100;
inline constexpr std::uint32_t kStoreVersion = 1;
inline constexpr std::string_view kDefaultEntityPrefix = "ENTITY/";

// Token-keyed dense float32 rows, as read from a "count dim" text file.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<std::string> tokens;
  std::vector<float> values;  // tokens.size() * dim, row-major

  std::size_t size() const { return tokens.size(); }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  void add(std::string token, std::span<const float> vec);
};

struct EmbeddingPair {
  EmbeddingTable words;
  EmbeddingTable entities;
};

struct IngestOptions {
  std::string entity_prefix{kDefaultEntityPrefix};
  bool canonicalize_titles = true;
};

// Parses one text vector file. Throws MalformedLine (with line number) or
// DuplicateToken.
EmbeddingTable read_vector_text(std::istream& in, const std::string& source_name);

// Tokens carrying the entity prefix (in either file) become entities with the
// prefix stripped; everything else is a word. Throws DimensionMismatch when
// the two files disagree on dim.
EmbeddingPair ingest_embeddings(const std::filesystem::path& word_file, const std::filesystem::path& entity_file,
                                const IngestOptions& options = {});
EmbeddingPair split_embeddings(EmbeddingTable table, const IngestOptions& options = {});

// Surface-keyed priors with entities named by title; input to the writer.
using TitledPriors = std::map<std::string, std::vector<std::pair<std::string, double>>>;

struct StoreContents {
  EmbeddingTable words;
  EmbeddingTable entities;
  TitledPriors priors;  // keys already normalized
  bool case_sensitive = false;
};

// Serializes to the single-file format. Vocabularies and surfaces are sorted
// bytewise, so the output is independent of input order. Every prior entity
// must have an embedding row.
std::vector<std::byte> serialize_store(const StoreContents& contents);
void write_store(const std::filesystem::path& path, const StoreContents& contents);

enum class LoadMode {
  OnDemand,  // memory-mapped; payload pages are faulted in on first use
  Preload,   // whole file copied into memory at open
};

// Read-only view of a store file. Immutable after open and safe to share
// across threads without locking.
class KnowledgeStore {
 public:
  static KnowledgeStore open(const std::filesystem::path& path, LoadMode mode = LoadMode::OnDemand);
  static KnowledgeStore from_bytes(std::vector<std::byte> bytes);

  KnowledgeStore(KnowledgeStore&&) noexcept;
  KnowledgeStore& operator=(KnowledgeStore&&) noexcept;
  KnowledgeStore(const KnowledgeStore&) = delete;
  KnowledgeStore& operator=(const KnowledgeStore&) = delete;
  ~KnowledgeStore();

  std::uint32_t version() const { return version_; }
  std::size_t dim() const { return dim_; }
  std::size_t word_count() const { return word_count_; }
  std::size_t entity_count() const { return entity_count_; }
  std::size_t surface_count() const { return surface_count_; }
  bool case_sensitive() const { return case_sensitive_; }
  std::size_t file_size() const { return bytes_.size(); }

  std::string normalize(std::string_view surface) const;

  // Entries for the normalized surface, prior descending then EntityId
  // ascending; empty for unknown surfaces.
  std::span<const PriorEntry> lookup_prior(std::string_view surface) const;
  std::span<const PriorEntry> lookup_normalized(std::string_view normalized) const;

  std::optional<std::span<const float>> word_vector(std::string_view token) const;
  std::optional<std::span<const float>> entity_vector(EntityId id) const;

  std::optional<std::uint32_t> word_id(std::string_view token) const;
  std::optional<EntityId> entity_id(std::string_view title) const;
  std::string_view word(std::uint32_t id) const;
  std::string_view entity_title(EntityId id) const;

  // Positional access to the prior index, in stored (sorted) order.
  std::string_view surface_at(std::size_t index) const;
  std::span<const PriorEntry> entries_at(std::size_t index) const;

 private:
  struct Backing;
  struct StringTable {
    const std::uint64_t* offsets = nullptr;
    const char* blob = nullptr;
    std::size_t count = 0;
    std::string_view at(std::size_t i) const {
      return {blob + offsets[i], static_cast<std::size_t>(offsets[i + 1] - offsets[i])};
    }
    std::optional<std::size_t> find(std::string_view key) const;
  };
  struct DirectoryRecord {
    std::uint64_t surface_offset;
    std::uint32_t surface_length;
    std::uint32_t entry_count;
    std::uint64_t first_entry;
  };
  static_assert(sizeof(DirectoryRecord) == 24);

  explicit KnowledgeStore(std::unique_ptr<Backing> backing);
  void parse();

  std::unique_ptr<Backing> backing_;
  std::span<const std::byte> bytes_;
  std::uint32_t version_ = 0;
  std::size_t dim_ = 0;
  std::size_t word_count_ = 0;
  std::size_t entity_count_ = 0;
  std::size_t surface_count_ = 0;
  bool case_sensitive_ = false;
  StringTable words_;
  StringTable entities_;
  const float* word_vectors_ = nullptr;
  const float* entity_vectors_ = nullptr;
  const DirectoryRecord* directory_ = nullptr;
  const PriorEntry* entries_ = nullptr;
  const char* surface_blob_ = nullptr;
};

}  // namespace relink
