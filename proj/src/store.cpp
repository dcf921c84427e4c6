#include "relink/store.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "relink/error.hpp"
#include "relink/text.hpp"

namespace relink {
namespace {

constexpr char kMagic[8] = {'R', 'E', 'L', 'S', 'T', 'O', 'R', 'E'};
constexpr std::size_t kHeaderSize = 128;

// Header field byte offsets.
enum HeaderField : std::size_t {
  kVersion = 8,
  kDim = 12,
  kWordCount = 16,
  kEntityCount = 24,
  kSurfaceCount = 32,
  kFlags = 40,
  kEntryCount = 48,
  kWordTable = 56,
  kEntityTable = 64,
  kWordVectors = 72,
  kEntityVectors = 80,
  kDirectory = 88,
  kEntries = 96,
  kSurfaceBlob = 104,
  kFileSize = 112,
};

constexpr std::uint64_t kFlagCaseSensitive = 1;

class ByteWriter {
 public:
  std::size_t size() const { return out_.size(); }
  std::vector<std::byte>& bytes() { return out_; }

  template <typename T>
  void put(T value) {
    auto p = reinterpret_cast<const std::byte*>(&value);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  template <typename T>
  void put_at(std::size_t offset, T value) {
    std::memcpy(out_.data() + offset, &value, sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    auto p = static_cast<const std::byte*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void align8() { out_.resize((out_.size() + 7) & ~std::size_t{7}, std::byte{0}); }

 private:
  std::vector<std::byte> out_;
};

template <typename T>
T read_at(std::span<const std::byte> bytes, std::size_t offset) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  return value;
}

[[noreturn]] void corrupt(const std::string& what) { throw Error(ErrorCode::CorruptStore, "corrupt store: " + what); }

std::vector<std::size_t> sorted_order(const std::vector<std::string>& tokens, const char* what) {
  std::vector<std::size_t> order(tokens.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return tokens[a] < tokens[b]; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (tokens[order[i]] == tokens[order[i - 1]]) {
      throw Error(ErrorCode::DuplicateToken, std::string("duplicate ") + what + " token '" + tokens[order[i]] + "'");
    }
  }
  return order;
}

void write_string_table(ByteWriter& w, const std::vector<std::string>& tokens, const std::vector<std::size_t>& order) {
  std::uint64_t offset = 0;
  w.put<std::uint64_t>(0);
  for (std::size_t idx : order) {
    offset += tokens[idx].size();
    w.put<std::uint64_t>(offset);
  }
  for (std::size_t idx : order) w.put_bytes(tokens[idx].data(), tokens[idx].size());
  w.align8();
}

void write_vectors(ByteWriter& w, const EmbeddingTable& table, const std::vector<std::size_t>& order) {
  for (std::size_t idx : order) {
    auto row = table.row(idx);
    w.put_bytes(row.data(), row.size() * sizeof(float));
  }
  w.align8();
}

}  // namespace

void EmbeddingTable::add(std::string token, std::span<const float> vec) {
  if (dim == 0 && tokens.empty()) dim = vec.size();
  if (vec.size() != dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "vector for '" + token + "' has " + std::to_string(vec.size()) + " components, expected " + std::to_string(dim));
  }
  tokens.push_back(std::move(token));
  values.insert(values.end(), vec.begin(), vec.end());
}

EmbeddingTable read_vector_text(std::istream& in, const std::string& source_name) {
  auto malformed = [&](std::size_t line_no, const std::string& why) {
    return Error(ErrorCode::MalformedLine, source_name + ":" + std::to_string(line_no) + ": " + why);
  };

  std::string line;
  std::size_t line_no = 0;
  std::size_t count = 0;
  std::size_t dim = 0;
  if (!std::getline(in, line)) throw malformed(1, "missing \"count dim\" header");
  ++line_no;
  {
    std::istringstream header(line);
    std::string extra;
    if (!(header >> count >> dim) || (header >> extra) || dim == 0) throw malformed(line_no, "expected \"count dim\" header");
  }

  EmbeddingTable table;
  table.dim = dim;
  table.tokens.reserve(count);
  table.values.reserve(count * dim);
  std::unordered_set<std::string> seen;
  std::vector<std::string_view> fields;
  std::vector<float> vec(dim);

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    fields.clear();
    std::size_t pos = 0;
    while (pos < line.size()) {
      std::size_t begin = line.find_first_not_of(" \t", pos);
      if (begin == std::string::npos) break;
      std::size_t end = line.find_first_of(" \t", begin);
      if (end == std::string::npos) end = line.size();
      fields.emplace_back(line.data() + begin, end - begin);
      pos = end;
    }
    if (fields.size() < dim + 1) {
      throw malformed(line_no, "expected token and " + std::to_string(dim) + " values, got " + std::to_string(fields.size()) + " fields");
    }
    // Tokens may contain spaces; the last `dim` fields are the vector.
    std::size_t token_fields = fields.size() - dim;
    std::string token(fields[0]);
    for (std::size_t i = 1; i < token_fields; ++i) {
      token += ' ';
      token += fields[i];
    }
    for (std::size_t k = 0; k < dim; ++k) {
      auto f = fields[token_fields + k];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), vec[k]);
      if (ec != std::errc() || ptr != f.data() + f.size()) throw malformed(line_no, "bad number '" + std::string(f) + "'");
    }
    if (table.tokens.size() == count) throw malformed(line_no, "more vectors than the header count " + std::to_string(count));
    if (!seen.insert(token).second) {
      throw Error(ErrorCode::DuplicateToken, source_name + ":" + std::to_string(line_no) + ": duplicate token '" + token + "'");
    }
    table.tokens.push_back(std::move(token));
    table.values.insert(table.values.end(), vec.begin(), vec.end());
  }
  if (table.tokens.size() != count) {
    throw malformed(line_no, "header declares " + std::to_string(count) + " vectors, found " + std::to_string(table.tokens.size()));
  }
  return table;
}

EmbeddingPair split_embeddings(EmbeddingTable table, const IngestOptions& options) {
  EmbeddingPair out;
  out.words.dim = table.dim;
  out.entities.dim = table.dim;
  std::unordered_set<std::string> entity_titles;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const std::string& token = table.tokens[i];
    if (!options.entity_prefix.empty() && token.starts_with(options.entity_prefix)) {
      std::string title = token.substr(options.entity_prefix.size());
      if (options.canonicalize_titles) title = canonical_title(title);
      if (!entity_titles.insert(title).second) {
        throw Error(ErrorCode::DuplicateToken, "duplicate entity '" + title + "' after title canonicalization");
      }
      out.entities.add(std::move(title), table.row(i));
    } else {
      out.words.add(token, table.row(i));
    }
  }
  return out;
}

EmbeddingPair ingest_embeddings(const std::filesystem::path& word_file, const std::filesystem::path& entity_file,
                                const IngestOptions& options) {
  auto load = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw Error(ErrorCode::FileNotFound, "cannot open embedding file " + p.string());
    return read_vector_text(in, p.string());
  };
  EmbeddingTable first = load(word_file);
  if (entity_file.empty() || entity_file == word_file) return split_embeddings(std::move(first), options);

  EmbeddingTable second = load(entity_file);
  if (first.dim != second.dim) {
    throw Error(ErrorCode::DimensionMismatch, "word vectors have dim " + std::to_string(first.dim) + " but entity vectors have dim " +
                                                  std::to_string(second.dim));
  }
  // Merge, then split by prefix; duplicates across files are rejected.
  std::unordered_set<std::string> seen(first.tokens.begin(), first.tokens.end());
  for (std::size_t i = 0; i < second.size(); ++i) {
    if (!seen.insert(second.tokens[i]).second) {
      throw Error(ErrorCode::DuplicateToken, "token '" + second.tokens[i] + "' appears in both embedding files");
    }
    first.add(second.tokens[i], second.row(i));
  }
  return split_embeddings(std::move(first), options);
}

std::vector<std::byte> serialize_store(const StoreContents& contents) {
  const EmbeddingTable& words = contents.words;
  const EmbeddingTable& entities = contents.entities;
  std::size_t dim = words.size() ? words.dim : entities.dim;
  if (words.size() && entities.size() && words.dim != entities.dim) {
    throw Error(ErrorCode::DimensionMismatch, "word dim " + std::to_string(words.dim) + " != entity dim " + std::to_string(entities.dim));
  }

  auto word_order = sorted_order(words.tokens, "word");
  auto entity_order = sorted_order(entities.tokens, "entity");
  std::unordered_map<std::string_view, EntityId> entity_ids;
  entity_ids.reserve(entity_order.size());
  for (std::size_t id = 0; id < entity_order.size(); ++id) {
    entity_ids.emplace(entities.tokens[entity_order[id]], static_cast<EntityId>(id));
  }

  std::vector<std::pair<std::string_view, std::vector<PriorEntry>>> surfaces;
  surfaces.reserve(contents.priors.size());
  std::size_t entry_count = 0;
  for (const auto& [surface, list] : contents.priors) {
    std::vector<PriorEntry> entries;
    entries.reserve(list.size());
    for (const auto& [title, prior] : list) {
      auto it = entity_ids.find(title);
      if (it == entity_ids.end()) {
        throw Error(ErrorCode::InvalidArgument, "prior for '" + surface + "' names entity '" + title + "' without an embedding");
      }
      if (!(prior > 0.0 && prior <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "prior for '" + surface + "' -> '" + title + "' is outside (0,1]");
      }
      entries.push_back(PriorEntry{it->second, 0, prior});
    }
    if (entries.empty()) continue;
    std::sort(entries.begin(), entries.end(), [](const PriorEntry& a, const PriorEntry& b) {
      return a.prior != b.prior ? a.prior > b.prior : a.entity < b.entity;
    });
    if (entries.size() > kMaxCandidatesStored) entries.resize(kMaxCandidatesStored);
    entry_count += entries.size();
    surfaces.emplace_back(surface, std::move(entries));
  }

  ByteWriter w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.bytes().resize(kHeaderSize, std::byte{0});
  w.put_at<std::uint32_t>(kVersion, kStoreVersion);
  w.put_at<std::uint32_t>(kDim, static_cast<std::uint32_t>(dim));
  w.put_at<std::uint64_t>(kWordCount, words.size());
  w.put_at<std::uint64_t>(kEntityCount, entities.size());
  w.put_at<std::uint64_t>(kSurfaceCount, surfaces.size());
  w.put_at<std::uint64_t>(kFlags, contents.case_sensitive ? kFlagCaseSensitive : 0);
  w.put_at<std::uint64_t>(kEntryCount, entry_count);

  w.put_at<std::uint64_t>(kWordTable, w.size());
  write_string_table(w, words.tokens, word_order);
  w.put_at<std::uint64_t>(kEntityTable, w.size());
  write_string_table(w, entities.tokens, entity_order);
  w.put_at<std::uint64_t>(kWordVectors, w.size());
  write_vectors(w, words, word_order);
  w.put_at<std::uint64_t>(kEntityVectors, w.size());
  write_vectors(w, entities, entity_order);

  w.put_at<std::uint64_t>(kDirectory, w.size());
  std::uint64_t surface_offset = 0;
  std::uint64_t first_entry = 0;
  for (const auto& [surface, entries] : surfaces) {
    w.put<std::uint64_t>(surface_offset);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(surface.size()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
    w.put<std::uint64_t>(first_entry);
    surface_offset += surface.size();
    first_entry += entries.size();
  }
  w.put_at<std::uint64_t>(kEntries, w.size());
  for (const auto& [surface, entries] : surfaces) {
    for (const PriorEntry& e : entries) {
      w.put<std::uint32_t>(e.entity);
      w.put<std::uint32_t>(0);
      w.put<double>(e.prior);
    }
  }
  w.put_at<std::uint64_t>(kSurfaceBlob, w.size());
  for (const auto& [surface, entries] : surfaces) w.put_bytes(surface.data(), surface.size());
  w.align8();
  w.put_at<std::uint64_t>(kFileSize, w.size());
  return std::move(w.bytes());
}

void write_store(const std::filesystem::path& path, const StoreContents& contents) {
  auto bytes = serialize_store(contents);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot create store file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

// Owns either an mmap region or a heap copy of the file.
struct KnowledgeStore::Backing {
  std::vector<std::byte> heap;
  void* map = nullptr;
  std::size_t map_size = 0;

  ~Backing() {
    if (map) ::munmap(map, map_size);
  }
  std::span<const std::byte> view() const {
    if (map) return {static_cast<const std::byte*>(map), map_size};
    return {heap.data(), heap.size()};
  }
};

KnowledgeStore::KnowledgeStore(std::unique_ptr<Backing> backing) : backing_(std::move(backing)) {
  bytes_ = backing_->view();
  parse();
}

KnowledgeStore::KnowledgeStore(KnowledgeStore&&) noexcept = default;
KnowledgeStore& KnowledgeStore::operator=(KnowledgeStore&&) noexcept = default;
KnowledgeStore::~KnowledgeStore() = default;

KnowledgeStore KnowledgeStore::open(const std::filesystem::path& path, LoadMode mode) {
  auto backing = std::make_unique<Backing>();
  if (mode == LoadMode::Preload) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw Error(ErrorCode::FileNotFound, "cannot open store " + path.string());
    auto size = static_cast<std::size_t>(in.tellg());
    backing->heap.resize(size);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(backing->heap.data()), static_cast<std::streamsize>(size));
    if (!in) throw Error(ErrorCode::Io, "read failed for " + path.string());
  } else {
    int fd = ::open(path.c_str(), O_RDONLY);
    if (fd < 0) throw Error(ErrorCode::FileNotFound, "cannot open store " + path.string());
    struct stat st {};
    if (::fstat(fd, &st) != 0) {
      ::close(fd);
      throw Error(ErrorCode::Io, "cannot stat " + path.string());
    }
    auto size = static_cast<std::size_t>(st.st_size);
    if (size < kHeaderSize) {
      ::close(fd);
      corrupt(path.string() + " is shorter than the header");
    }
    void* map = ::mmap(nullptr, size, PROT_READ, MAP_SHARED, fd, 0);
    ::close(fd);
    if (map == MAP_FAILED) throw Error(ErrorCode::Io, "mmap failed for " + path.string());
    ::madvise(map, size, MADV_RANDOM);
    backing->map = map;
    backing->map_size = size;
  }
  return KnowledgeStore(std::move(backing));
}

KnowledgeStore KnowledgeStore::from_bytes(std::vector<std::byte> bytes) {
  auto backing = std::make_unique<Backing>();
  backing->heap = std::move(bytes);
  return KnowledgeStore(std::move(backing));
}

void KnowledgeStore::parse() {
  const std::size_t size = bytes_.size();
  if (size < kHeaderSize) corrupt("file shorter than header");
  if (std::memcmp(bytes_.data(), kMagic, sizeof(kMagic)) != 0) corrupt("bad magic");
  version_ = read_at<std::uint32_t>(bytes_, kVersion);
  if (version_ != kStoreVersion) corrupt("unsupported version " + std::to_string(version_));
  dim_ = read_at<std::uint32_t>(bytes_, kDim);
  word_count_ = read_at<std::uint64_t>(bytes_, kWordCount);
  entity_count_ = read_at<std::uint64_t>(bytes_, kEntityCount);
  surface_count_ = read_at<std::uint64_t>(bytes_, kSurfaceCount);
  case_sensitive_ = (read_at<std::uint64_t>(bytes_, kFlags) & kFlagCaseSensitive) != 0;
  const std::uint64_t entry_count = read_at<std::uint64_t>(bytes_, kEntryCount);
  if (read_at<std::uint64_t>(bytes_, kFileSize) != size) corrupt("recorded file size does not match");

  auto section = [&](HeaderField field, std::uint64_t length) -> const std::byte* {
    std::uint64_t offset = read_at<std::uint64_t>(bytes_, field);
    if (offset % 8 != 0 || offset < kHeaderSize || offset > size || length > size - offset) corrupt("section out of bounds");
    return bytes_.data() + offset;
  };
  auto table = [&](HeaderField field, std::size_t count) {
    if (count > size / 8) corrupt("string table count too large");
    StringTable t;
    t.count = count;
    t.offsets = reinterpret_cast<const std::uint64_t*>(section(field, (count + 1) * 8));
    std::uint64_t blob_offset = read_at<std::uint64_t>(bytes_, field) + (count + 1) * 8;
    t.blob = reinterpret_cast<const char*>(bytes_.data() + blob_offset);
    if (t.offsets[0] != 0) corrupt("string table does not start at 0");
    for (std::size_t i = 0; i < count; ++i) {
      if (t.offsets[i + 1] < t.offsets[i]) corrupt("string table offsets decrease");
    }
    if (t.offsets[count] > size - blob_offset) corrupt("string table blob out of bounds");
    return t;
  };

  words_ = table(kWordTable, word_count_);
  entities_ = table(kEntityTable, entity_count_);
  if (dim_ == 0 && (word_count_ || entity_count_)) corrupt("zero dim with vectors present");
  if (dim_ && (word_count_ > size / (4 * dim_) || entity_count_ > size / (4 * dim_))) corrupt("vector count too large");
  word_vectors_ = reinterpret_cast<const float*>(section(kWordVectors, word_count_ * dim_ * 4));
  entity_vectors_ = reinterpret_cast<const float*>(section(kEntityVectors, entity_count_ * dim_ * 4));
  if (surface_count_ > size / 24 || entry_count > size / 16) corrupt("prior section too large");
  directory_ = reinterpret_cast<const DirectoryRecord*>(section(kDirectory, surface_count_ * 24));
  entries_ = reinterpret_cast<const PriorEntry*>(section(kEntries, entry_count * 16));
  std::uint64_t blob_offset = read_at<std::uint64_t>(bytes_, kSurfaceBlob);
  surface_blob_ = reinterpret_cast<const char*>(section(kSurfaceBlob, 0));

  std::uint64_t next_entry = 0;
  std::uint64_t next_surface = 0;
  for (std::size_t i = 0; i < surface_count_; ++i) {
    const DirectoryRecord& r = directory_[i];
    if (r.first_entry != next_entry || r.surface_offset != next_surface || r.entry_count == 0) corrupt("prior directory out of order");
    next_entry += r.entry_count;
    next_surface += r.surface_length;
  }
  if (next_entry != entry_count || next_surface > size - blob_offset) corrupt("prior directory out of bounds");
  for (std::uint64_t i = 0; i < entry_count; ++i) {
    if (entries_[i].entity >= entity_count_) corrupt("prior entry names unknown entity");
  }
}

std::optional<std::size_t> KnowledgeStore::StringTable::find(std::string_view key) const {
  std::size_t lo = 0;
  std::size_t hi = count;
  while (lo < hi) {
    std::size_t mid = lo + (hi - lo) / 2;
    int c = at(mid).compare(key);
    if (c == 0) return mid;
    if (c < 0) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  return std::nullopt;
}

std::string KnowledgeStore::normalize(std::string_view surface) const { return normalize_surface(surface, case_sensitive_); }

std::span<const PriorEntry> KnowledgeStore::lookup_prior(std::string_view surface) const {
  return lookup_normalized(normalize(surface));
}

std::span<const PriorEntry> KnowledgeStore::lookup_normalized(std::string_view normalized) const {
  std::size_t lo = 0;
  std::size_t hi = surface_count_;
  while (lo < hi) {
    std::size_t mid = lo + (hi - lo) / 2;
    int c = surface_at(mid).compare(normalized);
    if (c == 0) return entries_at(mid);
    if (c < 0) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  return {};
}

std::string_view KnowledgeStore::surface_at(std::size_t index) const {
  const DirectoryRecord& r = directory_[index];
  return {surface_blob_ + r.surface_offset, r.surface_length};
}

std::span<const PriorEntry> KnowledgeStore::entries_at(std::size_t index) const {
  const DirectoryRecord& r = directory_[index];
  return {entries_ + r.first_entry, r.entry_count};
}

std::optional<std::uint32_t> KnowledgeStore::word_id(std::string_view token) const {
  auto id = words_.find(token);
  if (!id) return std::nullopt;
  return static_cast<std::uint32_t>(*id);
}

std::optional<EntityId> KnowledgeStore::entity_id(std::string_view title) const {
  auto id = entities_.find(title);
  if (!id) return std::nullopt;
  return static_cast<EntityId>(*id);
}

std::string_view KnowledgeStore::word(std::uint32_t id) const { return words_.at(id); }
std::string_view KnowledgeStore::entity_title(EntityId id) const { return entities_.at(id); }

std::optional<std::span<const float>> KnowledgeStore::word_vector(std::string_view token) const {
  auto id = words_.find(token);
  if (!id) return std::nullopt;
  return std::span<const float>(word_vectors_ + *id * dim_, dim_);
}

std::optional<std::span<const float>> KnowledgeStore::entity_vector(EntityId id) const {
  if (id >= entity_count_) return std::nullopt;
  return std::span<const float>(entity_vectors_ + static_cast<std::size_t>(id) * dim_, dim_);
}

}  // namespace relink
