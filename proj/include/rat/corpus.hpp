#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rat {

struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;  // one past the last byte
};

/// Splits text into tokens. Implementations must be deterministic and must
/// never produce a token that crosses whitespace, so cutting text between two
/// tokens preserves the token sequence on either side.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<TokenSpan> tokenize(std::string_view text) const = 0;
};

/// Word runs (ASCII alphanumerics, '_' and any non-ASCII byte) are one token;
/// every other non-space character is a token on its own.
class DefaultTokenizer final : public Tokenizer {
 public:
  std::vector<TokenSpan> tokenize(std::string_view text) const override;
};

const Tokenizer& default_tokenizer();

std::size_t count_tokens(std::string_view text, const Tokenizer& tok = default_tokenizer());
std::vector<std::string_view> token_strings(std::string_view text,
                                            const Tokenizer& tok = default_tokenizer());

/// Keeps the last `max_tokens` tokens of text (dropping from the front).
std::string truncate_front(std::string_view text, std::size_t max_tokens,
                           const Tokenizer& tok = default_tokenizer());
/// Keeps the first `max_tokens` tokens of text.
std::string truncate_back(std::string_view text, std::size_t max_tokens,
                          const Tokenizer& tok = default_tokenizer());

struct Document {
  std::string id;
  std::string source_uri;
  std::string body;
};

struct Chunk {
  std::string id;
  std::string doc_id;
  std::string body;
  std::size_t token_count = 0;

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

inline constexpr std::size_t kDefaultChunkTokens = 2000;

/// Splits a document into chunks of at most max_tokens tokens, cutting at
/// blank-line paragraph boundaries first, then at sentence ends ([.!?]
/// followed by whitespace), then between tokens.
std::vector<Chunk> chunk_document(const Document& doc, std::size_t max_tokens = kDefaultChunkTokens,
                                  const Tokenizer& tok = default_tokenizer());

struct BenchmarkText {
  std::string id;
  std::string text;
};

struct Removal {
  std::string chunk_id;
  std::string reason;
  std::string benchmark_id;

  friend bool operator==(const Removal&, const Removal&) = default;
};

struct DecontaminationResult {
  std::vector<Chunk> kept;
  std::vector<Removal> removed;
};

inline constexpr std::size_t kDefaultNgram = 10;

/// Removes every chunk sharing a token n-gram with any benchmark text. A
/// benchmark shorter than n tokens contributes its whole token sequence as
/// its single gram, so verbatim copies of short problems are still caught.
DecontaminationResult decontaminate(const std::vector<Chunk>& chunks,
                                    const std::vector<BenchmarkText>& benchmarks,
                                    std::size_t n = kDefaultNgram,
                                    const Tokenizer& tok = default_tokenizer());

// Ingestion and serialization ------------------------------------------------

/// Loads a directory of .md/.txt files (sorted by relative path) or a
/// JSON-Lines file of {"id","source","body"} records.
std::vector<Document> load_documents(const std::filesystem::path& path);

/// JSON-Lines of {"id","text"}; a record may use "prompt"/"solution" fields
/// instead of "text", in which case both become separate benchmark texts.
std::vector<BenchmarkText> load_benchmarks(const std::filesystem::path& path);

void write_chunks(const std::filesystem::path& path, const std::vector<Chunk>& chunks);
std::vector<Chunk> read_chunks(const std::filesystem::path& path);
void write_removals(const std::filesystem::path& path, const std::vector<Removal>& removed);

}  // namespace rat
