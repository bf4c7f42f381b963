#include "rat/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "rat/error.hpp"

namespace rat {

using nlohmann::json;

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_word(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u) || c == '_';
}

struct Unit {
  std::size_t begin;
  std::size_t end;
  std::size_t tokens;
};

std::size_t trim_begin(std::string_view text, std::size_t b, std::size_t e) {
  while (b < e && is_space(text[b])) ++b;
  return b;
}

std::size_t trim_end(std::string_view text, std::size_t b, std::size_t e) {
  while (e > b && is_space(text[e - 1])) --e;
  return e;
}

// Paragraphs are maximal runs of non-blank lines.
std::vector<std::pair<std::size_t, std::size_t>> paragraphs(std::string_view text) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t pos = 0;
  std::size_t para_begin = std::string_view::npos;
  std::size_t para_end = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = text.substr(pos, eol - pos);
    const bool blank = std::all_of(line.begin(), line.end(), is_space);
    if (blank) {
      if (para_begin != std::string_view::npos) {
        out.emplace_back(para_begin, para_end);
        para_begin = std::string_view::npos;
      }
    } else {
      if (para_begin == std::string_view::npos) para_begin = pos;
      para_end = eol;
    }
    if (eol == text.size()) break;
    pos = eol + 1;
  }
  if (para_begin != std::string_view::npos) out.emplace_back(para_begin, para_end);
  return out;
}

// Sentence ends are [.!?] followed by whitespace; the cut sits after the mark.
std::vector<std::pair<std::size_t, std::size_t>> sentences(std::string_view text, std::size_t b,
                                                           std::size_t e) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t start = b;
  for (std::size_t i = b; i + 1 < e; ++i) {
    const char c = text[i];
    if ((c == '.' || c == '!' || c == '?') && is_space(text[i + 1])) {
      out.emplace_back(start, i + 1);
      start = trim_begin(text, i + 1, e);
    }
  }
  if (start < e) out.emplace_back(start, e);
  return out;
}

void emit_units(std::string_view body, std::size_t b, std::size_t e, std::size_t max_tokens,
                const Tokenizer& tok, bool allow_sentences, std::vector<Unit>& units) {
  b = trim_begin(body, b, e);
  e = trim_end(body, b, e);
  if (b >= e) return;
  const auto spans = tok.tokenize(body.substr(b, e - b));
  if (spans.empty()) return;
  if (spans.size() <= max_tokens) {
    units.push_back({b, e, spans.size()});
    return;
  }
  if (allow_sentences) {
    const auto parts = sentences(body, b, e);
    if (parts.size() > 1) {
      for (const auto& [sb, se] : parts) emit_units(body, sb, se, max_tokens, tok, false, units);
      return;
    }
  }
  for (std::size_t i = 0; i < spans.size(); i += max_tokens) {
    const std::size_t last = std::min(i + max_tokens, spans.size()) - 1;
    units.push_back({b + spans[i].begin, b + spans[last].end, last - i + 1});
  }
}

std::string chunk_id(const std::string& doc_id, std::size_t index) {
  std::string n = std::to_string(index);
  if (n.size() < 4) n.insert(0, 4 - n.size(), '0');
  return doc_id + "#" + n;
}

std::string gram_key(const std::vector<std::string_view>& toks, std::size_t at, std::size_t n) {
  std::string key;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) key += '\x1f';
    key.append(toks[at + i]);
  }
  return key;
}

}  // namespace

std::vector<TokenSpan> DefaultTokenizer::tokenize(std::string_view text) const {
  std::vector<TokenSpan> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_space(text[i])) {
      ++i;
    } else if (is_word(text[i])) {
      const std::size_t start = i;
      while (i < text.size() && is_word(text[i])) ++i;
      out.push_back({start, i});
    } else {
      out.push_back({i, i + 1});
      ++i;
    }
  }
  return out;
}

const Tokenizer& default_tokenizer() {
  static const DefaultTokenizer instance;
  return instance;
}

std::size_t count_tokens(std::string_view text, const Tokenizer& tok) {
  return tok.tokenize(text).size();
}

std::vector<std::string_view> token_strings(std::string_view text, const Tokenizer& tok) {
  std::vector<std::string_view> out;
  for (const auto& s : tok.tokenize(text)) out.push_back(text.substr(s.begin, s.end - s.begin));
  return out;
}

std::string truncate_front(std::string_view text, std::size_t max_tokens, const Tokenizer& tok) {
  const auto spans = tok.tokenize(text);
  if (spans.size() <= max_tokens) return std::string(text);
  if (max_tokens == 0) return {};
  return std::string(text.substr(spans[spans.size() - max_tokens].begin));
}

std::string truncate_back(std::string_view text, std::size_t max_tokens, const Tokenizer& tok) {
  const auto spans = tok.tokenize(text);
  if (spans.size() <= max_tokens) return std::string(text);
  if (max_tokens == 0) return {};
  return std::string(text.substr(0, spans[max_tokens - 1].end));
}

std::vector<Chunk> chunk_document(const Document& doc, std::size_t max_tokens, const Tokenizer& tok) {
  if (max_tokens < 1) throw Error(ErrorCode::InvalidArgument, "max_tokens must be at least 1");
  const std::string_view body = doc.body;

  std::vector<Unit> units;
  for (const auto& [pb, pe] : paragraphs(body)) emit_units(body, pb, pe, max_tokens, tok, true, units);
  if (units.empty()) throw Error(ErrorCode::EmptyDocument, "document '" + doc.id + "' has no tokens");

  std::vector<Chunk> chunks;
  auto flush = [&](std::size_t b, std::size_t e) {
    Chunk c;
    c.id = chunk_id(doc.id, chunks.size());
    c.doc_id = doc.id;
    c.body = std::string(body.substr(b, e - b));
    c.token_count = count_tokens(c.body, tok);
    chunks.push_back(std::move(c));
  };

  std::size_t cur_begin = units.front().begin;
  std::size_t cur_end = units.front().end;
  std::size_t cur_tokens = units.front().tokens;
  for (std::size_t i = 1; i < units.size(); ++i) {
    const Unit& u = units[i];
    if (cur_tokens + u.tokens <= max_tokens) {
      cur_end = u.end;
      cur_tokens += u.tokens;
    } else {
      flush(cur_begin, cur_end);
      cur_begin = u.begin;
      cur_end = u.end;
      cur_tokens = u.tokens;
    }
  }
  flush(cur_begin, cur_end);
  return chunks;
}

DecontaminationResult decontaminate(const std::vector<Chunk>& chunks,
                                    const std::vector<BenchmarkText>& benchmarks, std::size_t n,
                                    const Tokenizer& tok) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "n-gram size must be at least 1");

  // gram size -> (gram -> first benchmark index containing it)
  std::unordered_map<std::size_t, std::unordered_map<std::string, std::size_t>> grams;
  for (std::size_t b = 0; b < benchmarks.size(); ++b) {
    const auto toks = token_strings(benchmarks[b].text, tok);
    if (toks.empty()) continue;
    const std::size_t size = std::min(n, toks.size());
    auto& table = grams[size];
    for (std::size_t i = 0; i + size <= toks.size(); ++i) table.try_emplace(gram_key(toks, i, size), b);
  }

  std::vector<std::size_t> sizes;
  for (const auto& [size, _] : grams) sizes.push_back(size);
  std::sort(sizes.rbegin(), sizes.rend());

  DecontaminationResult out;
  for (const auto& chunk : chunks) {
    const auto toks = token_strings(chunk.body, tok);
    std::optional<std::size_t> hit;
    std::size_t hit_size = 0;
    for (std::size_t size : sizes) {
      const auto& table = grams.at(size);
      for (std::size_t i = 0; i + size <= toks.size(); ++i) {
        const auto it = table.find(gram_key(toks, i, size));
        if (it != table.end() && (!hit || it->second < *hit)) {
          hit = it->second;
          hit_size = size;
        }
      }
    }
    if (hit) {
      out.removed.push_back({chunk.id, "shares a " + std::to_string(hit_size) + "-gram with benchmark text",
                             benchmarks[*hit].id});
    } else {
      out.kept.push_back(chunk);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Io, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<Document> load_documents(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  std::vector<Document> docs;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(path)) {
      const auto ext = entry.path().extension();
      if (entry.is_regular_file() && (ext == ".md" || ext == ".txt")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      docs.push_back({fs::relative(f, path).generic_string(), f.string(), read_file(f)});
    }
  } else {
    for_each_json_line(path, [&](const json& j) {
      docs.push_back({j.at("id").get<std::string>(), j.value("source", ""), j.at("body").get<std::string>()});
    });
  }
  std::unordered_set<std::string> seen;
  for (const auto& d : docs) {
    if (!seen.insert(d.id).second) throw Error(ErrorCode::DuplicateId, "duplicate document id '" + d.id + "'");
    if (d.body.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw Error(ErrorCode::EmptyDocument, "document '" + d.id + "' is empty");
    }
  }
  return docs;
}

std::vector<BenchmarkText> load_benchmarks(const std::filesystem::path& path) {
  std::vector<BenchmarkText> out;
  for_each_json_line(path, [&](const json& j) {
    const std::string id = j.value("id", std::to_string(out.size()));
    if (j.contains("text")) out.push_back({id, j.at("text").get<std::string>()});
    if (j.contains("prompt")) out.push_back({id, j.at("prompt").get<std::string>()});
    if (j.contains("solution")) out.push_back({id, j.at("solution").get<std::string>()});
  });
  return out;
}

void write_chunks(const std::filesystem::path& path, const std::vector<Chunk>& chunks) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (const auto& c : chunks) {
    out << json{{"chunk_id", c.id}, {"doc_id", c.doc_id}, {"body", c.body}, {"token_count", c.token_count}}.dump()
        << '\n';
  }
}

std::vector<Chunk> read_chunks(const std::filesystem::path& path) {
  std::vector<Chunk> out;
  for_each_json_line(path, [&](const json& j) {
    Chunk c;
    c.id = j.at("chunk_id").get<std::string>();
    c.doc_id = j.value("doc_id", "");
    c.body = j.at("body").get<std::string>();
    c.token_count = j.contains("token_count") ? j.at("token_count").get<std::size_t>() : count_tokens(c.body);
    out.push_back(std::move(c));
  });
  return out;
}

void write_removals(const std::filesystem::path& path, const std::vector<Removal>& removed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (const auto& r : removed) {
    out << json{{"chunk_id", r.chunk_id}, {"reason", r.reason}, {"benchmark_id", r.benchmark_id}}.dump() << '\n';
  }
}

}  // namespace rat
