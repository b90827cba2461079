#include "deepsent/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>

#include "deepsent/io.hpp"

namespace deepsent {

namespace {

// Decodes one UTF-8 code point starting at s[i]; advances i. Invalid bytes
// decode to U+FFFD and consume a single byte.
char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return 0xFFFD;
  }
  for (int k = 1; k < len; ++k) {
    const int c = cont(static_cast<std::size_t>(k));
    if (c < 0) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | static_cast<char32_t>(c);
  }
  i += static_cast<std::size_t>(len);
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Non-ASCII code points count as word characters unless they fall in a
// punctuation, symbol, space or emoji block.
bool is_word_char(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
  }
  struct Range {
    char32_t lo, hi;
  };
  static constexpr Range kSeparators[] = {
      {0x0080, 0x00BF}, {0x00D7, 0x00D7}, {0x00F7, 0x00F7}, {0x2000, 0x206F},
      {0x20A0, 0x20CF}, {0x2100, 0x2BFF}, {0x2E00, 0x2E7F}, {0x3000, 0x303F},
      {0xFE00, 0xFE0F}, {0xFE30, 0xFE4F}, {0xFF00, 0xFF0F}, {0xFFF0, 0xFFFF},
      {0x1F000, 0x1FAFF}, {0xE0000, 0xE007F},
  };
  for (const auto& r : kSeparators) {
    if (cp >= r.lo && cp <= r.hi) return false;
  }
  return true;
}

char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 32;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
  if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 32;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 32;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
  return cp;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f'; }

std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    const std::size_t start = i;
    while (i < line.size() && !is_space(line[i])) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

}  // namespace

std::string lowercase(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) append_utf8(out, to_lower(next_code_point(s, i)));
  return out;
}

std::vector<WordSpan> word_spans(std::string_view text) {
  std::vector<WordSpan> spans;
  WordSpan current;
  bool open = false;
  for (std::size_t i = 0; i < text.size();) {
    const std::size_t start = i;
    const char32_t cp = next_code_point(text, i);
    if (is_word_char(cp)) {
      if (!open) {
        current = WordSpan{start, start, {}};
        open = true;
      }
      append_utf8(current.token, to_lower(cp));
      current.end = i;
    } else if (open) {
      spans.push_back(std::move(current));
      open = false;
    }
  }
  if (open) spans.push_back(std::move(current));
  return spans;
}

bool EmbeddingTable::contains(std::string_view word) const {
  return index_.find(std::string(word)) != index_.end();
}

std::optional<Index> EmbeddingTable::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Vector EmbeddingTable::lookup(std::string_view word) const {
  if (auto row = find(word)) return vectors_.row(*row).transpose();
  return Vector::Zero(dim_);
}

bool EmbeddingTable::add(std::string word, const Vector& vec) {
  if (word.empty()) throw DomainError("embedding words must be non-empty");
  if (vec.size() != dim_) {
    throw DimensionError("embedding vector for '" + word + "' has length " +
                         std::to_string(vec.size()) + ", table dim is " + std::to_string(dim_));
  }
  word = lowercase(word);
  if (index_.count(word)) {
    warnings_.push_back("duplicate word '" + word + "' ignored");
    return false;
  }
  const Index row = static_cast<Index>(words_.size());
  vectors_.conservativeResize(row + 1, dim_);
  vectors_.row(row) = vec.transpose();
  index_.emplace(word, row);
  words_.push_back(std::move(word));
  return true;
}

EmbeddingTable parse_embedding_file(std::istream& in) {
  EmbeddingTable table;
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  bool have_dim = false;

  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_whitespace(line);
    if (fields.empty()) continue;
    const Index count = static_cast<Index>(fields.size()) - 1;
    if (!have_dim) {
      if (count < 1) throw ParseError("embedding file line " + std::to_string(line_no) + ": no vector values");
      table.dim_ = count;
      have_dim = true;
    } else if (count != table.dim_) {
      throw ParseError("embedding file line " + std::to_string(line_no) + ": expected " +
                       std::to_string(table.dim_) + " values, found " + std::to_string(count));
    }
    const std::size_t offset = values.size();
    values.resize(offset + static_cast<std::size_t>(count));
    for (Index k = 0; k < count; ++k) {
      const auto f = fields[static_cast<std::size_t>(k) + 1];
      double v = 0;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc{} || ptr != f.data() + f.size() || !std::isfinite(v)) {
        throw ParseError("embedding file line " + std::to_string(line_no) + ": bad number '" +
                         std::string(f) + "'");
      }
      values[offset + static_cast<std::size_t>(k)] = v;
    }
    std::string word = lowercase(fields[0]);
    if (table.index_.count(word)) {
      table.warnings_.push_back("line " + std::to_string(line_no) + ": duplicate word '" + word +
                                "' ignored (first occurrence kept)");
      values.resize(offset);
      continue;
    }
    table.index_.emplace(word, static_cast<Index>(table.words_.size()));
    table.words_.push_back(std::move(word));
  }
  if (in.bad()) throw IoError("error while reading embedding stream");
  if (!have_dim) throw ParseError("embedding file is empty");

  const Index rows = static_cast<Index>(table.words_.size());
  table.vectors_ = Eigen::Map<const Matrix>(values.data(), rows, table.dim_);
  return table;
}

EmbeddingTable load_embedding_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file '" + path + "'");
  return parse_embedding_file(in);
}

void write_embedding_file(const EmbeddingTable& table, std::ostream& out) {
  const auto& words = table.words();
  for (std::size_t r = 0; r < words.size(); ++r) {
    out << words[r];
    for (Index k = 0; k < table.dim(); ++k) {
      out << ' ' << format_double(table.vectors()(static_cast<Index>(r), k));
    }
    out << '\n';
  }
}

TokenSequence tokenize(std::string_view text) {
  TokenSequence seq;
  for (auto& span : word_spans(text)) seq.tokens.push_back(std::move(span.token));
  seq.source_length = seq.tokens.size();
  return seq;
}

TokenSequence truncate(const TokenSequence& seq, std::size_t max_len) {
  TokenSequence out;
  out.source_length = seq.source_length;
  const auto n = std::min(max_len, seq.tokens.size());
  out.tokens.assign(seq.tokens.begin(), seq.tokens.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

double english_fraction(const TokenSequence& tokens, const EmbeddingTable& table) {
  if (tokens.tokens.empty()) return 0.0;
  std::size_t known = 0;
  for (const auto& t : tokens.tokens) known += table.contains(t) ? 1 : 0;
  return static_cast<double>(known) / static_cast<double>(tokens.tokens.size());
}

EmbeddedSequence encode_text(const TokenSequence& tokens, const EmbeddingTable& table, Index max_len) {
  if (max_len < 1) throw DomainError("encode_text: max_len must be at least 1");
  EmbeddedSequence out;
  out.vectors = Matrix::Zero(max_len, table.dim());
  const Index n = std::min<Index>(max_len, static_cast<Index>(tokens.tokens.size()));
  for (Index t = 0; t < n; ++t) {
    if (auto row = table.find(tokens.tokens[static_cast<std::size_t>(t)])) {
      out.vectors.row(t) = table.vectors().row(*row);
    }
  }
  out.valid_length = n;
  return out;
}

std::vector<WordCount> word_frequencies(const std::vector<TokenSequence>& corpus) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& seq : corpus) {
    for (const auto& t : seq.tokens) ++counts[t];
  }
  std::vector<WordCount> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const WordCount& a, const WordCount& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return ranked;
}

}  // namespace deepsent
