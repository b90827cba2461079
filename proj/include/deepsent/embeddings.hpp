#pragma once

// Pretrained word-embedding tables, tokenization and fixed-length text
// encoding.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "deepsent/numkernel.hpp"

namespace deepsent {

inline constexpr Index kDefaultMaxLen = 50;

/// Word -> vector map. Rows of `vectors` follow file order.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(Index dim) : dim_(dim), vectors_(0, dim) {
    if (dim < 1) throw DomainError("embedding dimension must be positive");
  }

  Index dim() const { return dim_; }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  const Matrix& vectors() const { return vectors_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  bool contains(std::string_view word) const;
  /// Row index of `word`, if present.
  std::optional<Index> find(std::string_view word) const;
  /// Vector for `word`; the zero vector when it is out of vocabulary.
  Vector lookup(std::string_view word) const;

  /// Adds an entry. Returns false (and records a warning) if the word exists.
  bool add(std::string word, const Vector& vec);

  bool operator==(const EmbeddingTable& other) const {
    return dim_ == other.dim_ && words_ == other.words_ && vectors_ == other.vectors_;
  }

 private:
  Index dim_ = 0;
  std::vector<std::string> words_;
  std::unordered_map<std::string, Index> index_;
  Matrix vectors_;
  std::vector<std::string> warnings_;

  friend EmbeddingTable parse_embedding_file(std::istream& in);
};

/// Parses `<token> <f1> ... <fd>` lines. d is fixed by the first entry.
/// Duplicate words keep their first occurrence and record a warning.
EmbeddingTable parse_embedding_file(std::istream& in);
EmbeddingTable load_embedding_file(const std::string& path);

/// Writes the table in the same text format with round-trip exact floats.
void write_embedding_file(const EmbeddingTable& table, std::ostream& out);

struct TokenSequence {
  std::vector<std::string> tokens;
  std::size_t source_length = 0;  // token count before truncation
};

struct EmbeddedSequence {
  Matrix vectors;  // max_len x d, pad rows are zero
  Index valid_length = 0;
};

/// Byte range of one word inside a text, with its lowercased form.
struct WordSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string token;
};

/// Maximal runs of alphanumeric characters (UTF-8 aware).
std::vector<WordSpan> word_spans(std::string_view text);

std::string lowercase(std::string_view text);

/// Lowercases and splits on maximal runs of non-alphanumeric characters.
TokenSequence tokenize(std::string_view text);

/// Keeps the first `max_len` tokens; source_length is preserved.
TokenSequence truncate(const TokenSequence& seq, std::size_t max_len);

/// Fraction of tokens present in the table; 0 for an empty sequence.
double english_fraction(const TokenSequence& tokens, const EmbeddingTable& table);

/// Looks up the first max_len tokens (OOV -> zero) and zero-pads the rest.
EmbeddedSequence encode_text(const TokenSequence& tokens, const EmbeddingTable& table,
                             Index max_len = kDefaultMaxLen);

using WordCount = std::pair<std::string, std::size_t>;

/// Descending count, ties broken lexicographically.
std::vector<WordCount> word_frequencies(const std::vector<TokenSequence>& corpus);

}  // namespace deepsent
