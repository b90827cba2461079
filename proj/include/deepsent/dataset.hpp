#pragma once

// Post ingestion, emotion labelling, the English/image filters, class priors
// and the stratified train/test split.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "deepsent/embeddings.hpp"
#include "deepsent/image.hpp"

namespace deepsent {

/// The 15 emotion tags. Indices are serialized everywhere; never reorder.
enum class Emotion : int {
  happy,
  calm,
  sad,
  scared,
  bored,
  angry,
  annoyed,
  love,
  excited,
  surprised,
  optimistic,
  amazed,
  ashamed,
  disgusted,
  pensive,
};

inline constexpr int kNumEmotions = 15;

const std::array<std::string_view, kNumEmotions>& emotion_names();
std::string_view emotion_name(Emotion e);
inline int index_of(Emotion e) { return static_cast<int>(e); }
Emotion emotion_at(int index);
/// Case-insensitive exact match against the emotion words.
std::optional<Emotion> parse_emotion(std::string_view word);

struct Post {
  std::string id;
  std::string text;
  std::vector<std::string> tags;
  std::optional<std::string> image_path;
  std::optional<std::string> feature_id;
  std::optional<std::string> timestamp;  // kept, unused
};

struct IngestIssue {
  std::size_t line = 0;
  std::string message;
};

struct IngestResult {
  std::vector<Post> posts;
  std::vector<IngestIssue> errors;
};

/// Reads JSON lines. Malformed lines are reported and skipped.
IngestResult ingest(std::istream& in);
IngestResult ingest_file(const std::filesystem::path& path);

enum class RejectReason { no_emotion, multiple_emotions };

struct Rejection {
  RejectReason reason;
  std::string detail;
};

std::string_view to_string(RejectReason reason);

using LabelResult = std::variant<Emotion, Rejection>;

/// Exactly one distinct emotion among the tags, else a rejection.
LabelResult assign_label(const Post& post);

/// Deletes every whole word equal (case-insensitively) to the label word.
std::string remove_label_word(std::string_view text, Emotion label);

struct LabeledExample {
  std::string id;
  TokenSequence tokens;  // after label-word removal, untruncated
  EmbeddedSequence text;
  ImageInput image;
  Emotion label = Emotion::happy;
};

/// Where filter_dataset finds images.
struct ImageSource {
  ImageKind kind = ImageKind::features;
  const FeatureStore* features = nullptr;
  std::filesystem::path image_root;  // base for relative image paths
  Index image_size = kDefaultImageSize;
};

/// Resolves a post's image, or nullopt if it is missing or unreadable.
std::optional<ImageInput> resolve_image(const Post& post, const ImageSource& source);

struct FilterOptions {
  Index max_len = kDefaultMaxLen;
  double min_english_fraction = 0.5;  // posts strictly below are dropped
  ImageSource images;
};

/// Per-stage drop counts; the per-emotion arrays mirror the
/// posts / text filtered / text & image filtered columns.
struct FilterReport {
  std::size_t total = 0;
  std::size_t no_emotion = 0;
  std::size_t multiple_emotions = 0;
  std::size_t non_english = 0;
  std::size_t no_image = 0;
  std::size_t retained = 0;
  std::array<std::size_t, kNumEmotions> labeled{};
  std::array<std::size_t, kNumEmotions> text_filtered{};
  std::array<std::size_t, kNumEmotions> image_filtered{};

  std::string to_json() const;
  bool operator==(const FilterReport&) const = default;
};

struct FilterResult {
  std::vector<LabeledExample> examples;
  FilterReport report;
};

FilterResult filter_dataset(const std::vector<Post>& posts, const EmbeddingTable& table,
                            const FilterOptions& options);

struct ClassPriors {
  std::array<double, kNumEmotions> counts{};
  std::array<double, kNumEmotions> proportions{};

  /// Normalizes non-negative weights with a positive total.
  static ClassPriors from_counts(const std::array<double, kNumEmotions>& counts);
};

ClassPriors class_priors(std::span<const LabeledExample> examples);
ClassPriors class_priors(std::span<const Emotion> labels);

/// Sum of squared proportions: accuracy of guessing by sampling the priors.
double prior_baseline_accuracy(const ClassPriors& priors);

/// Element-wise mean image. Works on feature vectors too (mean feature);
/// mixing the two kinds is a DomainError.
ImageInput mean_image(std::span<const LabeledExample> examples);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<std::string> warnings;
};

/// Stratified split. Per class the test count is within one of
/// n_c * test_fraction and the total is round(n * test_fraction) whenever the
/// per-class bounds allow it. Indices come back in ascending order.
SplitIndices split_indices(std::span<const Emotion> labels, double test_fraction, std::uint64_t seed);

struct Split {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> test;
  std::vector<std::string> warnings;
};

Split split(std::span<const LabeledExample> examples, double test_fraction, std::uint64_t seed);

/// Encoded dataset as written by `ingest` and read by the other commands.
struct Dataset {
  Index max_len = kDefaultMaxLen;
  Index embed_dim = 0;
  std::vector<LabeledExample> examples;
};

std::string serialize_dataset(const Dataset& dataset);
/// Throws ParseError on a truncated or corrupt buffer.
Dataset parse_dataset(std::string_view bytes);

std::vector<Emotion> labels_of(std::span<const LabeledExample> examples);

}  // namespace deepsent
