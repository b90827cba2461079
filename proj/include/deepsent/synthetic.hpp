#pragma once

// Seeded multimodal toy corpus: each class has a trigger word and a feature
// centroid, so both modalities carry a learnable signal. Used by gradcheck,
// the demo pipeline and the test suites.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deepsent/dataset.hpp"

namespace deepsent {

struct SyntheticOptions {
  std::vector<Emotion> classes = {Emotion::happy, Emotion::sad, Emotion::angry, Emotion::calm};
  /// One single-token word per class; defaults to "cue<emotion>".
  std::vector<std::string> trigger_words;
  Index per_class = 16;
  Index embed_dim = 8;
  Index feature_dim = 16;
  Index max_len = 8;
  Index filler_vocab = 40;
  Index min_words = 3;
  Index max_words = 6;
  /// Probability that a post carries its own class's trigger; otherwise it
  /// carries a random class's trigger.
  double text_reliability = 1.0;
  /// Distance of class centroids from the origin, in noise units.
  double image_separation = 3.0;
  /// Standard deviation of the per-post feature noise.
  double image_noise = 1.0;
  std::uint64_t seed = 1;
};

struct SyntheticCorpus {
  EmbeddingTable table;
  FeatureStore features;
  std::vector<Post> posts;  // tag = class emotion, feature_id set
  std::vector<LabeledExample> examples;
  std::vector<std::string> trigger_words;
  std::vector<std::string> filler_words;
  std::vector<Vector> centroids;  // per class
  Index max_len = 0;
};

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& options);

/// Writes posts.jsonl, embeddings.txt and features.txt into `dir`.
void write_synthetic_inputs(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

}  // namespace deepsent
