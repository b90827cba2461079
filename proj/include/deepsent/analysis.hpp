#pragma once

// Emotion-structure analyses on model posteriors: single-word probing,
// correlation + average-linkage clustering, PCA and correlation of component
// scores with external valence/arousal ratings.

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deepsent/model.hpp"

namespace deepsent {

// ---------------------------------------------------------------------------
// Word probe

struct WordScore {
  std::string word;
  double score = 0.0;
  std::size_t frequency_rank = 0;  // 0-based position in the ranking
  bool out_of_vocabulary = false;
};

struct TopWords {
  std::array<std::vector<WordScore>, kNumEmotions> per_emotion;
  std::string to_json() const;
};

/// Scores each of the `n_words` most frequent words as a one-word post paired
/// with `mean_img`, then keeps the k best per emotion. Ties go to the better
/// frequency rank.
TopWords top_words(const DeepSentimentModel& model, const EmbeddingTable& table, const ImageInput& mean_img,
                   std::span<const WordCount> word_ranking, std::size_t n_words = 1000, std::size_t k = 10);

// ---------------------------------------------------------------------------
// Posterior structure

/// n x 15, row i = forward(example i).
Matrix posterior_matrix(const DeepSentimentModel& model, std::span<const LabeledExample> dataset);

struct CorrelationResult {
  Matrix matrix;
  std::vector<Index> zero_variance_columns;
  std::vector<std::string> warnings;
};

/// Pearson correlation of columns (two-pass). Zero-variance columns get a
/// unit diagonal and zero off-diagonal entries.
CorrelationResult correlation_matrix(const Matrix& posteriors);

/// d = 1 - rho, exact zero diagonal.
Matrix to_distance(const Matrix& correlation);

enum class Linkage { average };
std::string to_string(Linkage linkage);
Linkage parse_linkage(const std::string& text);

struct Merge {
  Index left = 0;  // smaller cluster id
  Index right = 0;
  double height = 0.0;
  Index id = 0;    // id of the merged cluster (n, n+1, ...)
  Index size = 0;  // leaves under the merged cluster
};

struct Dendrogram {
  Index leaves = 0;
  std::vector<Merge> merges;
  std::string to_json(std::span<const std::string> labels = {}) const;
};

/// Agglomerative clustering with average (UPGMA) linkage. Among equal
/// minimum distances the lexicographically smallest (id, id) pair merges.
Dendrogram hierarchical_cluster(const Matrix& distance, Linkage linkage = Linkage::average);

/// Leaf order of a dendrogram (left subtree first), for plotting.
std::vector<Index> leaf_order(const Dendrogram& dendrogram);

// ---------------------------------------------------------------------------
// PCA

struct SymmetricEigen {
  Vector values;   // descending
  Matrix vectors;  // columns match values
  int sweeps = 0;
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops
/// below `tolerance` times max(1, ||A||_F).
SymmetricEigen jacobi_eigen(const Matrix& symmetric, double tolerance = 1e-12, int max_sweeps = 100);

struct PcaResult {
  Matrix loadings;           // p x C, orthonormal columns
  Vector eigenvalues;        // all p, descending, clamped at 0
  Vector explained_ratio;    // all p, sums to 1
  Vector means;              // p
  Vector scales;             // p; ones unless standardized
  Matrix scores;             // n x C
  bool standardized = false;

  Index components() const { return loadings.cols(); }
};

/// Covariance PCA (divide by n-1). `standardize` switches to correlation
/// PCA. Each loading column's largest-magnitude entry is made positive.
PcaResult pca(const Matrix& data, Index n_components, bool standardize = false);

/// (data - means) / scales x loadings.
Matrix project(const Matrix& data, const PcaResult& fit);

// ---------------------------------------------------------------------------
// Valence / arousal ratings

struct Rating {
  std::string item_id;
  double valence = 0.0;
  double arousal = 0.0;
};

struct ScaleRatings {
  std::vector<Rating> items;
  const Rating* find(const std::string& id) const;
};

/// CSV with header `item_id,valence,arousal`.
ScaleRatings parse_ratings_csv(std::istream& in);
ScaleRatings load_ratings_csv(const std::string& path);

/// Pearson r, or nullopt when either side has zero variance.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

struct ScaleCorrelation {
  std::optional<double> valence;
  std::optional<double> arousal;
};

/// One row per score column. Rows of `scores` align with `ratings`.
std::vector<ScaleCorrelation> scale_correlations(const Matrix& scores, std::span<const Rating> ratings);

std::string scale_correlations_csv(std::span<const ScaleCorrelation> table);

struct OasisItem {
  std::string id;
  std::string label;  // used verbatim as the post text
  ImageInput image;
};

struct OasisResult {
  Matrix posteriors;
  Matrix scores;
  std::vector<std::string> oov_items;  // ids of items whose label is not in the table
};

/// Runs each item with its label as the whole text, then projects.
OasisResult oasis_protocol(const DeepSentimentModel& model, const EmbeddingTable& table,
                           std::span<const OasisItem> items, const PcaResult& fit);

// ---------------------------------------------------------------------------
// CSV helpers

/// 15x15 with a header row of emotion names and a leading name column.
std::string correlation_csv(const Matrix& correlation);
std::string pca_csv(const PcaResult& fit);
std::string scores_csv(const Matrix& scores, std::span<const std::string> ids);

}  // namespace deepsent
