#include "deepsent/synthetic.hpp"

#include <fstream>

#include <json.hpp>

#include "deepsent/errors.hpp"
#include "deepsent/random.hpp"

namespace deepsent {

namespace {

Vector random_vector(Index dim, Rng& rng, double scale) {
  Vector v(dim);
  for (Index k = 0; k < dim; ++k) v[k] = normal(rng) * scale;
  return v;
}

std::string padded(std::size_t i) {
  std::string s = std::to_string(i);
  return std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& options) {
  const std::size_t n_classes = options.classes.size();
  if (n_classes < 1) throw ConfigError("synthetic corpus needs at least one class");
  if (!options.trigger_words.empty() && options.trigger_words.size() != n_classes) {
    throw ConfigError("synthetic corpus: one trigger word per class expected");
  }
  for (const auto& word : options.trigger_words) {
    const auto tokens = tokenize(word).tokens;
    if (tokens.size() != 1 || tokens[0] != word) {
      throw ConfigError("synthetic corpus: trigger '" + word + "' is not a single lowercase token");
    }
  }
  if (options.min_words < 1 || options.max_words < options.min_words || options.per_class < 1 ||
      options.embed_dim < 1 || options.feature_dim < 1 || options.filler_vocab < 1) {
    throw ConfigError("synthetic corpus: invalid sizes");
  }

  Rng rng(options.seed);
  SyntheticCorpus corpus;
  corpus.max_len = options.max_len;
  corpus.table = EmbeddingTable(options.embed_dim);
  const double word_scale = 1.0 / std::sqrt(static_cast<double>(options.embed_dim));

  for (std::size_t c = 0; c < n_classes; ++c) {
    corpus.trigger_words.push_back(options.trigger_words.empty()
                                       ? "cue" + std::string(emotion_name(options.classes[c]))
                                       : options.trigger_words[c]);
    corpus.table.add(corpus.trigger_words.back(), random_vector(options.embed_dim, rng, word_scale));
  }
  for (Index w = 0; w < options.filler_vocab; ++w) {
    corpus.filler_words.push_back("w" + padded(static_cast<std::size_t>(w)));
    corpus.table.add(corpus.filler_words.back(), random_vector(options.embed_dim, rng, word_scale));
  }
  for (std::size_t c = 0; c < n_classes; ++c) {
    Vector dir = random_vector(options.feature_dim, rng, 1.0);
    corpus.centroids.push_back(dir / dir.norm() * options.image_separation);
  }

  const std::size_t total = n_classes * static_cast<std::size_t>(options.per_class);
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t c = i % n_classes;
    const auto n_words = static_cast<std::size_t>(
        options.min_words + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(
                                                                    options.max_words - options.min_words + 1))));
    std::vector<std::string> words;
    for (std::size_t w = 0; w < n_words; ++w) {
      words.push_back(corpus.filler_words[uniform_index(rng, corpus.filler_words.size())]);
    }
    const std::size_t cue_class = uniform01(rng) < options.text_reliability ? c : uniform_index(rng, n_classes);
    words[uniform_index(rng, n_words)] = corpus.trigger_words[cue_class];

    Post post;
    post.id = "syn" + padded(i);
    for (std::size_t w = 0; w < words.size(); ++w) post.text += (w ? " " : "") + words[w];
    post.tags = {std::string(emotion_name(options.classes[c]))};
    post.feature_id = post.id;
    corpus.features.add(post.id, corpus.centroids[c] + random_vector(options.feature_dim, rng, options.image_noise));
    corpus.posts.push_back(std::move(post));
  }

  FilterOptions filter;
  filter.max_len = options.max_len;
  filter.images.kind = ImageKind::features;
  filter.images.features = &corpus.features;
  corpus.examples = filter_dataset(corpus.posts, corpus.table, filter).examples;
  return corpus;
}

void write_synthetic_inputs(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "posts.jsonl");
    for (const auto& p : corpus.posts) {
      nlohmann::json j = {{"id", p.id}, {"text", p.text}, {"tags", p.tags}};
      if (p.feature_id) j["feature_id"] = *p.feature_id;
      out << j.dump() << '\n';
    }
    if (!out) throw IoError("cannot write " + (dir / "posts.jsonl").string());
  }
  {
    std::ofstream out(dir / "embeddings.txt");
    write_embedding_file(corpus.table, out);
    if (!out) throw IoError("cannot write " + (dir / "embeddings.txt").string());
  }
  {
    std::ofstream out(dir / "features.txt");
    write_feature_file(corpus.features, out);
    if (!out) throw IoError("cannot write " + (dir / "features.txt").string());
  }
}

}  // namespace deepsent
