#pragma once

// Trained fixtures shared by the unit tests and the acceptance runner.

#include <string>
#include <vector>

#include "deepsent/analysis.hpp"
#include "deepsent/synthetic.hpp"

namespace fixture {

using namespace deepsent;

struct ProbeFixture {
  SyntheticCorpus corpus;
  std::vector<LabeledExample> examples;
  std::vector<WordCount> ranking;
  Vector mean_img;
  DeepSentimentModel model;
};

/// Text-only signal: every post shares one image, each filler word also
/// appears alone once per class, and trigger c is the cue word of class c.
/// Examples are encoded directly so a trigger equal to its emotion name is
/// not stripped as a label word.
inline ProbeFixture make_probe_fixture(std::vector<std::string> triggers, std::uint64_t seed) {
  SyntheticOptions opt;
  opt.trigger_words = std::move(triggers);
  opt.per_class = 48;
  opt.filler_vocab = 12;
  opt.min_words = 1;
  opt.max_words = 3;
  opt.image_separation = 0.0;
  opt.image_noise = 0.0;
  opt.seed = seed;
  SyntheticCorpus c = make_synthetic_corpus(opt);

  std::vector<LabeledExample> examples;
  std::vector<TokenSequence> texts;
  for (const Post& p : c.posts) {
    LabeledExample ex;
    ex.id = p.id;
    ex.label = std::get<Emotion>(assign_label(p));
    ex.tokens = tokenize(p.text);
    ex.text = encode_text(ex.tokens, c.table, c.max_len);
    ex.image = *c.features.find(*p.feature_id);
    texts.push_back(ex.tokens);
    examples.push_back(ex);
  }
  for (const auto& filler : c.filler_words) {
    for (Emotion e : opt.classes) {
      LabeledExample ex = examples.front();
      ex.id = filler + "-" + std::string(emotion_name(e));
      ex.label = e;
      ex.tokens = tokenize(filler);
      ex.text = encode_text(ex.tokens, c.table, c.max_len);
      examples.push_back(ex);
    }
  }

  ModelConfig cfg;
  cfg.embed_dim = opt.embed_dim;
  cfg.hidden_dim = 12;
  cfg.fusion_dim = 12;
  cfg.max_len = c.max_len;
  cfg.image.feature_dim = opt.feature_dim;
  cfg.seed = seed;
  DeepSentimentModel model(cfg);
  TrainConfig tc;
  tc.learning_rate = 0.01;
  tc.epochs = 150;
  tc.batch_size = 8;
  tc.seed = seed;
  train(model, examples, tc);

  const Vector mean_img = std::get<Vector>(mean_image(examples));
  auto ranking = word_frequencies(texts);
  return {std::move(c), std::move(examples), std::move(ranking), mean_img, std::move(model)};
}

}  // namespace fixture
