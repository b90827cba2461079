#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "deepsent/dataset.hpp"
#include "deepsent/random.hpp"

using namespace deepsent;

namespace {

IngestResult ingest_text(const std::string& text) {
  std::istringstream in(text);
  return ingest(in);
}

Post post(std::string id, std::string text, std::vector<std::string> tags, bool with_feature = true) {
  Post p;
  p.id = std::move(id);
  p.text = std::move(text);
  p.tags = std::move(tags);
  if (with_feature) p.feature_id = "f";
  return p;
}

EmbeddingTable vocab(const std::vector<std::string>& words) {
  EmbeddingTable t(2);
  for (std::size_t i = 0; i < words.size(); ++i) {
    t.add(words[i], (Vector(2) << static_cast<double>(i + 1), 1.0).finished());
  }
  return t;
}

// Published corpus statistics: posts per emotion and the share surviving text and image filtering.
const std::array<double, kNumEmotions> kCorpusPosts = {189841, 139911, 124900, 104161, 101856,
                                                       100033, 72993,  66146,  37240,  18322,
                                                       16111,  10367,  10066,  9178,   8409};
const std::array<double, kNumEmotions> kCorpusKeptShare = {0.29, 0.29, 0.15, 0.20, 0.29, 0.21, 0.10, 0.39,
                                                               0.41, 0.32, 0.36, 0.35, 0.22, 0.17, 0.34};

}  // namespace

TEST(Emotion, FixedOrder) {
  const std::vector<std::string> expected = {"happy",    "calm",      "sad",        "scared", "bored",
                                             "angry",    "annoyed",   "love",       "excited", "surprised",
                                             "optimistic", "amazed",  "ashamed",    "disgusted", "pensive"};
  for (int i = 0; i < kNumEmotions; ++i) {
    EXPECT_EQ(emotion_name(emotion_at(i)), expected[static_cast<std::size_t>(i)]);
    EXPECT_EQ(index_of(emotion_at(i)), i);
  }
  EXPECT_THROW(emotion_at(15), IndexError);
  EXPECT_EQ(parse_emotion("HaPpY"), Emotion::happy);
  EXPECT_FALSE(parse_emotion("happiness").has_value());
}

TEST(Ingest, ValidLinesInOrder) {
  const auto r = ingest_text(
      R"({"id":"1","text":"a","tags":["happy"],"feature_id":"x"})"
      "\n"
      R"({"id":"2","text":"b","tags":[],"image_path":"p.ppm","timestamp":"2017-01-01T00:00:00Z"})"
      "\n"
      R"({"id":"3","text":"c","tags":["sad"]})"
      "\n");
  ASSERT_EQ(r.posts.size(), 3u);
  EXPECT_EQ(r.posts[0].id, "1");
  EXPECT_EQ(r.posts[1].id, "2");
  EXPECT_EQ(r.posts[2].id, "3");
  EXPECT_EQ(*r.posts[1].image_path, "p.ppm");
  EXPECT_EQ(*r.posts[1].timestamp, "2017-01-01T00:00:00Z");
  EXPECT_TRUE(r.errors.empty());
}

TEST(Ingest, MissingTagsReportedAtLine) {
  const auto r = ingest_text(
      R"({"id":"1","text":"a","tags":["happy"]})"
      "\n"
      R"({"id":"2","text":"b"})"
      "\n"
      "not json\n"
      R"({"id":"1","text":"dup","tags":[]})"
      "\n");
  ASSERT_EQ(r.posts.size(), 1u);
  ASSERT_EQ(r.errors.size(), 3u);
  EXPECT_EQ(r.errors[0].line, 2u);
  EXPECT_EQ(r.errors[1].line, 3u);
  EXPECT_EQ(r.errors[2].line, 4u);
}

TEST(Ingest, LargeFileMatchesLineCountOracle) {
  Rng rng(10);
  std::ostringstream text;
  std::size_t malformed = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto kind = uniform_index(rng, 20);
    if (kind == 0) {
      text << "{broken\n";
      ++malformed;
    } else if (kind == 1) {
      text << nlohmann::json({{"id", "p" + std::to_string(i)}, {"text", "x"}}).dump() << "\n";
      ++malformed;
    } else {
      text << nlohmann::json({{"id", "p" + std::to_string(i)}, {"text", "x y"}, {"tags", {"calm"}},
                              {"feature_id", "f"}})
                  .dump()
           << "\n";
    }
  }
  const auto r = ingest_text(text.str());
  EXPECT_EQ(r.posts.size(), 10000u - malformed);
  EXPECT_EQ(r.errors.size(), malformed);
}

TEST(Ingest, UnreadableFileIsIoError) {
  EXPECT_THROW(ingest_file("/nonexistent/posts.jsonl"), IoError);
}

TEST(AssignLabel, Examples) {
  EXPECT_EQ(std::get<Emotion>(assign_label(post("1", "", {"happy", "travel"}))), Emotion::happy);
  EXPECT_EQ(std::get<Rejection>(assign_label(post("1", "", {"happy", "sad"}))).reason,
            RejectReason::multiple_emotions);
  EXPECT_EQ(std::get<Rejection>(assign_label(post("1", "", {"vacation"}))).reason, RejectReason::no_emotion);
  EXPECT_EQ(std::get<Rejection>(assign_label(post("1", "", {"#happy"}))).reason, RejectReason::no_emotion);
  EXPECT_EQ(std::get<Emotion>(assign_label(post("1", "", {"HaPpY"}))), Emotion::happy);
  EXPECT_EQ(std::get<Emotion>(assign_label(post("1", "", {"Happy", "HAPPY"}))), Emotion::happy);
  EXPECT_EQ(to_string(RejectReason::multiple_emotions), "multiple-emotions");
}

TEST(RemoveLabelWord, Examples) {
  EXPECT_EQ(remove_label_word("so happy today", Emotion::happy), "so today");
  EXPECT_EQ(remove_label_word("Happy HAPPY joy", Emotion::happy), "joy");
  EXPECT_EQ(remove_label_word("happiness is real", Emotion::happy), "happiness is real");
}

TEST(RemoveLabelWord, OtherTokensUntouched) {
  const std::string text = "I am sad, so sad! #sad but not saddened";
  const std::string out = remove_label_word(text, Emotion::sad);
  auto others = [](const std::vector<std::string>& t) {
    std::vector<std::string> out;
    std::copy_if(t.begin(), t.end(), std::back_inserter(out), [](const std::string& w) { return w != "sad"; });
    return out;
  };
  EXPECT_EQ(tokenize(out).tokens, others(tokenize(text).tokens));
}

TEST(FilterDataset, StagesAndReport) {
  const EmbeddingTable table = vocab({"so", "today", "nice", "day", "great"});
  FeatureStore store;
  store.add("f", Vector::Ones(3));
  FilterOptions opt;
  opt.images.features = &store;

  std::vector<Post> posts = {
      post("keep", "so happy today", {"happy"}),
      post("none", "nice day", {"vacation"}),
      post("multi", "nice day", {"happy", "sad"}),
      post("foreign", "xx yy zz nice", {"calm"}),
      post("half", "xx yy nice day", {"calm"}),
      post("noimg", "nice day", {"sad"}, false),
  };
  Post missing = post("badimg", "nice day", {"sad"});
  missing.feature_id = "absent";
  posts.push_back(missing);

  const FilterResult r = filter_dataset(posts, table, opt);
  ASSERT_EQ(r.examples.size(), 2u);
  EXPECT_EQ(r.examples[0].id, "keep");
  EXPECT_EQ(r.examples[0].tokens.tokens, (std::vector<std::string>{"so", "today"}));
  EXPECT_EQ(r.examples[1].id, "half");  // exactly 50% English is kept
  EXPECT_EQ(r.report.total, 7u);
  EXPECT_EQ(r.report.no_emotion, 1u);
  EXPECT_EQ(r.report.multiple_emotions, 1u);
  EXPECT_EQ(r.report.non_english, 1u);
  EXPECT_EQ(r.report.no_image, 2u);
  EXPECT_EQ(r.report.retained, 2u);
  EXPECT_EQ(r.report.labeled[index_of(Emotion::sad)], 2u);
  EXPECT_EQ(r.report.text_filtered[index_of(Emotion::sad)], 2u);
  EXPECT_EQ(r.report.image_filtered[index_of(Emotion::sad)], 0u);

  const auto j = nlohmann::json::parse(r.report.to_json());
  EXPECT_EQ(j.at("retained"), 2);
  EXPECT_EQ(j.at("dropped_no_image"), 2);
}

TEST(FilterDataset, PlantedDropCausesMatchReport) {
  const EmbeddingTable table = vocab({"alpha", "beta", "gamma", "delta"});
  FeatureStore store;
  store.add("f", Vector::Ones(2));
  FilterOptions opt;
  opt.images.features = &store;

  Rng rng(21);
  std::vector<Post> posts;
  std::size_t planned[5] = {};  // no emotion, multiple, non-English, no image, kept
  std::array<std::size_t, kNumEmotions> kept_per{};
  for (int i = 0; i < 1000; ++i) {
    const auto cause = uniform_index(rng, 5);
    const Emotion e = emotion_at(static_cast<int>(uniform_index(rng, kNumEmotions)));
    const std::string tag(emotion_name(e));
    ++planned[cause];
    const std::string id = "p" + std::to_string(i);
    switch (cause) {
      case 0: posts.push_back(post(id, "alpha beta", {"holiday"})); break;
      case 1: posts.push_back(post(id, "alpha beta", {tag, e == Emotion::happy ? "sad" : "happy"})); break;
      case 2: posts.push_back(post(id, "qq rr alpha", {tag})); break;
      case 3: posts.push_back(post(id, "alpha gamma", {tag}, false)); break;
      default:
        posts.push_back(post(id, tag + " alpha delta", {tag}));
        ++kept_per[static_cast<std::size_t>(index_of(e))];
    }
  }
  const FilterResult r = filter_dataset(posts, table, opt);
  EXPECT_EQ(r.report.total, 1000u);
  EXPECT_EQ(r.report.no_emotion, planned[0]);
  EXPECT_EQ(r.report.multiple_emotions, planned[1]);
  EXPECT_EQ(r.report.non_english, planned[2]);
  EXPECT_EQ(r.report.no_image, planned[3]);
  EXPECT_EQ(r.report.retained, planned[4]);
  EXPECT_EQ(r.report.image_filtered, kept_per);
  for (const auto& ex : r.examples) EXPECT_EQ(ex.tokens.tokens, (std::vector<std::string>{"alpha", "delta"}));
}

TEST(FilterDataset, IdempotentOnOwnOutput) {
  const EmbeddingTable table = vocab({"nice", "day", "so"});
  FeatureStore store;
  store.add("f", Vector::Ones(2));
  FilterOptions opt;
  opt.images.features = &store;
  std::vector<Post> posts = {post("a", "so happy nice day", {"happy"}), post("b", "nice day", {"sad"}),
                             post("c", "zz", {"sad"})};
  const FilterResult first = filter_dataset(posts, table, opt);
  std::vector<Post> again;
  for (const auto& ex : first.examples) {
    std::string text;
    for (const auto& t : ex.tokens.tokens) text += (text.empty() ? "" : " ") + t;
    again.push_back(post(ex.id, text, {std::string(emotion_name(ex.label))}));
  }
  const FilterResult second = filter_dataset(again, table, opt);
  ASSERT_EQ(second.examples.size(), first.examples.size());
  for (std::size_t i = 0; i < first.examples.size(); ++i) {
    EXPECT_EQ(second.examples[i].tokens.tokens, first.examples[i].tokens.tokens);
    EXPECT_EQ(second.examples[i].text.vectors, first.examples[i].text.vectors);
  }
}

TEST(ClassPriors, Examples) {
  std::vector<Emotion> labels(10, Emotion::happy);
  labels.insert(labels.end(), 10, Emotion::sad);
  const ClassPriors p = class_priors(labels);
  EXPECT_EQ(p.proportions[0], 0.5);
  EXPECT_EQ(p.proportions[2], 0.5);
  const ClassPriors one = class_priors(std::vector<Emotion>(4, Emotion::calm));
  EXPECT_EQ(one.proportions[1], 1.0);
  EXPECT_THROW(class_priors(std::vector<Emotion>{}), DomainError);
}

TEST(ClassPriors, PublishedFilteredCounts) {
  std::array<double, kNumEmotions> counts{};
  for (int i = 0; i < kNumEmotions; ++i) {
    counts[static_cast<std::size_t>(i)] =
        kCorpusPosts[static_cast<std::size_t>(i)] * kCorpusKeptShare[static_cast<std::size_t>(i)];
  }
  const ClassPriors p = ClassPriors::from_counts(counts);
  double sum = 0;
  for (double v : p.proportions) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  // Published percentages are rounded, so Happy is only known to ~0.002.
  EXPECT_NEAR(p.proportions[0], 0.214, 0.002);
  EXPECT_NEAR(prior_baseline_accuracy(p), 0.11, 0.01);
}

TEST(PriorBaseline, Examples) {
  std::array<double, kNumEmotions> uniform;
  uniform.fill(1.0);
  EXPECT_NEAR(prior_baseline_accuracy(ClassPriors::from_counts(uniform)), 1.0 / 15.0, 1e-15);
  std::array<double, kNumEmotions> single{};
  single[4] = 7;
  EXPECT_EQ(prior_baseline_accuracy(ClassPriors::from_counts(single)), 1.0);
}

TEST(PriorBaseline, BoundedAndMinimalAtUniform) {
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    std::array<double, kNumEmotions> c;
    for (auto& v : c) v = 1.0 + uniform01(rng) * 100.0;
    const double b = prior_baseline_accuracy(ClassPriors::from_counts(c));
    EXPECT_GE(b, 1.0 / 15.0 - 1e-15);
    EXPECT_LE(b, 1.0);
  }
}

TEST(MeanImage, Examples) {
  LabeledExample a, b;
  Tensor zero({2, 2, 3}), one({2, 2, 3});
  one.data.setOnes();
  a.image = zero;
  b.image = one;
  std::vector<LabeledExample> single = {b};
  EXPECT_EQ(std::get<Tensor>(mean_image(single)), one);
  std::vector<LabeledExample> both = {a, b};
  const Tensor m = std::get<Tensor>(mean_image(both));
  for (Index i = 0; i < m.size(); ++i) EXPECT_EQ(m.data[i], 0.5);
}

TEST(MeanImage, MatchesAccumulateAndDivide) {
  Rng rng(9);
  std::vector<LabeledExample> ex(10);
  std::vector<double> acc(4 * 5 * 3, 0.0);
  for (auto& e : ex) {
    Tensor t({4, 5, 3});
    for (Index i = 0; i < t.size(); ++i) {
      t.data[i] = uniform01(rng);
      acc[static_cast<std::size_t>(i)] += t.data[i];
    }
    e.image = t;
  }
  const Tensor m = std::get<Tensor>(mean_image(ex));
  for (Index i = 0; i < m.size(); ++i) EXPECT_NEAR(m.data[i], acc[static_cast<std::size_t>(i)] / 10.0, 1e-12);
}

TEST(MeanImage, MixedKindsRejected) {
  LabeledExample a, b;
  a.image = Tensor({2, 2, 3});
  b.image = Vector::Zero(3);
  std::vector<LabeledExample> mixed = {a, b};
  EXPECT_THROW(mean_image(mixed), DomainError);
  EXPECT_THROW(mean_image(std::vector<LabeledExample>{}), DomainError);
}

TEST(MeanImage, FeatureVectorsAveraged) {
  LabeledExample a, b;
  a.image = (Vector(2) << 1, 3).finished();
  b.image = (Vector(2) << 3, 5).finished();
  std::vector<LabeledExample> both = {a, b};
  EXPECT_EQ(std::get<Vector>(mean_image(both)), (Vector(2) << 2, 4).finished());
}

TEST(Split, EightyTwentyRepeatable) {
  std::vector<Emotion> labels;
  for (int i = 0; i < 100; ++i) labels.push_back(emotion_at(i % 4));
  const SplitIndices a = split_indices(labels, 0.2, 42);
  const SplitIndices b = split_indices(labels, 0.2, 42);
  EXPECT_EQ(a.train.size(), 80u);
  EXPECT_EQ(a.test.size(), 20u);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(split_indices(labels, 0.2, 43).test, a.test);
}

TEST(Split, StratifiedTwoPerClass) {
  std::vector<Emotion> labels;
  for (int c = 0; c < 5; ++c) labels.insert(labels.end(), 10, emotion_at(c));
  const SplitIndices s = split_indices(labels, 0.2, 1);
  std::array<int, kNumEmotions> per{};
  for (auto i : s.test) ++per[static_cast<std::size_t>(index_of(labels[i]))];
  for (int c = 0; c < 5; ++c) EXPECT_EQ(per[static_cast<std::size_t>(c)], 2);
}

TEST(Split, PartitionPropertyOnRandomLabels) {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Emotion> labels;
    const auto n = 1 + uniform_index(rng, 200);
    for (std::uint64_t i = 0; i < n; ++i) labels.push_back(emotion_at(static_cast<int>(uniform_index(rng, 6))));
    const double f = 0.05 + 0.9 * uniform01(rng);
    const SplitIndices s = split_indices(labels, f, trial);
    std::vector<std::size_t> all = s.train;
    all.insert(all.end(), s.test.begin(), s.test.end());
    std::sort(all.begin(), all.end());
    ASSERT_EQ(all.size(), labels.size());
    for (std::size_t i = 0; i < all.size(); ++i) ASSERT_EQ(all[i], i);
    std::array<double, kNumEmotions> total{}, test{};
    for (auto i : all) ++total[static_cast<std::size_t>(index_of(labels[i]))];
    for (auto i : s.test) ++test[static_cast<std::size_t>(index_of(labels[i]))];
    for (int c = 0; c < kNumEmotions; ++c) {
      const auto ci = static_cast<std::size_t>(c);
      if (total[ci] >= 2) {
        EXPECT_LE(std::abs(test[ci] - total[ci] * f), 1.0 + 1e-9);
      }
      if (total[ci] == 1) {
        EXPECT_EQ(test[ci], 0.0);
      }
    }
  }
}

TEST(Split, SingletonClassWarnsAndStaysInTrain) {
  std::vector<Emotion> labels(9, Emotion::happy);
  labels.push_back(Emotion::pensive);
  const SplitIndices s = split_indices(labels, 0.3, 3);
  EXPECT_EQ(s.warnings.size(), 1u);
  EXPECT_NE(std::find(s.train.begin(), s.train.end(), 9u), s.train.end());
  EXPECT_THROW(split_indices(labels, 0.0, 1), DomainError);
  EXPECT_THROW(split_indices(labels, 1.0, 1), DomainError);
}

TEST(Split, ExamplesUnionMatchesById) {
  std::vector<LabeledExample> ex(30);
  for (int i = 0; i < 30; ++i) {
    ex[static_cast<std::size_t>(i)].id = "e" + std::to_string(i);
    ex[static_cast<std::size_t>(i)].label = emotion_at(i % 3);
  }
  const Split s = split(ex, 0.2, 9);
  std::set<std::string> ids;
  for (const auto& e : s.train) ids.insert(e.id);
  for (const auto& e : s.test) EXPECT_TRUE(ids.insert(e.id).second);
  EXPECT_EQ(ids.size(), 30u);
}

TEST(DatasetFile, RoundTripIsExact) {
  Rng rng(3);
  Dataset ds;
  ds.max_len = 4;
  ds.embed_dim = 3;
  for (int i = 0; i < 12; ++i) {
    LabeledExample e;
    e.id = "x" + std::to_string(i);
    e.label = emotion_at(i % kNumEmotions);
    e.tokens.tokens = {"a", "b\xC3\xA9"};
    e.tokens.source_length = 7;
    e.text.vectors = Matrix::Random(4, 3);
    e.text.valid_length = 2;
    if (i % 2) {
      Tensor t({2, 2, 3});
      for (Index k = 0; k < t.size(); ++k) t.data[k] = uniform01(rng);
      e.image = t;
    } else {
      e.image = Vector::Random(5);
    }
    ds.examples.push_back(e);
  }
  const std::string bytes = serialize_dataset(ds);
  const Dataset back = parse_dataset(bytes);
  EXPECT_EQ(serialize_dataset(back), bytes);
  ASSERT_EQ(back.examples.size(), ds.examples.size());
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    EXPECT_EQ(back.examples[i].id, ds.examples[i].id);
    EXPECT_EQ(back.examples[i].text.vectors, ds.examples[i].text.vectors);
    EXPECT_EQ(back.examples[i].tokens.source_length, 7u);
    EXPECT_EQ(back.examples[i].image.index(), ds.examples[i].image.index());
  }
}

TEST(DatasetFile, CorruptionDetected) {
  Dataset ds;
  ds.max_len = 2;
  ds.embed_dim = 1;
  LabeledExample e;
  e.id = "a";
  e.text.vectors = Matrix::Ones(2, 1);
  e.image = Vector::Ones(2);
  ds.examples.push_back(e);
  std::string bytes = serialize_dataset(ds);
  EXPECT_THROW(parse_dataset(bytes.substr(0, bytes.size() - 3)), ParseError);
  bytes[bytes.size() / 2] ^= 0x40;
  EXPECT_THROW(parse_dataset(bytes), ParseError);
  EXPECT_THROW(parse_dataset("nope"), ParseError);
}
