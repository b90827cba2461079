#include <gtest/gtest.h>

#include <algorithm>

#include "deepsent/gradcheck.hpp"
#include "deepsent/synthetic.hpp"

using namespace deepsent;

TEST(Synthetic, CorpusCarriesTriggersThroughFiltering) {
  const SyntheticCorpus c = make_synthetic_corpus({});
  ASSERT_EQ(c.examples.size(), 64u);
  ASSERT_EQ(c.trigger_words.size(), 4u);
  EXPECT_EQ(c.trigger_words[0], "cuehappy");
  const std::vector<Emotion> classes = SyntheticOptions{}.classes;
  for (const auto& ex : c.examples) {
    const auto k = static_cast<std::size_t>(std::find(classes.begin(), classes.end(), ex.label) - classes.begin());
    ASSERT_LT(k, classes.size());
    const auto& t = ex.tokens.tokens;
    EXPECT_NE(std::find(t.begin(), t.end(), c.trigger_words[k]), t.end()) << ex.id;
  }
}

TEST(Synthetic, SeededAndValidated) {
  SyntheticOptions a;
  a.seed = 4;
  EXPECT_EQ(make_synthetic_corpus(a).posts[7].text, make_synthetic_corpus(a).posts[7].text);
  SyntheticOptions bad;
  bad.trigger_words = {"two words", "b", "c", "d"};
  EXPECT_THROW(make_synthetic_corpus(bad), ConfigError);
  bad.trigger_words = {"a", "b"};
  EXPECT_THROW(make_synthetic_corpus(bad), ConfigError);
}

TEST(Gradcheck, EveryComponentOnceAndPassing) {
  const GradcheckReport r = run_gradcheck();
  std::vector<std::string> names;
  for (const auto& row : r.rows) names.push_back(row.component);
  EXPECT_EQ(names, gradcheck_components());
  EXPECT_TRUE(r.passed());
  EXPECT_LT(r.worst().result.max_rel_error, kGradcheckTolerance);
}

TEST(Gradcheck, CorruptedComponentIsCaught) {
  GradcheckOptions opt;
  opt.corrupt_component = "lstm";
  opt.corrupt_scale = 1.5;
  const GradcheckReport r = run_gradcheck(opt);
  EXPECT_FALSE(r.passed());
  EXPECT_EQ(r.worst().component, "lstm");
  EXPECT_EQ(r.worst().result.worst_parameter.rfind("lstm.", 0), 0u);
}
