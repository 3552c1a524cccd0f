#include "prunekit/dataset.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace prunekit;

namespace {

std::string golden_path(const std::string& name) {
  return std::string(PRUNEKIT_GOLDEN_DIR) + "/" + name;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  EXPECT_TRUE(is.good()) << path;
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::string temp_file(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

McExample golden_target() {
  McExample e;
  e.id = "golden-001";
  e.question = "pick B7?";
  e.choices = {"3", "7", "0", "9", "5"};
  e.label = 1;
  return e;
}

}  // namespace

TEST(Tokenizer, RoundTripOverSupportedAlphabet) {
  Rng rng(1);
  std::string alphabet = "\n";
  for (char c = 32; c <= 126; ++c) alphabet.push_back(c);
  for (int trial = 0; trial < 50; ++trial) {
    std::string s;
    const size_t len = rng.uniform_index(60);
    for (size_t i = 0; i < len; ++i) s.push_back(alphabet[rng.uniform_index(alphabet.size())]);
    EXPECT_EQ(ByteTokenizer::decode(ByteTokenizer::encode(s)), s);
  }
}

TEST(Tokenizer, UnsupportedByteRejected) {
  EXPECT_THROW(ByteTokenizer::encode(std::string("ab\tcd")), InputError);
  EXPECT_THROW(ByteTokenizer::encode(std::string("caf\xc3\xa9")), InputError);
}

TEST(Tokenizer, OptionLettersAreDistinctSingleTokens) {
  std::set<int> ids;
  for (int i = 0; i < McExample::kNumChoices; ++i)
    ids.insert(ByteTokenizer::encode_char(McExample::letter(i)));
  EXPECT_EQ(ids.size(), 5u);
  for (int id : ids) EXPECT_LT(id, ByteTokenizer::kVocabSize);
}

TEST(RenderPrompt, Deterministic) {
  const PromptTemplate tpl = default_template(42);
  const McExample e = golden_target();
  const RenderedPrompt a = render_prompt(tpl, e, 128);
  const RenderedPrompt b = render_prompt(tpl, e, 128);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.choice_token_ids, b.choice_token_ids);
}

TEST(RenderPrompt, MatchesGoldenFile) {
  const PromptTemplate tpl = default_template(42);
  const std::string text = tpl.header_text() + render_qa_text(golden_target(), false);
  EXPECT_EQ(text, read_file(golden_path("prompt.golden.txt")));
  // and the token stream decodes back to the same bytes
  const RenderedPrompt rp = render_prompt(tpl, golden_target(), 128);
  EXPECT_EQ(ByteTokenizer::decode(rp.tokens), text);
}

TEST(RenderPrompt, ChoiceTokenIds) {
  const PromptTemplate tpl = default_template(42);
  const RenderedPrompt rp = render_prompt(tpl, golden_target(), 128);
  EXPECT_EQ(rp.choice_token_ids, (std::vector<int>{33, 34, 35, 36, 37}));  // 'A'..'E' - 32
}

TEST(RenderPrompt, OverflowRejected) {
  const PromptTemplate tpl = default_template(42);
  EXPECT_THROW(render_prompt(tpl, golden_target(), 32), InputError);
}

TEST(Subsample, FullFractionIsIdentity) {
  const McDataset ds = generate_synthetic(40, 5, 5, 3);
  const McDataset sub = subsample(ds, 1.0, 9);
  ASSERT_EQ(sub.train.size(), ds.train.size());
  for (size_t i = 0; i < ds.train.size(); ++i) EXPECT_EQ(sub.train[i].id, ds.train[i].id);
}

TEST(Subsample, FloorRule) {
  const McDataset ds = generate_synthetic(100, 5, 5, 3);
  EXPECT_EQ(subsample(ds, 0.25, 1).train.size(), 25u);
  EXPECT_EQ(subsample(ds, 0.999, 1).train.size(), 99u);
}

TEST(Subsample, NestingUnderSameSeed) {
  const McDataset ds = generate_synthetic(80, 5, 5, 3);
  for (uint64_t seed : {1ull, 5ull, 99ull}) {
    const McDataset s25 = subsample(ds, 0.25, seed);
    const McDataset s50 = subsample(ds, 0.5, seed);
    std::set<std::string> ids50;
    for (const auto& e : s50.train) ids50.insert(e.id);
    for (const auto& e : s25.train)
      EXPECT_TRUE(ids50.count(e.id)) << e.id << " missing from the 50% sample";
  }
}

TEST(Subsample, EvalPartitionsUntouched) {
  const McDataset ds = generate_synthetic(40, 7, 9, 3);
  const McDataset sub = subsample(ds, 0.5, 2);
  EXPECT_EQ(sub.validation.size(), 7u);
  EXPECT_EQ(sub.test.size(), 9u);
}

TEST(Subsample, ParameterChecks) {
  const McDataset ds = generate_synthetic(10, 2, 2, 3);
  EXPECT_THROW(subsample(ds, 0.0, 1), ParameterError);
  EXPECT_THROW(subsample(ds, 1.5, 1), ParameterError);
  EXPECT_THROW(subsample(ds, 0.05, 1), ParameterError);  // floor(0.5) = 0 examples
}

TEST(Synthetic, LabelBalanceAtScale) {
  const McDataset ds = generate_synthetic(5000, 100, 100, 11);
  size_t counts[McExample::kNumChoices] = {};
  for (const auto& e : ds.train) ++counts[e.label];
  for (size_t c : counts) {
    const double frac = static_cast<double>(c) / 5000.0;
    EXPECT_NEAR(frac, 0.20, 0.02);
  }
}

TEST(Synthetic, ExactlyOneCorrectChoice) {
  const McDataset ds = generate_synthetic(200, 10, 10, 17);
  for (const auto& e : ds.train) {
    // question shape "pick <L><d>?": L is the labeled slot's letter and the
    // content digit d appears in exactly one choice text, the labeled one
    ASSERT_EQ(e.question.size(), 8u);
    EXPECT_EQ(e.question[5], McExample::letter(e.label));
    const char content = e.question[6];
    int matches = 0;
    for (const auto& c : e.choices)
      if (c.size() == 1 && c[0] == content) ++matches;
    EXPECT_EQ(matches, 1);
    EXPECT_EQ(e.choices[e.label][0], content);
  }
}

TEST(Synthetic, FingerprintStableAcrossRuns) {
  const McDataset a = generate_synthetic(50, 10, 10, 123);
  const McDataset b = generate_synthetic(50, 10, 10, 123);
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  const McDataset c = generate_synthetic(50, 10, 10, 124);
  EXPECT_NE(a.fingerprint(), c.fingerprint());
}

// Sanity floor: predicting the most frequent training label scores about
// chance on the balanced test partition.
TEST(Synthetic, MajorityClassBaselineNearChance) {
  const McDataset ds = generate_synthetic(1000, 100, 1000, 5);
  size_t counts[McExample::kNumChoices] = {};
  for (const auto& e : ds.train) ++counts[e.label];
  int majority = 0;
  for (int i = 1; i < McExample::kNumChoices; ++i)
    if (counts[i] > counts[static_cast<size_t>(majority)]) majority = i;
  size_t hits = 0;
  for (const auto& e : ds.test)
    if (e.label == majority) ++hits;
  EXPECT_NEAR(static_cast<double>(hits) / 1000.0, 0.20, 0.02);
}

TEST(Synthetic, ExemplarsExcludedFromAllPartitions) {
  const McDataset ds = generate_synthetic(100, 20, 20, 7);
  for (uint64_t tseed : {7ull, 42ull, 1ull}) {
    const PromptTemplate tpl = default_template(tseed);
    EXPECT_FALSE(ds.contains_id(tpl.exemplar_a.id));
    EXPECT_FALSE(ds.contains_id(tpl.exemplar_b.id));
  }
}

TEST(Dataset, DuplicateIdsRejected) {
  McDataset ds = generate_synthetic(4, 2, 2, 1);
  ds.test.push_back(ds.train[0]);
  EXPECT_THROW(ds.validate(), InputError);
}

TEST(LoadExternal, SingleLineFile) {
  const std::string path = temp_file("pk_one_line.jsonl");
  {
    std::ofstream os(path);
    os << R"({"id": "x1", "split": "train", "question": "Pick A.", "choices": [)"
       << R"({"letter": "A", "text": "yes"}, {"letter": "B", "text": "no"}, )"
       << R"({"letter": "C", "text": "maybe"}, {"letter": "D", "text": "later"}, )"
       << R"({"letter": "E", "text": "never"}], "answer": "A"})"
       << "\n";
  }
  const McDataset ds = load_dataset_jsonl(path);
  EXPECT_EQ(ds.train.size(), 1u);
  EXPECT_EQ(ds.validation.size(), 0u);
  EXPECT_EQ(ds.train[0].label, 0);
  EXPECT_EQ(ds.provenance, "external");
  std::filesystem::remove(path);
}

TEST(LoadExternal, FourChoicesRejectedWithLineNumber) {
  const std::string path = temp_file("pk_bad_choices.jsonl");
  {
    std::ofstream os(path);
    os << R"({"id": "ok", "split": "train", "question": "q", "choices": [)"
       << R"({"letter": "A", "text": "a"}, {"letter": "B", "text": "b"}, )"
       << R"({"letter": "C", "text": "c"}, {"letter": "D", "text": "d"}, )"
       << R"({"letter": "E", "text": "e"}], "answer": "E"})"
       << "\n";
    os << R"({"id": "bad", "split": "train", "question": "q", "choices": [)"
       << R"({"letter": "A", "text": "a"}, {"letter": "B", "text": "b"}, )"
       << R"({"letter": "C", "text": "c"}, {"letter": "D", "text": "d"}], "answer": "A"})"
       << "\n";
  }
  try {
    load_dataset_jsonl(path);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}

TEST(LoadExternal, MalformedJsonReportsLine) {
  const std::string path = temp_file("pk_bad_json.jsonl");
  {
    std::ofstream os(path);
    os << "{not json}\n";
  }
  EXPECT_THROW(load_dataset_jsonl(path), ParseError);
  std::filesystem::remove(path);
}

TEST(LoadExternal, FixtureFingerprintFrozen) {
  const McDataset ds = load_dataset_jsonl(golden_path("fixture_dataset.jsonl"));
  EXPECT_EQ(ds.train.size(), 1u);
  EXPECT_EQ(ds.validation.size(), 1u);
  EXPECT_EQ(ds.test.size(), 1u);
  EXPECT_EQ(ds.fingerprint(), "28f5a430a0633aae");
}

TEST(SaveLoad, FingerprintStableUnderReload) {
  const McDataset ds = generate_synthetic(30, 6, 6, 77);
  const std::string path = temp_file("pk_roundtrip.jsonl");
  save_dataset_jsonl(ds, path);
  const McDataset loaded = load_dataset_jsonl(path);
  EXPECT_EQ(loaded.fingerprint(), ds.fingerprint());
  EXPECT_EQ(loaded.train.size(), ds.train.size());
  std::filesystem::remove(path);
}
