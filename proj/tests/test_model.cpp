#include "prunekit/model.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "gradcheck.hpp"
#include "prunekit/pruning.hpp"
#include "reference_forward.hpp"

using namespace prunekit;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.vocab_size = 11;
  cfg.d_model = 4;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 6;
  cfg.max_seq_len = 8;
  cfg.seed = 3;
  return cfg;
}

// Deterministic "hand-set" fill so the reference comparison does not depend
// on the init scheme.
void hand_set_weights(TransformerModel& m) {
  size_t t_idx = 0;
  for (auto& [name, tensor] : m.named_parameters()) {
    Tensor t = tensor;
    for (size_t i = 0; i < t.size(); ++i)
      t.data()[i] =
          0.4 * std::sin(0.7 * static_cast<double>(i) + 1.3 * static_cast<double>(t_idx));
    ++t_idx;
  }
}

std::vector<int> some_tokens(const ModelConfig& cfg, size_t len, uint64_t seed) {
  Rng rng(seed);
  std::vector<int> t(len);
  for (auto& v : t) v = static_cast<int>(rng.uniform_index(cfg.vocab_size));
  return t;
}

}  // namespace

TEST(ModelConfig, Validation) {
  ModelConfig cfg = tiny_config();
  cfg.n_heads = 3;  // does not divide d_model = 4
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = tiny_config();
  cfg.d_ff = 0;
  EXPECT_THROW(cfg.validate(), ParameterError);
}

TEST(Forward, MatchesStraightLineReference) {
  TransformerModel m(tiny_config());
  hand_set_weights(m);
  const auto tokens = some_tokens(tiny_config(), 7, 42);
  const Tensor logits = m.forward(nullptr, tokens);
  const pktest::Mat ref = pktest::ref_forward(m, tokens);
  ASSERT_EQ(logits.rows(), tokens.size());
  ASSERT_EQ(logits.cols(), tiny_config().vocab_size);
  for (size_t i = 0; i < logits.rows(); ++i)
    for (size_t j = 0; j < logits.cols(); ++j)
      EXPECT_NEAR(logits.at(i, j), ref[i][j], 1e-12);
}

TEST(Forward, MatchesReferenceOnDeeperModel) {
  ModelConfig cfg;
  cfg.vocab_size = 13;
  cfg.d_model = 8;
  cfg.n_layers = 3;
  cfg.n_heads = 4;
  cfg.d_ff = 10;
  cfg.max_seq_len = 12;
  cfg.seed = 9;
  TransformerModel m(cfg);
  const auto tokens = some_tokens(cfg, 12, 7);
  const Tensor logits = m.forward(nullptr, tokens);
  const pktest::Mat ref = pktest::ref_forward(m, tokens);
  for (size_t i = 0; i < logits.rows(); ++i)
    for (size_t j = 0; j < logits.cols(); ++j)
      EXPECT_NEAR(logits.at(i, j), ref[i][j], 1e-12);
}

// Causality: changing the token at position j leaves logits at positions < j
// bit-identical. Property-tested over random inputs and positions.
TEST(Forward, CausalityProbe) {
  const ModelConfig cfg = tiny_config();
  TransformerModel m(cfg);
  Rng rng(11);
  for (int trial = 0; trial < 8; ++trial) {
    auto tokens = some_tokens(cfg, 8, 100 + trial);
    const Tensor base = m.forward(nullptr, tokens);
    const size_t j = rng.uniform_index(tokens.size());
    tokens[j] = static_cast<int>((tokens[j] + 1 + rng.uniform_index(cfg.vocab_size - 1)) %
                                 cfg.vocab_size);
    const Tensor changed = m.forward(nullptr, tokens);
    for (size_t i = 0; i < j; ++i)
      for (size_t c = 0; c < cfg.vocab_size; ++c)
        EXPECT_EQ(base.at(i, c), changed.at(i, c)) << "position " << i << " changed at " << j;
  }
}

TEST(Forward, DeterministicAcrossRuns) {
  TransformerModel a(tiny_config());
  TransformerModel b(tiny_config());
  const auto tokens = some_tokens(tiny_config(), 6, 5);
  const Tensor la = a.forward(nullptr, tokens);
  const Tensor lb = b.forward(nullptr, tokens);
  for (size_t i = 0; i < la.size(); ++i) EXPECT_EQ(la.data()[i], lb.data()[i]);
}

TEST(Forward, InputValidation) {
  TransformerModel m(tiny_config());
  EXPECT_THROW(m.forward(nullptr, {}), InputError);
  EXPECT_THROW(m.forward(nullptr, std::vector<int>(9, 0)), InputError);  // > max_seq_len
  EXPECT_THROW(m.forward(nullptr, {0, 11}), InputError);                 // id out of range
}

TEST(AnswerLogits, SingleChoiceIsTrivialArgmax) {
  TransformerModel m(tiny_config());
  const auto tokens = some_tokens(tiny_config(), 5, 1);
  const auto v = m.answer_logit_values(tokens, {3});
  ASSERT_EQ(v.size(), 1u);
}

TEST(AnswerLogits, PermutingChoicesPermutesOutput) {
  TransformerModel m(tiny_config());
  const auto tokens = some_tokens(tiny_config(), 5, 2);
  const std::vector<int> ids{1, 4, 7, 2};
  const auto base = m.answer_logit_values(tokens, ids);
  const std::vector<int> perm{7, 1, 2, 4};
  const auto permuted = m.answer_logit_values(tokens, perm);
  EXPECT_EQ(permuted[0], base[2]);
  EXPECT_EQ(permuted[1], base[0]);
  EXPECT_EQ(permuted[2], base[3]);
  EXPECT_EQ(permuted[3], base[1]);
}

// Index oracle: the extracted sub-vector equals direct indexing into the
// final row of the full logits.
TEST(AnswerLogits, MatchesDirectIndexing) {
  TransformerModel m(tiny_config());
  const auto tokens = some_tokens(tiny_config(), 6, 3);
  const Tensor full = m.forward(nullptr, tokens);
  const std::vector<int> ids{0, 5, 9};
  const auto v = m.answer_logit_values(tokens, ids);
  for (size_t c = 0; c < ids.size(); ++c)
    EXPECT_EQ(v[c], full.at(tokens.size() - 1, static_cast<size_t>(ids[c])));
}

TEST(AnswerLogits, DuplicateChoiceIdsRejected) {
  TransformerModel m(tiny_config());
  const auto tokens = some_tokens(tiny_config(), 5, 4);
  EXPECT_THROW(m.answer_logit_values(tokens, {1, 2, 1}), InputError);
}

TEST(Counts, MatchAnalyticFormula) {
  const ModelConfig cfg = tiny_config();
  TransformerModel m(cfg);
  const size_t d = cfg.d_model, v = cfg.vocab_size, ff = cfg.d_ff;
  const size_t per_layer = 4 * d * d + 2 * d + 3 * ff * d;
  const size_t expected = v * d + cfg.max_seq_len * d + cfg.n_layers * per_layer + d + v * d;
  EXPECT_EQ(m.parameter_count(), expected);
  EXPECT_EQ(m.mlp_neuron_count(), cfg.n_layers * ff);
}

TEST(Counts, TrackPruning) {
  ModelConfig cfg;
  cfg.vocab_size = 8;
  cfg.d_model = 8;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_ff = 256;
  cfg.max_seq_len = 8;
  cfg.seed = 21;
  TransformerModel m(cfg);
  const size_t params_before = m.parameter_count();
  const size_t neurons_before = m.mlp_neuron_count();

  const PrunePlan plan = plan_prune_count(m.mlp_block(0), 128, 0);
  apply_prune_compact(m.mlp_block(0), plan);

  EXPECT_EQ(m.mlp_neuron_count(), neurons_before - 128);
  // Brute-force recount over all named tensors.
  size_t recount = 0;
  for (const auto& [name, t] : m.named_parameters()) recount += t.size();
  EXPECT_EQ(m.parameter_count(), recount);
  EXPECT_EQ(params_before - m.parameter_count(), 128 * (2 * cfg.d_model) + cfg.d_model * 128);
}

TEST(Serialization, RoundTripBitExact) {
  TransformerModel m(tiny_config());
  const std::string path = std::filesystem::temp_directory_path() / "pk_model_rt.pkm";
  m.save(path);
  const TransformerModel loaded = TransformerModel::load(path);
  const auto a = m.named_parameters();
  const auto b = loaded.named_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    ASSERT_EQ(a[i].second.shape(), b[i].second.shape());
    for (size_t k = 0; k < a[i].second.size(); ++k)
      EXPECT_EQ(a[i].second.data()[k], b[i].second.data()[k]);
  }
  EXPECT_EQ(m.fingerprint(), loaded.fingerprint());
  std::filesystem::remove(path);
}

TEST(Serialization, WrongMagicRejected) {
  std::stringstream ss;
  ss << "NOTMODEL garbage";
  EXPECT_THROW(TransformerModel::deserialize(ss), ParseError);
}

TEST(Serialization, TruncatedFileRejected) {
  TransformerModel m(tiny_config());
  std::ostringstream os(std::ios::binary);
  m.serialize(os);
  const std::string full = os.str();
  std::istringstream is(full.substr(0, full.size() / 2), std::ios::binary);
  EXPECT_THROW(TransformerModel::deserialize(is), IoError);
}

// Shape audit: pruned per-block widths survive the round trip.
TEST(Serialization, PrunedShapesPersist) {
  TransformerModel m(tiny_config());
  const PrunePlan plan = plan_prune_count(m.mlp_block(0), 2, 0);
  apply_prune_compact(m.mlp_block(0), plan);
  ASSERT_EQ(m.mlp_block(0).width(), 4u);

  const std::string path = std::filesystem::temp_directory_path() / "pk_model_pruned.pkm";
  m.save(path);
  const TransformerModel loaded = TransformerModel::load(path);
  EXPECT_EQ(loaded.mlp_block(0).width(), 4u);
  EXPECT_EQ(loaded.parameter_count(), m.parameter_count());
  EXPECT_EQ(loaded.mlp_neuron_count(), m.mlp_neuron_count());
  loaded.mlp_block(0).check_coupling();
  const auto tokens = some_tokens(tiny_config(), 5, 8);
  const Tensor la = m.forward(nullptr, tokens);
  const Tensor lb = loaded.forward(nullptr, tokens);
  for (size_t i = 0; i < la.size(); ++i) EXPECT_EQ(la.data()[i], lb.data()[i]);
  std::filesystem::remove(path);
}

TEST(Clone, IndependentDeepCopy) {
  TransformerModel m(tiny_config());
  TransformerModel c = m.clone();
  Tensor t = c.named_parameters().front().second;
  t.data()[0] += 1.0;
  EXPECT_NE(m.named_parameters().front().second.data()[0], t.data()[0]);
  EXPECT_EQ(m.config(), c.config());
}

// Full-model gradient check: every parameter of a small transformer against
// central finite differences through the answer-logit extraction path.
TEST(ModelGrad, FullLossFiniteDifferences) {
  ModelConfig cfg;
  cfg.vocab_size = 9;
  cfg.d_model = 4;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_ff = 5;
  cfg.max_seq_len = 6;
  cfg.seed = 31;
  TransformerModel m(cfg);
  const std::vector<int> tokens{1, 7, 3, 0, 5};
  const std::vector<int> choice_ids{2, 4, 8};
  Rng rng(77);
  Tensor w = Tensor::zeros({3});
  for (size_t i = 0; i < 3; ++i) w.data()[i] = rng.uniform(-1.0, 1.0);

  pktest::expect_gradients_match(
      [&](Graph* g) { return sum(g, mul(g, m.answer_logits(g, tokens, choice_ids), w)); },
      m.parameters(), 1e-5, 1e-4, "model");
}
