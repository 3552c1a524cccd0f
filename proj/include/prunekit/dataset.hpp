#pragma once

#include <fstream>
#include <numeric>
#include <set>
#include <string>

#include "json.hpp"
#include "prunekit/common.hpp"

namespace prunekit {

// ---------------------------------------------------------------------------
// Byte-level tokenizer over printable ASCII plus newline. Ids are stable:
// bytes 32..126 map to 0..94 and '\n' maps to 95, so every option letter is
// guaranteed to be a single token.
// ---------------------------------------------------------------------------

class ByteTokenizer {
 public:
  static constexpr int kVocabSize = 96;
  static constexpr int kNewlineId = 95;

  static bool supported(char c) { return c == '\n' || (c >= 32 && c <= 126); }

  static int encode_char(char c) {
    if (c == '\n') return kNewlineId;
    if (c >= 32 && c <= 126) return c - 32;
    throw InputError(strf("tokenizer: unsupported byte 0x%02x", static_cast<unsigned char>(c)));
  }

  static char decode_id(int id) {
    if (id == kNewlineId) return '\n';
    if (id >= 0 && id < 95) return static_cast<char>(id + 32);
    throw InputError(strf("tokenizer: id %d out of range", id));
  }

  static std::vector<int> encode(const std::string& s) {
    std::vector<int> out;
    out.reserve(s.size());
    for (char c : s) out.push_back(encode_char(c));
    return out;
  }

  static std::string decode(const std::vector<int>& ids) {
    std::string out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(decode_id(id));
    return out;
  }
};

// ---------------------------------------------------------------------------
// Multiple-choice records
// ---------------------------------------------------------------------------

struct McExample {
  static constexpr int kNumChoices = 5;

  std::string id;
  std::string question;
  std::vector<std::string> choices;  // texts in option-letter order A..E
  int label = 0;                     // index of the correct choice

  static char letter(int idx) { return static_cast<char>('A' + idx); }

  void validate() const {
    if (choices.size() != kNumChoices)
      throw InputError(strf("example %s: expected %d choices, got %zu", id.c_str(),
                            kNumChoices, choices.size()));
    if (label < 0 || label >= kNumChoices)
      throw InputError(strf("example %s: label %d out of range", id.c_str(), label));
  }
};

struct McDataset {
  std::vector<McExample> train;
  std::vector<McExample> validation;
  std::vector<McExample> test;
  std::string provenance = "synthetic";  // "synthetic" | "external"

  void validate() const {
    std::set<std::string> ids;
    auto check = [&](const std::vector<McExample>& part) {
      for (const auto& e : part) {
        e.validate();
        if (!ids.insert(e.id).second)
          throw InputError("dataset: duplicate example id " + e.id);
      }
    };
    check(train);
    check(validation);
    check(test);
  }

  bool contains_id(const std::string& id) const {
    auto in = [&](const std::vector<McExample>& p) {
      for (const auto& e : p)
        if (e.id == id) return true;
      return false;
    };
    return in(train) || in(validation) || in(test);
  }

  /// Canonical JSON-lines rendering; the fingerprint is its content hash and
  /// is stable across save/load round trips.
  std::string canonical_text() const;
  std::string fingerprint() const {
    const std::string text = canonical_text();
    return hex64(fnv1a64(text.data(), text.size()));
  }
};

// ---------------------------------------------------------------------------
// Prompt rendering: two solved exemplars followed by the target question.
// The answer marker is '='; the single answer token (an option letter) is
// read at the position after it.
// ---------------------------------------------------------------------------

struct RenderedPrompt {
  std::vector<int> tokens;
  std::vector<int> choice_token_ids;  // token ids of letters A..E, in choice order
};

inline std::string render_qa_text(const McExample& e, bool with_answer) {
  e.validate();
  std::string s = e.question;
  for (int i = 0; i < McExample::kNumChoices; ++i) {
    s += ' ';
    s += McExample::letter(i);
    s += ')';
    s += e.choices[i];
  }
  s += " =";
  if (with_answer) {
    s += McExample::letter(e.label);
    s += '\n';
  }
  return s;
}

struct PromptTemplate {
  McExample exemplar_a;
  McExample exemplar_b;

  std::string header_text() const {
    return render_qa_text(exemplar_a, true) + render_qa_text(exemplar_b, true);
  }

  std::string id() const { return "tpl-" + hex64(fnv1a64(header_text())); }
};

inline RenderedPrompt render_prompt(const PromptTemplate& tpl, const McExample& target,
                                    size_t max_seq_len) {
  const std::string text = tpl.header_text() + render_qa_text(target, false);
  RenderedPrompt out;
  out.tokens = ByteTokenizer::encode(text);
  if (out.tokens.size() > max_seq_len)
    throw InputError(strf("prompt for %s is %zu tokens, exceeds max_seq_len %zu",
                          target.id.c_str(), out.tokens.size(), max_seq_len));
  out.choice_token_ids.reserve(McExample::kNumChoices);
  for (int i = 0; i < McExample::kNumChoices; ++i)
    out.choice_token_ids.push_back(ByteTokenizer::encode_char(McExample::letter(i)));
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic task. The question "pick <L><d>?" names an option letter and a
// content digit; the choice texts are five distinct digits and exactly one
// (the labeled slot, which is slot L) carries the named digit. The mapping
// is therefore stated redundantly, which keeps the task learnable from
// scratch at desk scale while every example still has exactly one
// content-correct choice. Labels are stratified so each option letter is
// correct in an equal share of every partition.
// ---------------------------------------------------------------------------

namespace detail {

inline const std::string& content_pool() {
  static const std::string pool = "0123456789";
  return pool;
}

inline McExample make_synthetic_example(const std::string& id, int label, Rng& rng) {
  std::vector<char> digits(content_pool().begin(), content_pool().end());
  rng.shuffle(digits);
  const char content = digits[0];

  McExample e;
  e.id = id;
  e.question = strf("pick %c%c?", McExample::letter(label), content);
  e.label = label;
  e.choices.resize(McExample::kNumChoices);
  size_t next = 1;
  for (int i = 0; i < McExample::kNumChoices; ++i)
    e.choices[i] = std::string(1, i == label ? content : digits[next++]);
  return e;
}

inline std::vector<McExample> make_synthetic_part(size_t n, const std::string& id_prefix,
                                                  Rng& rng) {
  // Balanced label assignment: every letter is correct in n/5 of the part
  // (up to remainder), then positions are shuffled.
  std::vector<int> labels(n);
  for (size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % McExample::kNumChoices);
  rng.shuffle(labels);
  std::vector<McExample> part;
  part.reserve(n);
  for (size_t i = 0; i < n; ++i)
    part.push_back(make_synthetic_example(strf("%s%06zu", id_prefix.c_str(), i), labels[i], rng));
  return part;
}

}  // namespace detail

inline McDataset generate_synthetic(size_t n_train, size_t n_val, size_t n_test,
                                    uint64_t seed) {
  if (n_train < 1 || n_val < 1 || n_test < 1)
    throw ParameterError("generate_synthetic: all split sizes must be >= 1");
  McDataset ds;
  ds.provenance = "synthetic";
  Rng rng_train(Rng::mix(seed, 1));
  Rng rng_val(Rng::mix(seed, 2));
  Rng rng_test(Rng::mix(seed, 3));
  ds.train = detail::make_synthetic_part(n_train, "syn-tr-", rng_train);
  ds.validation = detail::make_synthetic_part(n_val, "syn-va-", rng_val);
  ds.test = detail::make_synthetic_part(n_test, "syn-te-", rng_test);
  ds.validate();
  return ds;
}

/// Two frozen exemplars for the prompt header. Their ids never collide with
/// generated partitions, and harness code re-checks exclusion at run time.
inline PromptTemplate default_template(uint64_t seed) {
  Rng rng(Rng::mix(seed, 0xE0));
  PromptTemplate tpl;
  tpl.exemplar_a = detail::make_synthetic_example("tpl-ex-a", 0, rng);
  tpl.exemplar_b = detail::make_synthetic_example("tpl-ex-b", 2, rng);
  return tpl;
}

// ---------------------------------------------------------------------------
// Seeded subsampling of the train partition. One permutation per seed with
// prefix-taking, so smaller fractions are nested inside larger ones.
// ---------------------------------------------------------------------------

inline McDataset subsample(const McDataset& ds, double fraction, uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw ParameterError(strf("subsample: fraction must be in (0, 1], got %g", fraction));
  const size_t n = ds.train.size();
  const auto m = static_cast<size_t>(std::floor(fraction * static_cast<double>(n)));
  if (m == 0) throw ParameterError("subsample: fraction selects no training examples");
  std::vector<size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(Rng::mix(seed, 0x5AB5));
  rng.shuffle(perm);
  perm.resize(m);
  std::sort(perm.begin(), perm.end());
  McDataset out;
  out.provenance = ds.provenance;
  out.train.reserve(m);
  for (size_t idx : perm) out.train.push_back(ds.train[idx]);
  out.validation = ds.validation;
  out.test = ds.test;
  return out;
}

// ---------------------------------------------------------------------------
// JSON-lines persistence. One object per example:
// {"id", "split", "question", "choices": [{"letter", "text"} x5], "answer"}
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json example_to_json(const McExample& e, const std::string& split) {
  nlohmann::json choices = nlohmann::json::array();
  for (int i = 0; i < McExample::kNumChoices; ++i)
    choices.push_back({{"letter", std::string(1, McExample::letter(i))},
                       {"text", e.choices[i]}});
  return nlohmann::json{{"id", e.id},
                        {"split", split},
                        {"question", e.question},
                        {"choices", choices},
                        {"answer", std::string(1, McExample::letter(e.label))}};
}

inline std::pair<McExample, std::string> example_from_json(const nlohmann::json& j) {
  McExample e;
  e.id = j.at("id").get<std::string>();
  const auto split = j.at("split").get<std::string>();
  if (split != "train" && split != "validation" && split != "test")
    throw InputError("unknown split \"" + split + "\"");
  e.question = j.at("question").get<std::string>();
  const auto& choices = j.at("choices");
  if (!choices.is_array() || choices.size() != McExample::kNumChoices)
    throw InputError(strf("expected %d choices, got %zu", McExample::kNumChoices,
                          choices.size()));
  e.choices.assign(McExample::kNumChoices, std::string());
  std::vector<bool> seen(McExample::kNumChoices, false);
  for (const auto& c : choices) {
    const auto letter = c.at("letter").get<std::string>();
    if (letter.size() != 1 || letter[0] < 'A' || letter[0] > 'E')
      throw InputError("choice letter must be one of A..E");
    const int idx = letter[0] - 'A';
    if (seen[idx]) throw InputError("duplicate choice letter " + letter);
    seen[idx] = true;
    e.choices[idx] = c.at("text").get<std::string>();
  }
  const auto answer = j.at("answer").get<std::string>();
  if (answer.size() != 1 || answer[0] < 'A' || answer[0] > 'E')
    throw InputError("answer must be one of A..E");
  e.label = answer[0] - 'A';
  e.validate();
  return {e, split};
}

}  // namespace detail

inline std::string McDataset::canonical_text() const {
  std::string out;
  auto emit = [&](const std::vector<McExample>& part, const char* split) {
    for (const auto& e : part) {
      out += detail::example_to_json(e, split).dump();
      out += '\n';
    }
  };
  emit(train, "train");
  emit(validation, "validation");
  emit(test, "test");
  return out;
}

inline void save_dataset_jsonl(const McDataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  os << ds.canonical_text();
  if (!os) throw IoError("write failed: " + path);
}

inline McDataset load_dataset_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open for read: " + path);
  McDataset ds;
  ds.provenance = "external";
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto [example, split] = detail::example_from_json(nlohmann::json::parse(line));
      if (split == "train")
        ds.train.push_back(example);
      else if (split == "validation")
        ds.validation.push_back(example);
      else
        ds.test.push_back(example);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(strf("%s line %zu: %s", path.c_str(), line_no, e.what()));
    } catch (const InputError& e) {
      throw ParseError(strf("%s line %zu: %s", path.c_str(), line_no, e.what()));
    }
  }
  ds.validate();
  return ds;
}

}  // namespace prunekit
