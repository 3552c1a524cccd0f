#pragma once

#include <map>
#include <optional>

#include "prunekit/dataset.hpp"
#include "prunekit/pruning.hpp"

namespace prunekit {

// One (retention level, pipeline, data fraction) measurement.
struct ResultRow {
  double data_fraction = 1.0;
  double retention_total = 1.0;
  std::string pipeline;  // "finetune" | "distill"
  double train_acc = 0.0;
  double test_acc = 0.0;
  double entropy_bits = 0.0;
  double inference_seconds = 0.0;
  uint64_t flops = 0;

  void validate() const {
    auto frac_ok = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!frac_ok(train_acc) || !frac_ok(test_acc))
      throw ContractError("ResultRow: accuracy outside [0, 1]");
    const double max_bits = std::log2(static_cast<double>(McExample::kNumChoices));
    if (entropy_bits < -1e-12 || entropy_bits > max_bits + 1e-12)
      throw ContractError("ResultRow: entropy outside [0, log2 C]");
    if (flops == 0) throw ContractError("ResultRow: flops must be positive");
  }
};

using AnswerLogitsFn = std::function<std::vector<double>(const McExample&)>;

inline AnswerLogitsFn model_answer_fn(const TransformerModel& model,
                                      const PromptTemplate& tpl) {
  const size_t max_len = model.config().max_seq_len;
  return [&model, tpl, max_len](const McExample& e) {
    const RenderedPrompt rp = render_prompt(tpl, e, max_len);
    return model.answer_logit_values(rp.tokens, rp.choice_token_ids);
  };
}

namespace detail {
/// Per-example answer logits, evaluated on the worker pool. Slot i belongs to
/// example i, so results do not depend on the worker count.
inline std::vector<std::vector<double>> eval_logits(const AnswerLogitsFn& fn,
                                                    const std::vector<McExample>& part) {
  std::vector<std::vector<double>> out(part.size());
  parallel_for(part.size(), [&](size_t i) { out[i] = fn(part[i]); });
  return out;
}

inline int argmax_lowest_tie(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}
}  // namespace detail

/// Fraction of examples whose argmax answer logit matches the label.
/// Ties break toward the lowest choice index.
inline double accuracy(const AnswerLogitsFn& fn, const std::vector<McExample>& part) {
  if (part.empty()) throw ParameterError("accuracy: empty partition");
  const auto logits = detail::eval_logits(fn, part);
  size_t hits = 0;
  for (size_t i = 0; i < part.size(); ++i)
    if (detail::argmax_lowest_tie(logits[i]) == part[i].label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(part.size());
}

inline double accuracy(const TransformerModel& model, const std::vector<McExample>& part,
                       const PromptTemplate& tpl) {
  return accuracy(model_answer_fn(model, tpl), part);
}

/// Shannon entropy in bits of the answer-choice distribution softmax(logits),
/// with the 0*log(0) = 0 convention.
inline double entropy_bits_of_logits(const std::vector<double>& logits) {
  if (logits.empty()) throw ParameterError("entropy: empty logits");
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  double h = 0.0;
  for (double v : logits) {
    const double p = std::exp(v - mx) / z;
    if (p > 0.0) h -= p * std::log2(p);
  }
  return std::max(0.0, h);
}

/// Mean per-example answer entropy over a partition, in bits.
inline double answer_entropy(const AnswerLogitsFn& fn, const std::vector<McExample>& part) {
  if (part.empty()) throw ParameterError("answer_entropy: empty partition");
  const auto logits = detail::eval_logits(fn, part);
  double s = 0.0;
  for (const auto& l : logits) s += entropy_bits_of_logits(l);
  return s / static_cast<double>(part.size());
}

inline double answer_entropy(const TransformerModel& model,
                             const std::vector<McExample>& part,
                             const PromptTemplate& tpl) {
  return answer_entropy(model_answer_fn(model, tpl), part);
}

/// Median wall-clock seconds of a single-example forward pass at fixed input,
/// after one warm-up run.
inline double inference_latency_seconds(const TransformerModel& model,
                                        const std::vector<int>& probe_tokens, int reps) {
  if (reps < 3) throw ParameterError("inference_latency: reps must be >= 3");
  (void)model.forward(nullptr, probe_tokens);  // warm-up
  std::vector<double> times(reps);
  for (int r = 0; r < reps; ++r) {
    Stopwatch sw;
    (void)model.forward(nullptr, probe_tokens);
    times[r] = sw.seconds();
  }
  std::sort(times.begin(), times.end());
  const size_t n = times.size();
  return n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
}

/// One evaluation pass producing a full ResultRow for the current model.
inline ResultRow measure_result_row(const TransformerModel& model, const McDataset& data,
                                    const PromptTemplate& tpl, const std::string& pipeline,
                                    double data_fraction, double retention_total,
                                    const std::vector<int>& probe_tokens, int latency_reps) {
  const AnswerLogitsFn fn = model_answer_fn(model, tpl);
  ResultRow row;
  row.data_fraction = data_fraction;
  row.retention_total = retention_total;
  row.pipeline = pipeline;
  row.train_acc = accuracy(fn, data.train);
  const auto test_logits = detail::eval_logits(fn, data.test);
  size_t hits = 0;
  double h = 0.0;
  for (size_t i = 0; i < data.test.size(); ++i) {
    if (detail::argmax_lowest_tie(test_logits[i]) == data.test[i].label) ++hits;
    h += entropy_bits_of_logits(test_logits[i]);
  }
  row.test_acc = static_cast<double>(hits) / static_cast<double>(data.test.size());
  row.entropy_bits = h / static_cast<double>(data.test.size());
  row.inference_seconds = inference_latency_seconds(model, probe_tokens, latency_reps);
  row.flops = flops_estimate(model, probe_tokens.size());
  row.validate();
  return row;
}

// ---------------------------------------------------------------------------
// Report emission: one table per data fraction, rows ordered by descending
// retention, fine-tune and distill columns side by side.
// ---------------------------------------------------------------------------

struct ReportMeta {
  double temperature = 2.0;
  double eta = 0.05;
  int epochs_per_iteration = 1;
  std::vector<uint64_t> seeds;
  std::string template_id;
  std::string host;
  unsigned threads = 1;  // worker budget active when latency was measured
};

namespace detail {

struct RowKey {
  double fraction;
  double retention;
  std::string pipeline;
  bool operator<(const RowKey& o) const {
    if (fraction != o.fraction) return fraction < o.fraction;
    if (retention != o.retention) return retention > o.retention;  // descending
    return pipeline < o.pipeline;
  }
};

inline std::map<RowKey, ResultRow> keyed_rows(const std::vector<ResultRow>& rows) {
  std::map<RowKey, ResultRow> out;
  for (const auto& r : rows) {
    const RowKey key{r.data_fraction, r.retention_total, r.pipeline};
    if (!out.emplace(key, r).second)
      throw InputError(strf("duplicate report row (fraction %.2f, retention %.4f, %s)",
                            r.data_fraction, r.retention_total, r.pipeline.c_str()));
  }
  return out;
}

inline std::string meta_header(const ReportMeta& meta, const std::string& comment) {
  std::string seeds;
  for (size_t i = 0; i < meta.seeds.size(); ++i)
    seeds += strf(i ? ",%llu" : "%llu", static_cast<unsigned long long>(meta.seeds[i]));
  std::string out;
  out += comment + strf(" temperature: %g\n", meta.temperature);
  out += comment + strf(" eta: %g\n", meta.eta);
  out += comment + strf(" epochs_per_iteration: %d\n", meta.epochs_per_iteration);
  out += comment + " seeds: " + seeds + "\n";
  out += comment + " template: " + meta.template_id + "\n";
  out += comment + strf(" host: %s (threads: %u)\n", meta.host.c_str(), meta.threads);
  out += comment + " entropy: mean over examples, bits, answer tokens only\n";
  return out;
}

}  // namespace detail

inline std::string report_csv(const std::vector<ResultRow>& rows, const ReportMeta& meta) {
  const auto keyed = detail::keyed_rows(rows);
  std::string out = detail::meta_header(meta, "#");
  out += "data_fraction,retention,pipeline,train_acc,test_acc,entropy_bits,inference_s,flops\n";
  for (const auto& [key, r] : keyed) {
    out += strf("%.2f,%.6f,%s,%.6f,%.6f,%.6f,%.6f,%llu\n", r.data_fraction,
                r.retention_total, r.pipeline.c_str(), r.train_acc, r.test_acc,
                r.entropy_bits, r.inference_seconds,
                static_cast<unsigned long long>(r.flops));
  }
  return out;
}

inline std::string report_markdown(const std::vector<ResultRow>& rows,
                                   const ReportMeta& meta) {
  const auto keyed = detail::keyed_rows(rows);
  std::vector<double> fractions;
  std::vector<double> retentions;
  for (const auto& [key, r] : keyed) {
    if (std::find(fractions.begin(), fractions.end(), key.fraction) == fractions.end())
      fractions.push_back(key.fraction);
    if (std::find(retentions.begin(), retentions.end(), key.retention) == retentions.end())
      retentions.push_back(key.retention);
  }
  std::sort(retentions.rbegin(), retentions.rend());

  std::string out = detail::meta_header(meta, ">");
  auto cell = [&](double fraction, double retention, const std::string& pipeline,
                  auto&& proj) -> std::string {
    const auto it = keyed.find(detail::RowKey{fraction, retention, pipeline});
    if (it == keyed.end()) return "-";
    return proj(it->second);
  };
  for (double f : fractions) {
    out += strf("\n### Data fraction %.0f%%\n\n", 100.0 * f);
    out +=
        "| Retention | Train Acc FT | Train Acc SD | Test Acc FT | Test Acc SD | "
        "Entropy FT | Entropy SD | Time (s) FT | Time (s) SD | FLOPs FT | FLOPs SD |\n";
    out += "|---|---|---|---|---|---|---|---|---|---|---|\n";
    for (double r : retentions) {
      auto acc3 = [](auto get) {
        return [get](const ResultRow& row) { return strf("%.3f", get(row)); };
      };
      out += strf("| %.0f%% ", 100.0 * r);
      out += "| " + cell(f, r, "finetune", acc3([](const ResultRow& x) { return x.train_acc; }));
      out += " | " + cell(f, r, "distill", acc3([](const ResultRow& x) { return x.train_acc; }));
      out += " | " + cell(f, r, "finetune", acc3([](const ResultRow& x) { return x.test_acc; }));
      out += " | " + cell(f, r, "distill", acc3([](const ResultRow& x) { return x.test_acc; }));
      out += " | " + cell(f, r, "finetune", acc3([](const ResultRow& x) { return x.entropy_bits; }));
      out += " | " + cell(f, r, "distill", acc3([](const ResultRow& x) { return x.entropy_bits; }));
      out += " | " + cell(f, r, "finetune", acc3([](const ResultRow& x) { return x.inference_seconds; }));
      out += " | " + cell(f, r, "distill", acc3([](const ResultRow& x) { return x.inference_seconds; }));
      out += " | " + cell(f, r, "finetune",
                          [](const ResultRow& x) { return strf("%.3e", static_cast<double>(x.flops)); });
      out += " | " + cell(f, r, "distill",
                          [](const ResultRow& x) { return strf("%.3e", static_cast<double>(x.flops)); });
      out += " |\n";
    }
  }
  return out;
}

/// Long-format series for external plotting: one line per (metric, fraction,
/// pipeline, retention) point, covering entropy-vs-retention and test
/// accuracy-vs-retention curves.
inline std::string plot_data_csv(const std::vector<ResultRow>& rows) {
  const auto keyed = detail::keyed_rows(rows);
  std::string out = "metric,data_fraction,pipeline,retention,value\n";
  for (const auto& [key, r] : keyed)
    out += strf("entropy_bits,%.2f,%s,%.6f,%.6f\n", r.data_fraction, r.pipeline.c_str(),
                r.retention_total, r.entropy_bits);
  for (const auto& [key, r] : keyed)
    out += strf("test_acc,%.2f,%s,%.6f,%.6f\n", r.data_fraction, r.pipeline.c_str(),
                r.retention_total, r.test_acc);
  return out;
}

}  // namespace prunekit
