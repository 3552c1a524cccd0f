#pragma once

#include <optional>
#include <unordered_map>

#include "prunekit/metrics.hpp"

namespace prunekit {

// ---------------------------------------------------------------------------
// Losses. Both are differentiable through the student logits; the teacher
// side of the distillation loss is a constant.
// ---------------------------------------------------------------------------

/// -log softmax(logits)[label], computed via log-sum-exp.
inline Tensor cross_entropy_loss(Graph* g, const Tensor& logits, int label) {
  if (logits.ndim() != 1) throw DimensionError("cross_entropy_loss: expected a 1-D logit vector");
  const size_t c = logits.size();
  if (label < 0 || static_cast<size_t>(label) >= c)
    throw ParameterError(strf("cross_entropy_loss: label %d out of range [0, %zu)", label, c));
  double mx = logits.at(0);
  for (size_t i = 1; i < c; ++i) mx = std::max(mx, logits.at(i));
  double z = 0.0;
  for (size_t i = 0; i < c; ++i) z += std::exp(logits.at(i) - mx);
  const double lse = mx + std::log(z);
  Tensor out = Tensor::scalar(lse - logits.at(static_cast<size_t>(label)));
  if (detail::want_record(g, {&logits})) {
    out.set_requires_grad(true);
    Tensor lh = logits, oh = out;
    g->add_node([lh, oh, label, mx, z, c]() mutable {
      const double* gy = oh.grad();
      if (!gy) return;
      auto& gl = lh.grad_vec();
      for (size_t i = 0; i < c; ++i) {
        const double p = std::exp(lh.at(i) - mx) / z;
        gl[i] += gy[0] * (p - (static_cast<size_t>(label) == i ? 1.0 : 0.0));
      }
    });
  }
  return out;
}

inline double cross_entropy_value(const std::vector<double>& logits, int label) {
  return cross_entropy_loss(nullptr, Tensor::from_data({logits.size()}, logits), label).item();
}

/// Temperature-scaled distillation loss
///   T^2 * sum_i p_T(i) * log(p_T(i) / p_S(i))
/// over tempered softmaxes of teacher and student logits. Terms with
/// p_T(i) == 0 contribute zero. d/ds_i = T * (p_S(i) - p_T(i)).
inline Tensor kl_distill_loss(Graph* g, const std::vector<double>& teacher_logits,
                              const Tensor& student_logits, double temperature) {
  if (!(temperature > 0.0))
    throw ParameterError(strf("kl_distill_loss: temperature must be > 0, got %g", temperature));
  if (student_logits.ndim() != 1 || student_logits.size() != teacher_logits.size())
    throw DimensionError("kl_distill_loss: teacher/student length mismatch");
  const size_t c = teacher_logits.size();
  if (c == 0) throw DimensionError("kl_distill_loss: empty logits");
  const double inv_t = 1.0 / temperature;

  auto log_probs = [&](auto value_at) {
    double mx = value_at(0);
    for (size_t i = 1; i < c; ++i) mx = std::max(mx, value_at(i));
    double z = 0.0;
    for (size_t i = 0; i < c; ++i) z += std::exp((value_at(i) - mx) * inv_t);
    const double log_z = std::log(z);
    std::vector<double> lp(c);
    for (size_t i = 0; i < c; ++i) lp[i] = (value_at(i) - mx) * inv_t - log_z;
    return lp;
  };
  const std::vector<double> lp_t = log_probs([&](size_t i) { return teacher_logits[i]; });
  const std::vector<double> lp_s = log_probs([&](size_t i) { return student_logits.at(i); });

  double kl = 0.0;
  std::vector<double> p_t(c);
  for (size_t i = 0; i < c; ++i) {
    p_t[i] = std::exp(lp_t[i]);
    if (p_t[i] > 0.0) kl += p_t[i] * (lp_t[i] - lp_s[i]);
  }
  const double t2 = temperature * temperature;
  Tensor out = Tensor::scalar(t2 * std::max(0.0, kl));
  if (detail::want_record(g, {&student_logits})) {
    out.set_requires_grad(true);
    Tensor sh = student_logits, oh = out;
    g->add_node([sh, oh, p_t = std::move(p_t), lp_s, temperature, c]() mutable {
      const double* gy = oh.grad();
      if (!gy) return;
      auto& gs = sh.grad_vec();
      for (size_t i = 0; i < c; ++i)
        gs[i] += gy[0] * temperature * (std::exp(lp_s[i]) - p_t[i]);
    });
  }
  return out;
}

inline double kl_distill_value(const std::vector<double>& teacher_logits,
                               const std::vector<double>& student_logits,
                               double temperature) {
  return kl_distill_loss(nullptr, teacher_logits,
                         Tensor::from_data({student_logits.size()}, student_logits),
                         temperature)
      .item();
}

// ---------------------------------------------------------------------------
// Reduced-precision simulation: round every parameter through IEEE binary16
// (round-to-nearest-even) and back. Values beyond the binary16 range clamp to
// +-65504 and are counted.
// ---------------------------------------------------------------------------

enum class PrecisionSim { off, fp16_roundtrip };

namespace detail {

// Round-to-nearest with ties to even, independent of the fenv rounding mode.
inline double round_ties_even(double v) {
  const double f = std::floor(v);
  const double r = v - f;
  if (r > 0.5) return f + 1.0;
  if (r < 0.5) return f;
  return std::fmod(f, 2.0) == 0.0 ? f : f + 1.0;
}

}  // namespace detail

constexpr double kFp16Max = 65504.0;

/// Nearest binary16 value of x, re-expressed as a double. Exact for every
/// representable half; idempotent.
inline double fp16_round(double x, bool* clamped = nullptr) {
  if (clamped) *clamped = false;
  if (std::isnan(x)) return x;
  const double sign = std::signbit(x) ? -1.0 : 1.0;
  const double a = std::abs(x);
  if (a == 0.0) return x;
  if (std::isinf(x) || a >= 65520.0) {  // would round past the largest finite half
    if (clamped) *clamped = true;
    return sign * kFp16Max;
  }
  if (a < std::ldexp(1.0, -14)) {
    // subnormal grid: multiples of 2^-24
    const double q = detail::round_ties_even(std::ldexp(a, 24));
    return sign * std::ldexp(q, -24);
  }
  int e2 = 0;
  std::frexp(a, &e2);
  int e = e2 - 1;  // a = m * 2^e, m in [1, 2)
  double q = detail::round_ties_even(std::ldexp(a, 10 - e));
  if (q >= 2048.0) {
    q = 1024.0;
    ++e;
  }
  if (e > 15) {
    if (clamped) *clamped = true;
    return sign * kFp16Max;
  }
  return sign * std::ldexp(q, e - 10);
}

struct QuantizeStats {
  size_t values = 0;
  size_t clamped = 0;
};

inline QuantizeStats quantize_sim(TransformerModel& model, PrecisionSim mode) {
  QuantizeStats stats;
  if (mode == PrecisionSim::off) return stats;
  for (auto& [name, t] : model.named_parameters()) {
    Tensor tensor = t;
    for (size_t i = 0; i < tensor.size(); ++i) {
      bool clamped = false;
      tensor.data()[i] = fp16_round(tensor.data()[i], &clamped);
      ++stats.values;
      if (clamped) ++stats.clamped;
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Teacher-logit cache: the augmented dataset pairing each training question
// with the unpruned teacher's answer-choice logits.
// ---------------------------------------------------------------------------

struct DistillExample {
  McExample base;
  std::vector<double> teacher_logits;  // one per answer choice, all finite
};

struct DistillDataset {
  std::vector<DistillExample> train;
  std::string model_fingerprint;
  std::string dataset_fingerprint;
  std::string template_id;
  uint32_t num_choices = McExample::kNumChoices;
};

inline DistillDataset cache_teacher_logits(const TransformerModel& teacher,
                                           const McDataset& data,
                                           const PromptTemplate& tpl) {
  DistillDataset out;
  out.model_fingerprint = teacher.fingerprint();
  out.dataset_fingerprint = data.fingerprint();
  out.template_id = tpl.id();
  out.num_choices = McExample::kNumChoices;
  out.train.resize(data.train.size());
  const size_t max_len = teacher.config().max_seq_len;
  parallel_for(data.train.size(), [&](size_t i) {
    const RenderedPrompt rp = render_prompt(tpl, data.train[i], max_len);
    DistillExample ex;
    ex.base = data.train[i];
    ex.teacher_logits = teacher.answer_logit_values(rp.tokens, rp.choice_token_ids);
    for (double v : ex.teacher_logits)
      if (!std::isfinite(v)) throw NumericError("cache_teacher_logits: non-finite teacher logit");
    out.train[i] = std::move(ex);
  });
  return out;
}

namespace detail {
constexpr char kCacheMagic[9] = "PKLCACHE";
constexpr uint32_t kCacheVersion = 1;
}  // namespace detail

inline void save_logit_cache(const DistillDataset& cache, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  os.write(detail::kCacheMagic, 8);
  io::write_raw<uint32_t>(os, detail::kCacheVersion);
  io::write_raw<uint32_t>(os, cache.num_choices);
  io::write_raw<uint64_t>(os, cache.train.size());
  io::write_string(os, cache.model_fingerprint);
  io::write_string(os, cache.dataset_fingerprint);
  io::write_string(os, cache.template_id);
  for (const auto& ex : cache.train) {
    io::write_string(os, ex.base.id);
    if (ex.teacher_logits.size() != cache.num_choices)
      throw ContractError("save_logit_cache: record width mismatch");
    io::write_f64_array(os, ex.teacher_logits.data(), ex.teacher_logits.size());
  }
  os.flush();
  if (!os) throw IoError("write failed: " + path);
}

/// Loads logit records only; example bodies are rejoined from the dataset by
/// id (see select_distill_subset).
inline DistillDataset load_logit_cache(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for read: " + path);
  char magic[8];
  is.read(magic, 8);
  if (is.gcount() != 8 || std::memcmp(magic, detail::kCacheMagic, 8) != 0)
    throw ParseError("logit cache: bad magic");
  const uint32_t version = io::read_raw<uint32_t>(is);
  if (version != detail::kCacheVersion)
    throw ParseError(strf("logit cache: unsupported version %u", version));
  DistillDataset out;
  out.num_choices = io::read_raw<uint32_t>(is);
  const uint64_t n = io::read_raw<uint64_t>(is);
  out.model_fingerprint = io::read_string(is);
  out.dataset_fingerprint = io::read_string(is);
  out.template_id = io::read_string(is);
  out.train.resize(n);
  for (uint64_t i = 0; i < n; ++i) {
    out.train[i].base.id = io::read_string(is);
    out.train[i].teacher_logits.resize(out.num_choices);
    io::read_f64_array(is, out.train[i].teacher_logits.data(), out.num_choices);
  }
  return out;
}

/// Rejects a cache whose provenance does not match the teacher, dataset, and
/// prompt template about to be used.
inline void check_cache_fresh(const DistillDataset& cache, const std::string& model_fp,
                              const std::string& dataset_fp, const std::string& template_id) {
  if (cache.model_fingerprint != model_fp)
    throw StaleCacheError(strf("logit cache built for model %s but run uses %s",
                               cache.model_fingerprint.c_str(), model_fp.c_str()));
  if (cache.dataset_fingerprint != dataset_fp)
    throw StaleCacheError("logit cache dataset fingerprint mismatch");
  if (cache.template_id != template_id)
    throw StaleCacheError("logit cache prompt template mismatch");
}

/// Distill records for exactly the train examples of `subset`, in subset
/// order. Bodies come from the subset; logits come from the cache by id.
inline DistillDataset select_distill_subset(const DistillDataset& cache,
                                            const McDataset& subset) {
  std::unordered_map<std::string, const std::vector<double>*> by_id;
  by_id.reserve(cache.train.size());
  for (const auto& ex : cache.train) by_id[ex.base.id] = &ex.teacher_logits;
  DistillDataset out;
  out.model_fingerprint = cache.model_fingerprint;
  out.dataset_fingerprint = cache.dataset_fingerprint;
  out.template_id = cache.template_id;
  out.num_choices = cache.num_choices;
  out.train.reserve(subset.train.size());
  for (const auto& e : subset.train) {
    const auto it = by_id.find(e.id);
    if (it == by_id.end())
      throw StaleCacheError("logit cache missing record for example " + e.id);
    out.train.push_back(DistillExample{e, *it->second});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Iterative prune -> recover loops
// ---------------------------------------------------------------------------

struct RecoveryConfig {
  double eta = 0.02;
  int epochs_per_iteration = 1;
  double temperature = 2.0;
  int batch_size = 8;
  uint64_t seed = 1;
  PrecisionSim precision_sim = PrecisionSim::fp16_roundtrip;

  void validate() const {
    if (!(eta > 0.0)) throw ParameterError("RecoveryConfig: eta must be > 0");
    if (epochs_per_iteration < 1) throw ParameterError("RecoveryConfig: epochs must be >= 1");
    if (!(temperature > 0.0) || !std::isfinite(temperature))
      throw ParameterError("RecoveryConfig: temperature must be positive and finite");
    if (batch_size < 1) throw ParameterError("RecoveryConfig: batch_size must be >= 1");
  }
};

struct Schedule {
  enum class Kind { retention_targets, prune_fractions };
  Kind kind = Kind::retention_targets;
  std::vector<double> values;

  static Schedule retention_targets(std::vector<double> v) {
    return Schedule{Kind::retention_targets, std::move(v)};
  }
  static Schedule prune_fractions(std::vector<double> v) {
    return Schedule{Kind::prune_fractions, std::move(v)};
  }

  void validate() const {
    if (kind == Kind::retention_targets) {
      double prev = 1.0;
      for (double t : values) {
        if (!(t > 0.0) || t >= prev)
          throw ParameterError(
              strf("schedule: retention targets must be strictly decreasing in (0, 1); got %g", t));
        prev = t;
      }
    } else {
      for (double k : values)
        if (!(k >= 0.0) || k >= 1.0)
          throw ParameterError(strf("schedule: prune fraction %g outside [0, 1)", k));
    }
  }
};

struct TrainLog {
  double loss_before = 0.0;                  // dataset mean loss before training
  std::vector<double> epoch_mean_losses;     // dataset mean loss after each epoch
  bool recorded = false;
};

struct CheckpointRecord {
  int level_index = 0;  // 0 is the unpruned baseline
  double retention_target = 1.0;
  Retention achieved;
  ResultRow row;
  std::string checkpoint_path;  // empty when checkpointing is disabled
  std::string prune_audit;      // per-block decisions for this level
  TrainLog log;
};

struct RunOptions {
  PromptTemplate tpl;
  double data_fraction = 1.0;
  std::string checkpoint_dir;     // empty disables checkpoint files
  std::string checkpoint_prefix = "run";
  int latency_reps = 5;
  std::vector<int> probe_tokens;  // empty: derived from the first test example
  bool record_loss_curve = false;
  std::optional<ResultRow> shared_baseline;  // reuse a premeasured 100% row
  // The pre-loop precision cast runs once per experiment; a run resumed from
  // a checkpoint must not re-apply it to already-trained weights.
  bool apply_precision_cast = true;
  std::function<void(const CheckpointRecord&)> on_record;  // per-level callback
  // Reference counts for retention accounting. A resumed run passes the
  // original unpruned baseline's counts so retention targets keep their
  // absolute meaning; fresh runs leave these unset.
  std::optional<size_t> reference_params;
  std::optional<size_t> reference_neurons;
  int level_base = 0;  // absolute level of the entry model, for checkpoint names
};

namespace detail {

// Parameters freed by dropping one MLP neuron: a gate row, an up row, and a
// down column.
inline size_t params_per_neuron(const TransformerModel& m) {
  const MlpBlock& b = m.mlp_block(0);
  return b.w_gate.cols() + b.w_up.cols() + b.w_down.rows();
}

// Splits a total drop count across blocks, repeatedly taking from the widest
// block (lowest index on ties) so widths stay balanced. Throws if any block
// would be emptied.
inline std::vector<size_t> distribute_drops(const TransformerModel& m, size_t n_total) {
  std::vector<size_t> widths(m.num_layers());
  for (size_t i = 0; i < widths.size(); ++i) widths[i] = m.mlp_block(i).width();
  std::vector<size_t> drops(widths.size(), 0);
  for (size_t n = 0; n < n_total; ++n) {
    size_t best = widths.size();
    for (size_t i = 0; i < widths.size(); ++i) {
      if (widths[i] <= 1) continue;  // never empty a block
      if (best == widths.size() || widths[i] > widths[best]) best = i;
    }
    if (best == widths.size())
      throw ParameterError("retention target unreachable: every block is at minimum width");
    ++drops[best];
    --widths[best];
  }
  return drops;
}

struct LossFns {
  // graph-path loss for one train example's answer logits
  std::function<Tensor(Graph*, size_t, const Tensor&)> train_loss;
  // value-path loss for the loss curve
  std::function<double(size_t, const std::vector<double>&)> value_loss;
};

inline double dataset_mean_loss(const TransformerModel& model, const McDataset& data,
                                const PromptTemplate& tpl, const LossFns& fns) {
  std::vector<double> losses(data.train.size());
  const size_t max_len = model.config().max_seq_len;
  parallel_for(data.train.size(), [&](size_t i) {
    const RenderedPrompt rp = render_prompt(tpl, data.train[i], max_len);
    losses[i] = fns.value_loss(i, model.answer_logit_values(rp.tokens, rp.choice_token_ids));
  });
  double s = 0.0;
  for (double v : losses) s += v;
  return s / static_cast<double>(losses.size());
}

inline std::vector<CheckpointRecord> run_recovery(TransformerModel& model,
                                                  const McDataset& data,
                                                  const std::string& pipeline,
                                                  const LossFns& fns,
                                                  const Schedule& schedule,
                                                  const RecoveryConfig& cfg,
                                                  const RunOptions& opts) {
  cfg.validate();
  schedule.validate();
  if (data.train.empty() || data.test.empty())
    throw ParameterError("run: train and test partitions must be non-empty");

  if (opts.apply_precision_cast) quantize_sim(model, cfg.precision_sim);  // pre-loop cast

  const std::vector<int> probe =
      opts.probe_tokens.empty()
          ? render_prompt(opts.tpl, data.test.front(), model.config().max_seq_len).tokens
          : opts.probe_tokens;

  const size_t p0 = opts.reference_params.value_or(model.parameter_count());
  const size_t n0 = opts.reference_neurons.value_or(model.mlp_neuron_count());

  auto save_checkpoint = [&](int level) -> std::string {
    if (opts.checkpoint_dir.empty()) return {};
    const std::string path = opts.checkpoint_dir + "/" + opts.checkpoint_prefix +
                             strf("-L%d.pkm", opts.level_base + level);
    model.save(path);
    return path;
  };

  std::vector<CheckpointRecord> records;
  CheckpointRecord baseline;
  baseline.level_index = 0;
  baseline.retention_target = 1.0;
  baseline.achieved = Retention{1.0, 1.0};
  if (opts.shared_baseline) {
    baseline.row = *opts.shared_baseline;
    baseline.row.pipeline = pipeline;
    baseline.row.data_fraction = opts.data_fraction;
  } else {
    baseline.row = measure_result_row(model, data, opts.tpl, pipeline, opts.data_fraction,
                                      1.0, probe, opts.latency_reps);
  }
  baseline.checkpoint_path = save_checkpoint(0);
  records.push_back(std::move(baseline));
  if (opts.on_record) opts.on_record(records.back());

  const size_t n_train = data.train.size();
  const size_t max_len = model.config().max_seq_len;

  for (size_t level = 0; level < schedule.values.size(); ++level) {
    const double value = schedule.values[level];

    // Prune to this level's target.
    std::vector<size_t> drops(model.num_layers(), 0);
    if (schedule.kind == Schedule::Kind::retention_targets) {
      const double target_params = value * static_cast<double>(p0);
      const double excess = static_cast<double>(model.parameter_count()) - target_params;
      const auto ppn = static_cast<double>(params_per_neuron(model));
      const long long n_total = std::llround(excess / ppn);
      if (n_total > 0) drops = distribute_drops(model, static_cast<size_t>(n_total));
    } else {
      for (size_t b = 0; b < model.num_layers(); ++b)
        drops[b] = static_cast<size_t>(
            std::floor(value * static_cast<double>(model.mlp_block(b).width())));
    }
    std::string audit;
    for (size_t b = 0; b < model.num_layers(); ++b) {
      const PrunePlan plan = plan_prune_count(model.mlp_block(b), drops[b], b);
      audit += prune_audit_text(plan);
      apply_prune_compact(model.mlp_block(b), plan);
    }

    // Recover.
    TrainLog log;
    if (opts.record_loss_curve) {
      log.recorded = true;
      log.loss_before = dataset_mean_loss(model, data, opts.tpl, fns);
    }
    Rng shuffle_rng(Rng::mix(cfg.seed, 0xCAFE + static_cast<uint64_t>(opts.level_base) + level));
    const std::vector<Tensor> params = model.parameters();
    for (int epoch = 0; epoch < cfg.epochs_per_iteration; ++epoch) {
      std::vector<size_t> order(n_train);
      std::iota(order.begin(), order.end(), 0);
      shuffle_rng.shuffle(order);
      for (size_t start = 0; start < n_train; start += cfg.batch_size) {
        const size_t end = std::min(n_train, start + cfg.batch_size);
        Graph graph;
        Tensor total;
        for (size_t bi = start; bi < end; ++bi) {
          const size_t idx = order[bi];
          const RenderedPrompt rp = render_prompt(opts.tpl, data.train[idx], max_len);
          Tensor logits = model.answer_logits(&graph, rp.tokens, rp.choice_token_ids);
          Tensor li = fns.train_loss(&graph, idx, logits);
          total = total.defined() ? add(&graph, total, li) : li;
        }
        Tensor batch_loss = scale(&graph, total, 1.0 / static_cast<double>(end - start));
        if (!std::isfinite(batch_loss.item()))
          throw NumericError(strf("%s: non-finite loss at level %zu epoch %d batch %zu",
                                  pipeline.c_str(), level + 1, epoch + 1,
                                  start / cfg.batch_size + 1));
        graph.backward(batch_loss);
        sgd_step(params, cfg.eta);
      }
      if (opts.record_loss_curve)
        log.epoch_mean_losses.push_back(dataset_mean_loss(model, data, opts.tpl, fns));
    }

    CheckpointRecord rec;
    rec.level_index = static_cast<int>(level) + 1;
    rec.retention_target = schedule.kind == Schedule::Kind::retention_targets ? value : 0.0;
    rec.achieved = retention_from_counts(p0, model.parameter_count(), n0, model.mlp_neuron_count());
    if (schedule.kind == Schedule::Kind::prune_fractions)
      rec.retention_target = rec.achieved.total;
    rec.row = measure_result_row(model, data, opts.tpl, pipeline, opts.data_fraction,
                                 rec.achieved.total, probe, opts.latency_reps);
    rec.checkpoint_path = save_checkpoint(rec.level_index);
    rec.prune_audit = std::move(audit);
    rec.log = std::move(log);
    records.push_back(std::move(rec));
    if (opts.on_record) opts.on_record(records.back());
  }
  return records;
}

}  // namespace detail

/// Iterative pruning with cross-entropy fine-tuning on ground-truth labels.
inline std::vector<CheckpointRecord> run_l2pft(TransformerModel& model, const McDataset& data,
                                               const Schedule& schedule,
                                               const RecoveryConfig& cfg,
                                               const RunOptions& opts) {
  detail::LossFns fns;
  fns.train_loss = [&data](Graph* g, size_t idx, const Tensor& logits) {
    return cross_entropy_loss(g, logits, data.train[idx].label);
  };
  fns.value_loss = [&data](size_t idx, const std::vector<double>& logits) {
    return cross_entropy_value(logits, data.train[idx].label);
  };
  return detail::run_recovery(model, data, "finetune", fns, schedule, cfg, opts);
}

/// Iterative pruning with self-distillation against cached teacher logits.
/// Labels are never read during training; they only feed evaluation metrics.
inline std::vector<CheckpointRecord> run_l2psd(TransformerModel& model, const McDataset& data,
                                               const DistillDataset& distill,
                                               const Schedule& schedule,
                                               const RecoveryConfig& cfg,
                                               const RunOptions& opts) {
  if (distill.train.size() != data.train.size())
    throw StaleCacheError("distill dataset does not align with the training partition");
  for (size_t i = 0; i < distill.train.size(); ++i) {
    if (distill.train[i].base.id != data.train[i].id)
      throw StaleCacheError("distill dataset order differs from the training partition");
    if (distill.train[i].teacher_logits.size() != static_cast<size_t>(McExample::kNumChoices))
      throw StaleCacheError("distill record has wrong choice count");
  }
  const double t = cfg.temperature;
  detail::LossFns fns;
  fns.train_loss = [&distill, t](Graph* g, size_t idx, const Tensor& logits) {
    return kl_distill_loss(g, distill.train[idx].teacher_logits, logits, t);
  };
  fns.value_loss = [&distill, t](size_t idx, const std::vector<double>& logits) {
    return kl_distill_value(distill.train[idx].teacher_logits, logits, t);
  };
  return detail::run_recovery(model, data, "distill", fns, schedule, cfg, opts);
}

}  // namespace prunekit
