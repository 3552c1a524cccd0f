#pragma once

#include <filesystem>
#include <unistd.h>

#include "prunekit/recovery.hpp"

namespace prunekit {

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct TeacherConfig {
  double val_floor = 0.90;
  int max_epochs = 40;
  double eta = 1e-3;        // Adam step size
  double weight_decay = 0.0;  // decoupled AdamW-style when > 0
  int batch_size = 8;

  void validate() const {
    if (!(val_floor > 0.0) || val_floor > 1.0)
      throw ParameterError("TeacherConfig: val_floor must be in (0, 1]");
    if (max_epochs < 1) throw ParameterError("TeacherConfig: max_epochs must be >= 1");
    if (!(eta > 0.0)) throw ParameterError("TeacherConfig: eta must be > 0");
    if (batch_size < 1) throw ParameterError("TeacherConfig: batch_size must be >= 1");
  }
};

struct ExperimentPaths {
  std::string dataset;
  std::string teacher;
  std::string cache;
  std::string out;
};

struct ExperimentConfig {
  ModelConfig model;
  RecoveryConfig recovery;
  TeacherConfig teacher;
  std::vector<double> schedule{0.91, 0.81, 0.70, 0.61, 0.50};
  std::vector<double> data_fractions{1.0};
  std::vector<uint64_t> seeds{1};
  uint64_t template_seed = 42;
  int latency_reps = 5;
  ExperimentPaths paths;

  void validate() const {
    model.validate();
    recovery.validate();
    teacher.validate();
    Schedule::retention_targets(schedule).validate();
    if (schedule.empty()) throw ParameterError("config: schedule must be non-empty");
    if (seeds.empty()) throw ParameterError("config: seeds must be non-empty");
    if (data_fractions.empty()) throw ParameterError("config: data_fractions must be non-empty");
    for (double f : data_fractions)
      if (!(f > 0.0) || f > 1.0)
        throw ParameterError(strf("config: data fraction %g outside (0, 1]", f));
    if (latency_reps < 3) throw ParameterError("config: latency_reps must be >= 3");
  }

  nlohmann::json to_json() const {
    return nlohmann::json{
        {"model",
         {{"vocab_size", model.vocab_size},
          {"d_model", model.d_model},
          {"n_layers", model.n_layers},
          {"n_heads", model.n_heads},
          {"d_ff", model.d_ff},
          {"max_seq_len", model.max_seq_len},
          {"seed", model.seed}}},
        {"recovery",
         {{"eta", recovery.eta},
          {"epochs_per_iteration", recovery.epochs_per_iteration},
          {"temperature", recovery.temperature},
          {"batch_size", recovery.batch_size},
          {"seed", recovery.seed},
          {"precision_sim",
           recovery.precision_sim == PrecisionSim::fp16_roundtrip ? "fp16-roundtrip" : "off"}}},
        {"teacher",
         {{"val_floor", teacher.val_floor},
          {"max_epochs", teacher.max_epochs},
          {"eta", teacher.eta},
          {"batch_size", teacher.batch_size}}},
        {"schedule", schedule},
        {"data_fractions", data_fractions},
        {"seeds", seeds},
        {"template_seed", template_seed},
        {"latency_reps", latency_reps},
        {"paths",
         {{"dataset", paths.dataset},
          {"teacher", paths.teacher},
          {"cache", paths.cache},
          {"out", paths.out}}}};
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    auto get = [](const nlohmann::json& src, const char* key, auto& dst) {
      if (src.contains(key)) dst = src.at(key).template get<std::decay_t<decltype(dst)>>();
    };
    if (j.contains("model")) {
      const auto& m = j.at("model");
      get(m, "vocab_size", cfg.model.vocab_size);
      get(m, "d_model", cfg.model.d_model);
      get(m, "n_layers", cfg.model.n_layers);
      get(m, "n_heads", cfg.model.n_heads);
      get(m, "d_ff", cfg.model.d_ff);
      get(m, "max_seq_len", cfg.model.max_seq_len);
      get(m, "seed", cfg.model.seed);
    }
    if (j.contains("recovery")) {
      const auto& r = j.at("recovery");
      get(r, "eta", cfg.recovery.eta);
      get(r, "epochs_per_iteration", cfg.recovery.epochs_per_iteration);
      get(r, "temperature", cfg.recovery.temperature);
      get(r, "batch_size", cfg.recovery.batch_size);
      get(r, "seed", cfg.recovery.seed);
      if (r.contains("precision_sim")) {
        const auto s = r.at("precision_sim").get<std::string>();
        if (s == "fp16-roundtrip")
          cfg.recovery.precision_sim = PrecisionSim::fp16_roundtrip;
        else if (s == "off")
          cfg.recovery.precision_sim = PrecisionSim::off;
        else
          throw ParameterError("config: precision_sim must be \"off\" or \"fp16-roundtrip\"");
      }
    }
    if (j.contains("teacher")) {
      const auto& t = j.at("teacher");
      get(t, "val_floor", cfg.teacher.val_floor);
      get(t, "max_epochs", cfg.teacher.max_epochs);
      get(t, "eta", cfg.teacher.eta);
      get(t, "batch_size", cfg.teacher.batch_size);
    }
    get(j, "schedule", cfg.schedule);
    get(j, "data_fractions", cfg.data_fractions);
    get(j, "seeds", cfg.seeds);
    get(j, "template_seed", cfg.template_seed);
    get(j, "latency_reps", cfg.latency_reps);
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      get(p, "dataset", cfg.paths.dataset);
      get(p, "teacher", cfg.paths.teacher);
      get(p, "cache", cfg.paths.cache);
      get(p, "out", cfg.paths.out);
    }
    return cfg;
  }

  static ExperimentConfig from_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path);
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(strf("config %s: %s", path.c_str(), e.what()));
    }
    return from_json(j);
  }

  /// Hash over everything that influences emitted numbers; output paths are
  /// excluded so a run can be relocated without invalidating its manifest.
  std::string config_hash() const {
    nlohmann::json j = to_json();
    j.erase("paths");
    return hex64(fnv1a64(j.dump()));
  }
};

inline std::string host_name() {
  char buf[256] = {0};
  if (gethostname(buf, sizeof(buf) - 1) != 0) return "unknown";
  return buf;
}

// ---------------------------------------------------------------------------
// Teacher training: cross-entropy on answer logits until the validation
// accuracy floor (or the epoch cap) is reached.
// ---------------------------------------------------------------------------

struct TeacherResult {
  bool reached_floor = false;
  int epochs_run = 0;
  double final_val_acc = 0.0;
  std::vector<double> epoch_val_acc;
  std::vector<double> epoch_mean_loss;
};

inline TeacherResult train_teacher(TransformerModel& model, const McDataset& data,
                                   const PromptTemplate& tpl, const TeacherConfig& tc) {
  tc.validate();
  if (data.train.empty() || data.validation.empty())
    throw ParameterError("train_teacher: train and validation partitions must be non-empty");
  const size_t n = data.train.size();
  const size_t max_len = model.config().max_seq_len;
  TeacherResult res;
  Rng rng(Rng::mix(model.config().seed, 0x7EAC));
  const std::vector<Tensor> params = model.parameters();
  AdamOptimizer opt(tc.eta, tc.weight_decay);
  for (int epoch = 0; epoch < tc.max_epochs; ++epoch) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    double loss_sum = 0.0;
    size_t batches = 0;
    for (size_t start = 0; start < n; start += tc.batch_size) {
      const size_t end = std::min(n, start + tc.batch_size);
      Graph graph;
      Tensor total;
      for (size_t bi = start; bi < end; ++bi) {
        const McExample& e = data.train[order[bi]];
        const RenderedPrompt rp = render_prompt(tpl, e, max_len);
        Tensor logits = model.answer_logits(&graph, rp.tokens, rp.choice_token_ids);
        Tensor li = cross_entropy_loss(&graph, logits, e.label);
        total = total.defined() ? add(&graph, total, li) : li;
      }
      Tensor batch_loss = scale(&graph, total, 1.0 / static_cast<double>(end - start));
      const double v = batch_loss.item();
      if (!std::isfinite(v))
        throw NumericError(strf("train_teacher: non-finite loss in epoch %d", epoch + 1));
      loss_sum += v;
      ++batches;
      graph.backward(batch_loss);
      opt.step(params);
    }
    res.epoch_mean_loss.push_back(loss_sum / static_cast<double>(batches));
    const double val_acc = accuracy(model, data.validation, tpl);
    res.epoch_val_acc.push_back(val_acc);
    res.epochs_run = epoch + 1;
    res.final_val_acc = val_acc;
    if (val_acc >= tc.val_floor) {
      res.reached_floor = true;
      break;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Manifest: JSON-lines of completed (fraction, seed, pipeline, level) cells.
// Rewritten atomically (temp file + rename) on every update.
// ---------------------------------------------------------------------------

struct ManifestRow {
  std::string config_hash;
  double fraction = 1.0;
  uint64_t seed = 1;
  std::string pipeline;  // "l2pft" | "l2psd"
  int level = 0;
  double retention_target = 1.0;
  double retention_mlp = 1.0;
  ResultRow row;
  std::string checkpoint;

  nlohmann::json to_json() const {
    return nlohmann::json{{"config_hash", config_hash},
                          {"fraction", fraction},
                          {"seed", seed},
                          {"pipeline", pipeline},
                          {"level", level},
                          {"retention_target", retention_target},
                          {"retention_mlp", retention_mlp},
                          {"row",
                           {{"retention_total", row.retention_total},
                            {"train_acc", row.train_acc},
                            {"test_acc", row.test_acc},
                            {"entropy_bits", row.entropy_bits},
                            {"inference_s", row.inference_seconds},
                            {"flops", row.flops}}},
                          {"checkpoint", checkpoint}};
  }

  static ManifestRow from_json(const nlohmann::json& j) {
    ManifestRow m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.fraction = j.at("fraction").get<double>();
    m.seed = j.at("seed").get<uint64_t>();
    m.pipeline = j.at("pipeline").get<std::string>();
    m.level = j.at("level").get<int>();
    m.retention_target = j.at("retention_target").get<double>();
    m.retention_mlp = j.at("retention_mlp").get<double>();
    const auto& r = j.at("row");
    m.row.data_fraction = m.fraction;
    m.row.pipeline = m.pipeline == "l2pft" ? "finetune" : "distill";
    m.row.retention_total = r.at("retention_total").get<double>();
    m.row.train_acc = r.at("train_acc").get<double>();
    m.row.test_acc = r.at("test_acc").get<double>();
    m.row.entropy_bits = r.at("entropy_bits").get<double>();
    m.row.inference_seconds = r.at("inference_s").get<double>();
    m.row.flops = r.at("flops").get<uint64_t>();
    m.checkpoint = j.at("checkpoint").get<std::string>();
    return m;
  }
};

inline void write_manifest(const std::vector<ManifestRow>& rows, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + tmp);
    for (const auto& r : rows) os << r.to_json().dump() << "\n";
    os.flush();
    if (!os) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline std::vector<ManifestRow> load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open for read: " + path);
  std::vector<ManifestRow> rows;
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      rows.push_back(ManifestRow::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(strf("%s line %zu: %s", path.c_str(), line_no, e.what()));
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Grid runner
// ---------------------------------------------------------------------------

struct RunSummary {
  size_t cells_run = 0;
  size_t cells_skipped = 0;
  size_t levels_skipped = 0;
  QuantizeStats quantize;         // precision-cast accounting for the baseline
  std::vector<ManifestRow> rows;  // full manifest after the run
};

namespace detail {

inline std::string cell_prefix(const std::string& pipeline, double fraction, uint64_t seed) {
  return strf("%s-f%03d-s%llu", pipeline.c_str(),
              static_cast<int>(std::lround(fraction * 100.0)),
              static_cast<unsigned long long>(seed));
}

inline const ManifestRow* find_row(const std::vector<ManifestRow>& rows,
                                   const std::string& hash, double fraction, uint64_t seed,
                                   const std::string& pipeline, int level) {
  for (const auto& r : rows)
    if (r.config_hash == hash && r.fraction == fraction && r.seed == seed &&
        r.pipeline == pipeline && r.level == level)
      return &r;
  return nullptr;
}

}  // namespace detail

inline RunSummary run_grid(const ExperimentConfig& cfg,
                           const std::vector<std::string>& pipelines, bool resume) {
  cfg.validate();
  for (const auto& p : pipelines)
    if (p != "l2pft" && p != "l2psd")
      throw ParameterError("run_grid: pipeline must be l2pft or l2psd");
  if (cfg.paths.dataset.empty() || cfg.paths.teacher.empty() || cfg.paths.out.empty())
    throw ParameterError("run_grid: dataset, teacher, and out paths are required");

  const McDataset ds = load_dataset_jsonl(cfg.paths.dataset);
  if (ds.test.empty()) throw ParameterError("run_grid: dataset has no test partition");
  const PromptTemplate tpl = default_template(cfg.template_seed);
  if (ds.contains_id(tpl.exemplar_a.id) || ds.contains_id(tpl.exemplar_b.id))
    throw ContractError("run_grid: prompt exemplars collide with dataset examples");

  const TransformerModel teacher = TransformerModel::load(cfg.paths.teacher);
  const std::string teacher_fp = teacher.fingerprint();
  const std::string hash = cfg.config_hash();

  std::filesystem::create_directories(cfg.paths.out);
  const std::string ckpt_dir = cfg.paths.out + "/checkpoints";
  std::filesystem::create_directories(ckpt_dir);
  const std::string manifest_path = cfg.paths.out + "/manifest.jsonl";
  {
    std::ofstream cj(cfg.paths.out + "/config.json");
    cj << cfg.to_json().dump(2) << "\n";
  }

  std::vector<ManifestRow> manifest;
  if (resume && std::filesystem::exists(manifest_path)) {
    manifest = load_manifest(manifest_path);
    size_t stale = 0;
    for (const auto& r : manifest)
      if (r.config_hash != hash) ++stale;
    if (stale > 0)
      throw ContractError(strf(
          "resume: %zu of %zu manifest rows were produced by a different config; "
          "use a fresh --out directory or rerun without --resume",
          stale, manifest.size()));
  }

  const std::vector<int> probe =
      render_prompt(tpl, ds.test.front(), cfg.model.max_seq_len).tokens;

  // Shared 100% baseline: the cast-but-unpruned teacher, measured once on the
  // full training partition and reported identically under every cell.
  RunSummary summary;
  TransformerModel baseline_model = teacher.clone();
  summary.quantize = quantize_sim(baseline_model, cfg.recovery.precision_sim);
  const std::string baseline_ckpt = ckpt_dir + "/baseline.pkm";
  std::optional<ResultRow> baseline_row;
  if (resume) {
    for (const auto& r : manifest)
      if (r.config_hash == hash && r.level == 0) {
        baseline_row = r.row;
        break;
      }
  }
  if (!baseline_row) {
    baseline_row = measure_result_row(baseline_model, ds, tpl, "finetune", 1.0, 1.0, probe,
                                      cfg.latency_reps);
    baseline_model.save(baseline_ckpt);
  }

  // Teacher-logit cache, built lazily for l2psd cells.
  std::optional<DistillDataset> cache;
  auto ensure_cache = [&]() -> const DistillDataset& {
    if (cache) return *cache;
    if (!cfg.paths.cache.empty() && std::filesystem::exists(cfg.paths.cache)) {
      cache = load_logit_cache(cfg.paths.cache);
      check_cache_fresh(*cache, teacher_fp, ds.fingerprint(), tpl.id());
      // rejoin example bodies by id
      cache = select_distill_subset(*cache, ds);
      cache->model_fingerprint = teacher_fp;
      cache->dataset_fingerprint = ds.fingerprint();
      cache->template_id = tpl.id();
    } else {
      cache = cache_teacher_logits(teacher, ds, tpl);
      if (!cfg.paths.cache.empty()) save_logit_cache(*cache, cfg.paths.cache);
    }
    return *cache;
  };

  const int total_levels = static_cast<int>(cfg.schedule.size()) + 1;

  for (double fraction : cfg.data_fractions) {
    for (uint64_t seed : cfg.seeds) {
      const McDataset sub = subsample(ds, fraction, seed);
      for (const auto& pipeline : pipelines) {
        // Find the deepest contiguous completed prefix of this cell.
        int done_levels = 0;
        while (done_levels < total_levels &&
               detail::find_row(manifest, hash, fraction, seed, pipeline, done_levels))
          ++done_levels;
        if (done_levels == total_levels) {
          ++summary.cells_skipped;
          summary.levels_skipped += static_cast<size_t>(total_levels);
          continue;
        }
        summary.levels_skipped += static_cast<size_t>(done_levels);

        RecoveryConfig rc = cfg.recovery;
        rc.seed = seed;
        RunOptions opts;
        opts.tpl = tpl;
        opts.data_fraction = fraction;
        opts.checkpoint_dir = ckpt_dir;
        opts.checkpoint_prefix = detail::cell_prefix(pipeline, fraction, seed);
        opts.latency_reps = cfg.latency_reps;
        opts.probe_tokens = probe;

        TransformerModel model;
        std::vector<double> targets(cfg.schedule.begin(), cfg.schedule.end());
        int level_base = 0;
        if (done_levels == 0) {
          model = baseline_model.clone();
          opts.apply_precision_cast = false;  // baseline_model already carries the cast
          opts.shared_baseline = baseline_row;
        } else {
          const ManifestRow* last =
              detail::find_row(manifest, hash, fraction, seed, pipeline, done_levels - 1);
          if (last->checkpoint.empty() || !std::filesystem::exists(last->checkpoint))
            throw IoError(strf("resume: checkpoint for level %d of cell %s missing",
                               done_levels - 1, opts.checkpoint_prefix.c_str()));
          model = TransformerModel::load(last->checkpoint);
          opts.apply_precision_cast = false;
          opts.shared_baseline = last->row;  // consumed as the local level-0 record
          targets.erase(targets.begin(), targets.begin() + (done_levels - 1));
          level_base = done_levels - 1;
        }
        opts.level_base = level_base;
        opts.reference_params = baseline_model.parameter_count();
        opts.reference_neurons = baseline_model.mlp_neuron_count();
        const Schedule schedule = Schedule::retention_targets(targets);

        opts.on_record = [&](const CheckpointRecord& rec) {
          const int level = level_base + rec.level_index;
          if (level_base > 0 && rec.level_index == 0) return;  // resumed; already recorded
          ManifestRow m;
          m.config_hash = hash;
          m.fraction = fraction;
          m.seed = seed;
          m.pipeline = pipeline;
          m.level = level;
          m.retention_target = level == 0 ? 1.0 : cfg.schedule[static_cast<size_t>(level) - 1];
          m.retention_mlp = rec.achieved.mlp;
          m.row = rec.row;
          m.row.pipeline = pipeline == "l2pft" ? "finetune" : "distill";
          m.row.data_fraction = fraction;
          m.checkpoint = rec.checkpoint_path;
          manifest.push_back(m);
          write_manifest(manifest, manifest_path);
          if (!rec.prune_audit.empty()) {
            std::ofstream audit(cfg.paths.out +
                                strf("/prune-%s-L%d.txt", opts.checkpoint_prefix.c_str(), level));
            audit << rec.prune_audit;
          }
        };

        if (pipeline == "l2pft") {
          run_l2pft(model, sub, schedule, rc, opts);
        } else {
          const DistillDataset cell_distill = select_distill_subset(ensure_cache(), sub);
          run_l2psd(model, sub, cell_distill, schedule, rc, opts);
        }
        ++summary.cells_run;
      }
    }
  }

  summary.rows = manifest;
  return summary;
}

// ---------------------------------------------------------------------------
// Report generation from manifests
// ---------------------------------------------------------------------------

namespace detail {

struct MeanKey {
  double fraction;
  int level;
  std::string pipeline;
  bool operator<(const MeanKey& o) const {
    if (fraction != o.fraction) return fraction < o.fraction;
    if (level != o.level) return level < o.level;
    return pipeline < o.pipeline;
  }
};

}  // namespace detail

/// Mean over seeds per (fraction, level, pipeline). FLOPs and retention are
/// seed-independent and are checked to agree.
inline std::vector<ResultRow> mean_rows_over_seeds(const std::vector<ManifestRow>& rows) {
  std::map<detail::MeanKey, std::vector<const ManifestRow*>> groups;
  for (const auto& r : rows)
    groups[detail::MeanKey{r.fraction, r.level, r.pipeline}].push_back(&r);
  std::vector<ResultRow> out;
  for (const auto& [key, group] : groups) {
    ResultRow m = group.front()->row;
    double train = 0, test = 0, ent = 0, lat = 0;
    for (const auto* r : group) {
      if (r->row.flops != m.flops)
        throw ContractError("report: FLOPs differ across seeds for one grid cell");
      if (std::abs(r->row.retention_total - m.retention_total) > 1e-12)
        throw ContractError("report: retention differs across seeds for one grid cell");
      train += r->row.train_acc;
      test += r->row.test_acc;
      ent += r->row.entropy_bits;
      lat += r->row.inference_seconds;
    }
    const auto n = static_cast<double>(group.size());
    m.train_acc = train / n;
    m.test_acc = test / n;
    m.entropy_bits = ent / n;
    m.inference_seconds = lat / n;
    out.push_back(m);
  }
  return out;
}

inline ReportMeta report_meta_for(const ExperimentConfig& cfg) {
  ReportMeta meta;
  meta.temperature = cfg.recovery.temperature;
  meta.eta = cfg.recovery.eta;
  meta.epochs_per_iteration = cfg.recovery.epochs_per_iteration;
  meta.seeds = cfg.seeds;
  meta.template_id = default_template(cfg.template_seed).id();
  meta.host = host_name();
  meta.threads = thread_budget();
  return meta;
}

inline void write_reports(const ExperimentConfig& cfg, const std::vector<ManifestRow>& rows,
                          const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const ReportMeta meta = report_meta_for(cfg);
  const std::vector<ResultRow> means = mean_rows_over_seeds(rows);

  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream os(out_dir + "/" + name, std::ios::binary);
    if (!os) throw IoError("cannot write report file " + name);
    os << text;
  };
  write("report.csv", report_csv(means, meta));
  write("report.md", report_markdown(means, meta));
  write("plot_data.csv", plot_data_csv(means));

  std::string per_seed = detail::meta_header(meta, "#");
  per_seed +=
      "seed,data_fraction,retention,pipeline,train_acc,test_acc,entropy_bits,inference_s,flops\n";
  std::vector<const ManifestRow*> sorted;
  for (const auto& r : rows) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](const ManifestRow* a, const ManifestRow* b) {
    if (a->seed != b->seed) return a->seed < b->seed;
    if (a->fraction != b->fraction) return a->fraction < b->fraction;
    if (a->level != b->level) return a->level < b->level;
    return a->pipeline < b->pipeline;
  });
  for (const auto* r : sorted)
    per_seed += strf("%llu,%.2f,%.6f,%s,%.6f,%.6f,%.6f,%.6f,%llu\n",
                     static_cast<unsigned long long>(r->seed), r->fraction,
                     r->row.retention_total, r->row.pipeline.c_str(), r->row.train_acc,
                     r->row.test_acc, r->row.entropy_bits, r->row.inference_seconds,
                     static_cast<unsigned long long>(r->row.flops));
  write("report_per_seed.csv", per_seed);
}

/// True when the manifest covers the declared study exactly once per
/// (fraction, seed, pipeline, level) cell.
inline bool grid_complete(const std::vector<ManifestRow>& rows, const ExperimentConfig& cfg,
                          const std::vector<std::string>& pipelines) {
  const int levels = static_cast<int>(cfg.schedule.size()) + 1;
  for (double f : cfg.data_fractions)
    for (uint64_t s : cfg.seeds)
      for (const auto& p : pipelines)
        for (int level = 0; level < levels; ++level) {
          size_t hits = 0;
          for (const auto& r : rows)
            if (r.fraction == f && r.seed == s && r.pipeline == p && r.level == level) ++hits;
          if (hits != 1) return false;
        }
  return true;
}

/// Merges manifests from one or more completed runs. Refuses mixed configs
/// and reports the differing hashes.
inline std::vector<ManifestRow> merge_manifests(const std::vector<std::string>& paths) {
  if (paths.empty()) throw ParameterError("report: at least one manifest path required");
  std::vector<ManifestRow> all;
  for (const auto& p : paths) {
    const auto rows = load_manifest(p);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  if (all.empty()) throw ParameterError("report: manifests contain no completed cells");
  std::map<std::string, size_t> hashes;
  for (const auto& r : all) ++hashes[r.config_hash];
  if (hashes.size() > 1) {
    std::string diff = "report: manifests mix incompatible configs:";
    for (const auto& [h, n] : hashes) diff += strf(" %s(%zu rows)", h.c_str(), n);
    throw ContractError(diff);
  }
  return all;
}

}  // namespace prunekit
