// prunekit command-line driver: generate data, train the teacher, cache
// teacher logits, run pruning/recovery ladders, and merge reports.

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "prunekit/harness.hpp"

namespace {

using namespace prunekit;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct CommonFlags {
  std::string config_path;
  std::string data_path;
  std::string teacher_path;
  std::string cache_path;
  std::string out_path;
};

ExperimentConfig load_config(const CommonFlags& f) {
  ExperimentConfig cfg;
  if (!f.config_path.empty()) cfg = ExperimentConfig::from_json_file(f.config_path);
  if (!f.data_path.empty()) cfg.paths.dataset = f.data_path;
  if (!f.teacher_path.empty()) cfg.paths.teacher = f.teacher_path;
  if (!f.cache_path.empty()) cfg.paths.cache = f.cache_path;
  if (!f.out_path.empty()) cfg.paths.out = f.out_path;
  return cfg;
}

int cmd_gen_data(const std::string& out, size_t n_train, size_t n_val, size_t n_test,
                 uint64_t seed) {
  const McDataset ds = generate_synthetic(n_train, n_val, n_test, seed);
  save_dataset_jsonl(ds, out);
  std::cout << "wrote " << out << " (" << ds.train.size() << " train, "
            << ds.validation.size() << " validation, " << ds.test.size() << " test)\n"
            << "fingerprint " << ds.fingerprint() << "\n";
  return kExitOk;
}

int cmd_train_teacher(const ExperimentConfig& cfg) {
  if (cfg.paths.dataset.empty())
    throw ParameterError("train-teacher: dataset path required (--data)");
  if (cfg.paths.teacher.empty())
    throw ParameterError("train-teacher: output model path required (--out)");
  const McDataset ds = load_dataset_jsonl(cfg.paths.dataset);
  const PromptTemplate tpl = default_template(cfg.template_seed);
  TransformerModel model(cfg.model);
  Stopwatch sw;
  const TeacherResult res = train_teacher(model, ds, tpl, cfg.teacher);
  for (int e = 0; e < res.epochs_run; ++e)
    std::cout << strf("epoch %2d  mean_loss %.4f  val_acc %.4f\n", e + 1,
                      res.epoch_mean_loss[e], res.epoch_val_acc[e]);
  std::cout << strf("trained %d epochs in %.1fs, final val_acc %.4f (floor %.2f)\n",
                    res.epochs_run, sw.seconds(), res.final_val_acc, cfg.teacher.val_floor);
  if (!res.reached_floor) {
    std::cerr << strf("train-teacher: validation accuracy %.4f below floor %.2f after %d epochs\n",
                      res.final_val_acc, cfg.teacher.val_floor, res.epochs_run);
    return kExitRuntime;
  }
  model.save(cfg.paths.teacher);
  std::cout << "wrote " << cfg.paths.teacher << "\nfingerprint " << model.fingerprint() << "\n";

  nlohmann::json log{{"epochs_run", res.epochs_run},
                     {"final_val_acc", res.final_val_acc},
                     {"epoch_val_acc", res.epoch_val_acc},
                     {"epoch_mean_loss", res.epoch_mean_loss},
                     {"model_fingerprint", model.fingerprint()},
                     {"dataset_fingerprint", ds.fingerprint()}};
  std::ofstream os(cfg.paths.teacher + ".log.json");
  os << log.dump(2) << "\n";
  return kExitOk;
}

int cmd_cache_logits(const ExperimentConfig& cfg) {
  if (cfg.paths.dataset.empty()) throw ParameterError("cache-logits: dataset path required");
  if (cfg.paths.teacher.empty()) throw ParameterError("cache-logits: teacher path required");
  if (cfg.paths.cache.empty()) throw ParameterError("cache-logits: output path required");
  const McDataset ds = load_dataset_jsonl(cfg.paths.dataset);
  const TransformerModel teacher = TransformerModel::load(cfg.paths.teacher);
  const PromptTemplate tpl = default_template(cfg.template_seed);
  const DistillDataset cache = cache_teacher_logits(teacher, ds, tpl);
  save_logit_cache(cache, cfg.paths.cache);
  std::cout << "wrote " << cfg.paths.cache << " (" << cache.train.size() << " records)\n"
            << "model " << cache.model_fingerprint << " dataset " << cache.dataset_fingerprint
            << " template " << cache.template_id << "\n";
  return kExitOk;
}

int cmd_run(const ExperimentConfig& cfg, const std::string& pipeline, bool resume) {
  std::vector<std::string> pipelines;
  if (pipeline == "both") {
    pipelines = {"l2pft", "l2psd"};
  } else if (pipeline == "l2pft" || pipeline == "l2psd") {
    pipelines = {pipeline};
  } else {
    throw ParameterError("run: --pipeline must be l2pft, l2psd, or both");
  }
  Stopwatch sw;
  const RunSummary summary = run_grid(cfg, pipelines, resume);
  write_reports(cfg, summary.rows, cfg.paths.out);
  if (summary.quantize.values > 0)
    std::cout << strf("precision cast: %zu values rounded, %zu clamped\n",
                      summary.quantize.values, summary.quantize.clamped);
  std::cout << strf("ran %zu cells (%zu skipped, %zu levels reused) in %.1fs\n",
                    summary.cells_run, summary.cells_skipped, summary.levels_skipped,
                    sw.seconds())
            << "grid " << (grid_complete(summary.rows, cfg, pipelines) ? "complete" : "incomplete")
            << "\n"
            << "manifest " << cfg.paths.out << "/manifest.jsonl\n"
            << "report   " << cfg.paths.out << "/report.csv\n";
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& manifests, const std::string& out,
               const std::string& config_path) {
  const std::vector<ManifestRow> rows = merge_manifests(manifests);
  ExperimentConfig cfg;
  std::string cfg_src = config_path;
  if (cfg_src.empty()) {
    const auto sibling =
        std::filesystem::path(manifests.front()).parent_path() / "config.json";
    if (std::filesystem::exists(sibling)) cfg_src = sibling.string();
  }
  if (!cfg_src.empty()) cfg = ExperimentConfig::from_json_file(cfg_src);
  write_reports(cfg, rows, out);
  std::cout << "merged " << rows.size() << " rows from " << manifests.size()
            << " manifest(s) into " << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prunekit: structured MLP pruning with fine-tuning vs self-distillation recovery"};
  app.require_subcommand(1);

  CommonFlags flags;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic multiple-choice dataset");
  std::string gen_out;
  size_t n_train = 384, n_val = 96, n_test = 192;
  uint64_t gen_seed = 7;
  gen->add_option("--out", gen_out, "Output JSON-lines path")->required();
  gen->add_option("--n-train", n_train, "Training examples");
  gen->add_option("--n-val", n_val, "Validation examples");
  gen->add_option("--n-test", n_test, "Test examples");
  gen->add_option("--seed", gen_seed, "Generator seed");

  auto* teach = app.add_subcommand("train-teacher", "Train the unpruned teacher model");
  teach->add_option("--config", flags.config_path, "Experiment config JSON");
  teach->add_option("--data", flags.data_path, "Dataset JSON-lines path");
  teach->add_option("--out", flags.teacher_path, "Output model path");
  double floor_override = -1.0;
  int epochs_override = -1;
  teach->add_option("--floor", floor_override, "Validation accuracy floor");
  teach->add_option("--max-epochs", epochs_override, "Epoch cap");

  auto* cachec = app.add_subcommand("cache-logits", "Precompute teacher answer logits");
  cachec->add_option("--config", flags.config_path, "Experiment config JSON");
  cachec->add_option("--data", flags.data_path, "Dataset JSON-lines path");
  cachec->add_option("--teacher", flags.teacher_path, "Teacher model path");
  cachec->add_option("--out", flags.cache_path, "Output cache path");

  auto* run = app.add_subcommand("run", "Run the retention ladder grid");
  run->add_option("--config", flags.config_path, "Experiment config JSON");
  run->add_option("--data", flags.data_path, "Dataset JSON-lines path");
  run->add_option("--teacher", flags.teacher_path, "Teacher model path");
  run->add_option("--cache", flags.cache_path, "Teacher logit cache path");
  run->add_option("--out", flags.out_path, "Output directory");
  std::string pipeline = "both";
  std::vector<double> fractions_override;
  std::vector<uint64_t> seeds_override;
  bool resume = false;
  run->add_option("--pipeline", pipeline, "l2pft, l2psd, or both");
  run->add_option("--fractions", fractions_override, "Data fractions (comma separated)")
      ->delimiter(',');
  run->add_option("--seeds", seeds_override, "Seeds (comma separated)")->delimiter(',');
  run->add_flag("--resume", resume, "Skip cells already in the manifest");

  auto* rep = app.add_subcommand("report", "Merge manifests and emit tables/plot data");
  std::vector<std::string> manifest_paths;
  rep->add_option("--config", flags.config_path, "Experiment config JSON");
  rep->add_option("--out", flags.out_path, "Output directory")->required();
  rep->add_option("manifests", manifest_paths, "Manifest JSON-lines paths")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_out, n_train, n_val, n_test, gen_seed);
    ExperimentConfig cfg = load_config(flags);
    if (teach->parsed()) {
      if (floor_override >= 0.0) cfg.teacher.val_floor = floor_override;
      if (epochs_override > 0) cfg.teacher.max_epochs = epochs_override;
      return cmd_train_teacher(cfg);
    }
    if (cachec->parsed()) return cmd_cache_logits(cfg);
    if (run->parsed()) {
      if (!fractions_override.empty()) cfg.data_fractions = fractions_override;
      if (!seeds_override.empty()) cfg.seeds = seeds_override;
      return cmd_run(cfg, pipeline, resume);
    }
    if (rep->parsed()) return cmd_report(manifest_paths, flags.out_path, flags.config_path);
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
