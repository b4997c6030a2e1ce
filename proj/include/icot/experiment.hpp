#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "icot/corpus.hpp"
#include "icot/eval.hpp"
#include "icot/inference.hpp"
#include "icot/trainer.hpp"

namespace icot {

/// Per-stage knobs of the desk experiment. steps_per_drop 0 means derive T
/// from the stage budget so removal completes with margin to spare
/// (T = steps / (max removable tokens + 4)).
struct StageSettings {
  int steps = 0;
  double learning_rate = 1e-3;
  int batch_size = 4;
  std::int64_t steps_per_drop = 0;
  double lambda = 4.0;
  int checkpoint_interval = 0;
};

/// Everything needed to reproduce one experiment run. Serializes to a
/// canonical JSON form: loading and re-serializing a config is byte-stable.
struct ExperimentConfig {
  std::uint64_t seed = 42;
  std::string out_dir = "runs/desk";

  CodecConfig codec;
  TaskSpec task;
  std::size_t train_pairs = 5000;
  std::size_t test_pairs = 200;
  std::size_t bench_pairs = 50;

  ModelConfig model;  // vocab_size is derived from the codec at run time
  AdapterConfig adapter;

  StageSettings stage1;
  StageSettings stage2;
  StageSettings stage3;
  StageSettings ata_nocot;  // steps 0 means match the stage-1 + stage-2 budget
  bool run_stage3 = true;

  int bench_repetitions = 1;
  int max_new_tokens = 96;
  std::string judge = "stub";  // or "endpoint"
  JudgeEndpointConfig endpoint;

  void validate() const;
};

ExperimentConfig default_desk_config();

std::string config_to_json(const ExperimentConfig& cfg);  // canonical form
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);

/// FNV-1a 64 over a file's bytes, as hex.
std::string file_fingerprint(const std::string& path);

/// Exact-match accuracy of a system over a test corpus: the decoded generated
/// output audio must equal the task response f(input text) exactly.
struct AccuracyResult {
  double exact_match = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::size_t parse_failures = 0;
  double mean_transcript_tokens = 0.0;
};

AccuracyResult response_accuracy(const ModelParams<float>& params, ChainMode mode,
                                 const std::vector<DialoguePair>& test_corpus,
                                 const Vocabulary& vocab, const TaskSpec& task,
                                 const CodecConfig& codec, int max_new_tokens);

/// Consolidated outcome of the full run.
struct ExperimentReport {
  CorpusStats train_stats;
  CorpusStats test_stats;
  std::map<std::string, AccuracyResult> accuracy;  // by mode name
  BenchReport bench;
  std::map<std::string, WinRateReport> win_rates;  // baseline name -> rates vs the ICoT system
  std::map<std::string, double> final_losses;      // by stage id
  double total_wall_seconds = 0.0;
};

std::string report_to_json(const ExperimentReport& report, bool include_wall = true);
std::string report_to_text(const ExperimentReport& report);
std::string win_rate_svg(const std::map<std::string, WinRateReport>& win_rates);

/// Runs the whole desk pipeline: data generation, stage 1 CoT training,
/// stage 2 ASR internalization, the equal-budget no-CoT baseline, optional
/// stage 3 TTS internalization, latency bench, and the stub-judge evaluation,
/// writing every artifact under cfg.out_dir and recording it in the run
/// manifest. With resume = true, stages already marked complete in the
/// manifest are loaded from their checkpoints instead of retrained.
ExperimentReport run_experiment(const ExperimentConfig& cfg, bool resume = false);

}  // namespace icot
