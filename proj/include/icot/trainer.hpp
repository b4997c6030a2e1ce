#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "icot/chain_template.hpp"
#include "icot/curriculum.hpp"
#include "icot/model.hpp"

namespace icot {

/// One training stage. Paper-scale defaults are exposed through the factory
/// functions; desk runs override steps, batch size, and learning rates.
struct StageConfig {
  std::string stage_id;     // "stage1", "stage2", "stage3", "ata-nocot"
  ChainMode mode = ChainMode::AttaFinetuned;
  int steps = 0;
  double learning_rate = 1e-3;
  int batch_size = 4;
  bool use_adapters = false;
  bool allow_full_params_override = false;  // ICoT stage without adapters
  std::int64_t curriculum_steps_per_drop = 0;  // 0 disables removal
  double curriculum_lambda = 4.0;
  Segment removal_target = Segment::Transcript;
  int checkpoint_interval = 0;  // 0: only at stage end
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;

  void validate() const;
  AdamWConfig optimizer_config() const;
};

/// Full-scale reference settings: CoT fine-tuning for 24k steps at 5e-6 with
/// batch 2, then adapter ICoT for 24k steps at 5e-5 with batch 4 removing one
/// transcript token every 500 steps, then an optional response-removal stage
/// at 2e-6 removing one token every 2000 steps.
StageConfig reference_stage1();
StageConfig reference_stage2();
StageConfig reference_stage3();

/// A corpus rendered in one chain mode, with per-example removable-token caps.
struct RenderedCorpus {
  ChainMode mode = ChainMode::AttaFinetuned;
  Segment removal_target = Segment::Transcript;
  std::vector<SegmentedSequence> seqs;
  std::vector<int> caps;  // removable tokens per example
  int max_length = 0;
  int pad_id = 0;
};

RenderedCorpus render_corpus(const std::vector<DialoguePair>& pairs, ChainMode mode,
                             const Vocabulary& vocab,
                             Segment removal_target = Segment::Transcript);

/// Per-step schedule trace and loss record.
struct StepMetrics {
  std::int64_t step = 0;
  double loss = 0.0;
  std::int64_t t = 0;
  double offset = 0.0;
  std::int64_t level = 0;
  std::vector<int> realized_s;
  bool reset = false;
  double lr = 0.0;
  double wall_ms = 0.0;
  double second_moment_norm = 0.0;
};

std::string step_metrics_to_json(const StepMetrics& m);

struct TrainHooks {
  std::function<void(const StepMetrics&)> on_metrics;
  /// Called at checkpoint_interval boundaries and at stage end with the number
  /// of completed steps.
  std::function<void(std::int64_t completed_steps)> on_checkpoint;
};

struct TrainResult {
  std::vector<StepMetrics> metrics;
};

/// Runs the stage's step loop: sample a batch, compute the per-example
/// removal count, drop tokens from the target segment, build the masked
/// next-token batch, take an optimizer step, and reset the optimizer whenever
/// the deterministic removal level increases. Batches are drawn from
/// length buckets and padded to the batch maximum with mask-false positions.
/// Throws ConfigError on a corpus/mode mismatch and DivergenceError (after
/// invoking on_checkpoint) when the loss stops being finite.
TrainResult train_stage(ModelParams<float>& params, AdamW<float>& optimizer,
                        const RenderedCorpus& corpus, const StageConfig& stage,
                        CurriculumState& curriculum, Rng& rng, std::int64_t start_step = 0,
                        const TrainHooks& hooks = {});

/// Checkpoint bundle: parameters, optimizer moments, curriculum, RNG stream,
/// and progress counters. Reloading resumes training with the same loss
/// sequence the uninterrupted run would have produced.
struct Checkpoint {
  ModelParams<float> params;
  bool has_optimizer = false;
  ModelParams<float> opt_m, opt_v;
  std::int64_t opt_step = 0;
  bool has_curriculum = false;
  CurriculumState curriculum;
  std::string rng_state;
  std::int64_t completed_steps = 0;
  std::string stage_id;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace icot
