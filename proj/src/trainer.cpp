#include "icot/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "icot/errors.hpp"

namespace icot {

using nlohmann::json;

void StageConfig::validate() const {
  if (steps < 0) throw ConfigError("stage: steps must be non-negative");
  if (batch_size < 1) throw ConfigError("stage: batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("stage: learning_rate must be positive");
  if (curriculum_steps_per_drop < 0) throw ConfigError("stage: curriculum T must be >= 0");
  const bool icot_stage = curriculum_steps_per_drop > 0;
  if (icot_stage && !use_adapters && !allow_full_params_override)
    throw ConfigError("stage '" + stage_id +
                      "': removal stages train adapters; set use_adapters or the explicit "
                      "full-parameter override");
}

AdamWConfig StageConfig::optimizer_config() const {
  AdamWConfig cfg;
  cfg.lr = learning_rate;
  cfg.beta1 = adam_beta1;
  cfg.beta2 = adam_beta2;
  cfg.weight_decay = weight_decay;
  return cfg;
}

StageConfig reference_stage1() {
  StageConfig s;
  s.stage_id = "stage1";
  s.mode = ChainMode::AttaFinetuned;
  s.steps = 24000;
  s.learning_rate = 5e-6;
  s.batch_size = 2;
  return s;
}

StageConfig reference_stage2() {
  StageConfig s;
  s.stage_id = "stage2";
  s.mode = ChainMode::AttaFinetuned;
  s.steps = 24000;
  s.learning_rate = 5e-5;
  s.batch_size = 4;
  s.use_adapters = true;
  s.curriculum_steps_per_drop = 500;
  s.removal_target = Segment::Transcript;
  return s;
}

StageConfig reference_stage3() {
  StageConfig s;
  s.stage_id = "stage3";
  s.mode = ChainMode::AtaIcot;
  s.steps = 24000;
  s.learning_rate = 2e-6;
  s.batch_size = 4;
  s.use_adapters = true;
  s.curriculum_steps_per_drop = 2000;
  s.removal_target = Segment::TextResponse;
  return s;
}

RenderedCorpus render_corpus(const std::vector<DialoguePair>& pairs, ChainMode mode,
                             const Vocabulary& vocab, Segment removal_target) {
  RenderedCorpus corpus;
  corpus.mode = mode;
  corpus.removal_target = removal_target;
  corpus.pad_id = vocab.pad;
  corpus.seqs.reserve(pairs.size());
  corpus.caps.reserve(pairs.size());
  for (const auto& p : pairs) {
    corpus.seqs.push_back(render(p, mode, vocab));
    const auto& seq = corpus.seqs.back();
    corpus.caps.push_back(seq.segment_length(removal_target));
    corpus.max_length = std::max(corpus.max_length, static_cast<int>(seq.tokens.size()));
  }
  return corpus;
}

std::string step_metrics_to_json(const StepMetrics& m) {
  json rec{{"step", m.step},         {"loss", m.loss},   {"t", m.t},
           {"offset", m.offset},     {"level", m.level}, {"s", m.realized_s},
           {"reset", m.reset},       {"lr", m.lr},       {"wall_ms", m.wall_ms},
           {"v_norm", m.second_moment_norm}};
  return rec.dump();
}

namespace {

// Length buckets keep batches homogeneous so padding stays small.
constexpr int kBucketWidth = 16;

struct Buckets {
  std::vector<std::vector<std::size_t>> groups;

  explicit Buckets(const RenderedCorpus& corpus) {
    std::map<int, std::vector<std::size_t>> by_bucket;
    for (std::size_t i = 0; i < corpus.seqs.size(); ++i)
      by_bucket[static_cast<int>(corpus.seqs[i].tokens.size()) / kBucketWidth].push_back(i);
    for (auto& [_, group] : by_bucket) groups.push_back(std::move(group));
  }

  /// Uniform over examples: a uniform pick selects the anchor, the rest of
  /// the batch comes from the anchor's bucket.
  std::vector<std::size_t> sample_batch(std::size_t total, int batch_size, Rng& rng) const {
    std::vector<std::size_t> batch;
    std::size_t anchor = rng.uniform_below(total);
    const std::vector<std::size_t>* group = nullptr;
    for (const auto& g : groups) {
      if (anchor < g.size()) {
        group = &g;
        break;
      }
      anchor -= g.size();
    }
    batch.push_back((*group)[anchor]);
    for (int b = 1; b < batch_size; ++b)
      batch.push_back((*group)[rng.uniform_below(group->size())]);
    return batch;
  }
};

}  // namespace

TrainResult train_stage(ModelParams<float>& params, AdamW<float>& optimizer,
                        const RenderedCorpus& corpus, const StageConfig& stage,
                        CurriculumState& curriculum, Rng& rng, std::int64_t start_step,
                        const TrainHooks& hooks) {
  stage.validate();
  if (corpus.mode != stage.mode)
    throw ConfigError("train_stage: corpus rendered as " + chain_mode_name(corpus.mode) +
                      " but stage '" + stage.stage_id + "' trains " +
                      chain_mode_name(stage.mode));
  if (corpus.seqs.empty()) {
    if (stage.steps > start_step) throw ConfigError("train_stage: empty corpus");
    return {};
  }
  if (corpus.max_length > params.config.context_length)
    throw ConfigError("train_stage: corpus max rendered length " +
                      std::to_string(corpus.max_length) + " exceeds context length " +
                      std::to_string(params.config.context_length));
  const bool icot = stage.curriculum_steps_per_drop > 0;
  if (icot && corpus.removal_target != stage.removal_target)
    throw ConfigError("train_stage: corpus caps computed for " +
                      segment_name(corpus.removal_target) + " but stage removes " +
                      segment_name(stage.removal_target));

  const AdamWConfig opt_cfg = stage.optimizer_config();
  const Buckets buckets(corpus);
  ModelParams<float> grads = zeros_like(params);
  TrainResult result;
  result.metrics.reserve(static_cast<std::size_t>(stage.steps - start_step));

  for (std::int64_t step = start_step; step < stage.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto batch_idx =
        buckets.sample_batch(corpus.seqs.size(), stage.batch_size, rng);

    StepMetrics metrics;
    metrics.step = step;
    metrics.t = curriculum.t;
    metrics.offset = curriculum.offset;
    metrics.level = curriculum.deterministic_level();
    metrics.lr = opt_cfg.lr;

    std::vector<BatchExample> batch;
    batch.reserve(batch_idx.size());
    std::size_t max_len = 0;
    for (std::size_t idx : batch_idx) {
      const SegmentedSequence* seq = &corpus.seqs[idx];
      SegmentedSequence removed;
      if (icot) {
        const int s = removal_count(curriculum, corpus.caps[idx]);
        metrics.realized_s.push_back(s);
        if (s > 0) {
          removed = apply_removal(*seq, s, stage.removal_target);
          seq = &removed;
        }
      }
      TargetBatchView view = loss_mask_targets(*seq);
      BatchExample ex;
      ex.inputs = std::move(view.inputs);
      ex.targets = std::move(view.targets);
      ex.mask = std::move(view.mask);
      batch.push_back(std::move(ex));
      max_len = std::max(max_len, batch.back().inputs.size());
    }
    for (auto& ex : batch) {  // mask-false padding to the batch maximum
      ex.inputs.resize(max_len, corpus.pad_id);
      ex.targets.resize(max_len, corpus.pad_id);
      ex.mask.resize(max_len, false);
    }

    metrics.loss = loss_and_grad(params, batch, grads);
    if (!std::isfinite(metrics.loss)) {
      if (hooks.on_checkpoint) hooks.on_checkpoint(step);
      throw DivergenceError("train_stage: non-finite loss at step " + std::to_string(step) +
                            " of stage '" + stage.stage_id + "'");
    }
    optimizer.step(params, grads, opt_cfg);

    if (icot) {
      auto adv = advance(curriculum, rng);
      curriculum = adv.state;
      metrics.reset = adv.reset;
      if (adv.reset) optimizer.reset();
    }
    metrics.second_moment_norm = optimizer.second_moment_norm();
    metrics.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (hooks.on_metrics) hooks.on_metrics(metrics);
    result.metrics.push_back(std::move(metrics));

    const std::int64_t done = step + 1;
    if (hooks.on_checkpoint && stage.checkpoint_interval > 0 &&
        done % stage.checkpoint_interval == 0 && done < stage.steps)
      hooks.on_checkpoint(done);
  }
  if (hooks.on_checkpoint) hooks.on_checkpoint(stage.steps);
  return result;
}

namespace {

void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw DataError("checkpoint: truncated file");
  return v;
}

void write_tensors(std::ostream& os, ModelParams<float>& p) {
  for_each_tensor(p, [&](const std::string&, Mat<float>& m) {
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(m.size())));
  });
}

void read_tensors(std::istream& is, ModelParams<float>& p, const json& manifest) {
  std::size_t i = 0;
  for_each_tensor(p, [&](const std::string& name, Mat<float>& m) {
    if (i >= manifest.size()) throw DataError("checkpoint: tensor manifest too short");
    const auto& entry = manifest[i++];
    if (entry[0].get<std::string>() != name || entry[1].get<Eigen::Index>() != m.rows() ||
        entry[2].get<Eigen::Index>() != m.cols())
      throw DataError("checkpoint: tensor mismatch at '" + name + "'");
    is.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(m.size())));
  });
  if (!is) throw DataError("checkpoint: truncated tensor data");
}

constexpr char kMagic[8] = {'I', 'C', 'O', 'T', 'C', 'K', 'P', '1'};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json manifest = json::array();
  for_each_tensor(const_cast<ModelParams<float>&>(ckpt.params),
                  [&](const std::string& name, Mat<float>& m) {
                    manifest.push_back({name, m.rows(), m.cols()});
                  });
  const auto& cfg = ckpt.params.config;
  json header{
      {"version", 1},
      {"model",
       {{"vocab_size", cfg.vocab_size},
        {"context_length", cfg.context_length},
        {"num_layers", cfg.num_layers},
        {"num_heads", cfg.num_heads},
        {"model_dim", cfg.model_dim},
        {"feedforward_dim", cfg.feedforward_dim},
        {"seed", cfg.seed}}},
      {"base_frozen", ckpt.params.base_frozen},
      {"has_adapters", ckpt.params.has_adapters},
      {"adapter", {{"rank", ckpt.params.adapter_config.rank}, {"alpha", ckpt.params.adapter_config.alpha}}},
      {"has_optimizer", ckpt.has_optimizer},
      {"opt_step", ckpt.opt_step},
      {"has_curriculum", ckpt.has_curriculum},
      {"curriculum",
       {{"t", ckpt.curriculum.t},
        {"steps_per_drop", ckpt.curriculum.steps_per_drop},
        {"lambda", ckpt.curriculum.lambda},
        {"offset", ckpt.curriculum.offset}}},
      {"rng_state", ckpt.rng_state},
      {"completed_steps", ckpt.completed_steps},
      {"stage_id", ckpt.stage_id},
      {"tensors", manifest}};

  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("checkpoint: cannot open '" + path + "' for writing");
  os.write(kMagic, sizeof kMagic);
  const std::string head = header.dump();
  write_u64(os, head.size());
  os.write(head.data(), static_cast<std::streamsize>(head.size()));
  auto& mut = const_cast<Checkpoint&>(ckpt);
  write_tensors(os, mut.params);
  if (ckpt.has_optimizer) {
    write_tensors(os, mut.opt_m);
    write_tensors(os, mut.opt_v);
  }
  if (!os) throw DataError("checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open '" + path + "'");
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::string(magic, 8) != std::string(kMagic, 8))
    throw DataError("checkpoint: bad magic in '" + path + "'");
  const std::uint64_t head_len = read_u64(is);
  std::string head(head_len, '\0');
  is.read(head.data(), static_cast<std::streamsize>(head_len));
  if (!is) throw DataError("checkpoint: truncated header");
  json header = json::parse(head);
  if (header.at("version").get<int>() != 1) throw DataError("checkpoint: unsupported version");

  ModelConfig cfg;
  const auto& m = header.at("model");
  cfg.vocab_size = m.at("vocab_size").get<int>();
  cfg.context_length = m.at("context_length").get<int>();
  cfg.num_layers = m.at("num_layers").get<int>();
  cfg.num_heads = m.at("num_heads").get<int>();
  cfg.model_dim = m.at("model_dim").get<int>();
  cfg.feedforward_dim = m.at("feedforward_dim").get<int>();
  cfg.seed = m.at("seed").get<std::uint64_t>();

  Checkpoint ckpt;
  ckpt.params = init_model<float>(cfg);
  if (header.at("has_adapters").get<bool>()) {
    AdapterConfig acfg;
    acfg.rank = header.at("adapter").at("rank").get<int>();
    acfg.alpha = header.at("adapter").at("alpha").get<double>();
    ckpt.params.base_frozen = true;
    attach_adapters(ckpt.params, acfg);
  }
  ckpt.params.base_frozen = header.at("base_frozen").get<bool>();
  const auto& manifest = header.at("tensors");
  read_tensors(is, ckpt.params, manifest);

  ckpt.has_optimizer = header.at("has_optimizer").get<bool>();
  ckpt.opt_step = header.at("opt_step").get<std::int64_t>();
  if (ckpt.has_optimizer) {
    ckpt.opt_m = zeros_like(ckpt.params);
    ckpt.opt_v = zeros_like(ckpt.params);
    read_tensors(is, ckpt.opt_m, manifest);
    read_tensors(is, ckpt.opt_v, manifest);
  }
  ckpt.has_curriculum = header.at("has_curriculum").get<bool>();
  const auto& cur = header.at("curriculum");
  ckpt.curriculum.t = cur.at("t").get<std::int64_t>();
  ckpt.curriculum.steps_per_drop = cur.at("steps_per_drop").get<std::int64_t>();
  ckpt.curriculum.lambda = cur.at("lambda").get<double>();
  ckpt.curriculum.offset = cur.at("offset").get<double>();
  ckpt.rng_state = header.at("rng_state").get<std::string>();
  ckpt.completed_steps = header.at("completed_steps").get<std::int64_t>();
  ckpt.stage_id = header.at("stage_id").get<std::string>();
  return ckpt;
}

}  // namespace icot
