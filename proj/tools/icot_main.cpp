// Command-line entry point: data generation, staged training, inference,
// latency bench, judge evaluation, and the one-command desk experiment.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <json.hpp>

#include "icot/errors.hpp"
#include "icot/experiment.hpp"

namespace fs = std::filesystem;
using namespace icot;
using nlohmann::json;

namespace {

ExperimentConfig config_or_default(const std::string& path) {
  if (path.empty()) return default_desk_config();
  return load_config(path);
}

ModelParams<float> load_params(const std::string& ckpt_path) {
  return load_checkpoint(ckpt_path).params;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

void write_or_print(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw DataError("cannot open '" + out_path + "' for writing");
  out << text;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"desk-scale lab for internalizing the ASR step of a tokenized-speech dialogue model"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "experiment config JSON (defaults to the desk config)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dialogue-pair corpus");
  std::string gen_task = "reverse", gen_out;
  std::size_t gen_pairs_n = 1000;
  std::uint64_t gen_seed = 1;
  double gen_noise = 0.0;
  gen->add_option("--task", gen_task, "task family: reverse, shift, digit-sum");
  gen->add_option("--pairs", gen_pairs_n, "number of pairs")->required();
  gen->add_option("--seed", gen_seed, "rng seed");
  gen->add_option("--noise", gen_noise, "codec noise rate");
  gen->add_option("--out", gen_out, "output JSONL path")->required();

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "corpus statistics of a dataset file");
  std::string stats_in;
  stats_cmd->add_option("--in", stats_in, "dataset JSONL path")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "train one stage");
  std::string train_stage_name, train_corpus, train_out_dir = ".", train_resume, train_init;
  train_cmd->add_option("--stage", train_stage_name, "1, 2, 3, ata-nocot, aa-icot")->required();
  train_cmd->add_option("--corpus", train_corpus, "training corpus JSONL")->required();
  train_cmd->add_option("--out-dir", train_out_dir, "output directory");
  train_cmd->add_option("--resume", train_resume, "checkpoint to resume this stage from");
  train_cmd->add_option("--init", train_init, "checkpoint to initialize from (previous stage)");

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "run one chain mode on one pair");
  std::string infer_mode = "atta", infer_ckpt, infer_pair_id, infer_corpus;
  infer_cmd->add_option("--mode", infer_mode, "chain mode");
  infer_cmd->add_option("--ckpt", infer_ckpt, "model checkpoint")->required();
  infer_cmd->add_option("--in", infer_pair_id, "pair id from the corpus")->required();
  infer_cmd->add_option("--corpus", infer_corpus, "corpus JSONL")->required();

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "latency / token benchmark across modes");
  std::string bench_modes = "ata,atta", bench_ckpts, bench_out, bench_corpus;
  int bench_reps = 1;
  bench_cmd->add_option("--modes", bench_modes, "comma-separated chain modes");
  bench_cmd->add_option("--ckpts", bench_ckpts, "comma-separated checkpoints, one per mode")
      ->required();
  bench_cmd->add_option("--corpus", bench_corpus, "test corpus JSONL")->required();
  bench_cmd->add_option("--reps", bench_reps, "repetitions");
  bench_cmd->add_option("--out", bench_out, "report output path (stdout when omitted)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "pairwise judge evaluation of two systems");
  std::string eval_systems, eval_modes = "atta,ata-icot", eval_corpus, eval_rubric = "both",
              eval_judge = "stub", eval_out = "records.jsonl";
  eval_cmd->add_option("--systems", eval_systems, "two checkpoints: a.ckpt,b.ckpt")->required();
  eval_cmd->add_option("--modes", eval_modes, "chain mode per system");
  eval_cmd->add_option("--corpus", eval_corpus, "test corpus JSONL")->required();
  eval_cmd->add_option("--rubric", eval_rubric, "naturalness, specificity, or both");
  eval_cmd->add_option("--judge", eval_judge, "stub or endpoint");
  eval_cmd->add_option("--out", eval_out, "records output path");

  // kappa
  auto* kappa_cmd = app.add_subcommand("kappa", "Cohen's kappa between two rating files");
  std::string kappa_a, kappa_b;
  kappa_cmd->add_option("--a", kappa_a, "ratings file, one category per line")->required();
  kappa_cmd->add_option("--b", kappa_b, "ratings file, one category per line")->required();

  // run-experiment
  auto* run_cmd = app.add_subcommand("run-experiment", "full desk experiment end to end");
  bool run_resume = false;
  run_cmd->add_flag("--resume", run_resume, "resume a halted run from its manifest");

  // codec-table
  auto* table_cmd = app.add_subcommand("codec-table", "export the codec mapping table");
  std::string table_out;
  table_cmd->add_option("--out", table_out, "output path (stdout when omitted)");

  // render
  auto* render_cmd = app.add_subcommand("render", "dump a rendered sequence, one token per line");
  std::string render_corpus_path, render_pair_id, render_mode = "atta";
  render_cmd->add_option("--corpus", render_corpus_path, "corpus JSONL")->required();
  render_cmd->add_option("--id", render_pair_id, "pair id")->required();
  render_cmd->add_option("--mode", render_mode, "chain mode");

  CLI11_PARSE(app, argc, argv);

  ExperimentConfig cfg = config_or_default(config_path);

  if (*gen) {
    CodecConfig codec = cfg.codec;
    codec.noise_rate = gen_noise;
    TaskSpec task = cfg.task;
    task.family = task_family_from_name(gen_task);
    save_pairs(::icot::gen_pairs(task, codec, gen_pairs_n, gen_seed), gen_out);
    std::cout << "wrote " << gen_pairs_n << " pairs to " << gen_out << "\n";
    return exit_code::ok;
  }

  if (*stats_cmd) {
    const auto pairs = load_pairs(stats_in);
    const CorpusStats s = corpus_stats(pairs, cfg.codec);
    json out{{"num_pairs", s.num_pairs},
             {"total_audio_tokens", s.total_audio_tokens},
             {"mean_tokens_per_utterance", s.mean_tokens_per_utterance},
             {"corpus_wer", s.corpus_wer},
             {"num_unique_speakers", s.num_unique_speakers}};
    std::cout << out.dump(2) << "\n";
    return exit_code::ok;
  }

  if (*train_cmd) {
    const auto pairs = load_pairs(train_corpus);
    const Vocabulary vocab = make_vocabulary(cfg.codec);
    ModelConfig mcfg = cfg.model;
    mcfg.vocab_size = vocab.size();
    mcfg.seed = cfg.seed;

    StageConfig stage;
    StageSettings settings;
    Segment target = Segment::Transcript;
    if (train_stage_name == "1") {
      stage.stage_id = "stage1";
      stage.mode = ChainMode::AttaFinetuned;
      settings = cfg.stage1;
    } else if (train_stage_name == "2") {
      stage.stage_id = "stage2";
      stage.mode = ChainMode::AttaFinetuned;
      stage.use_adapters = true;
      settings = cfg.stage2;
      settings.steps_per_drop = settings.steps_per_drop > 0 ? settings.steps_per_drop : 500;
    } else if (train_stage_name == "3" || train_stage_name == "aa-icot") {
      stage.stage_id = "stage3";
      stage.mode = ChainMode::AtaIcot;
      stage.use_adapters = true;
      settings = cfg.stage3;
      settings.steps_per_drop = settings.steps_per_drop > 0 ? settings.steps_per_drop : 2000;
      target = Segment::TextResponse;
    } else if (train_stage_name == "ata-nocot") {
      stage.stage_id = "ata-nocot";
      stage.mode = ChainMode::AtaNoCot;
      settings = cfg.ata_nocot;
      if (settings.steps == 0) settings.steps = cfg.stage1.steps + cfg.stage2.steps;
    } else {
      throw ConfigError("train: unknown stage '" + train_stage_name + "'");
    }
    stage.steps = settings.steps;
    stage.learning_rate = settings.learning_rate;
    stage.batch_size = settings.batch_size;
    stage.curriculum_steps_per_drop = stage.use_adapters ? settings.steps_per_drop : 0;
    stage.curriculum_lambda = settings.lambda;
    stage.removal_target = target;
    stage.checkpoint_interval = settings.checkpoint_interval;

    ModelParams<float> params;
    Rng rng(cfg.seed + 17);
    AdamW<float>* opt_ptr = nullptr;
    std::unique_ptr<AdamW<float>> opt;
    CurriculumState curriculum;
    if (stage.curriculum_steps_per_drop > 0)
      curriculum = make_curriculum(stage.curriculum_steps_per_drop, stage.curriculum_lambda, rng);
    std::int64_t start_step = 0;

    if (!train_resume.empty()) {
      Checkpoint ckpt = load_checkpoint(train_resume);
      params = std::move(ckpt.params);
      opt = std::make_unique<AdamW<float>>(params);
      if (ckpt.has_optimizer) {
        opt->moments_m() = std::move(ckpt.opt_m);
        opt->moments_v() = std::move(ckpt.opt_v);
        opt->set_step_count(ckpt.opt_step);
      }
      if (ckpt.has_curriculum) curriculum = ckpt.curriculum;
      if (!ckpt.rng_state.empty()) rng = Rng::deserialize(ckpt.rng_state);
      start_step = ckpt.completed_steps;
    } else if (!train_init.empty()) {
      params = load_params(train_init);
      if (stage.use_adapters && !params.has_adapters) {
        params.base_frozen = true;
        attach_adapters(params, cfg.adapter);
      }
      opt = std::make_unique<AdamW<float>>(params);
    } else {
      if (stage.use_adapters)
        throw ConfigError("train: stage '" + stage.stage_id +
                          "' needs --init with the previous stage's checkpoint");
      params = init_model<float>(mcfg);
      opt = std::make_unique<AdamW<float>>(params);
    }
    opt_ptr = opt.get();

    const RenderedCorpus corpus = render_corpus(pairs, stage.mode, vocab, target);
    fs::create_directories(train_out_dir);
    const std::string ckpt_path = train_out_dir + "/" + stage.stage_id + ".ckpt";
    const std::string metrics_path = train_out_dir + "/" + stage.stage_id + ".metrics.jsonl";
    std::ofstream metrics(metrics_path, start_step > 0 ? std::ios::app : std::ios::trunc);

    TrainHooks hooks;
    hooks.on_metrics = [&](const StepMetrics& m) {
      metrics << step_metrics_to_json(m) << '\n';
      if (m.step % 100 == 0)
        std::cout << stage.stage_id << " step " << m.step << " loss " << m.loss << "\n";
    };
    hooks.on_checkpoint = [&](std::int64_t completed) {
      Checkpoint ckpt;
      ckpt.params = params;
      ckpt.has_optimizer = true;
      ckpt.opt_m = opt_ptr->moments_m();
      ckpt.opt_v = opt_ptr->moments_v();
      ckpt.opt_step = opt_ptr->step_count();
      ckpt.has_curriculum = stage.curriculum_steps_per_drop > 0;
      ckpt.curriculum = curriculum;
      ckpt.rng_state = rng.serialize();
      ckpt.completed_steps = completed;
      ckpt.stage_id = stage.stage_id;
      save_checkpoint(ckpt, ckpt_path);
    };
    train_stage(params, *opt, corpus, stage, curriculum, rng, start_step, hooks);
    std::cout << "checkpoint: " << ckpt_path << "\n";
    return exit_code::ok;
  }

  if (*infer_cmd) {
    const auto pairs = load_pairs(infer_corpus);
    const DialoguePair* pair = nullptr;
    for (const auto& p : pairs)
      if (p.pair_id == infer_pair_id) pair = &p;
    if (!pair) throw DataError("infer: pair id '" + infer_pair_id + "' not found");
    const Vocabulary vocab = make_vocabulary(cfg.codec);
    const auto params = load_params(infer_ckpt);
    RunChainOptions opt;
    opt.max_new_tokens = cfg.max_new_tokens;
    const ChainResult r =
        run_chain(params, pair->input_audio, chain_mode_from_name(infer_mode), vocab, opt);
    json out{{"pair_id", pair->pair_id},
             {"transcript", r.output.transcript},
             {"response", r.output.response},
             {"decoded_output_audio", decode_audio(r.output.output_audio, cfg.codec)},
             {"expected_response", apply_task(cfg.task, pair->transcript)},
             {"parse_ok", r.output.parse_ok},
             {"truncated", r.output.truncated},
             {"tokens_before_first_audio", r.stats.tokens_before_first_audio},
             {"latency_seconds", r.stats.latency_seconds},
             {"transcript_token_count", r.stats.transcript_token_count},
             {"response_token_count", r.stats.response_token_count}};
    std::cout << out.dump(2) << "\n";
    return exit_code::ok;
  }

  if (*bench_cmd) {
    const auto modes = split_csv(bench_modes);
    const auto ckpts = split_csv(bench_ckpts);
    if (modes.size() != ckpts.size())
      throw ConfigError("bench: --modes and --ckpts must have matching lengths");
    const auto pairs = load_pairs(bench_corpus);
    const Vocabulary vocab = make_vocabulary(cfg.codec);
    std::vector<ModelParams<float>> params;
    params.reserve(ckpts.size());
    for (const auto& c : ckpts) params.push_back(load_params(c));
    std::vector<BenchSystem> systems;
    for (std::size_t i = 0; i < modes.size(); ++i)
      systems.push_back({chain_mode_from_name(modes[i]), &params[i]});
    std::vector<std::pair<ChainMode, ChainMode>> compare;
    if (systems.size() >= 2) compare.push_back({systems[1].mode, systems[0].mode});
    RunChainOptions opt;
    opt.max_new_tokens = cfg.max_new_tokens;
    const BenchReport report = bench(systems, pairs, bench_reps, vocab, compare, opt);
    write_or_print(bench_report_to_json(report) + "\n" + bench_report_to_text(report), bench_out);
    return exit_code::ok;
  }

  if (*eval_cmd) {
    const auto ckpts = split_csv(eval_systems);
    const auto modes = split_csv(eval_modes);
    if (ckpts.size() != 2 || modes.size() != 2)
      throw ConfigError("eval: exactly two systems and two modes are required");
    const auto pairs = load_pairs(eval_corpus);
    const Vocabulary vocab = make_vocabulary(cfg.codec);
    RunChainOptions opt;
    opt.max_new_tokens = cfg.max_new_tokens;

    std::vector<SystemOutputs> outputs(2);
    std::vector<std::string> dialogue_inputs, pair_ids;
    for (const auto& p : pairs) {
      dialogue_inputs.push_back(p.transcript);
      pair_ids.push_back(p.pair_id);
    }
    for (int i = 0; i < 2; ++i) {
      const auto params = load_params(ckpts[i]);
      const ChainMode mode = chain_mode_from_name(modes[i]);
      outputs[i].name = modes[i];
      std::vector<ChainOutput> chain_outputs;
      for (const auto& p : pairs)
        chain_outputs.push_back(run_chain(params, p.input_audio, mode, vocab, opt).output);
      outputs[i].responses = transcribe_outputs(chain_outputs, cfg.codec);
    }

    std::unique_ptr<JudgeClient> judge;
    if (eval_judge == "stub")
      judge = std::make_unique<StubJudge>(cfg.task);
    else if (eval_judge == "endpoint")
      judge = std::make_unique<HttpJudge>(cfg.endpoint);
    else
      throw ConfigError("eval: judge must be stub or endpoint");

    std::vector<Rubric> rubrics;
    if (eval_rubric == "both")
      rubrics = {Rubric::Naturalness, Rubric::Specificity};
    else
      rubrics = {rubric_from_name(eval_rubric)};

    std::vector<ComparisonRecord> records;
    for (Rubric rubric : rubrics) {
      auto r = judge_systems(outputs[0], outputs[1], dialogue_inputs, pair_ids, rubric, *judge);
      records.insert(records.end(), r.begin(), r.end());
    }
    save_records(records, eval_out);
    for (const auto& out : outputs) {
      const WinRateReport r = win_rate_report(records, out.name);
      std::cout << out.name << ": averaged win rate " << r.averaged * 100.0 << "%\n";
    }
    std::cout << "records: " << eval_out << "\n";
    return exit_code::ok;
  }

  if (*kappa_cmd) {
    const double k = cohens_kappa(read_lines(kappa_a), read_lines(kappa_b));
    std::cout << k << "\n";
    return exit_code::ok;
  }

  if (*run_cmd) {
    const ExperimentReport report = run_experiment(cfg, run_resume);
    std::cout << report_to_text(report);
    std::cout << "artifacts under " << cfg.out_dir << "\n";
    return exit_code::ok;
  }

  if (*table_cmd) {
    write_or_print(mapping_table(cfg.codec), table_out);
    return exit_code::ok;
  }

  if (*render_cmd) {
    const auto pairs = load_pairs(render_corpus_path);
    const DialoguePair* pair = nullptr;
    for (const auto& p : pairs)
      if (p.pair_id == render_pair_id) pair = &p;
    if (!pair) throw DataError("render: pair id '" + render_pair_id + "' not found");
    const Vocabulary vocab = make_vocabulary(cfg.codec);
    const SegmentedSequence seq = render(*pair, chain_mode_from_name(render_mode), vocab);
    std::cout << render_dump(seq, vocab);
    return exit_code::ok;
  }

  return exit_code::failure;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_code::config;
  } catch (const DivergenceError& e) {
    std::cerr << "training divergence: " << e.what() << "\n";
    return exit_code::divergence;
  } catch (const JudgeError& e) {
    std::cerr << "judge failure: " << e.what() << "\n";
    return exit_code::judge;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return exit_code::data;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code::failure;
  }
}
