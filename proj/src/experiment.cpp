#include "icot/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "icot/errors.hpp"

namespace icot {

namespace fs = std::filesystem;
using nlohmann::json;

void ExperimentConfig::validate() const {
  codec.validate();
  task.validate();
  ModelConfig m = model;  // vocab_size is derived from the codec later
  if (m.vocab_size == 0) m.vocab_size = 1;
  m.validate();
  adapter.validate();
  if (train_pairs == 0) throw ConfigError("experiment: train_pairs must be positive");
  if (test_pairs == 0) throw ConfigError("experiment: test_pairs must be positive");
  if (bench_pairs == 0) throw ConfigError("experiment: bench_pairs must be positive");
  if (stage1.steps < 0 || stage2.steps < 0 || stage3.steps < 0 || ata_nocot.steps < 0)
    throw ConfigError("experiment: stage steps must be non-negative");
  if (max_new_tokens < 1) throw ConfigError("experiment: max_new_tokens must be positive");
  if (bench_repetitions < 1) throw ConfigError("experiment: bench_repetitions must be positive");
  if (judge != "stub" && judge != "endpoint")
    throw ConfigError("experiment: judge must be 'stub' or 'endpoint'");
}

ExperimentConfig default_desk_config() {
  ExperimentConfig cfg;
  cfg.seed = 42;
  cfg.out_dir = "runs/desk";
  cfg.codec.num_speakers = 200;
  cfg.task.family = TaskFamily::Reverse;
  cfg.task.min_words = 1;
  cfg.task.max_words = 2;
  cfg.task.min_word_len = 2;
  cfg.task.max_word_len = 6;
  cfg.train_pairs = 5000;
  cfg.test_pairs = 200;
  cfg.bench_pairs = 50;
  cfg.model.vocab_size = 0;  // derived
  cfg.model.context_length = 160;
  cfg.model.num_layers = 4;
  cfg.model.num_heads = 4;
  cfg.model.model_dim = 128;
  cfg.model.feedforward_dim = 512;
  cfg.adapter.rank = 32;
  cfg.adapter.alpha = 32.0;
  cfg.stage1 = {2000, 3e-4, 4, 0, 4.0, 0};
  cfg.stage2 = {2000, 1e-3, 4, 0, 4.0, 0};
  cfg.stage3 = {1200, 3e-4, 4, 0, 4.0, 0};
  cfg.ata_nocot = {0, 3e-4, 4, 0, 4.0, 0};  // steps 0: match stage1+stage2
  cfg.run_stage3 = true;
  cfg.bench_repetitions = 1;
  cfg.max_new_tokens = 96;
  return cfg;
}

namespace {

json stage_to_json(const StageSettings& s) {
  return json{{"steps", s.steps},
              {"learning_rate", s.learning_rate},
              {"batch_size", s.batch_size},
              {"steps_per_drop", s.steps_per_drop},
              {"lambda", s.lambda},
              {"checkpoint_interval", s.checkpoint_interval}};
}

StageSettings stage_from_json(const json& j) {
  StageSettings s;
  s.steps = j.at("steps").get<int>();
  s.learning_rate = j.at("learning_rate").get<double>();
  s.batch_size = j.at("batch_size").get<int>();
  s.steps_per_drop = j.at("steps_per_drop").get<std::int64_t>();
  s.lambda = j.at("lambda").get<double>();
  s.checkpoint_interval = j.at("checkpoint_interval").get<int>();
  return s;
}

json config_to_json_obj(const ExperimentConfig& c) {
  return json{
      {"seed", c.seed},
      {"out_dir", c.out_dir},
      {"codec",
       {{"text_alphabet", c.codec.text_alphabet},
        {"units_per_char", c.codec.units_per_char},
        {"audio_vocab_size", c.codec.audio_vocab_size},
        {"num_speakers", c.codec.num_speakers},
        {"speaker_band_size", c.codec.speaker_band_size},
        {"noise_rate", c.codec.noise_rate}}},
      {"task",
       {{"family", task_family_name(c.task.family)},
        {"min_words", c.task.min_words},
        {"max_words", c.task.max_words},
        {"min_word_len", c.task.min_word_len},
        {"max_word_len", c.task.max_word_len},
        {"shift_amount", c.task.shift_amount},
        {"min_digits", c.task.min_digits},
        {"max_digits", c.task.max_digits}}},
      {"train_pairs", c.train_pairs},
      {"test_pairs", c.test_pairs},
      {"bench_pairs", c.bench_pairs},
      {"model",
       {{"context_length", c.model.context_length},
        {"num_layers", c.model.num_layers},
        {"num_heads", c.model.num_heads},
        {"model_dim", c.model.model_dim},
        {"feedforward_dim", c.model.feedforward_dim}}},
      {"adapter", {{"rank", c.adapter.rank}, {"alpha", c.adapter.alpha}}},
      {"stage1", stage_to_json(c.stage1)},
      {"stage2", stage_to_json(c.stage2)},
      {"stage3", stage_to_json(c.stage3)},
      {"ata_nocot", stage_to_json(c.ata_nocot)},
      {"run_stage3", c.run_stage3},
      {"bench_repetitions", c.bench_repetitions},
      {"max_new_tokens", c.max_new_tokens},
      {"judge", c.judge},
      {"endpoint",
       {{"host", c.endpoint.host},
        {"port", c.endpoint.port},
        {"path", c.endpoint.path},
        {"model", c.endpoint.model},
        {"api_key_env", c.endpoint.api_key_env},
        {"timeout_seconds", c.endpoint.timeout_seconds}}}};
}

}  // namespace

std::string config_to_json(const ExperimentConfig& cfg) {
  return config_to_json_obj(cfg).dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  try {
    ExperimentConfig c;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.out_dir = j.at("out_dir").get<std::string>();
    const auto& jc = j.at("codec");
    c.codec.text_alphabet = jc.at("text_alphabet").get<std::string>();
    c.codec.units_per_char = jc.at("units_per_char").get<int>();
    c.codec.audio_vocab_size = jc.at("audio_vocab_size").get<int>();
    c.codec.num_speakers = jc.at("num_speakers").get<int>();
    c.codec.speaker_band_size = jc.at("speaker_band_size").get<int>();
    c.codec.noise_rate = jc.at("noise_rate").get<double>();
    const auto& jt = j.at("task");
    c.task.family = task_family_from_name(jt.at("family").get<std::string>());
    c.task.min_words = jt.at("min_words").get<int>();
    c.task.max_words = jt.at("max_words").get<int>();
    c.task.min_word_len = jt.at("min_word_len").get<int>();
    c.task.max_word_len = jt.at("max_word_len").get<int>();
    c.task.shift_amount = jt.at("shift_amount").get<int>();
    c.task.min_digits = jt.at("min_digits").get<int>();
    c.task.max_digits = jt.at("max_digits").get<int>();
    c.train_pairs = j.at("train_pairs").get<std::size_t>();
    c.test_pairs = j.at("test_pairs").get<std::size_t>();
    c.bench_pairs = j.at("bench_pairs").get<std::size_t>();
    const auto& jm = j.at("model");
    c.model.context_length = jm.at("context_length").get<int>();
    c.model.num_layers = jm.at("num_layers").get<int>();
    c.model.num_heads = jm.at("num_heads").get<int>();
    c.model.model_dim = jm.at("model_dim").get<int>();
    c.model.feedforward_dim = jm.at("feedforward_dim").get<int>();
    c.model.vocab_size = 0;
    const auto& ja = j.at("adapter");
    c.adapter.rank = ja.at("rank").get<int>();
    c.adapter.alpha = ja.at("alpha").get<double>();
    c.stage1 = stage_from_json(j.at("stage1"));
    c.stage2 = stage_from_json(j.at("stage2"));
    c.stage3 = stage_from_json(j.at("stage3"));
    c.ata_nocot = stage_from_json(j.at("ata_nocot"));
    c.run_stage3 = j.at("run_stage3").get<bool>();
    c.bench_repetitions = j.at("bench_repetitions").get<int>();
    c.max_new_tokens = j.at("max_new_tokens").get<int>();
    c.judge = j.at("judge").get<std::string>();
    const auto& je = j.at("endpoint");
    c.endpoint.host = je.at("host").get<std::string>();
    c.endpoint.port = je.at("port").get<int>();
    c.endpoint.path = je.at("path").get<std::string>();
    c.endpoint.model = je.at("model").get<std::string>();
    c.endpoint.api_key_env = je.at("api_key_env").get<std::string>();
    c.endpoint.timeout_seconds = je.at("timeout_seconds").get<int>();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("config: cannot open '" + path + "' for writing");
  out << config_to_json(cfg);
}

std::string file_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("fingerprint: cannot open '" + path + "'");
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
    if (!in) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

namespace {

struct SystemRun {
  std::string name;
  ChainMode mode;
  const ModelParams<float>* params = nullptr;
  std::vector<ChainResult> results;
};

AccuracyResult accuracy_from_results(const std::vector<ChainResult>& results,
                                     const std::vector<DialoguePair>& pairs,
                                     const TaskSpec& task, const CodecConfig& codec) {
  AccuracyResult acc;
  acc.total = results.size();
  double transcript_tokens = 0.0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (!r.output.parse_ok) ++acc.parse_failures;
    transcript_tokens += r.stats.transcript_token_count;
    const std::string expected = apply_task(task, pairs[i].transcript);
    if (decode_audio(r.output.output_audio, codec) == expected) ++acc.correct;
  }
  if (acc.total > 0) {
    acc.exact_match = static_cast<double>(acc.correct) / static_cast<double>(acc.total);
    acc.mean_transcript_tokens = transcript_tokens / static_cast<double>(acc.total);
  }
  return acc;
}

}  // namespace

AccuracyResult response_accuracy(const ModelParams<float>& params, ChainMode mode,
                                 const std::vector<DialoguePair>& test_corpus,
                                 const Vocabulary& vocab, const TaskSpec& task,
                                 const CodecConfig& codec, int max_new_tokens) {
  RunChainOptions opt;
  opt.max_new_tokens = max_new_tokens;
  std::vector<ChainResult> results;
  results.reserve(test_corpus.size());
  for (const auto& pair : test_corpus)
    results.push_back(run_chain(params, pair.input_audio, mode, vocab, opt));
  return accuracy_from_results(results, test_corpus, task, codec);
}

namespace {

json corpus_stats_json(const CorpusStats& s) {
  return json{{"num_pairs", s.num_pairs},
              {"total_audio_tokens", s.total_audio_tokens},
              {"mean_tokens_per_utterance", s.mean_tokens_per_utterance},
              {"corpus_wer", s.corpus_wer},
              {"num_unique_speakers", s.num_unique_speakers}};
}

json accuracy_json(const AccuracyResult& a) {
  return json{{"exact_match", a.exact_match},
              {"correct", a.correct},
              {"total", a.total},
              {"parse_failures", a.parse_failures},
              {"mean_transcript_tokens", a.mean_transcript_tokens}};
}

// Prompt-structure summary of the six modes.
json mode_table_json() {
  auto row = [](const char* mode, const char* asr, const char* tts, bool ft) {
    return json{{"mode", mode}, {"asr_prompt", asr}, {"tts_prompt", tts}, {"finetuned", ft}};
  };
  return json::array({row("atta-nofinetune", "yes", "yes", false),
                      row("aa-nofinetune", "no", "no", false),
                      row("atta", "yes", "yes", true),
                      row("ata-nocot", "no", "yes", true),
                      row("ata-icot", "internalized", "yes", true),
                      row("aa-icot", "internalized", "internalized", true)});
}

json win_rate_report_json(const WinRateReport& r) {
  json cells = json::array();
  for (const auto& c : r.cells)
    cells.push_back({{"judge", c.judge},
                     {"rubric", rubric_name(c.rubric)},
                     {"wins", c.wins},
                     {"losses", c.losses},
                     {"inconsistent", c.inconsistent},
                     {"failures", c.failures},
                     {"rate", c.rate}});
  return json{{"system", r.system}, {"cells", cells}, {"averaged", r.averaged}};
}

}  // namespace

std::string report_to_json(const ExperimentReport& report, bool include_wall) {
  json bench = json::parse(bench_report_to_json(report.bench));
  if (!include_wall) {
    for (auto& m : bench["modes"]) m.erase("latency_seconds");
    for (auto& c : bench["comparisons"]) c.erase("wall_reduction");
  }
  json acc;
  for (const auto& [name, a] : report.accuracy) acc[name] = accuracy_json(a);
  json rates;
  for (const auto& [name, r] : report.win_rates) rates[name] = win_rate_report_json(r);
  json out{{"modes", mode_table_json()},
           {"corpus_stats",
            {{"train", corpus_stats_json(report.train_stats)},
             {"test", corpus_stats_json(report.test_stats)}}},
           {"accuracy", acc},
           {"inference", bench},
           {"win_rates_vs_icot", rates},
           {"final_losses", report.final_losses}};
  if (include_wall) out["wall_seconds"] = report.total_wall_seconds;
  return out.dump(2) + "\n";
}

std::string report_to_text(const ExperimentReport& report) {
  std::ostringstream os;
  os << "== corpus ==\n"
     << "  train: " << report.train_stats.num_pairs << " pairs, "
     << report.train_stats.total_audio_tokens << " audio tokens, wer "
     << report.train_stats.corpus_wer << ", " << report.train_stats.num_unique_speakers
     << " speakers\n"
     << "  test:  " << report.test_stats.num_pairs << " pairs\n";
  os << "== response exact match ==\n";
  for (const auto& [name, a] : report.accuracy)
    os << "  " << name << ": " << a.exact_match * 100.0 << "% (" << a.correct << "/" << a.total
       << "), mean generated transcript tokens " << a.mean_transcript_tokens << "\n";
  os << "== inference ==\n" << bench_report_to_text(report.bench);
  os << "== win rates vs ata-icot (stub judge) ==\n";
  for (const auto& [name, r] : report.win_rates) {
    os << "  " << name << ": averaged " << r.averaged * 100.0 << "%";
    for (const auto& c : r.cells)
      os << "  [" << rubric_name(c.rubric) << " " << c.rate * 100.0 << "% (" << c.wins << "w/"
         << c.losses << "l/" << c.inconsistent << "i/" << c.failures << "f)]";
    os << "\n";
  }
  os << "== final losses ==\n";
  for (const auto& [stage, loss] : report.final_losses) os << "  " << stage << ": " << loss << "\n";
  return os.str();
}

std::string win_rate_svg(const std::map<std::string, WinRateReport>& win_rates) {
  // Grouped bars, one group per baseline, one bar per rubric cell, with the
  // 50% draw line dashed.
  const int width = 720, height = 400;
  const int ml = 60, mr = 20, mt = 40, mb = 80;
  const int plot_w = width - ml - mr, plot_h = height - mt - mb;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
     << "win rate vs ata-icot (%)</text>\n";
  for (int pct = 0; pct <= 100; pct += 25) {
    const double y = mt + plot_h - plot_h * pct / 100.0;
    os << "<line x1=\"" << ml << "\" y1=\"" << y << "\" x2=\"" << ml + plot_w << "\" y2=\"" << y
       << "\" stroke=\"#dddddd\"/>\n"
       << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4
       << "\" text-anchor=\"end\" font-size=\"11\">" << pct << "</text>\n";
  }
  const double y50 = mt + plot_h - plot_h * 0.5;
  os << "<line x1=\"" << ml << "\" y1=\"" << y50 << "\" x2=\"" << ml + plot_w << "\" y2=\"" << y50
     << "\" stroke=\"#666666\" stroke-dasharray=\"6,4\"/>\n";

  const char* colors[] = {"#4c78a8", "#f58518", "#54a24b", "#e45756"};
  const std::size_t groups = win_rates.size();
  if (groups > 0) {
    const double group_w = static_cast<double>(plot_w) / static_cast<double>(groups);
    std::size_t gi = 0;
    for (const auto& [name, rep] : win_rates) {
      const std::size_t bars = std::max<std::size_t>(rep.cells.size(), 1);
      const double bar_w = std::min(group_w / (bars + 1.0), 48.0);
      for (std::size_t bi = 0; bi < rep.cells.size(); ++bi) {
        const auto& cell = rep.cells[bi];
        const double h = plot_h * cell.rate;
        const double x = ml + group_w * gi + group_w / 2.0 -
                         bar_w * static_cast<double>(bars) / 2.0 + bar_w * bi;
        os << "<rect x=\"" << x << "\" y=\"" << mt + plot_h - h << "\" width=\"" << bar_w - 4
           << "\" height=\"" << h << "\" fill=\"" << colors[bi % 4] << "\">"
           << "<title>" << name << " " << rubric_name(cell.rubric) << " "
           << cell.rate * 100.0 << "%</title></rect>\n";
      }
      os << "<text x=\"" << ml + group_w * gi + group_w / 2.0 << "\" y=\"" << mt + plot_h + 18
         << "\" text-anchor=\"middle\" font-size=\"12\">" << name << "</text>\n"
         << "<text x=\"" << ml + group_w * gi + group_w / 2.0 << "\" y=\"" << mt + plot_h + 34
         << "\" text-anchor=\"middle\" font-size=\"11\">avg " << rep.averaged * 100.0
         << "%</text>\n";
      ++gi;
    }
  }
  os << "</svg>\n";
  return os.str();
}

namespace {

struct Manifest {
  json j;
  std::string path;

  void add_artifact(const std::string& p) {
    for (const auto& a : j["artifacts"])
      if (a.get<std::string>() == p) return;
    j["artifacts"].push_back(p);
  }
  void flush() const {
    std::ofstream out(path);
    out << j.dump(2) << "\n";
  }
};

std::uint64_t stage_seed(std::uint64_t base, int stage_index) {
  return base * 1000003ull + static_cast<std::uint64_t>(stage_index) + 1;
}

std::int64_t derive_steps_per_drop(const StageSettings& s, int max_cap) {
  if (s.steps_per_drop > 0) return s.steps_per_drop;
  // Finish removal with margin so the tail of the stage trains the converged
  // template.
  return std::max<std::int64_t>(1, s.steps / (max_cap + 4));
}

struct StageOutcome {
  double final_loss = 0.0;
  std::int64_t steps_run = 0;
};

StageOutcome execute_stage(ModelParams<float>& params, const StageConfig& stage,
                           const RenderedCorpus& corpus, std::uint64_t seed,
                           const std::string& ckpt_path, const std::string& metrics_path,
                           Manifest& manifest, bool resume) {
  StageOutcome outcome;
  Rng rng(seed);
  AdamW<float> opt(params);
  CurriculumState curriculum;
  if (stage.curriculum_steps_per_drop > 0)
    curriculum = make_curriculum(stage.curriculum_steps_per_drop, stage.curriculum_lambda, rng);
  std::int64_t start_step = 0;

  auto& stage_entry = manifest.j["stages"][stage.stage_id];
  if (resume && fs::exists(ckpt_path) && stage_entry.value("status", "") != "") {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    params = std::move(ckpt.params);
    if (ckpt.has_optimizer) {
      opt = AdamW<float>(params);
      opt.moments_m() = std::move(ckpt.opt_m);
      opt.moments_v() = std::move(ckpt.opt_v);
      opt.set_step_count(ckpt.opt_step);
    }
    if (ckpt.has_curriculum) curriculum = ckpt.curriculum;
    if (!ckpt.rng_state.empty()) rng = Rng::deserialize(ckpt.rng_state);
    start_step = ckpt.completed_steps;
    if (stage_entry.value("status", "") == "done" || start_step >= stage.steps) {
      outcome.final_loss = stage_entry.value("final_loss", 0.0);
      return outcome;
    }
  }

  std::ofstream metrics(metrics_path, start_step > 0 ? std::ios::app : std::ios::trunc);
  double last_loss = 0.0;
  TrainHooks hooks;
  hooks.on_metrics = [&](const StepMetrics& m) {
    metrics << step_metrics_to_json(m) << '\n';
    last_loss = m.loss;
    ++outcome.steps_run;
  };
  hooks.on_checkpoint = [&](std::int64_t completed) {
    Checkpoint ckpt;
    ckpt.params = params;
    ckpt.has_optimizer = true;
    ckpt.opt_m = opt.moments_m();
    ckpt.opt_v = opt.moments_v();
    ckpt.opt_step = opt.step_count();
    ckpt.has_curriculum = stage.curriculum_steps_per_drop > 0;
    ckpt.curriculum = curriculum;
    ckpt.rng_state = rng.serialize();
    ckpt.completed_steps = completed;
    ckpt.stage_id = stage.stage_id;
    save_checkpoint(ckpt, ckpt_path);
    stage_entry["status"] = completed >= stage.steps ? "done" : "running";
    stage_entry["completed_steps"] = completed;
    stage_entry["checkpoint"] = ckpt_path;
    stage_entry["metrics"] = metrics_path;
    manifest.add_artifact(ckpt_path);
    manifest.add_artifact(metrics_path);
    manifest.flush();
  };

  stage_entry["declared_steps"] = stage.steps;
  stage_entry["seed"] = seed;
  stage_entry["status"] = "running";
  manifest.flush();

  train_stage(params, opt, corpus, stage, curriculum, rng, start_step, hooks);

  outcome.final_loss = last_loss;
  stage_entry["status"] = "done";
  stage_entry["final_loss"] = last_loss;
  manifest.flush();
  return outcome;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& user_cfg, bool resume) {
  const auto wall_start = std::chrono::steady_clock::now();
  ExperimentConfig cfg = user_cfg;
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  const auto path_in = [&](const std::string& name) { return cfg.out_dir + "/" + name; };

  Manifest manifest;
  manifest.path = path_in("manifest.json");
  if (resume && fs::exists(manifest.path)) {
    std::ifstream in(manifest.path);
    manifest.j = json::parse(in);
  } else {
    manifest.j = json{{"config", json::parse(config_to_json(cfg))},
                      {"stages", json::object()},
                      {"artifacts", json::array()},
                      {"thread_count", 1}};
  }
  save_config(cfg, path_in("config.json"));
  manifest.add_artifact(path_in("config.json"));

  // Data generation. The held-out split uses a distinct seed stream.
  const std::string train_path = path_in("train.jsonl");
  const std::string test_path = path_in("test.jsonl");
  if (!resume || !fs::exists(train_path) || !fs::exists(test_path)) {
    save_pairs(gen_pairs(cfg.task, cfg.codec, cfg.train_pairs, stage_seed(cfg.seed, 100)),
               train_path);
    save_pairs(gen_pairs(cfg.task, cfg.codec, cfg.test_pairs, stage_seed(cfg.seed, 200)),
               test_path);
  }
  const auto train_corpus = load_pairs(train_path);
  const auto test_corpus = load_pairs(test_path);
  manifest.j["corpus"] = {
      {"train", {{"path", train_path}, {"fingerprint", file_fingerprint(train_path)}}},
      {"test", {{"path", test_path}, {"fingerprint", file_fingerprint(test_path)}}}};
  manifest.add_artifact(train_path);
  manifest.add_artifact(test_path);
  manifest.flush();

  ExperimentReport report;
  report.train_stats = corpus_stats(train_corpus, cfg.codec);
  report.test_stats = corpus_stats(test_corpus, cfg.codec);

  const Vocabulary vocab = make_vocabulary(cfg.codec);
  ModelConfig mcfg = cfg.model;
  mcfg.vocab_size = vocab.size();
  mcfg.seed = cfg.seed;
  mcfg.validate();

  // Renders shared across stages.
  const RenderedCorpus atta_corpus =
      render_corpus(train_corpus, ChainMode::AttaFinetuned, vocab, Segment::Transcript);
  const RenderedCorpus ata_nocot_corpus =
      render_corpus(train_corpus, ChainMode::AtaNoCot, vocab, Segment::Transcript);

  int max_transcript_cap = 0, max_response_cap = 0;
  for (const auto& pair : train_corpus) {
    max_transcript_cap = std::max(max_transcript_cap, static_cast<int>(pair.transcript.size()));
    max_response_cap = std::max(max_response_cap, static_cast<int>(pair.response_text.size()));
  }

  // Stage 1: full-parameter CoT training on the full chain.
  ModelParams<float> params = init_model<float>(mcfg);
  {
    StageConfig s;
    s.stage_id = "stage1";
    s.mode = ChainMode::AttaFinetuned;
    s.steps = cfg.stage1.steps;
    s.learning_rate = cfg.stage1.learning_rate;
    s.batch_size = cfg.stage1.batch_size;
    s.checkpoint_interval = cfg.stage1.checkpoint_interval;
    const auto out = execute_stage(params, s, atta_corpus, stage_seed(cfg.seed, 1),
                                   path_in("stage1.ckpt"), path_in("stage1.metrics.jsonl"),
                                   manifest, resume);
    report.final_losses["stage1"] = out.final_loss;
  }
  const ModelParams<float> stage1_params = params;

  // Stage 2: freeze the base, attach adapters, internalize the transcript.
  {
    if (!params.has_adapters) {
      params.base_frozen = true;
      attach_adapters(params, cfg.adapter);
    }
    StageConfig s;
    s.stage_id = "stage2";
    s.mode = ChainMode::AttaFinetuned;
    s.steps = cfg.stage2.steps;
    s.learning_rate = cfg.stage2.learning_rate;
    s.batch_size = cfg.stage2.batch_size;
    s.use_adapters = true;
    s.curriculum_steps_per_drop = derive_steps_per_drop(cfg.stage2, max_transcript_cap);
    s.curriculum_lambda = cfg.stage2.lambda;
    s.removal_target = Segment::Transcript;
    s.checkpoint_interval = cfg.stage2.checkpoint_interval;
    const auto out = execute_stage(params, s, atta_corpus, stage_seed(cfg.seed, 2),
                                   path_in("stage2.ckpt"), path_in("stage2.metrics.jsonl"),
                                   manifest, resume);
    report.final_losses["stage2"] = out.final_loss;
  }
  const ModelParams<float> stage2_params = params;

  // Optional stage 3: internalize the text response from the stage-2 model.
  ModelParams<float> stage3_params;
  if (cfg.run_stage3) {
    if (!params.has_adapters)
      throw StateError("stage3 requires the stage-2 adapter checkpoint");
    const RenderedCorpus ata_corpus =
        render_corpus(train_corpus, ChainMode::AtaIcot, vocab, Segment::TextResponse);
    StageConfig s;
    s.stage_id = "stage3";
    s.mode = ChainMode::AtaIcot;
    s.steps = cfg.stage3.steps;
    s.learning_rate = cfg.stage3.learning_rate;
    s.batch_size = cfg.stage3.batch_size;
    s.use_adapters = true;
    s.curriculum_steps_per_drop = derive_steps_per_drop(cfg.stage3, max_response_cap);
    s.curriculum_lambda = cfg.stage3.lambda;
    s.removal_target = Segment::TextResponse;
    s.checkpoint_interval = cfg.stage3.checkpoint_interval;
    const auto out = execute_stage(params, s, ata_corpus, stage_seed(cfg.seed, 3),
                                   path_in("stage3.ckpt"), path_in("stage3.metrics.jsonl"),
                                   manifest, resume);
    report.final_losses["stage3"] = out.final_loss;
    stage3_params = params;
  }

  // Equal-budget baseline: direct training on the transcript-free template.
  ModelParams<float> nocot_params = init_model<float>(mcfg);
  {
    StageConfig s;
    s.stage_id = "ata-nocot";
    s.mode = ChainMode::AtaNoCot;
    s.steps = cfg.ata_nocot.steps > 0 ? cfg.ata_nocot.steps
                                      : cfg.stage1.steps + cfg.stage2.steps;
    s.learning_rate = cfg.ata_nocot.learning_rate;
    s.batch_size = cfg.ata_nocot.batch_size;
    s.checkpoint_interval = cfg.ata_nocot.checkpoint_interval;
    const auto out = execute_stage(nocot_params, s, ata_nocot_corpus, stage_seed(cfg.seed, 4),
                                   path_in("ata_nocot.ckpt"), path_in("ata_nocot.metrics.jsonl"),
                                   manifest, resume);
    report.final_losses["ata-nocot"] = out.final_loss;
  }

  const ModelParams<float> raw_params = init_model<float>(mcfg);

  // Generation over the held-out set, once per system.
  RunChainOptions run_opt;
  run_opt.max_new_tokens = cfg.max_new_tokens;
  std::vector<SystemRun> systems;
  systems.push_back({"atta", ChainMode::AttaFinetuned, &stage1_params, {}});
  systems.push_back({"ata-icot", ChainMode::AtaIcot, &stage2_params, {}});
  systems.push_back({"ata-nocot", ChainMode::AtaNoCot, &nocot_params, {}});
  if (cfg.run_stage3) systems.push_back({"aa-icot", ChainMode::AaIcot, &stage3_params, {}});
  systems.push_back({"atta-nofinetune", ChainMode::AttaNoFinetune, &raw_params, {}});
  systems.push_back({"aa-nofinetune", ChainMode::AaRawNoFinetune, &raw_params, {}});
  for (auto& sys : systems) {
    sys.results.reserve(test_corpus.size());
    for (const auto& pair : test_corpus)
      sys.results.push_back(run_chain(*sys.params, pair.input_audio, sys.mode, vocab, run_opt));
    report.accuracy[sys.name] =
        accuracy_from_results(sys.results, test_corpus, cfg.task, cfg.codec);
  }

  // Latency bench on a subset with warmup, plus the headline comparison.
  {
    std::vector<DialoguePair> bench_corpus(
        test_corpus.begin(),
        test_corpus.begin() +
            static_cast<std::ptrdiff_t>(std::min(cfg.bench_pairs, test_corpus.size())));
    std::vector<BenchSystem> bench_systems;
    for (const auto& sys : systems)
      if (sys.name == "atta" || sys.name == "ata-icot" || sys.name == "aa-icot")
        bench_systems.push_back({sys.mode, sys.params});
    report.bench = bench(bench_systems, bench_corpus, cfg.bench_repetitions, vocab,
                         {{ChainMode::AtaIcot, ChainMode::AttaFinetuned}}, run_opt);
    std::ofstream(path_in("bench.json")) << bench_report_to_json(report.bench) << "\n";
    manifest.add_artifact(path_in("bench.json"));
  }

  // Stub-judge pairwise evaluation of every finetuned baseline vs the
  // ICoT system, both rubrics, both presentation orders.
  {
    std::unique_ptr<JudgeClient> judge;
    if (cfg.judge == "stub")
      judge = std::make_unique<StubJudge>(cfg.task);
    else
      judge = std::make_unique<HttpJudge>(cfg.endpoint);

    std::vector<std::string> dialogue_inputs, pair_ids;
    for (const auto& pair : test_corpus) {
      dialogue_inputs.push_back(pair.transcript);
      pair_ids.push_back(pair.pair_id);
    }
    auto outputs_of = [&](const SystemRun& sys) {
      SystemOutputs out;
      out.name = sys.name;
      std::vector<ChainOutput> chain_outputs;
      chain_outputs.reserve(sys.results.size());
      for (const auto& r : sys.results) chain_outputs.push_back(r.output);
      out.responses = transcribe_outputs(chain_outputs, cfg.codec);
      return out;
    };
    const SystemRun* icot = nullptr;
    for (const auto& sys : systems)
      if (sys.name == "ata-icot") icot = &sys;
    const SystemOutputs icot_outputs = outputs_of(*icot);

    std::vector<ComparisonRecord> all_records;
    for (const auto& sys : systems) {
      if (sys.name == "ata-icot" || sys.name == "atta-nofinetune" || sys.name == "aa-nofinetune")
        continue;
      const SystemOutputs baseline = outputs_of(sys);
      for (Rubric rubric : {Rubric::Naturalness, Rubric::Specificity}) {
        auto records =
            judge_systems(baseline, icot_outputs, dialogue_inputs, pair_ids, rubric, *judge);
        all_records.insert(all_records.end(), records.begin(), records.end());
      }
      report.win_rates[sys.name] = win_rate_report(all_records, sys.name);
    }
    save_records(all_records, path_in("records.jsonl"));
    manifest.add_artifact(path_in("records.jsonl"));
  }

  report.total_wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();

  std::ofstream(path_in("report.json")) << report_to_json(report, true);
  std::ofstream(path_in("report.stable.json")) << report_to_json(report, false);
  std::ofstream(path_in("report.txt")) << report_to_text(report);
  std::ofstream(path_in("winrate.svg")) << win_rate_svg(report.win_rates);
  manifest.add_artifact(path_in("report.json"));
  manifest.add_artifact(path_in("report.stable.json"));
  manifest.add_artifact(path_in("report.txt"));
  manifest.add_artifact(path_in("winrate.svg"));
  for (const std::string name :
       {"stage1.metrics.jsonl", "stage2.metrics.jsonl", "ata_nocot.metrics.jsonl"})
    manifest.add_artifact(path_in(name));
  if (cfg.run_stage3) manifest.add_artifact(path_in("stage3.metrics.jsonl"));
  manifest.flush();
  return report;
}

}  // namespace icot
