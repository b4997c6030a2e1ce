#include "icot/inference.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "icot/errors.hpp"

namespace icot {

using nlohmann::json;

std::vector<int> build_inference_prefix(const AudioTokenSeq& input_audio, ChainMode mode,
                                        const Vocabulary& v, int* clock_from) {
  const TemplateKind kind = template_kind(mode);
  std::vector<int> prefix;
  prefix.reserve(input_audio.tokens.size() + 8);
  prefix.push_back(kind == TemplateKind::AaRaw ? v.prompt_raw : v.prompt_cot);
  prefix.push_back(v.ins);
  prefix.push_back(v.human);
  for (int t : input_audio.tokens) prefix.push_back(v.audio_id(t));
  if (clock_from) *clock_from = static_cast<int>(prefix.size()) - 1;
  prefix.push_back(v.eoh);
  prefix.push_back(v.agent);
  prefix.push_back(v.res);
  return prefix;
}

ChainOutput parse_continuation(const std::vector<int>& tokens, bool truncated, ChainMode mode,
                               const Vocabulary& v) {
  ChainOutput out;
  out.raw_tokens = tokens;
  out.truncated = truncated;

  std::size_t i = 0;
  const std::size_t n = tokens.size();
  auto take_text = [&] {
    std::string s;
    while (i < n && v.is_text(tokens[i])) s.push_back(v.text_char(tokens[i++]));
    return s;
  };
  auto take_audio = [&] {
    AudioTokenSeq seq;
    while (i < n && v.is_audio(tokens[i])) seq.tokens.push_back(v.audio_token(tokens[i++]));
    return seq;
  };
  auto expect = [&](int id) {
    if (i < n && tokens[i] == id) {
      ++i;
      return;
    }
    out.parse_ok = false;
  };

  switch (template_kind(mode)) {
    case TemplateKind::Atta:
      out.transcript = take_text();
      expect(v.nl);
      expect(v.agent);
      out.response = take_text();
      expect(v.sp);
      break;
    case TemplateKind::Ata:
      expect(v.agent);
      out.response = take_text();
      expect(v.sp);
      break;
    case TemplateKind::Aa:
      expect(v.agent);
      break;
    case TemplateKind::AaRaw:
      break;
  }
  out.output_audio = take_audio();
  if (i < n && tokens[i] == v.eos) {
    ++i;
  } else if (!truncated) {
    out.parse_ok = false;
  }
  if (i != n) out.parse_ok = false;  // unconsumed trailing tokens
  return out;
}

ChainResult run_chain(const ModelParams<float>& params, const AudioTokenSeq& input_audio,
                      ChainMode mode, const Vocabulary& vocab, const RunChainOptions& opt) {
  int clock_from = -1;
  const std::vector<int> prefix = build_inference_prefix(input_audio, mode, vocab, &clock_from);

  GenerateOptions gen_opt;
  gen_opt.max_new_tokens = opt.max_new_tokens;
  gen_opt.eos_id = vocab.eos;
  gen_opt.audio_id_begin = vocab.n_text;
  gen_opt.audio_id_end = vocab.n_text + vocab.n_audio;
  gen_opt.clock_from = clock_from;
  const GenerateResult gen = generate(params, prefix, gen_opt);

  ChainResult result;
  result.output = parse_continuation(gen.tokens, gen.truncated, mode, vocab);
  auto& stats = result.stats;
  stats.tokens_before_first_audio = gen.steps_to_first_audio >= 0
                                        ? gen.steps_to_first_audio
                                        : static_cast<int>(gen.tokens.size());
  stats.latency_seconds =
      gen.steps_to_first_audio >= 0 ? gen.seconds_to_first_audio : gen.seconds_total;
  stats.transcript_token_count = static_cast<int>(result.output.transcript.size());
  stats.response_token_count = static_cast<int>(result.output.response.size());
  return result;
}

void MeanStd::accumulate(const std::vector<double>& xs) {
  if (xs.empty()) {
    mean = stddev = 0.0;
    return;
  }
  double sum = 0.0;
  for (double x : xs) sum += x;
  mean = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  stddev = std::sqrt(ss / static_cast<double>(xs.size()));
}

double relative_reduction(double slower, double faster) {
  if (slower == 0.0) return 0.0;
  return (slower - faster) / slower;
}

BenchReport bench(const std::vector<BenchSystem>& systems,
                  const std::vector<DialoguePair>& test_corpus, int repetitions,
                  const Vocabulary& vocab,
                  const std::vector<std::pair<ChainMode, ChainMode>>& compare,
                  const RunChainOptions& opt) {
  if (systems.empty()) throw DataError("bench: at least one mode is required");
  if (test_corpus.empty()) throw DataError("bench: empty test corpus");
  if (repetitions < 1) throw ConfigError("bench: repetitions must be positive");

  BenchReport report;
  for (const auto& sys : systems) {
    ModeBenchStats stats;
    stats.mode = sys.mode;
    // Warmup run, excluded from every figure.
    (void)run_chain(*sys.params, test_corpus.front().input_audio, sys.mode, vocab, opt);

    std::vector<double> toks, lat, tr, re;
    for (int rep = 0; rep < repetitions; ++rep) {
      for (const auto& pair : test_corpus) {
        const ChainResult r = run_chain(*sys.params, pair.input_audio, sys.mode, vocab, opt);
        toks.push_back(r.stats.tokens_before_first_audio);
        lat.push_back(r.stats.latency_seconds);
        tr.push_back(r.stats.transcript_token_count);
        re.push_back(r.stats.response_token_count);
        if (!r.output.parse_ok) ++stats.parse_failures;
        if (r.output.truncated) ++stats.truncations;
        ++stats.runs;
      }
    }
    stats.tokens_before_first_audio.accumulate(toks);
    stats.latency_seconds.accumulate(lat);
    stats.transcript_tokens.accumulate(tr);
    stats.response_tokens.accumulate(re);
    report.modes.push_back(stats);
  }

  auto find_mode = [&](ChainMode m) -> const ModeBenchStats* {
    for (const auto& s : report.modes)
      if (s.mode == m) return &s;
    return nullptr;
  };
  for (const auto& [faster, slower] : compare) {
    const auto* f = find_mode(faster);
    const auto* s = find_mode(slower);
    if (!f || !s) throw ConfigError("bench: comparison references a mode that was not run");
    BenchComparison cmp;
    cmp.faster = faster;
    cmp.slower = slower;
    cmp.token_reduction = relative_reduction(s->tokens_before_first_audio.mean,
                                             f->tokens_before_first_audio.mean);
    cmp.wall_reduction = relative_reduction(s->latency_seconds.mean, f->latency_seconds.mean);
    report.comparisons.push_back(cmp);
  }
  return report;
}

namespace {

json mean_std_json(const MeanStd& m) { return json{{"mean", m.mean}, {"std", m.stddev}}; }

}  // namespace

std::string bench_report_to_json(const BenchReport& report) {
  json modes = json::array();
  for (const auto& m : report.modes) {
    modes.push_back({{"mode", chain_mode_name(m.mode)},
                     {"runs", m.runs},
                     {"tokens_before_first_audio", mean_std_json(m.tokens_before_first_audio)},
                     {"latency_seconds", mean_std_json(m.latency_seconds)},
                     {"transcript_tokens", mean_std_json(m.transcript_tokens)},
                     {"response_tokens", mean_std_json(m.response_tokens)},
                     {"parse_failures", m.parse_failures},
                     {"truncations", m.truncations}});
  }
  json comparisons = json::array();
  for (const auto& c : report.comparisons) {
    comparisons.push_back({{"faster", chain_mode_name(c.faster)},
                           {"slower", chain_mode_name(c.slower)},
                           {"token_reduction", c.token_reduction},
                           {"wall_reduction", c.wall_reduction}});
  }
  return json{{"modes", modes}, {"comparisons", comparisons}}.dump(2);
}

std::string bench_report_to_text(const BenchReport& report) {
  std::ostringstream os;
  os << "inference statistics (mean +/- std over runs)\n";
  for (const auto& m : report.modes) {
    os << "  " << chain_mode_name(m.mode) << ": tokens-to-first-audio "
       << m.tokens_before_first_audio.mean << " +/- " << m.tokens_before_first_audio.stddev
       << ", latency " << m.latency_seconds.mean * 1e3 << " ms, transcript tokens "
       << m.transcript_tokens.mean << ", response tokens " << m.response_tokens.mean;
    if (m.parse_failures) os << ", parse failures " << m.parse_failures;
    if (m.truncations) os << ", truncations " << m.truncations;
    os << "\n";
  }
  for (const auto& c : report.comparisons) {
    os << "  " << chain_mode_name(c.faster) << " vs " << chain_mode_name(c.slower)
       << ": token reduction " << c.token_reduction * 100.0 << "%, wall reduction "
       << c.wall_reduction * 100.0 << "%\n";
  }
  return os.str();
}

}  // namespace icot
