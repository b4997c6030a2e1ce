#include "icot/corpus.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "icot/errors.hpp"

namespace icot {

using nlohmann::json;

TaskFamily task_family_from_name(const std::string& name) {
  if (name == "reverse") return TaskFamily::Reverse;
  if (name == "shift") return TaskFamily::Shift;
  if (name == "digit-sum") return TaskFamily::DigitSum;
  throw ConfigError("unknown task family '" + name + "' (expected reverse, shift, digit-sum)");
}

std::string task_family_name(TaskFamily family) {
  switch (family) {
    case TaskFamily::Reverse: return "reverse";
    case TaskFamily::Shift: return "shift";
    case TaskFamily::DigitSum: return "digit-sum";
  }
  return "?";
}

void TaskSpec::validate() const {
  if (min_words < 1 || max_words < min_words)
    throw ConfigError("task: need 1 <= min_words <= max_words");
  if (min_word_len < 1 || max_word_len < min_word_len)
    throw ConfigError("task: need 1 <= min_word_len <= max_word_len");
  if (min_digits < 1 || max_digits < min_digits)
    throw ConfigError("task: need 1 <= min_digits <= max_digits");
}

namespace {

char shift_char(char c, int k) {
  if (c >= 'a' && c <= 'z') return static_cast<char>('a' + ((c - 'a' + k) % 26 + 26) % 26);
  if (c >= '0' && c <= '9') return static_cast<char>('0' + ((c - '0' + k) % 10 + 10) % 10);
  return c;
}

std::string sample_word(const TaskSpec& spec, Rng& rng) {
  const int len = spec.min_word_len +
                  static_cast<int>(rng.uniform_below(spec.max_word_len - spec.min_word_len + 1));
  std::string w(len, 'a');
  for (char& c : w) c = static_cast<char>('a' + rng.uniform_below(26));
  return w;
}

std::string sample_number(const TaskSpec& spec, Rng& rng) {
  const int len =
      spec.min_digits + static_cast<int>(rng.uniform_below(spec.max_digits - spec.min_digits + 1));
  std::string n(len, '0');
  n[0] = static_cast<char>('1' + rng.uniform_below(9));
  for (int i = 1; i < len; ++i) n[i] = static_cast<char>('0' + rng.uniform_below(10));
  return n;
}

}  // namespace

std::string apply_task(const TaskSpec& spec, const std::string& input) {
  switch (spec.family) {
    case TaskFamily::Reverse:
      return std::string(input.rbegin(), input.rend());
    case TaskFamily::Shift: {
      std::string out = input;
      for (char& c : out) c = shift_char(c, spec.shift_amount);
      return out;
    }
    case TaskFamily::DigitSum: {
      // Sum of every maximal digit run; "add 12 and 34" -> "46".
      unsigned long long total = 0;
      unsigned long long run = 0;
      bool in_run = false;
      for (char c : input) {
        if (c >= '0' && c <= '9') {
          run = run * 10 + static_cast<unsigned>(c - '0');
          in_run = true;
        } else if (in_run) {
          total += run;
          run = 0;
          in_run = false;
        }
      }
      if (in_run) total += run;
      return std::to_string(total);
    }
  }
  throw ConfigError("apply_task: bad family");
}

std::string sample_input(const TaskSpec& spec, Rng& rng) {
  spec.validate();
  if (spec.family == TaskFamily::DigitSum) {
    return "add " + sample_number(spec, rng) + " and " + sample_number(spec, rng);
  }
  const int n_words =
      spec.min_words + static_cast<int>(rng.uniform_below(spec.max_words - spec.min_words + 1));
  std::string text;
  for (int i = 0; i < n_words; ++i) {
    if (i) text += ' ';
    text += sample_word(spec, rng);
  }
  return text;
}

DialoguePair generate_pair(const TaskSpec& spec, Rng& rng, const CodecConfig& cfg,
                           const std::string& pair_id) {
  if (cfg.num_speakers < 2)
    throw ConfigError("generate_pair: need at least 2 speakers for distinct roles");
  DialoguePair pair;
  pair.pair_id = pair_id;
  pair.transcript = sample_input(spec, rng);
  pair.response_text = apply_task(spec, pair.transcript);
  pair.input_speaker = static_cast<int>(rng.uniform_below(cfg.num_speakers));
  // Uniform over the remaining ids keeps the speakers distinct within a pair.
  int other = static_cast<int>(rng.uniform_below(cfg.num_speakers - 1));
  if (other >= pair.input_speaker) ++other;
  pair.output_speaker = other;
  pair.input_audio = encode_text(pair.transcript, pair.input_speaker, cfg, rng);
  pair.output_audio = encode_text(pair.response_text, pair.output_speaker, cfg, rng);
  return pair;
}

std::vector<DialoguePair> gen_pairs(const TaskSpec& spec, const CodecConfig& cfg, std::size_t n,
                                    std::uint64_t seed) {
  Rng rng(seed);
  std::vector<DialoguePair> pairs;
  pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "p%06llu", static_cast<unsigned long long>(i));
    pairs.push_back(generate_pair(spec, rng, cfg, id));
  }
  return pairs;
}

namespace {

json pair_to_json(const DialoguePair& p) {
  return json{{"pair_id", p.pair_id},
              {"input_audio", p.input_audio.tokens},
              {"transcript", p.transcript},
              {"response_text", p.response_text},
              {"output_audio", p.output_audio.tokens},
              {"input_speaker", p.input_speaker},
              {"output_speaker", p.output_speaker}};
}

DialoguePair pair_from_json(const json& rec, std::size_t line_no) {
  auto require = [&](const char* field) -> const json& {
    auto it = rec.find(field);
    if (it == rec.end())
      throw DataError("line " + std::to_string(line_no) + ": missing required field '" + field +
                      "'");
    return *it;
  };
  DialoguePair p;
  try {
    p.pair_id = require("pair_id").get<std::string>();
    p.input_audio.tokens = require("input_audio").get<std::vector<int>>();
    p.transcript = require("transcript").get<std::string>();
    p.response_text = require("response_text").get<std::string>();
    p.output_audio.tokens = require("output_audio").get<std::vector<int>>();
    p.input_speaker = require("input_speaker").get<int>();
    p.output_speaker = require("output_speaker").get<int>();
  } catch (const json::exception& e) {
    throw DataError("line " + std::to_string(line_no) + ": " + e.what());
  }
  if (p.transcript.empty())
    throw DataError("line " + std::to_string(line_no) + ": field 'transcript' is empty");
  if (p.response_text.empty())
    throw DataError("line " + std::to_string(line_no) + ": field 'response_text' is empty");
  if (p.input_speaker == p.output_speaker)
    throw DataError("line " + std::to_string(line_no) +
                    ": input_speaker and output_speaker must differ");
  p.input_audio.speaker = p.input_speaker;
  p.output_audio.speaker = p.output_speaker;
  return p;
}

}  // namespace

void save_pairs(const std::vector<DialoguePair>& pairs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("save_pairs: cannot open '" + path + "' for writing");
  for (const auto& p : pairs) out << pair_to_json(p).dump() << '\n';
  if (!out) throw DataError("save_pairs: write to '" + path + "' failed");
}

std::vector<DialoguePair> load_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_pairs: cannot open '" + path + "'");
  std::vector<DialoguePair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("line " + std::to_string(line_no) + ": malformed record: " + e.what());
    }
    pairs.push_back(pair_from_json(rec, line_no));
  }
  return pairs;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream is(text);
  std::string w;
  while (is >> w) words.push_back(w);
  return words;
}

std::size_t word_edit_distance(const std::vector<std::string>& hyp,
                               const std::vector<std::string>& ref) {
  const std::size_t n = hyp.size(), m = ref.size();
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double compute_wer(const std::string& hypothesis, const std::string& reference) {
  const auto ref = split_words(reference);
  if (ref.empty()) throw DataError("compute_wer: reference has no words");
  const auto hyp = split_words(hypothesis);
  return static_cast<double>(word_edit_distance(hyp, ref)) / static_cast<double>(ref.size());
}

CorpusStats corpus_stats(const std::vector<DialoguePair>& pairs, const CodecConfig& cfg) {
  CorpusStats stats;
  stats.num_pairs = pairs.size();
  std::set<int> speakers;
  std::size_t total_errors = 0, total_ref_words = 0;
  for (const auto& p : pairs) {
    stats.total_audio_tokens += p.input_audio.tokens.size() + p.output_audio.tokens.size();
    speakers.insert(p.input_speaker);
    speakers.insert(p.output_speaker);
    const auto ref = split_words(p.transcript);
    const auto hyp = split_words(decode_audio(p.input_audio, cfg));
    total_errors += word_edit_distance(hyp, ref);
    total_ref_words += ref.size();
  }
  stats.num_unique_speakers = speakers.size();
  if (!pairs.empty())
    stats.mean_tokens_per_utterance =
        static_cast<double>(stats.total_audio_tokens) / (2.0 * static_cast<double>(pairs.size()));
  if (total_ref_words > 0)
    stats.corpus_wer = static_cast<double>(total_errors) / static_cast<double>(total_ref_words);
  return stats;
}

}  // namespace icot
