#include "icot/eval.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#define CPPHTTPLIB_NO_EXCEPTIONS
#include <httplib.h>

#include "icot/errors.hpp"

namespace icot {

using nlohmann::json;

JudgeRequest make_judge_request(Rubric rubric, const std::string& dialogue_input,
                                const std::string& response_a, const std::string& response_b) {
  JudgeRequest req;
  req.dialogue_input = dialogue_input;
  req.response_a = response_a;
  req.response_b = response_b;
  req.rubric = rubric;
  req.rendered_prompt =
      prompts::render_judge_prompt(rubric, dialogue_input, response_a, response_b);
  return req;
}

namespace {

/// Extracts the text between a section header and the next "###" header.
std::string prompt_section(const std::string& prompt, const std::string& header) {
  const auto start = prompt.find(header);
  if (start == std::string::npos)
    throw JudgeError("stub judge: prompt is missing section '" + header + "'");
  auto body = start + header.size();
  if (body < prompt.size() && prompt[body] == '\n') ++body;
  auto end = prompt.find("\n### ", body);
  if (end == std::string::npos) end = prompt.size();
  std::string text = prompt.substr(body, end - body);
  while (!text.empty() && (text.back() == '\n' || text.back() == ' ')) text.pop_back();
  return text;
}

std::size_t char_edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1), prev[j] + 1, cur[j - 1] + 1});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double stub_score(const std::string& response, const std::string& reference) {
  const auto ref_words = split_words(reference);
  if (!ref_words.empty())
    return static_cast<double>(word_edit_distance(split_words(response), ref_words)) /
           static_cast<double>(ref_words.size());
  return static_cast<double>(char_edit_distance(response, reference));
}

}  // namespace

std::string StubJudge::complete(const std::string& prompt) {
  const std::string input = prompt_section(prompt, "### Dialogue Input:");
  const std::string a = prompt_section(prompt, "### Response A:");
  const std::string b = prompt_section(prompt, "### Response B:");
  const std::string reference = apply_task(task_, input);
  const double score_a = stub_score(a, reference);
  const double score_b = stub_score(b, reference);
  const char winner = score_a <= score_b ? 'A' : 'B';  // ties go to position A
  json out{{"explanation", "stub judge: WER against the reference response, A=" +
                               std::to_string(score_a) + " B=" + std::to_string(score_b)},
           {"winner", std::string(1, winner)}};
  return out.dump();
}

std::string HttpJudge::complete(const std::string& prompt) {
  httplib::Client client(cfg_.host, cfg_.port);
  client.set_read_timeout(cfg_.timeout_seconds, 0);
  client.set_connection_timeout(cfg_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!cfg_.api_key_env.empty()) {
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const std::string body = json{{"model", cfg_.model}, {"prompt", prompt}}.dump();
  auto res = client.Post(cfg_.path, headers, body, "application/json");
  if (!res)
    throw JudgeError("judge endpoint " + cfg_.host + ":" + std::to_string(cfg_.port) +
                     " unreachable");
  if (res->status != 200)
    throw JudgeError("judge endpoint returned status " + std::to_string(res->status));
  json parsed = json::parse(res->body, nullptr, false);
  if (parsed.is_discarded() || !parsed.contains("completion"))
    throw JudgeError("judge endpoint response is missing the completion field");
  return parsed["completion"].get<std::string>();
}

std::optional<JudgeVerdict> parse_judge_completion(const std::string& completion) {
  JudgeVerdict v;
  json parsed = json::parse(completion, nullptr, false);
  if (!parsed.is_discarded() && parsed.is_object() && parsed.contains("winner")) {
    const std::string w = parsed["winner"].is_string() ? parsed["winner"].get<std::string>() : "";
    if (w == "A" || w == "B") {
      v.ok = true;
      v.winner = w[0];
      if (parsed.contains("explanation") && parsed["explanation"].is_string())
        v.explanation = parsed["explanation"].get<std::string>();
      return v;
    }
  }
  // Judges often emit pseudo-JSON with single quotes; scan for the winner key.
  const auto key = completion.find("winner");
  if (key != std::string::npos) {
    for (std::size_t i = key + 6; i < completion.size(); ++i) {
      const char c = completion[i];
      if (c == 'A' || c == 'B') {
        v.ok = true;
        v.winner = c;
        v.explanation = completion;
        return v;
      }
      if (c != ':' && c != '=' && c != ' ' && c != '\'' && c != '"' && c != '\n') break;
    }
  }
  return std::nullopt;
}

JudgeVerdict judge_pair(const JudgeRequest& req, JudgeClient& judge, int max_attempts) {
  JudgeVerdict last;
  last.judge = judge.name();
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    std::string completion;
    try {
      completion = judge.complete(req.rendered_prompt);
    } catch (const JudgeError& e) {
      last.error = e.what();
      continue;
    }
    if (auto parsed = parse_judge_completion(completion)) {
      parsed->judge = judge.name();
      return *parsed;
    }
    last.error = "malformed judge output";
  }
  last.ok = false;
  return last;
}

std::string comparison_record_to_json(const ComparisonRecord& rec) {
  return json{{"pair_id", rec.pair_id}, {"system_a", rec.system_a},
              {"system_b", rec.system_b}, {"rubric", rubric_name(rec.rubric)},
              {"judge", rec.judge},       {"swapped", rec.swapped},
              {"ok", rec.ok},             {"winner", std::string(1, rec.winner)},
              {"error", rec.error}}
      .dump();
}

ComparisonRecord comparison_record_from_json(const std::string& line, std::size_t line_no) {
  json rec = json::parse(line, nullptr, false);
  if (rec.is_discarded())
    throw DataError("line " + std::to_string(line_no) + ": malformed comparison record");
  try {
    ComparisonRecord out;
    out.pair_id = rec.at("pair_id").get<std::string>();
    out.system_a = rec.at("system_a").get<std::string>();
    out.system_b = rec.at("system_b").get<std::string>();
    out.rubric = rubric_from_name(rec.at("rubric").get<std::string>());
    out.judge = rec.at("judge").get<std::string>();
    out.swapped = rec.at("swapped").get<bool>();
    out.ok = rec.at("ok").get<bool>();
    const std::string w = rec.at("winner").get<std::string>();
    out.winner = w.empty() ? '?' : w[0];
    out.error = rec.value("error", "");
    return out;
  } catch (const json::exception& e) {
    throw DataError("line " + std::to_string(line_no) + ": " + e.what());
  }
}

void save_records(const std::vector<ComparisonRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("save_records: cannot open '" + path + "'");
  for (const auto& r : records) out << comparison_record_to_json(r) << '\n';
}

std::vector<ComparisonRecord> load_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_records: cannot open '" + path + "'");
  std::vector<ComparisonRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty()) records.push_back(comparison_record_from_json(line, line_no));
  }
  return records;
}

std::vector<ComparisonRecord> judge_systems(const SystemOutputs& a, const SystemOutputs& b,
                                            const std::vector<std::string>& dialogue_inputs,
                                            const std::vector<std::string>& pair_ids,
                                            Rubric rubric, JudgeClient& judge,
                                            bool swap_positions) {
  if (a.responses.size() != b.responses.size() ||
      a.responses.size() != dialogue_inputs.size() || a.responses.size() != pair_ids.size())
    throw DataError("judge_systems: systems and corpus sizes do not match");

  std::vector<ComparisonRecord> records;
  records.reserve(a.responses.size() * (swap_positions ? 2 : 1));
  for (std::size_t i = 0; i < a.responses.size(); ++i) {
    const int orders = swap_positions ? 2 : 1;
    for (int order = 0; order < orders; ++order) {
      const bool swapped = order == 1;
      const SystemOutputs& first = swapped ? b : a;
      const SystemOutputs& second = swapped ? a : b;
      const JudgeRequest req = make_judge_request(rubric, dialogue_inputs[i],
                                                  first.responses[i], second.responses[i]);
      const JudgeVerdict verdict = judge_pair(req, judge);
      ComparisonRecord rec;
      rec.pair_id = pair_ids[i];
      rec.system_a = first.name;
      rec.system_b = second.name;
      rec.rubric = rubric;
      rec.judge = judge.name();
      rec.swapped = swapped;
      rec.ok = verdict.ok;
      rec.winner = verdict.winner;
      rec.error = verdict.error;
      records.push_back(std::move(rec));
    }
  }
  return records;
}

std::vector<ComparisonOutcome> pair_outcomes(const std::vector<ComparisonRecord>& records) {
  // Group by (pair, rubric, judge, unordered system pair).
  using Key = std::tuple<std::string, std::string, std::string, std::string, std::string>;
  std::map<Key, std::vector<const ComparisonRecord*>> groups;
  for (const auto& r : records) {
    const auto lo = std::min(r.system_a, r.system_b);
    const auto hi = std::max(r.system_a, r.system_b);
    groups[{r.pair_id, rubric_name(r.rubric), r.judge, lo, hi}].push_back(&r);
  }
  std::vector<ComparisonOutcome> outcomes;
  outcomes.reserve(groups.size());
  for (const auto& [key, group] : groups) {
    ComparisonOutcome out;
    out.pair_id = std::get<0>(key);
    out.rubric = rubric_from_name(std::get<1>(key));
    out.judge = std::get<2>(key);
    std::set<std::string> winners;
    bool failed = false;
    for (const auto* r : group) {
      if (!r->ok) {
        failed = true;
        break;
      }
      winners.insert(r->winner == 'A' ? r->system_a : r->system_b);
    }
    if (failed) {
      out.failed = true;
    } else if (winners.size() == 1) {
      out.winner_system = *winners.begin();
    } else {
      out.inconsistent = true;
    }
    outcomes.push_back(std::move(out));
  }
  return outcomes;
}

namespace {

bool involves_system(const ComparisonRecord& r, const std::string& system) {
  return r.system_a == system || r.system_b == system;
}

}  // namespace

double win_rate(const std::vector<ComparisonRecord>& records, const std::string& system) {
  std::vector<ComparisonRecord> relevant;
  for (const auto& r : records)
    if (involves_system(r, system)) relevant.push_back(r);
  if (relevant.empty())
    throw DataError("win_rate: no comparison records involve system '" + system + "'");
  std::size_t wins = 0, decided = 0;
  for (const auto& out : pair_outcomes(relevant)) {
    if (out.failed || out.inconsistent) continue;
    ++decided;
    if (out.winner_system == system) ++wins;
  }
  if (decided == 0) throw DataError("win_rate: no decided comparisons for '" + system + "'");
  return static_cast<double>(wins) / static_cast<double>(decided);
}

WinRateReport win_rate_report(const std::vector<ComparisonRecord>& records,
                              const std::string& system) {
  std::vector<ComparisonRecord> relevant;
  for (const auto& r : records)
    if (involves_system(r, system)) relevant.push_back(r);
  if (relevant.empty())
    throw DataError("win_rate_report: no records involve system '" + system + "'");

  std::map<std::pair<std::string, std::string>, WinRateCell> cells;
  for (const auto& out : pair_outcomes(relevant)) {
    auto& cell = cells[{out.judge, rubric_name(out.rubric)}];
    cell.judge = out.judge;
    cell.rubric = out.rubric;
    if (out.failed)
      ++cell.failures;
    else if (out.inconsistent)
      ++cell.inconsistent;
    else if (out.winner_system == system)
      ++cell.wins;
    else
      ++cell.losses;
  }
  WinRateReport report;
  report.system = system;
  double sum = 0.0;
  std::size_t counted = 0;
  for (auto& [_, cell] : cells) {
    const std::size_t decided = cell.wins + cell.losses;
    cell.rate = decided ? static_cast<double>(cell.wins) / static_cast<double>(decided) : 0.0;
    if (decided) {
      sum += cell.rate;
      ++counted;
    }
    report.cells.push_back(cell);
  }
  report.averaged = counted ? sum / static_cast<double>(counted) : 0.0;
  return report;
}

double cohens_kappa(const std::vector<std::string>& ratings_a,
                    const std::vector<std::string>& ratings_b) {
  if (ratings_a.size() != ratings_b.size())
    throw DataError("cohens_kappa: rating sequences differ in length");
  if (ratings_a.empty()) throw DataError("cohens_kappa: empty rating sequences");

  const double n = static_cast<double>(ratings_a.size());
  std::map<std::string, std::size_t> marg_a, marg_b;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < ratings_a.size(); ++i) {
    if (ratings_a[i] == ratings_b[i]) ++agree;
    ++marg_a[ratings_a[i]];
    ++marg_b[ratings_b[i]];
  }
  const double po = static_cast<double>(agree) / n;
  double pe = 0.0;
  for (const auto& [cat, count_a] : marg_a) {
    const auto it = marg_b.find(cat);
    if (it != marg_b.end())
      pe += (static_cast<double>(count_a) / n) * (static_cast<double>(it->second) / n);
  }
  if (pe >= 1.0) return 1.0;
  return (po - pe) / (1.0 - pe);
}

std::vector<std::string> transcribe_outputs(const std::vector<ChainOutput>& outputs,
                                            const CodecConfig& cfg) {
  std::vector<std::string> texts;
  texts.reserve(outputs.size());
  for (const auto& out : outputs) texts.push_back(decode_audio(out.output_audio, cfg));
  return texts;
}

}  // namespace icot
