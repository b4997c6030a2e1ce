#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "icot/codec.hpp"
#include "icot/corpus.hpp"
#include "icot/inference.hpp"
#include "icot/prompts.hpp"

namespace icot {

/// One pairwise judging request. The prompt is rendered from the verbatim
/// templates with the three text slots filled.
struct JudgeRequest {
  std::string dialogue_input;
  std::string response_a;
  std::string response_b;
  Rubric rubric = Rubric::Naturalness;
  std::string rendered_prompt;
};

JudgeRequest make_judge_request(Rubric rubric, const std::string& dialogue_input,
                                const std::string& response_a, const std::string& response_b);

struct JudgeVerdict {
  bool ok = false;
  char winner = '?';  // 'A' or 'B', positions as presented
  std::string explanation;
  std::string judge;
  std::string error;  // set when ok is false
};

/// Wire contract of a judge: one text prompt in, one text completion out.
/// Transport failures surface as JudgeError; judge_pair retries them.
class JudgeClient {
public:
  virtual ~JudgeClient() = default;
  virtual std::string name() const = 0;
  virtual std::string complete(const std::string& prompt) = 0;
};

/// Offline deterministic judge for CI: parses the three prompt sections,
/// reconstructs the reference response with the task function, and picks the
/// response with the lower WER against it (character edit distance breaks
/// WER-undefined cases; exact ties go to position A).
class StubJudge : public JudgeClient {
public:
  explicit StubJudge(const TaskSpec& task) : task_(task) {}
  std::string name() const override { return "stub"; }
  std::string complete(const std::string& prompt) override;

private:
  TaskSpec task_;
};

struct JudgeEndpointConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string path = "/v1/completions";
  std::string model;
  std::string api_key_env = "ICOT_JUDGE_API_KEY";  // env var holding the bearer token
  int timeout_seconds = 60;
};

/// HTTP judge client: POSTs {"model", "prompt"} as JSON and expects a JSON
/// response carrying a "completion" string field.
class HttpJudge : public JudgeClient {
public:
  explicit HttpJudge(JudgeEndpointConfig cfg) : cfg_(std::move(cfg)) {}
  std::string name() const override { return cfg_.model.empty() ? "endpoint" : cfg_.model; }
  std::string complete(const std::string& prompt) override;

private:
  JudgeEndpointConfig cfg_;
};

/// Lenient parse of a judge completion: JSON first, then a pattern scan for
/// the winner field. Returns nullopt when no winner can be extracted.
std::optional<JudgeVerdict> parse_judge_completion(const std::string& completion);

/// Submits the request with bounded retries on transport failure or
/// malformed output. Exhausted retries yield ok = false, never a throw.
JudgeVerdict judge_pair(const JudgeRequest& req, JudgeClient& judge, int max_attempts = 3);

/// One judging record; every logical comparison produces two (original and
/// position-swapped) when swapping is on.
struct ComparisonRecord {
  std::string pair_id;
  std::string system_a;  // as presented to the judge
  std::string system_b;
  Rubric rubric = Rubric::Naturalness;
  std::string judge;
  bool swapped = false;
  bool ok = false;
  char winner = '?';
  std::string error;
};

std::string comparison_record_to_json(const ComparisonRecord& rec);
ComparisonRecord comparison_record_from_json(const std::string& line, std::size_t line_no);
void save_records(const std::vector<ComparisonRecord>& records, const std::string& path);
std::vector<ComparisonRecord> load_records(const std::string& path);

struct SystemOutputs {
  std::string name;
  std::vector<std::string> responses;  // transcribed audio responses, one per pair
};

/// Judges system a against system b over every pair, once per order when
/// swapping is on. dialogue_inputs are the ground-truth transcripts.
std::vector<ComparisonRecord> judge_systems(const SystemOutputs& a, const SystemOutputs& b,
                                            const std::vector<std::string>& dialogue_inputs,
                                            const std::vector<std::string>& pair_ids,
                                            Rubric rubric, JudgeClient& judge,
                                            bool swap_positions = true);

/// Outcome of one logical comparison after combining both orders: a system
/// wins only by winning both orders; losing both is a loss; disagreement is
/// order-inconsistent and excluded; judge failures are excluded.
struct ComparisonOutcome {
  std::string pair_id;
  Rubric rubric = Rubric::Naturalness;
  std::string judge;
  std::string winner_system;  // empty unless decided
  bool inconsistent = false;
  bool failed = false;
};

std::vector<ComparisonOutcome> pair_outcomes(const std::vector<ComparisonRecord>& records);

/// wins(system) / decided comparisons, in [0,1]. Throws DataError when no
/// record involves the system or nothing was decided.
double win_rate(const std::vector<ComparisonRecord>& records, const std::string& system);

struct WinRateCell {
  std::string judge;
  Rubric rubric = Rubric::Naturalness;
  std::size_t wins = 0, losses = 0, inconsistent = 0, failures = 0;
  double rate = 0.0;
};

/// Per-judge, per-rubric win rates for one system plus the average over all
/// cells, mirroring "averaged over each evaluator and metrics".
struct WinRateReport {
  std::string system;
  std::vector<WinRateCell> cells;
  double averaged = 0.0;
};

WinRateReport win_rate_report(const std::vector<ComparisonRecord>& records,
                              const std::string& system);

/// Chance-corrected agreement between two paired categorical raters:
/// (p_o - p_e) / (1 - p_e), with p_e from the marginal products. Returns 1
/// when both raters agree perfectly with degenerate marginals.
double cohens_kappa(const std::vector<std::string>& ratings_a,
                    const std::vector<std::string>& ratings_b);

/// Transcribes generated audio (the decode side of the codec stands in for
/// the ASR model). Total: garbage tokens become replacement characters.
std::vector<std::string> transcribe_outputs(const std::vector<ChainOutput>& outputs,
                                            const CodecConfig& cfg);

}  // namespace icot
