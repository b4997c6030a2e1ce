#pragma once

#include <string>
#include <vector>

#include "icot/chain_template.hpp"
#include "icot/model.hpp"

namespace icot {

/// Parsed generation of one chain run. For ATA/AA templates the transcript is
/// empty by construction (those templates have no transcript region).
struct ChainOutput {
  std::string transcript;
  std::string response;
  AudioTokenSeq output_audio;
  bool truncated = false;
  bool parse_ok = true;          // false when the marker structure was violated
  std::vector<int> raw_tokens;   // continuation exactly as generated
};

/// The three latency-benchmark quantities plus wall clock. Token counts are
/// the portable metric; seconds depend on the machine.
struct GenerationStats {
  int tokens_before_first_audio = 0;
  double latency_seconds = 0.0;
  int transcript_token_count = 0;
  int response_token_count = 0;
};

struct ChainResult {
  ChainOutput output;
  GenerationStats stats;
};

struct RunChainOptions {
  int max_new_tokens = 256;
};

/// Inference prefix of a mode: everything through the <-Res-> marker.
/// clock_from receives the prefix index of the last input-audio token, the
/// point the latency clock starts from.
std::vector<int> build_inference_prefix(const AudioTokenSeq& input_audio, ChainMode mode,
                                        const Vocabulary& vocab, int* clock_from = nullptr);

/// Renders the mode's prompt around the input audio, generates greedily with
/// cached attention state, and parses the continuation into segments by
/// vocabulary id ranges first and markers second. Latency runs from the last
/// input-audio token to the first emitted audio-block token. Parsing is
/// total: a malformed continuation yields parse_ok = false, never a crash.
ChainResult run_chain(const ModelParams<float>& params, const AudioTokenSeq& input_audio,
                      ChainMode mode, const Vocabulary& vocab, const RunChainOptions& opt = {});

/// Total, mode-aware continuation parser (exposed for tests).
ChainOutput parse_continuation(const std::vector<int>& tokens, bool truncated, ChainMode mode,
                               const Vocabulary& vocab);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
  void accumulate(const std::vector<double>& xs);
};

struct ModeBenchStats {
  ChainMode mode = ChainMode::AttaFinetuned;
  int runs = 0;
  MeanStd tokens_before_first_audio;
  MeanStd latency_seconds;
  MeanStd transcript_tokens;
  MeanStd response_tokens;
  int parse_failures = 0;
  int truncations = 0;
};

/// (slower - faster) / slower; the headline reduction definition.
double relative_reduction(double slower, double faster);

struct BenchComparison {
  ChainMode faster = ChainMode::AtaIcot;
  ChainMode slower = ChainMode::AttaFinetuned;
  double token_reduction = 0.0;  // relative, from mean tokens_before_first_audio
  double wall_reduction = 0.0;   // relative, from mean latency_seconds
};

struct BenchReport {
  std::vector<ModeBenchStats> modes;
  std::vector<BenchComparison> comparisons;
};

struct BenchSystem {
  ChainMode mode;
  const ModelParams<float>* params;
};

/// Per-mode means and standard deviations of the generation statistics over
/// the test corpus, one warmup run per mode excluded from every figure.
/// Comparisons are computed for each requested (faster, slower) mode pair.
BenchReport bench(const std::vector<BenchSystem>& systems,
                  const std::vector<DialoguePair>& test_corpus, int repetitions,
                  const Vocabulary& vocab,
                  const std::vector<std::pair<ChainMode, ChainMode>>& compare = {},
                  const RunChainOptions& opt = {});

std::string bench_report_to_json(const BenchReport& report);
std::string bench_report_to_text(const BenchReport& report);

}  // namespace icot
