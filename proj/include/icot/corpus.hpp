#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "icot/codec.hpp"
#include "icot/rng.hpp"

namespace icot {

/// One dialogue exchange: input audio, its transcript, the text response, and
/// the spoken response, with distinct speaker identities.
struct DialoguePair {
  std::string pair_id;
  AudioTokenSeq input_audio;
  std::string transcript;
  std::string response_text;
  AudioTokenSeq output_audio;
  int input_speaker = 0;
  int output_speaker = 0;

  bool operator==(const DialoguePair&) const = default;
};

enum class TaskFamily { Reverse, Shift, DigitSum };

TaskFamily task_family_from_name(const std::string& name);
std::string task_family_name(TaskFamily family);

/// Parameters of the synthetic conversation function f: input text -> response.
///
/// Reverse echoes the input backwards; Shift rotates each character through
/// its alphabet block (letters and digits cycle separately, space is fixed);
/// DigitSum replies with the decimal sum of every digit run in the input.
/// All three are total and deterministic over the codec alphabet, and all
/// three require reading the whole input, so a model cannot answer without
/// implicitly recognizing the audio.
struct TaskSpec {
  TaskFamily family = TaskFamily::Reverse;
  int min_words = 1;
  int max_words = 2;
  int min_word_len = 2;
  int max_word_len = 5;
  int shift_amount = 3;  // Shift only
  int min_digits = 1;    // DigitSum only
  int max_digits = 3;

  void validate() const;
};

/// The conversation function f. Total over any text in the codec alphabet.
std::string apply_task(const TaskSpec& spec, const std::string& input);

/// Draws an input text from the task family.
std::string sample_input(const TaskSpec& spec, Rng& rng);

/// Samples one dialogue pair: input text, response f(input), both encoded
/// with independently sampled, distinct speakers.
DialoguePair generate_pair(const TaskSpec& spec, Rng& rng, const CodecConfig& cfg,
                           const std::string& pair_id = "");

/// Generates n pairs with sequential ids from one seed.
std::vector<DialoguePair> gen_pairs(const TaskSpec& spec, const CodecConfig& cfg, std::size_t n,
                                    std::uint64_t seed);

/// Line-delimited dataset I/O. One JSON object per line with fields pair_id,
/// input_audio, transcript, response_text, output_audio, input_speaker,
/// output_speaker. Field names are part of the format contract.
void save_pairs(const std::vector<DialoguePair>& pairs, const std::string& path);
std::vector<DialoguePair> load_pairs(const std::string& path);

/// Word error rate: (substitutions + insertions + deletions) / reference word
/// count via minimal word-level edit distance. Whitespace tokenization,
/// case-sensitive. Throws DataError when the reference has no words.
double compute_wer(const std::string& hypothesis, const std::string& reference);

/// Minimal edit distance between whitespace-tokenized word sequences.
std::size_t word_edit_distance(const std::vector<std::string>& hyp,
                               const std::vector<std::string>& ref);

std::vector<std::string> split_words(const std::string& text);

/// Corpus-level statistics in the shape of the released dataset's summary.
/// Durations are not reconstructible from the synthetic codec, so token
/// counts stand in for them.
struct CorpusStats {
  std::size_t num_pairs = 0;
  std::size_t total_audio_tokens = 0;
  double mean_tokens_per_utterance = 0.0;
  double corpus_wer = 0.0;
  std::size_t num_unique_speakers = 0;
};

/// corpus_wer is the length-weighted mean WER of decode(input_audio) against
/// the stored transcript (total edit distance over total reference words).
CorpusStats corpus_stats(const std::vector<DialoguePair>& pairs, const CodecConfig& cfg);

}  // namespace icot
