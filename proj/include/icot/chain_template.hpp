#pragma once

#include <string>
#include <vector>

#include "icot/corpus.hpp"
#include "icot/vocab.hpp"

namespace icot {

/// The six model/prompt configurations of the experiment matrix.
enum class ChainMode {
  AttaNoFinetune,  // full chain prompt, base model as-is
  AaRawNoFinetune, // no-CoT instruction prompt, base model as-is
  AttaFinetuned,   // full chain, finetuned
  AtaNoCot,        // transcript dropped before training, no internalization
  AtaIcot,         // transcript internalized via curriculum removal
  AaIcot,          // transcript and text response both internalized
};

ChainMode chain_mode_from_name(const std::string& name);
std::string chain_mode_name(ChainMode mode);
const std::vector<ChainMode>& all_chain_modes();

/// The four distinct prompt templates behind the six modes.
enum class TemplateKind { Atta, Ata, Aa, AaRaw };

TemplateKind template_kind(ChainMode mode);

enum class Segment { Prompt, InputAudio, Transcript, TextResponse, OutputAudio, Glue };

std::string segment_name(Segment seg);

/// Half-open token index range.
struct SpanRange {
  int begin = 0;
  int end = 0;
  int length() const { return end - begin; }
  bool operator==(const SpanRange&) const = default;
};

struct LabeledSpan {
  Segment segment;
  SpanRange range;
  bool operator==(const LabeledSpan&) const = default;
};

/// A rendered chain sequence: flat tokens, ordered labeled spans covering the
/// sequence, and a per-token supervision mask. The mask is true exactly on
/// tokens after the <-Res-> marker: the retained transcript, the text
/// response, the output audio, and the structural separators between them —
/// the full region the model must produce on its own at inference time.
struct SegmentedSequence {
  std::vector<int> tokens;
  std::vector<LabeledSpan> spans;
  std::vector<bool> loss_mask;
  int removal_applied = 0;

  /// First span with the given label, or nullptr.
  const LabeledSpan* find(Segment seg) const;
  int segment_length(Segment seg) const;  // summed over all ranges with that label
  std::size_t mask_count() const;
};

/// Renders a pair into the mode's template. Throws DataError when a
/// transcript/response character is not representable in the vocabulary.
SegmentedSequence render(const DialoguePair& pair, ChainMode mode, const Vocabulary& vocab);

/// Drops min(s, remaining) tokens from the front of the removable segment
/// (the transcript by default; the text response for the TTS stage). When the
/// segment empties, the separator token that followed it is dropped with it,
/// so a fully removed render is token-identical to the next-shorter template.
/// Throws DataError when the sequence has no such segment.
SegmentedSequence apply_removal(const SegmentedSequence& seq, int s,
                                Segment target = Segment::Transcript);

/// Next-token-prediction view: inputs = tokens[0..L-1), targets = tokens[1..L),
/// mask[j] true iff the target token is supervised.
struct TargetBatchView {
  std::vector<int> inputs;
  std::vector<int> targets;
  std::vector<bool> mask;
};

TargetBatchView loss_mask_targets(const SegmentedSequence& seq);

/// One token name per line, for golden-file tests.
std::string render_dump(const SegmentedSequence& seq, const Vocabulary& vocab);

}  // namespace icot
