#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "icot/chain_template.hpp"
#include "icot/errors.hpp"

using namespace icot;

namespace {

CodecConfig codec_defaults() { return CodecConfig{}; }

DialoguePair make_pair(const std::string& transcript, const std::string& response,
                       int in_speaker = 3, int out_speaker = 12) {
  CodecConfig cfg = codec_defaults();
  Rng rng(0);
  DialoguePair p;
  p.pair_id = "t0";
  p.transcript = transcript;
  p.response_text = response;
  p.input_speaker = in_speaker;
  p.output_speaker = out_speaker;
  p.input_audio = encode_text(transcript, in_speaker, cfg, rng);
  p.output_audio = encode_text(response, out_speaker, cfg, rng);
  return p;
}

Vocabulary vocab_defaults() { return make_vocabulary(codec_defaults()); }

std::string span_text(const SegmentedSequence& seq, Segment seg, const Vocabulary& v) {
  std::string out;
  for (const auto& span : seq.spans)
    if (span.segment == seg)
      for (int i = span.range.begin; i < span.range.end; ++i)
        out += v.text_char(seq.tokens[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<int> span_tokens(const SegmentedSequence& seq, Segment seg) {
  std::vector<int> out;
  for (const auto& span : seq.spans)
    if (span.segment == seg)
      for (int i = span.range.begin; i < span.range.end; ++i)
        out.push_back(seq.tokens[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

TEST_CASE("atta render has all six segment labels with exact lengths") {
  const Vocabulary v = vocab_defaults();
  const DialoguePair p = make_pair("hello", "wrld");
  const SegmentedSequence seq = render(p, ChainMode::AttaFinetuned, v);

  CHECK(seq.segment_length(Segment::Prompt) == 3);
  CHECK(seq.segment_length(Segment::InputAudio) == 10);
  CHECK(seq.segment_length(Segment::Transcript) == 5);
  CHECK(seq.segment_length(Segment::TextResponse) == 4);
  CHECK(seq.segment_length(Segment::OutputAudio) == 8);
  CHECK(span_text(seq, Segment::Transcript, v) == "hello");
  CHECK(span_text(seq, Segment::TextResponse, v) == "wrld");

  // spans are ordered, disjoint, and cover the sequence
  int cursor = 0;
  for (const auto& span : seq.spans) {
    CHECK(span.range.begin == cursor);
    cursor = span.range.end;
  }
  CHECK(cursor == static_cast<int>(seq.tokens.size()));
}

TEST_CASE("ata render drops the transcript block and nothing else") {
  const Vocabulary v = vocab_defaults();
  const DialoguePair p = make_pair("hello", "wrld");
  const SegmentedSequence atta = render(p, ChainMode::AttaFinetuned, v);
  const SegmentedSequence ata = render(p, ChainMode::AtaIcot, v);

  CHECK(ata.find(Segment::Transcript) == nullptr);
  CHECK(span_tokens(ata, Segment::InputAudio) == span_tokens(atta, Segment::InputAudio));
  CHECK(span_tokens(ata, Segment::TextResponse) == span_tokens(atta, Segment::TextResponse));
  CHECK(span_tokens(ata, Segment::OutputAudio) == span_tokens(atta, Segment::OutputAudio));
  // the difference is exactly the transcript plus its separator
  CHECK(atta.tokens.size() == ata.tokens.size() + p.transcript.size() + 1);
}

TEST_CASE("aa renders carry only prompt, input audio, glue, output audio") {
  const Vocabulary v = vocab_defaults();
  const DialoguePair p = make_pair("hey", "joy");
  for (ChainMode mode : {ChainMode::AaIcot, ChainMode::AaRawNoFinetune}) {
    const SegmentedSequence seq = render(p, mode, v);
    CHECK(seq.find(Segment::Transcript) == nullptr);
    CHECK(seq.find(Segment::TextResponse) == nullptr);
    CHECK(seq.segment_length(Segment::InputAudio) == 6);
    CHECK(seq.segment_length(Segment::OutputAudio) == 6);
  }
  // the no-finetune template uses the no-CoT instruction prompt
  const SegmentedSequence raw = render(p, ChainMode::AaRawNoFinetune, v);
  CHECK(raw.tokens[0] == v.prompt_raw);
  const SegmentedSequence aa = render(p, ChainMode::AaIcot, v);
  CHECK(aa.tokens[0] == v.prompt_cot);
  // aa keeps the agent role tag after <-Res->, the raw template does not
  CHECK(aa.tokens.size() == raw.tokens.size() + 1);
}

TEST_CASE("loss mask is false on prompt and input audio, true after <-Res->") {
  const Vocabulary v = vocab_defaults();
  const DialoguePair p = make_pair("abc", "de");
  for (ChainMode mode : all_chain_modes()) {
    const SegmentedSequence seq = render(p, mode, v);
    for (const auto& span : seq.spans) {
      if (span.segment == Segment::Prompt || span.segment == Segment::InputAudio)
        for (int i = span.range.begin; i < span.range.end; ++i)
          CHECK(!seq.loss_mask[static_cast<std::size_t>(i)]);
    }
    bool seen_res = false;
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
      if (seen_res)
        CHECK(seq.loss_mask[i]);
      else
        CHECK(!seq.loss_mask[i]);
      if (seq.tokens[i] == v.res) seen_res = true;
    }
  }
}

TEST_CASE("mask cardinality per mode: supervised segments plus terminators") {
  const Vocabulary v = vocab_defaults();
  const DialoguePair p = make_pair("abcde", "xyz");
  const std::size_t m = 5, n = 3, a = 6;
  CHECK(render(p, ChainMode::AttaFinetuned, v).mask_count() == m + n + a + 4);
  CHECK(render(p, ChainMode::AtaIcot, v).mask_count() == n + a + 3);
  CHECK(render(p, ChainMode::AaIcot, v).mask_count() == a + 2);
  CHECK(render(p, ChainMode::AaRawNoFinetune, v).mask_count() == a + 1);
}

TEST_CASE("apply_removal prefix semantics") {
  const Vocabulary v = vocab_defaults();
  const DialoguePair p = make_pair("hello", "ok");
  const SegmentedSequence seq = render(p, ChainMode::AttaFinetuned, v);

  const SegmentedSequence same = apply_removal(seq, 0);
  CHECK(same.tokens == seq.tokens);
  CHECK(same.removal_applied == 0);

  const SegmentedSequence two = apply_removal(seq, 2);
  CHECK(span_text(two, Segment::Transcript, v) == "llo");
  CHECK(two.removal_applied == 2);
  CHECK(two.mask_count() == seq.mask_count() - 2);

  // non-transcript content is untouched
  for (Segment seg : {Segment::Prompt, Segment::InputAudio, Segment::TextResponse,
                      Segment::OutputAudio})
    CHECK(span_tokens(two, seg) == span_tokens(seq, seg));
}

TEST_CASE("full removal converges token-identically to the ata render") {
  const Vocabulary v = vocab_defaults();
  const DialoguePair p = make_pair("hello", "ok");
  const SegmentedSequence atta = render(p, ChainMode::AttaFinetuned, v);
  const SegmentedSequence ata = render(p, ChainMode::AtaIcot, v);

  const SegmentedSequence removed = apply_removal(atta, 5);
  CHECK(removed.tokens == ata.tokens);
  CHECK(removed.loss_mask == ata.loss_mask);
  // over-removal is capped
  const SegmentedSequence beyond = apply_removal(atta, 99);
  CHECK(beyond.tokens == ata.tokens);
  CHECK(beyond.removal_applied == 5);
  // removing again from the converged sequence is a no-op
  const SegmentedSequence again = apply_removal(removed, 3);
  CHECK(again.tokens == ata.tokens);
}

TEST_CASE("removal monotonicity: two-step removal equals direct removal") {
  const Vocabulary v = vocab_defaults();
  Rng rng(21);
  const CodecConfig cfg = codec_defaults();
  TaskSpec spec;
  for (int trial = 0; trial < 50; ++trial) {
    const DialoguePair p = generate_pair(spec, rng, cfg);
    const SegmentedSequence seq = render(p, ChainMode::AttaFinetuned, v);
    const int m = seq.segment_length(Segment::Transcript);
    const int s2 = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(m) + 3));
    const int s1 = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(s2) + 1));
    const SegmentedSequence direct = apply_removal(seq, s2);
    const SegmentedSequence stepped = apply_removal(apply_removal(seq, s1), s2 - s1);
    CHECK(stepped.tokens == direct.tokens);
    CHECK(stepped.loss_mask == direct.loss_mask);
    CHECK(stepped.removal_applied == direct.removal_applied);
  }
}

TEST_CASE("removal of the text response converges to the aa template") {
  const Vocabulary v = vocab_defaults();
  const DialoguePair p = make_pair("hi", "there");
  const SegmentedSequence ata = render(p, ChainMode::AtaIcot, v);
  const SegmentedSequence aa = render(p, ChainMode::AaIcot, v);
  const SegmentedSequence removed = apply_removal(ata, 5, Segment::TextResponse);
  CHECK(removed.tokens == aa.tokens);
  CHECK(removed.loss_mask == aa.loss_mask);
}

TEST_CASE("apply_removal rejects sequences without the target segment") {
  const Vocabulary v = vocab_defaults();
  const DialoguePair p = make_pair("hi", "yo");
  const SegmentedSequence ata = render(p, ChainMode::AtaIcot, v);
  CHECK_THROWS_AS(apply_removal(ata, 1), DataError);
  const SegmentedSequence aa = render(p, ChainMode::AaIcot, v);
  CHECK_THROWS_AS(apply_removal(aa, 1, Segment::TextResponse), DataError);
  CHECK_THROWS_AS(apply_removal(render(p, ChainMode::AttaFinetuned, v), -1), DataError);
}

TEST_CASE("loss_mask_targets aligns targets one ahead of inputs") {
  const Vocabulary v = vocab_defaults();
  const DialoguePair p = make_pair("ab", "cd");
  const SegmentedSequence seq = render(p, ChainMode::AttaFinetuned, v);
  const TargetBatchView view = loss_mask_targets(seq);
  REQUIRE(view.inputs.size() == seq.tokens.size() - 1);
  for (std::size_t j = 0; j < view.inputs.size(); ++j) {
    CHECK(view.inputs[j] == seq.tokens[j]);
    CHECK(view.targets[j] == seq.tokens[j + 1]);
    CHECK(view.mask[j] == seq.loss_mask[j + 1]);
  }
  // no position whose target lies in input audio is supervised
  const auto* audio = seq.find(Segment::InputAudio);
  for (int i = audio->range.begin; i < audio->range.end; ++i)
    if (i >= 1) CHECK(!view.mask[static_cast<std::size_t>(i - 1)]);
  // mask totals match: the final token is never an input
  CHECK(static_cast<std::size_t>(std::count(view.mask.begin(), view.mask.end(), true)) ==
        seq.mask_count());
}

TEST_CASE("unrepresentable characters are rejected") {
  const Vocabulary v = vocab_defaults();
  DialoguePair p = make_pair("ok", "ok");
  p.transcript = "OK";  // uppercase not in alphabet
  CHECK_THROWS_AS(render(p, ChainMode::AttaFinetuned, v), DataError);
}

TEST_CASE("render dump golden file") {
  const Vocabulary v = vocab_defaults();
  const DialoguePair p = make_pair("ab", "c", 0, 9);
  const SegmentedSequence seq = render(p, ChainMode::AttaFinetuned, v);
  const std::string dump = render_dump(seq, v);

  std::ifstream golden(std::string(ICOT_TEST_DIR) + "/golden/render_atta.txt");
  REQUIRE(golden.good());
  std::stringstream buf;
  buf << golden.rdbuf();
  CHECK(dump == buf.str());
}

TEST_CASE("vocabulary blocks are disjoint and names unique") {
  const Vocabulary v = vocab_defaults();
  CHECK(v.size() == 37 + 64 + Vocabulary::kNumMarkers);
  std::set<std::string> names;
  for (int id = 0; id < v.size(); ++id) {
    CHECK((v.is_text(id) + v.is_audio(id) + v.is_marker(id)) == 1);
    CHECK(names.insert(v.token_name(id)).second);
  }
  CHECK(v.marker_surface(v.res) == "<-Res-> ");
  CHECK(v.marker_surface(v.nl) == "\n");
  CHECK_THROWS_AS(v.text_id('!'), DataError);
}
