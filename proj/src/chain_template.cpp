#include "icot/chain_template.hpp"

#include <algorithm>

#include "icot/errors.hpp"

namespace icot {

ChainMode chain_mode_from_name(const std::string& name) {
  if (name == "atta-nofinetune") return ChainMode::AttaNoFinetune;
  if (name == "aa-nofinetune") return ChainMode::AaRawNoFinetune;
  if (name == "atta") return ChainMode::AttaFinetuned;
  if (name == "ata-nocot") return ChainMode::AtaNoCot;
  if (name == "ata-icot" || name == "ata") return ChainMode::AtaIcot;
  if (name == "aa-icot") return ChainMode::AaIcot;
  throw ConfigError("unknown chain mode '" + name + "'");
}

std::string chain_mode_name(ChainMode mode) {
  switch (mode) {
    case ChainMode::AttaNoFinetune: return "atta-nofinetune";
    case ChainMode::AaRawNoFinetune: return "aa-nofinetune";
    case ChainMode::AttaFinetuned: return "atta";
    case ChainMode::AtaNoCot: return "ata-nocot";
    case ChainMode::AtaIcot: return "ata-icot";
    case ChainMode::AaIcot: return "aa-icot";
  }
  return "?";
}

const std::vector<ChainMode>& all_chain_modes() {
  static const std::vector<ChainMode> modes = {
      ChainMode::AttaNoFinetune, ChainMode::AaRawNoFinetune, ChainMode::AttaFinetuned,
      ChainMode::AtaNoCot,       ChainMode::AtaIcot,         ChainMode::AaIcot};
  return modes;
}

TemplateKind template_kind(ChainMode mode) {
  switch (mode) {
    case ChainMode::AttaNoFinetune:
    case ChainMode::AttaFinetuned: return TemplateKind::Atta;
    case ChainMode::AtaNoCot:
    case ChainMode::AtaIcot: return TemplateKind::Ata;
    case ChainMode::AaIcot: return TemplateKind::Aa;
    case ChainMode::AaRawNoFinetune: return TemplateKind::AaRaw;
  }
  throw ConfigError("template_kind: bad mode");
}

std::string segment_name(Segment seg) {
  switch (seg) {
    case Segment::Prompt: return "prompt";
    case Segment::InputAudio: return "input_audio";
    case Segment::Transcript: return "transcript";
    case Segment::TextResponse: return "text_response";
    case Segment::OutputAudio: return "output_audio";
    case Segment::Glue: return "glue";
  }
  return "?";
}

const LabeledSpan* SegmentedSequence::find(Segment seg) const {
  for (const auto& s : spans)
    if (s.segment == seg) return &s;
  return nullptr;
}

int SegmentedSequence::segment_length(Segment seg) const {
  int total = 0;
  for (const auto& s : spans)
    if (s.segment == seg) total += s.range.length();
  return total;
}

std::size_t SegmentedSequence::mask_count() const {
  return static_cast<std::size_t>(std::count(loss_mask.begin(), loss_mask.end(), true));
}

namespace {

struct Piece {
  Segment seg;
  std::vector<int> toks;
};

std::vector<int> text_ids(const std::string& text, const Vocabulary& v) {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(v.text_id(c));
  return ids;
}

std::vector<int> audio_ids(const AudioTokenSeq& seq, const Vocabulary& v) {
  std::vector<int> ids;
  ids.reserve(seq.tokens.size());
  for (int t : seq.tokens) ids.push_back(v.audio_id(t));
  return ids;
}

void recompute_mask(SegmentedSequence& seq, const Vocabulary& v) {
  seq.loss_mask.assign(seq.tokens.size(), false);
  const auto it = std::find(seq.tokens.begin(), seq.tokens.end(), v.res);
  if (it == seq.tokens.end()) return;
  for (std::size_t i = static_cast<std::size_t>(it - seq.tokens.begin()) + 1;
       i < seq.tokens.size(); ++i)
    seq.loss_mask[i] = true;
}

SegmentedSequence assemble(const std::vector<Piece>& pieces, const Vocabulary& v) {
  SegmentedSequence seq;
  for (const auto& p : pieces) {
    const int begin = static_cast<int>(seq.tokens.size());
    seq.tokens.insert(seq.tokens.end(), p.toks.begin(), p.toks.end());
    seq.spans.push_back({p.seg, {begin, static_cast<int>(seq.tokens.size())}});
  }
  recompute_mask(seq, v);
  return seq;
}

}  // namespace

SegmentedSequence render(const DialoguePair& pair, ChainMode mode, const Vocabulary& v) {
  const TemplateKind kind = template_kind(mode);
  const int prompt_tok = kind == TemplateKind::AaRaw ? v.prompt_raw : v.prompt_cot;

  std::vector<Piece> pieces;
  pieces.push_back({Segment::Prompt, {prompt_tok, v.ins, v.human}});
  pieces.push_back({Segment::InputAudio, audio_ids(pair.input_audio, v)});
  switch (kind) {
    case TemplateKind::Atta:
      pieces.push_back({Segment::Glue, {v.eoh, v.agent, v.res}});
      pieces.push_back({Segment::Transcript, text_ids(pair.transcript, v)});
      pieces.push_back({Segment::Glue, {v.nl, v.agent}});
      pieces.push_back({Segment::TextResponse, text_ids(pair.response_text, v)});
      pieces.push_back({Segment::Glue, {v.sp}});
      break;
    case TemplateKind::Ata:
      pieces.push_back({Segment::Glue, {v.eoh, v.agent, v.res, v.agent}});
      pieces.push_back({Segment::TextResponse, text_ids(pair.response_text, v)});
      pieces.push_back({Segment::Glue, {v.sp}});
      break;
    case TemplateKind::Aa:
      pieces.push_back({Segment::Glue, {v.eoh, v.agent, v.res, v.agent}});
      break;
    case TemplateKind::AaRaw:
      pieces.push_back({Segment::Glue, {v.eoh, v.agent, v.res}});
      break;
  }
  pieces.push_back({Segment::OutputAudio, audio_ids(pair.output_audio, v)});
  pieces.push_back({Segment::Glue, {v.eos}});
  return assemble(pieces, v);
}

SegmentedSequence apply_removal(const SegmentedSequence& seq, int s, Segment target) {
  if (s < 0) throw DataError("apply_removal: negative removal count");
  std::size_t target_idx = seq.spans.size();
  for (std::size_t i = 0; i < seq.spans.size(); ++i)
    if (seq.spans[i].segment == target) {
      target_idx = i;
      break;
    }
  if (target_idx == seq.spans.size())
    throw DataError("apply_removal: sequence has no " + segment_name(target) + " span");

  const SpanRange range = seq.spans[target_idx].range;
  const int k = std::min(s, range.length());

  std::vector<bool> removed(seq.tokens.size(), false);
  for (int i = range.begin; i < range.begin + k; ++i) removed[static_cast<std::size_t>(i)] = true;
  // The separator directly after the segment goes with its last token.
  if (k == range.length() && k > 0 && range.end < static_cast<int>(seq.tokens.size()))
    removed[static_cast<std::size_t>(range.end)] = true;

  SegmentedSequence out;
  out.removal_applied = seq.removal_applied + k;
  out.tokens.reserve(seq.tokens.size());
  out.spans.reserve(seq.spans.size());
  for (const auto& span : seq.spans) {
    const int begin = static_cast<int>(out.tokens.size());
    for (int i = span.range.begin; i < span.range.end; ++i)
      if (!removed[static_cast<std::size_t>(i)]) out.tokens.push_back(seq.tokens[static_cast<std::size_t>(i)]);
    out.spans.push_back({span.segment, {begin, static_cast<int>(out.tokens.size())}});
  }

  // Removal only ever drops tokens after <-Res->, so surviving tokens keep
  // their supervision bit.
  out.loss_mask.resize(out.tokens.size());
  std::size_t kept = 0;
  for (std::size_t i = 0; i < seq.tokens.size(); ++i)
    if (!removed[i]) out.loss_mask[kept++] = seq.loss_mask[i];
  return out;
}

TargetBatchView loss_mask_targets(const SegmentedSequence& seq) {
  TargetBatchView view;
  if (seq.tokens.size() < 2) return view;
  const std::size_t n = seq.tokens.size() - 1;
  view.inputs.assign(seq.tokens.begin(), seq.tokens.end() - 1);
  view.targets.assign(seq.tokens.begin() + 1, seq.tokens.end());
  view.mask.resize(n);
  for (std::size_t j = 0; j < n; ++j) view.mask[j] = seq.loss_mask[j + 1];
  return view;
}

std::string render_dump(const SegmentedSequence& seq, const Vocabulary& vocab) {
  std::string out;
  for (int id : seq.tokens) {
    out += vocab.token_name(id);
    out += '\n';
  }
  return out;
}

}  // namespace icot
