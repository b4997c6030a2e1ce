#include "icot/vocab.hpp"

#include "icot/errors.hpp"

namespace icot {

namespace {

constexpr const char* kCotInstruction =
    "You are [AnyGPT]. You are chatting with [Human]. Step by step, give me the transcript of "
    "the provided audio, a chat response to the transcript, and read the response. ";

constexpr const char* kRawInstruction =
    "You are [AnyGPT]. You are chatting with [Human]. Give me a speech response to [Human]. ";

}  // namespace

Vocabulary make_vocabulary(const CodecConfig& cfg) {
  cfg.validate();
  Vocabulary v;
  v.text_alphabet = cfg.text_alphabet;
  v.n_text = static_cast<int>(cfg.text_alphabet.size());
  v.n_audio = cfg.audio_vocab_size;
  int next = v.n_text + v.n_audio;
  v.pad = next++;
  v.eos = next++;
  v.eoh = next++;
  v.ins = next++;
  v.res = next++;
  v.human = next++;
  v.agent = next++;
  v.nl = next++;
  v.sp = next++;
  v.prompt_cot = next++;
  v.prompt_raw = next++;
  return v;
}

int Vocabulary::text_id(char c) const {
  const auto pos = text_alphabet.find(c);
  if (pos == std::string::npos)
    throw DataError("vocabulary: character '" + std::string(1, c) +
                    "' is not representable");
  return static_cast<int>(pos);
}

char Vocabulary::text_char(int id) const {
  if (!is_text(id)) throw DataError("vocabulary: id " + std::to_string(id) + " is not a text token");
  return text_alphabet[static_cast<std::size_t>(id)];
}

int Vocabulary::audio_id(int audio_token) const {
  if (audio_token < 0 || audio_token >= n_audio)
    throw DataError("vocabulary: audio token " + std::to_string(audio_token) + " out of range");
  return n_text + audio_token;
}

int Vocabulary::audio_token(int id) const {
  if (!is_audio(id)) throw DataError("vocabulary: id " + std::to_string(id) + " is not an audio token");
  return id - n_text;
}

std::string Vocabulary::token_name(int id) const {
  if (is_text(id)) {
    const char c = text_char(id);
    return c == ' ' ? std::string("<space>") : std::string(1, c);
  }
  if (is_audio(id)) return "audio:" + std::to_string(audio_token(id));
  if (id == pad) return "<pad>";
  if (id == eos) return "<eos>";
  if (id == eoh) return "<eoh>";
  if (id == ins) return "<-Ins->";
  if (id == res) return "<-Res->";
  if (id == human) return "[Human]:";
  if (id == agent) return "[AnyGPT]:";
  if (id == nl) return "<nl>";
  if (id == sp) return "<sp>";
  if (id == prompt_cot) return "<prompt-cot>";
  if (id == prompt_raw) return "<prompt-raw>";
  throw DataError("vocabulary: id " + std::to_string(id) + " out of range");
}

std::string Vocabulary::marker_surface(int id) const {
  if (id == pad) return "";
  if (id == eos) return "<eos>";
  if (id == eoh) return "<eoh> ";
  if (id == ins) return "<-Ins-> ";
  if (id == res) return "<-Res-> ";
  if (id == human) return "[Human]: ";
  if (id == agent) return "[AnyGPT]: ";
  if (id == nl) return "\n";
  if (id == sp) return " ";
  if (id == prompt_cot) return kCotInstruction;
  if (id == prompt_raw) return kRawInstruction;
  throw DataError("vocabulary: id " + std::to_string(id) + " is not a marker");
}

}  // namespace icot
