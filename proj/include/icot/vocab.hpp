#pragma once

#include <string>

#include "icot/codec.hpp"

namespace icot {

/// Unified token id space for the chain templates.
///
/// Layout: [0, n_text) character tokens over the codec alphabet,
/// [n_text, n_text + n_audio) audio tokens, then the special markers.
/// The blocks are disjoint, so a generated token's kind is decidable from its
/// id alone.
struct Vocabulary {
  std::string text_alphabet;
  int n_text = 0;
  int n_audio = 0;

  // Marker ids, assigned after the audio block.
  int pad = 0;
  int eos = 0;
  int eoh = 0;
  int ins = 0;
  int res = 0;
  int human = 0;
  int agent = 0;
  int nl = 0;  // transcript/response separator, surface "\n"
  int sp = 0;  // response/output-audio separator, surface " "
  int prompt_cot = 0;
  int prompt_raw = 0;

  int size() const { return n_text + n_audio + kNumMarkers; }

  bool is_text(int id) const { return id >= 0 && id < n_text; }
  bool is_audio(int id) const { return id >= n_text && id < n_text + n_audio; }
  bool is_marker(int id) const { return id >= n_text + n_audio && id < size(); }

  /// Id of a character token. Throws DataError for characters outside the alphabet.
  int text_id(char c) const;
  char text_char(int id) const;

  int audio_id(int audio_token) const;
  int audio_token(int id) const;

  /// Unique printable name per token, used by the render dumps.
  std::string token_name(int id) const;

  /// Literal surface string of a marker, matching the prompt templates.
  std::string marker_surface(int id) const;

  static constexpr int kNumMarkers = 11;
};

Vocabulary make_vocabulary(const CodecConfig& cfg);

}  // namespace icot
