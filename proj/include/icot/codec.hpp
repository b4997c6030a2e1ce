#pragma once

#include <string>
#include <vector>

#include "icot/rng.hpp"

namespace icot {

/// Configuration of the synthetic speech codec.
///
/// Text maps to discrete pseudo-audio tokens at a fixed rate of
/// units_per_char tokens per character. The audio vocabulary is partitioned
/// into speaker bands of width band_width() = audio_vocab_size /
/// speaker_band_size; a character encodes as its base-band_width digits,
/// shifted into the band of (speaker mod speaker_band_size). The layout keeps
/// encoding injective per band and lets the decoder recover the band from the
/// tokens alone.
struct CodecConfig {
  std::string text_alphabet = "abcdefghijklmnopqrstuvwxyz 0123456789";
  int units_per_char = 2;
  int audio_vocab_size = 64;
  int num_speakers = 200;
  int speaker_band_size = 8;
  double noise_rate = 0.0;

  int band_width() const { return audio_vocab_size / speaker_band_size; }

  /// Index of c in the alphabet, or -1.
  int char_index(char c) const;

  /// Throws ConfigError unless every character is expressible in every band.
  void validate() const;
};

/// A discrete pseudo-audio token sequence with its speaker identity.
struct AudioTokenSeq {
  std::vector<int> tokens;
  int speaker = 0;

  bool operator==(const AudioTokenSeq&) const = default;
};

/// Character substituted for undecodable frames.
inline constexpr char kReplacementChar = '?';

/// Encodes text as units_per_char tokens per character. Each token is a
/// deterministic function of (character, unit position, speaker band); with
/// noise_rate > 0 every token is independently replaced by a uniform draw
/// over the audio vocabulary with that probability.
AudioTokenSeq encode_text(const std::string& text, int speaker, const CodecConfig& cfg, Rng& rng);

/// Total decoder: accepts any token sequence within vocab range. The speaker
/// band is inferred by majority vote over token band slots; each full frame
/// decodes to the maximum-likelihood character under that band (minimum
/// Hamming distance to a valid code, replacement char on ties); a trailing
/// partial frame decodes to one replacement character.
std::string decode_audio(const AudioTokenSeq& seq, const CodecConfig& cfg);

/// Human-readable mapping table documenting the full character -> token code,
/// suitable for auditing the golden tests.
std::string mapping_table(const CodecConfig& cfg);

}  // namespace icot
