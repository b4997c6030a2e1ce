#include "icot/codec.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "icot/errors.hpp"

namespace icot {

int CodecConfig::char_index(char c) const {
  const auto pos = text_alphabet.find(c);
  return pos == std::string::npos ? -1 : static_cast<int>(pos);
}

void CodecConfig::validate() const {
  if (text_alphabet.empty()) throw ConfigError("codec: text_alphabet must be nonempty");
  if (units_per_char < 1) throw ConfigError("codec: units_per_char must be positive");
  if (audio_vocab_size < 1) throw ConfigError("codec: audio_vocab_size must be positive");
  if (num_speakers < 1) throw ConfigError("codec: num_speakers must be positive");
  if (speaker_band_size < 1) throw ConfigError("codec: speaker_band_size must be positive");
  if (noise_rate < 0.0 || noise_rate > 1.0) throw ConfigError("codec: noise_rate must be in [0,1]");
  const int width = band_width();
  if (width < 1)
    throw ConfigError("codec: audio_vocab_size must be at least speaker_band_size");
  // Every character must have a distinct digit vector within one band.
  double capacity = 1.0;
  for (int u = 0; u < units_per_char; ++u) capacity *= width;
  if (capacity < static_cast<double>(text_alphabet.size()))
    throw ConfigError("codec: band width " + std::to_string(width) + " over " +
                      std::to_string(units_per_char) + " units cannot address " +
                      std::to_string(text_alphabet.size()) + " characters");
  for (char c : text_alphabet)
    if (text_alphabet.find(c) != text_alphabet.rfind(c))
      throw ConfigError("codec: text_alphabet has duplicate characters");
}

namespace {

// u-th base-width digit of the character index.
int unit_token(int char_idx, int unit, int band, int width) {
  int digits = char_idx;
  for (int u = 0; u < unit; ++u) digits /= width;
  return digits % width + band * width;
}

int infer_band(const std::vector<int>& tokens, const CodecConfig& cfg) {
  const int width = cfg.band_width();
  const int usable = width * cfg.speaker_band_size;
  std::vector<int> votes(cfg.speaker_band_size, 0);
  for (int t : tokens)
    if (t >= 0 && t < usable) ++votes[t / width];
  int best = 0;
  for (int b = 1; b < cfg.speaker_band_size; ++b)
    if (votes[b] > votes[best]) best = b;
  return best;
}

}  // namespace

AudioTokenSeq encode_text(const std::string& text, int speaker, const CodecConfig& cfg, Rng& rng) {
  cfg.validate();
  if (speaker < 0 || speaker >= cfg.num_speakers)
    throw DataError("encode_text: speaker " + std::to_string(speaker) + " outside [0, " +
                    std::to_string(cfg.num_speakers) + ")");
  const int width = cfg.band_width();
  const int band = speaker % cfg.speaker_band_size;

  AudioTokenSeq seq;
  seq.speaker = speaker;
  seq.tokens.reserve(text.size() * cfg.units_per_char);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const int idx = cfg.char_index(text[i]);
    if (idx < 0)
      throw DataError("encode_text: character '" + std::string(1, text[i]) +
                      "' at index " + std::to_string(i) + " is not in the codec alphabet");
    for (int u = 0; u < cfg.units_per_char; ++u) {
      int tok = unit_token(idx, u, band, width);
      if (cfg.noise_rate > 0.0 && rng.bernoulli(cfg.noise_rate))
        tok = static_cast<int>(rng.uniform_below(cfg.audio_vocab_size));
      seq.tokens.push_back(tok);
    }
  }
  return seq;
}

std::string decode_audio(const AudioTokenSeq& seq, const CodecConfig& cfg) {
  cfg.validate();
  if (seq.tokens.empty()) return "";

  const int width = cfg.band_width();
  const int band = infer_band(seq.tokens, cfg);
  const int n_chars = static_cast<int>(cfg.text_alphabet.size());
  const std::size_t n_frames = seq.tokens.size() / cfg.units_per_char;

  std::string out;
  out.reserve(n_frames + 1);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const int* frame = seq.tokens.data() + f * cfg.units_per_char;
    int best_char = -1;
    int best_dist = cfg.units_per_char + 1;
    bool tie = false;
    for (int c = 0; c < n_chars; ++c) {
      int dist = 0;
      for (int u = 0; u < cfg.units_per_char; ++u)
        if (frame[u] != unit_token(c, u, band, width)) ++dist;
      if (dist < best_dist) {
        best_dist = dist;
        best_char = c;
        tie = false;
      } else if (dist == best_dist) {
        tie = true;
      }
    }
    out.push_back(tie ? kReplacementChar : cfg.text_alphabet[best_char]);
  }
  if (seq.tokens.size() % cfg.units_per_char != 0) out.push_back(kReplacementChar);
  return out;
}

std::string mapping_table(const CodecConfig& cfg) {
  cfg.validate();
  const int width = cfg.band_width();
  std::ostringstream os;
  os << "synthetic codec mapping\n"
     << "alphabet: \"" << cfg.text_alphabet << "\" (" << cfg.text_alphabet.size()
     << " symbols)\n"
     << "units_per_char: " << cfg.units_per_char << "\n"
     << "audio_vocab_size: " << cfg.audio_vocab_size << "\n"
     << "speaker_band_size: " << cfg.speaker_band_size << "\n"
     << "band_width: " << width << "\n"
     << "\n"
     << "token(char, unit, speaker) = digit(char_index, unit) + (speaker mod "
     << cfg.speaker_band_size << ") * " << width << "\n"
     << "  where digit(c, u) = (c / " << width << "^u) mod " << width << "\n"
     << "\n"
     << "band-0 codes:\n";
  for (std::size_t i = 0; i < cfg.text_alphabet.size(); ++i) {
    os << "  '" << cfg.text_alphabet[i] << "' (index " << i << ") -> [";
    for (int u = 0; u < cfg.units_per_char; ++u) {
      if (u) os << ", ";
      os << unit_token(static_cast<int>(i), u, 0, width);
    }
    os << "]\n";
  }
  os << "\nspeaker band b shifts every token by b * " << width << ".\n";
  return os.str();
}

}  // namespace icot
