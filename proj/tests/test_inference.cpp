#include <doctest.h>

#include <cmath>

#include "icot/inference.hpp"
#include "icot/reference_stats.hpp"

using namespace icot;

namespace {

struct Fixture {
  CodecConfig codec;
  Vocabulary vocab = make_vocabulary(codec);
  ModelConfig mcfg;
  ModelParams<float> params;

  Fixture() {
    mcfg.vocab_size = vocab.size();
    mcfg.context_length = 96;
    mcfg.num_layers = 2;
    mcfg.num_heads = 2;
    mcfg.model_dim = 32;
    mcfg.feedforward_dim = 64;
    mcfg.seed = 2;
    params = init_model<float>(mcfg);
  }

  DialoguePair pair(const std::string& transcript = "abc", const std::string& response = "cba") {
    Rng rng(0);
    DialoguePair p;
    p.pair_id = "x";
    p.transcript = transcript;
    p.response_text = response;
    p.input_speaker = 1;
    p.output_speaker = 2;
    p.input_audio = encode_text(transcript, 1, codec, rng);
    p.output_audio = encode_text(response, 2, codec, rng);
    return p;
  }
};

std::vector<int> text_ids(const std::string& s, const Vocabulary& v) {
  std::vector<int> out;
  for (char c : s) out.push_back(v.text_id(c));
  return out;
}

}  // namespace

TEST_CASE("inference prefix ends at <-Res-> and clocks from the last audio token") {
  Fixture fx;
  const DialoguePair p = fx.pair();
  int clock_from = -1;
  const auto prefix = build_inference_prefix(p.input_audio, ChainMode::AttaFinetuned, fx.vocab,
                                             &clock_from);
  REQUIRE(prefix.size() == 3 + 6 + 3);
  CHECK(prefix[0] == fx.vocab.prompt_cot);
  CHECK(prefix[1] == fx.vocab.ins);
  CHECK(prefix[2] == fx.vocab.human);
  CHECK(clock_from == 8);  // last of six audio tokens, after the 3 prompt tokens
  CHECK(prefix[9] == fx.vocab.eoh);
  CHECK(prefix[10] == fx.vocab.agent);
  CHECK(prefix[11] == fx.vocab.res);

  const auto raw = build_inference_prefix(p.input_audio, ChainMode::AaRawNoFinetune, fx.vocab);
  CHECK(raw[0] == fx.vocab.prompt_raw);
}

TEST_CASE("continuation parser handles the four templates") {
  Fixture fx;
  const Vocabulary& v = fx.vocab;

  // well-formed atta continuation
  std::vector<int> tokens = text_ids("hi", v);
  tokens.push_back(v.nl);
  tokens.push_back(v.agent);
  const auto resp = text_ids("yo", v);
  tokens.insert(tokens.end(), resp.begin(), resp.end());
  tokens.push_back(v.sp);
  tokens.push_back(v.audio_id(3));
  tokens.push_back(v.audio_id(4));
  tokens.push_back(v.eos);

  const ChainOutput atta = parse_continuation(tokens, false, ChainMode::AttaFinetuned, v);
  CHECK(atta.parse_ok);
  CHECK(atta.transcript == "hi");
  CHECK(atta.response == "yo");
  CHECK(atta.output_audio.tokens == std::vector<int>{3, 4});
  CHECK(atta.raw_tokens == tokens);

  // the same tokens parsed as ata violate the marker structure
  const ChainOutput bad = parse_continuation(tokens, false, ChainMode::AtaIcot, v);
  CHECK(!bad.parse_ok);
  CHECK(bad.transcript.empty());  // ata template has no transcript region

  // well-formed ata continuation
  std::vector<int> ata_tokens = {v.agent};
  ata_tokens.insert(ata_tokens.end(), resp.begin(), resp.end());
  ata_tokens.push_back(v.sp);
  ata_tokens.push_back(v.audio_id(7));
  ata_tokens.push_back(v.eos);
  const ChainOutput ata = parse_continuation(ata_tokens, false, ChainMode::AtaIcot, v);
  CHECK(ata.parse_ok);
  CHECK(ata.transcript.empty());
  CHECK(ata.response == "yo");

  // aa and aa-raw
  const ChainOutput aa = parse_continuation({v.agent, v.audio_id(1), v.eos}, false,
                                            ChainMode::AaIcot, v);
  CHECK(aa.parse_ok);
  CHECK(aa.transcript.empty());
  CHECK(aa.response.empty());
  const ChainOutput raw =
      parse_continuation({v.audio_id(1), v.eos}, false, ChainMode::AaRawNoFinetune, v);
  CHECK(raw.parse_ok);

  // truncation without eos is tolerated
  const ChainOutput trunc =
      parse_continuation({v.agent, v.audio_id(1)}, true, ChainMode::AaIcot, v);
  CHECK(trunc.parse_ok);
  CHECK(trunc.truncated);

  // parsing is total on garbage
  const ChainOutput garbage = parse_continuation(
      {v.eos, v.res, v.audio_id(0), v.text_id('a'), v.pad}, false, ChainMode::AttaFinetuned, v);
  CHECK(!garbage.parse_ok);
  CHECK(garbage.raw_tokens.size() == 5);
}

TEST_CASE("structural token arithmetic: first audio index per template") {
  Fixture fx;
  const Vocabulary& v = fx.vocab;
  const std::size_t m = 4, n = 3;
  // atta: transcript(m) <nl> [AnyGPT]: response(n) <sp> audio...
  std::vector<int> atta = text_ids("abcd", v);
  atta.push_back(v.nl);
  atta.push_back(v.agent);
  const auto resp = text_ids("xyz", v);
  atta.insert(atta.end(), resp.begin(), resp.end());
  atta.push_back(v.sp);
  atta.push_back(v.audio_id(0));
  // ata: [AnyGPT]: response(n) <sp> audio...
  std::vector<int> ata = {v.agent};
  ata.insert(ata.end(), resp.begin(), resp.end());
  ata.push_back(v.sp);
  ata.push_back(v.audio_id(0));

  auto first_audio = [&](const std::vector<int>& toks) {
    for (std::size_t i = 0; i < toks.size(); ++i)
      if (v.is_audio(toks[i])) return static_cast<int>(i);
    return -1;
  };
  const int tb_atta = first_audio(atta);
  const int tb_ata = first_audio(ata);
  CHECK(tb_atta == static_cast<int>(m + n + 3));
  CHECK(tb_ata == static_cast<int>(n + 2));
  // the difference is the generated transcript plus its glue separator
  CHECK(tb_atta - tb_ata == static_cast<int>(m) + 1);
}

TEST_CASE("run_chain is total and stats are consistent with the parse") {
  Fixture fx;
  const DialoguePair p = fx.pair();
  RunChainOptions opt;
  opt.max_new_tokens = 24;
  for (ChainMode mode : all_chain_modes()) {
    const ChainResult r = run_chain(fx.params, p.input_audio, mode, fx.vocab, opt);
    CHECK(r.stats.tokens_before_first_audio >= 0);
    CHECK(r.stats.transcript_token_count ==
          static_cast<int>(r.output.transcript.size()));
    CHECK(r.stats.response_token_count == static_cast<int>(r.output.response.size()));
    // first-audio cut agrees with the raw continuation
    int first_audio = -1;
    for (std::size_t i = 0; i < r.output.raw_tokens.size(); ++i)
      if (fx.vocab.is_audio(r.output.raw_tokens[i])) {
        first_audio = static_cast<int>(i);
        break;
      }
    if (first_audio >= 0)
      CHECK(r.stats.tokens_before_first_audio == first_audio);
    else
      CHECK(r.stats.tokens_before_first_audio ==
            static_cast<int>(r.output.raw_tokens.size()));
    if (template_kind(mode) != TemplateKind::Atta) CHECK(r.output.transcript.empty());
  }
}

TEST_CASE("run_chain is deterministic") {
  Fixture fx;
  const DialoguePair p = fx.pair();
  const ChainResult a = run_chain(fx.params, p.input_audio, ChainMode::AtaIcot, fx.vocab);
  const ChainResult b = run_chain(fx.params, p.input_audio, ChainMode::AtaIcot, fx.vocab);
  CHECK(a.output.raw_tokens == b.output.raw_tokens);
  CHECK(a.stats.tokens_before_first_audio == b.stats.tokens_before_first_audio);
}

TEST_CASE("relative reduction reproduces the reference latency figure") {
  const double rr = relative_reduction(reference_scale::kAttaLatencySeconds,
                                       reference_scale::kAtaIcotLatencySeconds);
  CHECK(std::abs(rr * 100.0 - reference_scale::kLatencyReductionPercent) < 0.05);
  CHECK(relative_reduction(10.0, 10.0) == 0.0);
  CHECK(relative_reduction(0.0, 1.0) == 0.0);
}

TEST_CASE("bench on a single pair and mode reports that pair's stats") {
  Fixture fx;
  const DialoguePair p = fx.pair();
  RunChainOptions opt;
  opt.max_new_tokens = 16;
  const BenchReport report =
      bench({{ChainMode::AtaIcot, &fx.params}}, {p}, 1, fx.vocab, {}, opt);
  REQUIRE(report.modes.size() == 1);
  const auto& m = report.modes[0];
  CHECK(m.runs == 1);
  const ChainResult direct = run_chain(fx.params, p.input_audio, ChainMode::AtaIcot, fx.vocab, opt);
  CHECK(m.tokens_before_first_audio.mean ==
        doctest::Approx(direct.stats.tokens_before_first_audio));
  CHECK(m.tokens_before_first_audio.stddev == 0.0);
  CHECK(m.transcript_tokens.mean == doctest::Approx(direct.stats.transcript_token_count));
}

TEST_CASE("bench rejects degenerate inputs") {
  Fixture fx;
  CHECK_THROWS_AS(bench({}, {fx.pair()}, 1, fx.vocab), DataError);
  CHECK_THROWS_AS(bench({{ChainMode::AtaIcot, &fx.params}}, {}, 1, fx.vocab), DataError);
  CHECK_THROWS_AS(bench({{ChainMode::AtaIcot, &fx.params}}, {fx.pair()}, 0, fx.vocab),
                  ConfigError);
  CHECK_THROWS_AS(bench({{ChainMode::AtaIcot, &fx.params}}, {fx.pair()}, 1, fx.vocab,
                        {{ChainMode::AaIcot, ChainMode::AtaIcot}}),
                  ConfigError);
}

TEST_CASE("bench comparisons use the relative reduction of the means") {
  Fixture fx;
  const std::vector<DialoguePair> pairs = {fx.pair("ab", "ba"), fx.pair("cde", "edc")};
  RunChainOptions opt;
  opt.max_new_tokens = 16;
  const BenchReport report =
      bench({{ChainMode::AtaIcot, &fx.params}, {ChainMode::AttaFinetuned, &fx.params}}, pairs, 2,
            fx.vocab, {{ChainMode::AtaIcot, ChainMode::AttaFinetuned}}, opt);
  REQUIRE(report.comparisons.size() == 1);
  const auto& cmp = report.comparisons[0];
  const auto& fast = report.modes[0];
  const auto& slow = report.modes[1];
  CHECK(cmp.token_reduction ==
        doctest::Approx(relative_reduction(slow.tokens_before_first_audio.mean,
                                           fast.tokens_before_first_audio.mean)));
  // four runs each: two pairs, two repetitions
  CHECK(fast.runs == 4);
  const std::string text = bench_report_to_text(report);
  CHECK(text.find("ata-icot") != std::string::npos);
  const std::string js = bench_report_to_json(report);
  CHECK(js.find("token_reduction") != std::string::npos);
}

TEST_CASE("mean/std accumulator") {
  MeanStd ms;
  ms.accumulate({2.0, 4.0, 6.0});
  CHECK(ms.mean == doctest::Approx(4.0));
  CHECK(ms.stddev == doctest::Approx(std::sqrt(8.0 / 3.0)));
  ms.accumulate({});
  CHECK(ms.mean == 0.0);
}
