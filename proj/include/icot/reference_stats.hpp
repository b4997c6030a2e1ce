#pragma once

// Reference numbers reported for the full-scale system (a 7B speech LLM on
// ~1000 h of synthetic dialogue) that this lab miniaturizes. Desk-scale runs
// cannot reproduce them; they are kept as documentation constants and for
// formula sanity tests.

namespace icot::reference_scale {

// Dataset summary (train / test splits).
inline constexpr long long kTrainDialoguePairs = 663103;
inline constexpr long long kTestDialoguePairs = 6540;
inline constexpr double kTrainWerPercent = 9.00;
inline constexpr double kTestWerPercent = 9.30;
inline constexpr long long kTrainUniqueSpeakers = 200000;
inline constexpr long long kTestUniqueSpeakers = 2000;

// Inference statistics, measured from the last audio input token to the
// first output audio token with KV caching.
inline constexpr double kAtaIcotLatencySeconds = 0.87;
inline constexpr double kAttaLatencySeconds = 1.09;
inline constexpr double kAttaMeanTranscriptTokens = 21.3;
inline constexpr double kAtaIcotMeanTranscriptTokens = 0.0;
inline constexpr double kAttaMeanResponseTokens = 22.1;
inline constexpr double kAtaIcotMeanResponseTokens = 19.6;

// Relative latency reduction, defined as (slower - faster) / slower,
// i.e. (1.09 - 0.87) / 1.09 = 20.2%. An alternative 14.5% figure quoted for
// the same runs follows a different definition and is not used here.
inline constexpr double kLatencyReductionPercent = 20.2;

// Pairwise win rates of the ASR-internalized model, averaged over judges and
// rubrics: vs. the explicit-CoT chain, vs. the no-CoT baseline, and the
// TTS-internalized variant's average.
inline constexpr double kWinRateVsAttaPercent = 42.3;
inline constexpr double kWinRateVsAtaNoCotPercent = 71.7;
inline constexpr double kAaIcotWinRatePercent = 35.5;

// Agreement between human raters and the strongest judge model.
inline constexpr double kKappaVsJudge = 0.586;
inline constexpr double kKappaVsJudgeGroundTruth = 0.389;

}  // namespace icot::reference_scale
