#pragma once

#include <string>

namespace icot {

enum class Rubric { Naturalness, Specificity };

Rubric rubric_from_name(const std::string& name);
std::string rubric_name(Rubric r);

namespace prompts {

/// Pairwise judge prompt template with {dialogue_input}, {response_a},
/// {response_b} slots. Stored verbatim; note the Specificity score-3 line
/// duplicates a Naturalness description — the source rubric ships with that
/// paste artifact and it is preserved here on purpose.
const std::string& judge_prompt_template(Rubric r);

/// Scoring-rubric resources for the Prometheus-style evaluator (criteria plus
/// the five score descriptions), kept separately from the judge prompts.
const std::string& prometheus_rubric(Rubric r);

/// Fills the three slots. The section headers are exactly
/// "### Dialogue Input:", "### Response A:", "### Response B:".
std::string render_judge_prompt(Rubric r, const std::string& dialogue_input,
                                const std::string& response_a, const std::string& response_b);

}  // namespace prompts

}  // namespace icot
