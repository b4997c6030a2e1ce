#include "icot/prompts.hpp"

#include "icot/errors.hpp"

namespace icot {

Rubric rubric_from_name(const std::string& name) {
  if (name == "naturalness") return Rubric::Naturalness;
  if (name == "specificity") return Rubric::Specificity;
  throw ConfigError("unknown rubric '" + name + "' (expected naturalness or specificity)");
}

std::string rubric_name(Rubric r) {
  return r == Rubric::Naturalness ? "naturalness" : "specificity";
}

namespace prompts {

namespace {

const std::string kJudgeNaturalness =
    R"(You are a fair judge assistant assigned to deliver insightful feedback that compares individual performances, highlighting how each stands relative to others within the same cohort.

### Task Description:
You will evaluate the quality of two responses to a dialogue input snippet from a larger dialogue. Responses to evaluate, and a score rubric representing an evaluation criteria are given.

1. Write a detailed feedback that assesses the quality of two responses strictly based on the given score rubric, not evaluating in general.

2. After writing feedback, choose a better response between Response A and Response B. You should refer to the score rubric.

3. The output JSON format should look as follows:
{
    'explanation': 'Write a feedback for each response and give your explanation for the choice',
    'winner': 'A' or 'B'
}

### Score Rubric:

[Naturalness: How smooth, fluid, and human-like the response sounds, without awkward phrasing or robotic tone.]

- Score 1: The response is highly robotic, awkward, or stilted. It feels forced and does not resemble natural human speech. The grammar and phrasing may be incorrect, and the response does not flow smoothly.

- Score 2: The response is somewhat awkward or lacks fluidity. While the sentence structure may be understandable, the conversation feels rigid, with obvious flaws in phrasing and tone. It doesn't sound like how a human would naturally speak.

- Score 3: The response is generally understandable and flows reasonably well. However, there are still noticeable unnatural patterns or awkward phrasing that make it feel somewhat artificial. It might pass as natural in some instances, but not consistently.

- Score 4: The response flows well and closely resembles natural human conversation. While there may be minor imperfections or slightly formal language, it feels smooth and engaging, with little to no awkwardness.

- Score 5: The response feels entirely fluid and natural, as if it were generated by a human speaker. The tone, phrasing, and sentence structure are perfect, with no signs of robotic or awkward language.

### Dialogue Input:
{dialogue_input}

### Response A:
{response_a}

### Response B:
{response_b}

### Feedback:
)";

const std::string kJudgeSpecificity =
    R"(You are a fair judge assistant assigned to deliver insightful feedback that compares individual performances, highlighting how each stands relative to others within the same cohort.

### Task Description:
You will evaluate the quality of two responses to a dialogue input snippet from a larger dialogue. Responses to evaluate, and a score rubric representing an evaluation criteria are given.

1. Write a detailed feedback that assesses the quality of two responses strictly based on the given score rubric, not evaluating in general.

2. After writing feedback, choose a better response between Response A and Response B. You should refer to the score rubric.

3. The output JSON format should look as follows:
{
    'explanation': 'Write a feedback for each response and give your explanation for the choice',
    'winner': 'A' or 'B'
}

### Score Rubric:

[Specificity: How closely the response is tailored to the preceding message, ensuring it directly addresses the context and intent with relevant details.]

- Score 1: The response is highly generic and does not address the context or intent of the conversation. It feels like a random, unrelated statement that does not meaningfully connect to the previous message.

- Score 2: The response is somewhat related to the context but remains too vague or generic. While it acknowledges the previous message, it lacks detail and does not directly engage with the specific content or intent of the dialogue.

- Score 3: The response feels entirely fluid and natural, as if it were generated by a human speaker. The tone, phrasing, and sentence structure are perfect, with no signs of robotic or awkward language.

- Score 4: The response is tailored to the context and shows a clear understanding of the previous message. It includes relevant details and addresses the main points of the conversation, although there might be minor areas where it could be more specific.

- Score 5: The response is fully tailored to the context, addressing the previous message in a highly relevant and detailed manner. It demonstrates a clear and precise understanding of the conversation, engaging deeply with all the important elements.

### Dialogue Input:
{dialogue_input}

### Response A:
{response_a}

### Response B:
{response_b}

### Feedback:
)";

const std::string kPrometheusNaturalness =
    R"(Evaluation of Naturalness
Criteria: How smooth, fluid, and human-like the response sounds, without awkward phrasing or robotic tone.

score=1: The response is highly robotic, awkward, or stilted. It feels forced and does not resemble natural human speech. The grammar and phrasing may be incorrect, and the response does not flow smoothly.
score=2: The response is somewhat awkward or lacks fluidity. While the sentence structure may be understandable, the conversation feels rigid, with obvious flaws in phrasing and tone. It doesn't sound like how a human would naturally speak.
score=3: The response is generally understandable and flows reasonably well. However, there are still noticeable unnatural patterns or awkward phrasing that make it feel somewhat artificial. It might pass as natural in some instances, but not consistently.
score=4: The response flows well and closely resembles natural human conversation. While there may be minor imperfections or slightly formal language, it feels smooth and engaging, with little to no awkwardness.
score=5: The response feels entirely fluid and natural, as if it were generated by a human speaker. The tone, phrasing, and sentence structure are perfect, with no signs of robotic or awkward language.
)";

const std::string kPrometheusSpecificity =
    R"(Evaluation of Specificity
Criteria: How closely the response is tailored to the preceding message, ensuring it directly addresses the context and intent with relevant details.

score=1: The response is highly generic and does not address the context or intent of the conversation. It feels like a random, unrelated statement that does not meaningfully connect to the previous message.
score=2: The response is somewhat related to the context but remains too vague or generic. While it acknowledges the previous message, it lacks detail and does not directly engage with the specific content or intent of the dialogue.
score=3: The response addresses the context in a general way. While it does connect to the previous message, it still lacks deeper engagement or precision. It answers at a surface level without delving into specific details.
score=4: The response is tailored to the context and shows a clear understanding of the previous message. It includes relevant details and addresses the main points of the conversation, although there might be minor areas where it could be more specific.
score=5: The response is fully tailored to the context, addressing the previous message in a highly relevant and detailed manner. It demonstrates a clear and precise understanding of the conversation, engaging deeply with all the important elements.
)";

void replace_slot(std::string& text, const std::string& slot, const std::string& value) {
  const auto pos = text.find(slot);
  if (pos == std::string::npos)
    throw DataError("judge prompt template is missing slot " + slot);
  text.replace(pos, slot.size(), value);
}

}  // namespace

const std::string& judge_prompt_template(Rubric r) {
  return r == Rubric::Naturalness ? kJudgeNaturalness : kJudgeSpecificity;
}

const std::string& prometheus_rubric(Rubric r) {
  return r == Rubric::Naturalness ? kPrometheusNaturalness : kPrometheusSpecificity;
}

std::string render_judge_prompt(Rubric r, const std::string& dialogue_input,
                                const std::string& response_a, const std::string& response_b) {
  std::string prompt = judge_prompt_template(r);
  replace_slot(prompt, "{dialogue_input}", dialogue_input);
  replace_slot(prompt, "{response_a}", response_a);
  replace_slot(prompt, "{response_b}", response_b);
  return prompt;
}

}  // namespace prompts

}  // namespace icot
