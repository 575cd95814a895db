#pragma once

#include <string>
#include <string_view>

#include "expweaver/core.hpp"

// Fixed prompt text shipped with the library. Everything here is plain data;
// keeping it in one place makes prompts byte-stable across runs.

namespace expweaver::assets {

inline constexpr std::string_view kHouseholdSystemPrompt =
    "You are an agent in a text household. Interact step by step: first write a short "
    "reasoning line, then issue exactly one command such as \"go to <receptacle>\", "
    "\"open <receptacle>\", \"take <object> from <receptacle>\", \"put <object> in/on "
    "<receptacle>\", \"heat <object> with <receptacle>\", \"cool <object> with "
    "<receptacle>\", or \"clean <object> with <receptacle>\".";

inline constexpr std::string_view kShopSystemPrompt =
    "You are an agent on a shopping site. Interact step by step: first write a short "
    "reasoning line, then issue exactly one command, either Search[<keywords>] or "
    "Click[<target>]. Select every option dimension on a product page before "
    "Click[Buy Now].";

inline constexpr std::string_view kQaSystemPrompt =
    "You are an agent answering a question over a document corpus. Interact step by "
    "step: first write a short reasoning line, then issue exactly one command, either "
    "Search[<query>] or Finish[<answer>].";

// Appended for trigger-gated strategies: tells the model that memory is an
// optional resource it can request mid-reasoning.
inline constexpr std::string_view kRetrievalInstruction =
    "Past experience is available on request. If during reasoning you decide that "
    "stored experience would help with the current decision, end the reasoning line "
    "with the token [Retrieve]; relevant memory items will then be inserted before "
    "you choose the action.";

inline std::string system_prompt(EnvKind kind, bool with_retrieval_instruction) {
  std::string prompt;
  switch (kind) {
    case EnvKind::shop: prompt = std::string(kShopSystemPrompt); break;
    case EnvKind::corpus_qa: prompt = std::string(kQaSystemPrompt); break;
    case EnvKind::household:
    case EnvKind::replay:
    default: prompt = std::string(kHouseholdSystemPrompt); break;
  }
  if (with_retrieval_instruction) {
    prompt += '\n';
    prompt += kRetrievalInstruction;
  }
  return prompt;
}

// Distillation templates. The judge backend receives one of these followed by
// the rendered trajectory and must reply with one or more units in the form:
//
//   Title: <one line>
//   Content: <one line>
//
// separated by blank lines.
inline constexpr std::string_view kInsightTemplate =
    "Distill the episode below into reusable reasoning insights. For each insight "
    "reply with two lines, \"Title: ...\" and \"Content: ...\". Cover what worked or "
    "what went wrong so a future attempt can do better.";

inline constexpr std::string_view kWorkflowTemplate =
    "Induce a reusable workflow from the successful episode below. Reply with two "
    "lines, \"Title: ...\" and \"Content: ...\", where the content is the ordered "
    "routine with concrete values abstracted.";

inline constexpr std::string_view kSkillTemplate =
    "Extract task-specific skills from the episode below. For each skill reply with "
    "two lines, \"Title: ...\" and \"Content: ...\", stating when the skill applies "
    "and the action pattern it prescribes.";

inline constexpr std::string_view kDigestTemplate =
    "Summarize the episode below for a shared memory. Reply first with a condensed "
    "interaction digest, then with any abstract insights, each as two lines "
    "\"Title: ...\" and \"Content: ...\".";

}  // namespace expweaver::assets
