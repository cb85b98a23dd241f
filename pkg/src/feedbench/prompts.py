"""Prompt templates for the simulated user and the satisfaction scorer."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

PROFILE_TEMPLATE = """{user_persona}

{domain_expertise}

CRITICAL: Always focus on the initial prompt/request as the primary context for evaluation. The conversation should stay aligned with the original user intent.

IMPORTANT: DO NOT REPEAT QUESTIONS OR REQUESTS that have already been asked in the conversation. Avoid asking the same question multiple times.

IMPORTANT: Always start your reasoning process first, then provide the other feedback elements.

Your response should include:
1. Reasoning: Detailed analysis of the assistant's response quality and accuracy (always consider how well it addresses the initial prompt)
2. Behavior decision: Whether to continue or end the conversation
3. Response: What the user would say (only if continuing the conversation)

Consider factors like:
{evaluation_criteria}

{additional_context}"""

JSON_FORMAT_BLOCK = """Please provide a realistic user response in strict JSON format:
{
  "reasoning": "Detailed analysis of the assistant's response quality and accuracy (MUST evaluate how well it addresses the initial request)",
  "behavior": "continue_conversation" | "end_conversation",
  "response": "What the user would say next (string or null if ending)"
}

Requirements:
- reasoning: Always provide detailed analysis first. CRITICAL: Always assess how well the assistant's response addresses the initial request and stays focused on the original user intent.
- behavior: Must be exactly: continue_conversation or end_conversation.
- response: Text if continuing, null if ending conversation. Must match the conversation language. IMPORTANT: Do not repeat questions or requests that have already been made in the conversation.

Respond with valid JSON only."""

TEST_TEMPLATE = """Analyze this conversation and predict the user's response:

The user is {task_description}. CRITICAL: Focus on the initial request as the core topic that should be the primary focus throughout this entire conversation. All responses should be evaluated based on how well they address this original user intent.

Conversation History:
{conversation_history}

EVALUATION CONTEXT:
{evaluation_context}

IMPORTANT: If you provide a response (when behavior is continue_conversation), it must be in {language}.

""" + JSON_FORMAT_BLOCK

SATISFACTION_SYSTEM = """You are an expert evaluator tasked with scoring assistant responses against specific quality standards.

SCORING SCALE (1-10):
1-2: Completely inadequate - Wrong, irrelevant, or harmful
3-4: Unsatisfactory - Major errors, misses key points, or unhelpful
5-6: Below expectations - Addresses basics but has significant gaps, inaccuracies, or omissions
7-8: Meets expectations - Solid response with minor issues or missing elements
9-10: Exceeds expectations - Comprehensive, accurate, and fully satisfies all requirements

EVALUATION APPROACH:
- Use the provided evaluation context and ground truth as your primary standards
- Score against what the response should contain, not just what it does contain
- Consider both correctness and completeness

Provide only a numerical score from 1-10."""

SATISFACTION_USER = """Evaluate the assistant's response by comparing it against the provided standards and ground truth:

FULL CONVERSATION:
{conversation_history}

EVALUATION CONTEXT (contains ground truth and quality criteria):
{evaluation_context}

EVALUATION TASK:
Compare the assistant's final response against the evaluation context above. The evaluation context contains the ground truth and quality standards that define what a good response should include.

Respond in this JSON format:
{
  "score": <integer from 1-10>
}"""

VERDICT_REINSTRUCTION = (
    "Your previous reply was not valid JSON with the required fields. Reply again with only the JSON object "
    'containing "reasoning", "behavior" (continue_conversation or end_conversation) and "response".'
)
SCORE_REINSTRUCTION = 'Reply with only a JSON object of the form {"score": <integer from 1-10>}.'

LANGUAGE_NAMES = {"en": "English", "zh": "Chinese", "ja": "Japanese", "ko": "Korean", "fr": "French",
                  "de": "German", "es": "Spanish"}

_SLOT = re.compile(r"\{([a-z_]+)\}")


def fill(template: str, slots: Mapping[str, str]) -> str:
    """Single-pass slot substitution; braces not naming a given slot are left alone."""
    return _SLOT.sub(lambda m: slots[m.group(1)] if m.group(1) in slots else m.group(0), template)


def language_name(tag: str) -> str:
    return LANGUAGE_NAMES.get(tag.split("-")[0].lower(), tag)


@dataclass(frozen=True)
class UserPersona:
    persona_text: str
    domain_expertise_text: str = ""
    evaluation_criteria: Sequence[str] = field(default_factory=tuple)
    additional_context_text: str = ""

    def __post_init__(self):
        if not self.persona_text.strip():
            raise ValueError("persona_text must be non-empty")
        object.__setattr__(self, "evaluation_criteria", tuple(self.evaluation_criteria))


GENERIC_PERSONA = UserPersona(
    persona_text="You are simulating a user who asked an AI assistant for help with a task.",
    domain_expertise_text="You know what a good answer to your own request looks like and can tell when the "
                          "assistant misses the point or gets facts wrong.",
    evaluation_criteria=(
        "Correctness with respect to the reference information",
        "Completeness in addressing the original request",
        "Clarity and usefulness of the response",
    ),
)

SCITECHNEWS_PERSONA = UserPersona(
    persona_text="You are simulating a science journalist or editor who requested AI assistance to write "
                 "journalistic reports of scientific papers for general audiences.",
    domain_expertise_text="You have expertise in science journalism across diverse fields including computer "
                          "science, cybersecurity, privacy research, mobile computing, cloud services, encryption "
                          "technologies, biomedical research, environmental science, and other technical domains. "
                          "You understand what makes scientific writing accessible to the general public while "
                          "maintaining accuracy.",
    evaluation_criteria=(
        "Accessible and readable for general audiences without technical background",
        "Accurate to the original scientific work without oversimplification",
        "Engaging and newsworthy in its presentation style",
        "Well-structured with appropriate journalistic elements (headlines, lead paragraphs, context)",
        "Properly balancing technical detail with readability",
        "Readability for lay audiences",
        "Journalistic style and structure",
        "Engagement factor and clarity of technical concepts",
    ),
    additional_context_text="Your evaluation focuses on the journalistic transformation of academic content rather "
                            "than the underlying research quality. Consider: readability for lay audiences, "
                            "accuracy to source material, journalistic style and structure, engagement factor, and "
                            "clarity of technical concepts.",
)

PERSONAS = {"generic": GENERIC_PERSONA, "scitechnews": SCITECHNEWS_PERSONA}


def build_profile_prompt(persona: UserPersona) -> str:
    criteria = "\n".join(f"- {c}" for c in persona.evaluation_criteria)
    return fill(PROFILE_TEMPLATE, {
        "user_persona": persona.persona_text,
        "domain_expertise": persona.domain_expertise_text,
        "evaluation_criteria": criteria,
        "additional_context": persona.additional_context_text,
    }).rstrip()


def build_test_prompt(history_text: str, task_description: str, evaluation_context: str, language_tag: str) -> str:
    return fill(TEST_TEMPLATE, {
        "task_description": task_description,
        "conversation_history": history_text,
        "evaluation_context": evaluation_context,
        "language": language_name(language_tag),
    })


def build_satisfaction_prompt(history_text: str, evaluation_context: str) -> str:
    return fill(SATISFACTION_USER, {"conversation_history": history_text, "evaluation_context": evaluation_context})
