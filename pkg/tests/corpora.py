"""Shared malformed-input corpora used across parser and reward tests."""

import json

WELLFORMED_PAYLOAD = json.dumps({
    "visual_state_description": "a table with an apple",
    "reasoning_and_reflection": "pick it up first",
    "language_plan": "1. pick up the apple",
    "executable_plan": [{"action_id": 3, "action_name": "pick up the apple"}],
})

ALT_PAYLOAD = json.dumps({
    "visual_state_description": "an open drawer",
    "reasoning_and_reflection": "close it",
    "language_plan": "1. close the drawer",
    "executable_plan": [{"action_id": 7, "action_name": "close the drawer"}],
})


def _deviations(payload: str) -> list[str]:
    """Outputs whose tag structure deviates from the required template."""
    return [
        payload,                                                  # no tags at all
        f"<think>plan</think>{payload}",                          # answer tags missing
        f"<think>plan</think><answer>{payload}",                  # answer never closed
        f"<think>plan</think>{payload}</answer>",                 # answer never opened
        f"</answer>{payload}<answer>",                            # closed before opened
        f"<answer>{payload}</answer>",                            # think tags missing
        f"<think>plan<answer>{payload}</answer>",                 # think never closed
        f"plan</think><answer>{payload}</answer>",                # think never opened
        f"<THINK>plan</THINK><answer>{payload}</answer>",         # wrong case think
        f"<think>plan</think><ANSWER>{payload}</ANSWER>",         # wrong case answer
        f"<think>plan</think><Answer>{payload}</Answer>",         # wrong case answer
        f"< think >plan</think><answer>{payload}</answer>",       # spaces inside tag
        f"<think>plan</think>< answer >{payload}</answer>",       # spaces inside tag
        f"<thinks>plan</thinks><answers>{payload}</answers>",     # misspelled tags
        f"<think>plan</think><answer>{payload}</answer".rstrip(">"),  # truncated close
        f"<think>plan</think><answer/>{payload}",                 # self-closing answer
        "",                                                       # empty output
        "   \n\t  ",                                              # whitespace only
        "no structure at all, just prose",                        # prose only
        f"<think>{payload}</think>",                              # payload in think only
        f"[{payload}]",                                           # array, no tags
        f"<answer>{payload}",                                     # lone unclosed answer
        f"{payload}<answer>",                                     # trailing open tag
        f"<think></think>{payload}",                              # empty think, no answer
        f"answer>{payload}</answer>",                             # broken open tag
    ]


#: >= 50 outputs that deviate from the think/answer tag structure; under the
#: strict tag policy every one of them must earn zero format reward.
STRUCTURE_DEVIATIONS: list[str] = _deviations(WELLFORMED_PAYLOAD) + _deviations(ALT_PAYLOAD)

#: Mixed corpus for tag splitting: the deviations above plus assorted nasty
#: tag arrangements (some with one or both pairs present).
TAG_SPLIT_CASES: list[str] = STRUCTURE_DEVIATIONS + [
    "<think>a</think><answer>b</answer>",
    "<think></think><answer></answer>",
    "<think>a<answer>b</answer>",
    "<answer>b</answer><think>a</think>",
    "<think><think>inner</think></think><answer>x</answer>",
    "<answer><answer>inner</answer></answer>",
    "<think>a</think>middle<answer>b</answer>tail",
    "<think>a</think><answer>first</answer><answer>second</answer>",
    "<think>one</think><think>two</think><answer>b</answer>",
    "</think><think>a</think><answer>b</answer>",
    "<answer>b</answer>",
    "<think>a</think>",
    "<think>{</think><answer>}</answer>",
    "<think>\n\nmultiline\n</think>\n<answer>\nbody\n</answer>\n",
    "x" * 10 + "<answer>" + "y" * 10 + "</answer>",
    "<answer></answer",
    "<answer気>unicode</answer>",
    "<think>タグ</think><answer>日本語</answer>",
    "<think>a</think><answer>b</answer><think>c</think>",
    "<<think>>a<</think>><answer>b</answer>",
]
