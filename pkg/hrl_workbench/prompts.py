# hrl_workbench/prompts.py

from hrl_workbench.envs import BLOCK_TASKS, family_of
from hrl_workbench.llm_bridge import FewShotExample, PromptTemplate

GRID_ROLE = "You are a 2D maze-solving agent with access to a variety of low-level skills such as {skills}."
BLOCK_ROLE = "You are a robot arm working over a desk with three zones, with access to low-level skills such as {skills}."
ANSWER_RULE = "Answer each question with one word, Yes or No."

_UNLOCK_GOAL = "open the locked green door and go to the blue box"
_CORRIDOR_GOAL = "pick up a grey key, then open the grey door and go to the red ball, avoid the blue and green doors"

GRID_EXAMPLES = (
    FewShotExample(goal=_UNLOCK_GOAL, traj="", skill="pick:red:ball", answer="No"),
    FewShotExample(goal=_UNLOCK_GOAL, traj="", skill="goto:blue:box", answer="No"),
    FewShotExample(goal=_UNLOCK_GOAL, traj="pick:green:key", skill="unlock:green:door", answer="Yes"),
    FewShotExample(goal=_UNLOCK_GOAL, traj="pick:green:key, unlock:green:door", skill="goto:red:box", answer="No"),
    FewShotExample(goal=_CORRIDOR_GOAL, traj="", skill="pick:blue:key", answer="No"),
    FewShotExample(goal=_CORRIDOR_GOAL, traj="", skill="pick:grey:key", answer="Yes"),
)

_DESK_GOAL = "put the red block and the green block in the tray in zone 1"
_SWAP_GOAL = "swap the red block in zone 0 and the green block in zone 2"

BLOCK_EXAMPLES = (
    FewShotExample(goal=_DESK_GOAL, traj="", skill="place:tray", answer="No"),
    FewShotExample(goal=_DESK_GOAL, traj="", skill="pick:red", answer="Yes"),
    FewShotExample(goal=_DESK_GOAL, traj="pick:red", skill="place:zone2", answer="No"),
    FewShotExample(goal=_DESK_GOAL, traj="pick:red", skill="place:tray", answer="Yes"),
    FewShotExample(goal=_SWAP_GOAL, traj="pick:red", skill="place:zone1", answer="Yes"),
    FewShotExample(goal=_SWAP_GOAL, traj="pick:red", skill="place:zone0", answer="No"),
)


def template_for(task_id: str) -> PromptTemplate:
    """Prompt template for a task: role line listing every skill of the family, then the exemplars."""
    skills = ", ".join(f'"{d}"' for d in family_of(task_id).skill_descriptions(task_id))
    if task_id in BLOCK_TASKS:
        return PromptTemplate(preamble=f"{BLOCK_ROLE.format(skills=skills)} {ANSWER_RULE}", few_shot=BLOCK_EXAMPLES)
    return PromptTemplate(preamble=f"{GRID_ROLE.format(skills=skills)} {ANSWER_RULE}", few_shot=GRID_EXAMPLES)
