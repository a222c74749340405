"""Text side of the dataset: inference prompts, training prompts and VQA pairs.

Run: python demos/prompts.py
"""
from artifact_forge.degrade import ArtifactLabel as A
from artifact_forge.promptgen import ExclusivityMatrix, inference_prompt, training_prompt, video_vqa_pairs

for seed in range(3):
    print("inference:", inference_prompt(seed))
print("forced   :", inference_prompt(labels=[A.CRACKS, A.FLOATERS]))

for template in range(4):
    print(f"training {template}:", training_prompt([A.BLURRING, A.POPPING], template=template))

matrix = ExclusivityMatrix.load()
print("exclusive pairs (illustrative):", matrix.pairs())
for labels in ([A.ALIASING], [A.CRACKS, A.FLOATERS], []):
    print([lab.value for lab in labels] or "normal", video_vqa_pairs(labels, matrix, seed=4))
