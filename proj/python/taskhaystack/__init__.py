"""Lifelong ICL / Task Haystack evaluation harness (Python bindings)."""

from _taskhaystack import (  # noqa: F401
    FewShotSample,
    LabeledExample,
    PromptBlock,
    PromptRecord,
    TaskBundle,
    TaskSpec,
    TestSet,
    Tokenizer,
    accuracy,
    build_lifelong_prompt,
    build_query,
    build_single_task_prompt,
    cell_counts,
    cell_verdict,
    load_task_bundle,
    make_plan,
    make_tokenizer,
    measure_depth,
    paired_t_test,
    regularized_incomplete_beta,
    render_demonstration,
    render_inference,
    report,
    run,
    sample_fewshot_sets,
    sample_permutations,
    score,
    student_t_cdf,
    token_recall,
    validate_task,
)

__all__ = [
    "FewShotSample",
    "LabeledExample",
    "PromptBlock",
    "PromptRecord",
    "TaskBundle",
    "TaskSpec",
    "TestSet",
    "Tokenizer",
    "accuracy",
    "build_lifelong_prompt",
    "build_query",
    "build_single_task_prompt",
    "cell_counts",
    "cell_verdict",
    "load_task_bundle",
    "make_plan",
    "make_tokenizer",
    "measure_depth",
    "paired_t_test",
    "regularized_incomplete_beta",
    "render_demonstration",
    "render_inference",
    "report",
    "run",
    "sample_fewshot_sets",
    "sample_permutations",
    "score",
    "student_t_cdf",
    "token_recall",
    "validate_task",
]
