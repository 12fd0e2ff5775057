from langgraph.graph import StateGraph, END

from .nodes import plan_cells, run_replicates, summarize, write_reports
from .state import StudyConfig, StudyState


def build_graph():
    workflow = StateGraph(StudyState)

    workflow.add_node("planner", plan_cells)
    workflow.add_node("runner", run_replicates)
    workflow.add_node("summarizer", summarize)
    workflow.add_node("reporter", write_reports)

    workflow.set_entry_point("planner")

    workflow.add_edge("planner", "runner")
    workflow.add_edge("runner", "summarizer")
    workflow.add_edge("summarizer", "reporter")
    workflow.add_edge("reporter", END)

    return workflow.compile()


def run_study(cfg: StudyConfig) -> StudyState:
    """Runs the compiled study pipeline from an empty state."""
    initial: StudyState = {"config": cfg, "cells": [], "records": [], "summary": [], "outputs": []}
    return build_graph().invoke(initial)
