# LangGraph wiring (state + workflow).
