"""Helpers for writing scripted agent fixtures."""


def decision(function, subtask="do it", observation="so far so good", thoughts="next step"):
    return (f"{{'###Observation###': '{observation}', '###Thoughts###': '{thoughts}', "
            f"'###Current Subtask###': '{subtask}', '###Equipped Function Name###': '{function}'}}")


def params(**values):
    body = ", ".join(f"'###{k}###': {v!r}" for k, v in values.items())
    return "{" + body + "}"


def field(name, value):
    return f"{{'###{name}###': {value!r}}}"


def end(observation="all done"):
    return decision("end_task", "End the task", observation)
