# Integration tests for full BO runs and the command-line runner
