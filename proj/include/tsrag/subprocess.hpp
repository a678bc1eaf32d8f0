#pragma once

#include <chrono>
#include <string>

namespace tsrag {

struct CommandResult {
  int exit_code = -1;
  std::string output;
};

/// Runs `command` under /bin/sh -c, feeding `input` on stdin and capturing
/// stdout. Throws BackendError on spawn failure or when `timeout` elapses
/// (the child is killed).
CommandResult run_command(const std::string& command, const std::string& input,
                          std::chrono::milliseconds timeout);

}  // namespace tsrag
