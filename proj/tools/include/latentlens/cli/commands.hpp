#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <latentlens/error.hpp>

namespace latentlens::cli {

enum ExitCode : int { kSuccess = 0, kUsageError = 1, kVerificationFailure = 2 };

/// A pipeline stage failed; the message names the stage and its input.
class StageError : public Error {
 public:
  StageError(std::string stage, std::string input, const std::string& what)
      : Error("stage '" + stage + "' failed on " + input + ": " + what),
        stage_(std::move(stage)),
        input_(std::move(input)) {}
  const std::string& stage() const noexcept { return stage_; }
  const std::string& input() const noexcept { return input_; }

 private:
  std::string stage_;
  std::string input_;
};

/// Runs one subcommand. `args` excludes the program name. Progress goes to
/// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

const char* tool_version();

}  // namespace latentlens::cli
