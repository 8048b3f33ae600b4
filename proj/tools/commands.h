// Copyright 2026 The auxstep Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Subcommands of the auxstep command-line tool.

#ifndef AUXSTEP_TOOLS_COMMANDS_H_
#define AUXSTEP_TOOLS_COMMANDS_H_

#include <ostream>
#include <string>
#include <vector>

namespace auxstep::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// Parses `args` (without the program name) and runs one subcommand. Errors
// are reported on `err` as one line "auxstep: error: <kind>: <message>".
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace auxstep::cli

#endif  // AUXSTEP_TOOLS_COMMANDS_H_
