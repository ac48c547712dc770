// Copyright 2026 The counselkit Authors.
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

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "framework.hpp"

namespace counselkit::pipeline {

inline constexpr std::string_view kVersion = "0.1.0";

// File-to-file commands shared by the C API and the CLI. `args` names the
// inputs and options; outputs go to args["out_dir"] together with
// resolved_config.json. Returns a JSON summary of what was written.
Json run_command(std::string_view command, const Json& args);

// Names accepted by run_command.
const std::vector<std::string>& command_names();

}  // namespace counselkit::pipeline
