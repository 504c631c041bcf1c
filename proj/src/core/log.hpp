// Copyright 2026 The DistillScope Authors.
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
#include <vector>

namespace ds {

// Process-wide run log. Warnings are echoed to stderr and kept so the CLI can
// persist them next to the run outputs.
void log_warning(const std::string& message);
void log_info(const std::string& message);
std::vector<std::string> drain_log();
void set_log_echo(bool echo);

}  // namespace ds
