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

#include "core/log.hpp"

#include <iostream>
#include <mutex>
#include <utility>

namespace ds {
namespace {

std::mutex g_mutex;
std::vector<std::string> g_lines;
bool g_echo = true;

void append(const std::string& line) {
  std::lock_guard lock(g_mutex);
  g_lines.push_back(line);
  if (g_echo) std::cerr << line << '\n';
}

}  // namespace

void log_warning(const std::string& message) { append("warning: " + message); }
void log_info(const std::string& message) { append("info: " + message); }

std::vector<std::string> drain_log() {
  std::lock_guard lock(g_mutex);
  return std::exchange(g_lines, {});
}

void set_log_echo(bool echo) {
  std::lock_guard lock(g_mutex);
  g_echo = echo;
}

}  // namespace ds
