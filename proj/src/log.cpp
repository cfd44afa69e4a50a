// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#include "ietts/log.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <string>

namespace ietts::log {
namespace {

Level from_env() {
  const char* env = std::getenv("IETTS_LOG");
  if (env == nullptr) return Level::kInfo;
  const std::string v(env);
  if (v == "quiet") return Level::kQuiet;
  if (v == "debug") return Level::kDebug;
  return Level::kInfo;
}

std::atomic<Level>& current() {
  static std::atomic<Level> l{from_env()};
  return l;
}

void emit(const char* tag, std::string_view msg) {
  std::fprintf(stderr, "[%s] %.*s\n", tag, static_cast<int>(msg.size()), msg.data());
}

}  // namespace

Level level() { return current().load(); }
void set_level(Level l) { current().store(l); }

void info(std::string_view msg) {
  if (level() >= Level::kInfo) emit("info", msg);
}

void debug(std::string_view msg) {
  if (level() >= Level::kDebug) emit("debug", msg);
}

void warn(std::string_view msg) {
  if (level() >= Level::kInfo) emit("warn", msg);
}

}  // namespace ietts::log
