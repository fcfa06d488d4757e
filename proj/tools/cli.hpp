// Copyright 2026 The cluesep Authors. All Rights Reserved.
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

namespace cluesep::cli {

// Runs one command line (args exclude the program name). Returns the exit
// code: 0 ok, 2 config/usage error, 3 data error, 4 numeric error.
int run(const std::vector<std::string>& args);

// Git blob hash ("blob <size>\0" + content, SHA-1) of a file.
std::string content_hash(const std::string& path);

}  // namespace cluesep::cli
