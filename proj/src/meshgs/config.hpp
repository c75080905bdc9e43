// Copyright 2026 The MeshGS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <istream>
#include <string>
#include <vector>

#include "meshgs/deformer.hpp"
#include "meshgs/optimizer.hpp"

namespace meshgs {

struct Config {
  TrainConfig train;
  SolveOptions solve;
  /// Local/global iterations per interactive frame.
  int interactive_iters = kInteractiveIterations;
  TransferOptions transfer;
};

/// key = value lines, '#' comments, [section] headers ignored. Keys may use
/// '-' or '_'. Throws Error(kParse) with the line number for unknown keys or
/// bad values.
Config parse_config(std::istream& in);
Config load_config(const std::filesystem::path& path);

/// Applies one "key=value" override on top of a config.
void apply_override(Config& config, const std::string& assignment);

/// Every recognised key, in documentation order.
std::vector<std::string> config_keys();

}  // namespace meshgs
