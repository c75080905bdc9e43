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

#include "meshgs/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>

#include "meshgs/error.hpp"

namespace meshgs {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string normalize_key(std::string key) {
  std::replace(key.begin(), key.end(), '-', '_');
  return key;
}

double to_double(const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("not a number");
  return out;
}

long long to_int(const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("not an integer");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw std::invalid_argument("not a boolean");
}

using Setter = std::function<void(Config&, const std::string&)>;

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = [] {
    std::vector<std::pair<std::string, Setter>> t;
    auto train_real = [&](const char* key, double TrainConfig::*m) {
      t.emplace_back(key, [m](Config& c, const std::string& v) { c.train.*m = to_double(v); });
    };
    auto train_int = [&](const char* key, int TrainConfig::*m) {
      t.emplace_back(key, [m](Config& c, const std::string& v) {
        c.train.*m = static_cast<int>(to_int(v));
      });
    };
    train_int("iterations", &TrainConfig::iterations);
    train_real("lr_bary", &TrainConfig::lr_bary);
    train_real("lr_tau", &TrainConfig::lr_tau);
    train_real("lr_scale", &TrainConfig::lr_scale);
    train_real("lr_rotation", &TrainConfig::lr_rotation);
    train_real("lr_opacity", &TrainConfig::lr_opacity);
    train_real("lr_sh", &TrainConfig::lr_sh);
    train_real("lr_sh_rest", &TrainConfig::lr_sh_rest);
    train_real("lr_position_final", &TrainConfig::lr_position_final);
    train_real("gamma", &TrainConfig::gamma);
    train_real("lambda_r", &TrainConfig::lambda_r);
    train_real("lambda_dssim", &TrainConfig::lambda_dssim);
    train_int("densify_interval", &TrainConfig::densify_interval);
    train_int("densify_from", &TrainConfig::densify_from);
    train_int("densify_until", &TrainConfig::densify_until);
    train_real("densify_grad_threshold", &TrainConfig::densify_grad_threshold);
    train_real("prune_opacity", &TrainConfig::prune_opacity);
    train_real("prune_scale_ratio", &TrainConfig::prune_scale_ratio);
    train_int("max_sh_degree", &TrainConfig::max_sh_degree);
    train_int("sh_unlock_interval", &TrainConfig::sh_unlock_interval);
    train_int("log_interval", &TrainConfig::log_interval);
    t.emplace_back("seed", [](Config& c, const std::string& v) {
      const long long s = to_int(v);
      if (s < 0) throw std::invalid_argument("seed must be non-negative");
      c.train.seed = static_cast<std::uint64_t>(s);
    });
    t.emplace_back("arap_max_iters", [](Config& c, const std::string& v) {
      c.solve.max_iters = static_cast<int>(to_int(v));
    });
    t.emplace_back("arap_tol", [](Config& c, const std::string& v) { c.solve.tol = to_double(v); });
    t.emplace_back("interactive_iters", [](Config& c, const std::string& v) {
      c.interactive_iters = static_cast<int>(to_int(v));
    });
    t.emplace_back("rotate_normal_offset", [](Config& c, const std::string& v) {
      c.transfer.rotate_normal_offset = to_bool(v);
    });
    return t;
  }();
  return table;
}

void assign(Config& config, const std::string& raw_key, std::string value) {
  const std::string key = normalize_key(trim(raw_key));
  value = trim(value);
  if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
    value = value.substr(1, value.size() - 2);
  }
  for (const auto& [name, set] : setters()) {
    if (name != key) continue;
    try {
      set(config, value);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kParse, "bad value '" + value + "' for " + key);
    }
    return;
  }
  throw Error(ErrorCode::kParse, "unknown config key '" + key + "'");
}

}  // namespace

Config parse_config(std::istream& in) {
  Config config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    try {
      if (eq == std::string::npos) throw Error(ErrorCode::kParse, "expected key = value");
      assign(config, line.substr(0, eq), line.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(ErrorCode::kParse, std::string(e.what()) + " at line " + std::to_string(line_no));
    }
  }
  return config;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "config not found: " + path.string());
  return parse_config(in);
}

void apply_override(Config& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw Error(ErrorCode::kParse, "override '" + assignment + "' is not key=value");
  }
  assign(config, assignment.substr(0, eq), assignment.substr(eq + 1));
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [name, set] : setters()) keys.push_back(name);
  return keys;
}

}  // namespace meshgs
