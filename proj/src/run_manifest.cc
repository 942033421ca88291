// Copyright 2026 The dermtriage Authors.
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

#include "dermtriage/run_manifest.h"

#include <filesystem>
#include <fstream>

#include "dermtriage/hashing.h"

namespace dermtriage {
namespace fs = std::filesystem;

void RunManifest::AddInput(const std::string& role, const std::string& path) {
  Input in{role, path, ""};
  if (fs::is_regular_file(path)) in.sha256 = Sha256File(path);
  inputs.push_back(std::move(in));
}

std::string RunManifest::ConfigHash() const { return Sha256Hex(config.dump()); }

nlohmann::json RunManifest::ToJson() const {
  nlohmann::json ins = nlohmann::json::array();
  for (const auto& in : inputs) {
    ins.push_back({{"role", in.role}, {"path", in.path}, {"sha256", in.sha256}});
  }
  return {{"command", command},
          {"inputs", ins},
          {"config", config},
          {"config_hash", ConfigHash()},
          {"seed", seed}};
}

void RunManifest::Write(const std::string& dir) const {
  fs::create_directories(dir);
  std::ofstream(fs::path(dir) / "run_manifest.json") << ToJson().dump(2) << "\n";
}

}  // namespace dermtriage
