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

#ifndef DERMTRIAGE_RUN_MANIFEST_H_
#define DERMTRIAGE_RUN_MANIFEST_H_

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace dermtriage {

// Provenance record written next to every CLI artifact.
struct RunManifest {
  struct Input {
    std::string role;
    std::string path;
    std::string sha256;  // empty for directories
  };

  std::string command;
  std::vector<Input> inputs;
  nlohmann::json config;
  std::uint64_t seed = 0;

  // Hashes files; directories are recorded by path only.
  void AddInput(const std::string& role, const std::string& path);
  // SHA-256 of the canonical (sorted-key, compact) config dump.
  std::string ConfigHash() const;
  nlohmann::json ToJson() const;
  void Write(const std::string& dir) const;
};

}  // namespace dermtriage

#endif  // DERMTRIAGE_RUN_MANIFEST_H_
