// Copyright 2026 The com2s Authors
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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "com2s/emgsig.hpp"
#include "com2s/selftrain.hpp"
#include "com2s/sweep.hpp"

namespace com2s::cli {

/// Resolved configuration for every subcommand. Defaults live in the
/// member initializers here and in sweep::BenchmarkConfig.
struct RunConfig {
  sweep::BenchmarkConfig bench;  // seed, simulator, model, training, grids
  std::string inventory = "desk";  // "desk" or "arpabet"
  std::size_t gen_real_utterances = 200;
  std::size_t gen_synthetic_utterances = 480;
  emgsig::RestoreConfig restore;
  std::uint32_t restore_rate = 800;
  selftrain::FilterSpec filter = selftrain::FilterSpec::below(0.5);
  selftrain::MixSpec mix{0.5, 200, 0};
  std::vector<std::uint64_t> sweep_seeds = {1, 2, 3};

  phonemics::PhonemeInventory make_inventory() const;
  void validate() const;
};

nlohmann::ordered_json to_json(const RunConfig& config);
/// Unknown keys are configuration errors; absent keys keep their defaults.
RunConfig from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

selftrain::FilterSpec parse_filter(const std::string& text);

}  // namespace com2s::cli
