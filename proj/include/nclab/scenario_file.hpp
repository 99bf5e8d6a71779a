/*
 * Copyright 2026-present The nclab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nclab/lossmodel.hpp"
#include "nclab/nodesim.hpp"
#include "nclab/numopt.hpp"
#include "nclab/topology.hpp"

namespace nclab {

// Diagnostic anchored to a 1-based line of the scenario text.
struct ScenarioError : std::runtime_error {
  ScenarioError(int line, const std::string& msg);
  int line;
};

enum class Engine { optimize, simulate };

// Everything a scenario file describes. The loss section is kept apart from
// the built matrix so sweeps can rebuild it at other rates.
struct ScenarioSpec {
  Scenario scenario;
  std::optional<double> rate;  // uniform rate, applied through pattern
  LossPattern pattern = LossPattern::all_links;
  std::vector<std::pair<std::pair<NodeId, NodeId>, double>> link_loss;  // explicit overrides
  Engine engine = Engine::optimize;
  std::vector<Variant> variants{Variant::state};
  std::vector<Scheme> schemes{Scheme::i2nc_stateless};
  OptimizerConfig opt;
  SimConfig sim;

  // rate overrides the file's uniform rate
  LossMatrix loss(std::optional<double> rate_override = std::nullopt) const;
};

ScenarioSpec parse_scenario(const std::string& text);
ScenarioSpec load_scenario(const std::string& path);

}  // namespace nclab
