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

#include <cstdint>
#include <string>
#include <vector>

#include "nclab/scenario_file.hpp"

namespace nclab {

// Bad command-line or scenario combination; maps to exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CsvOptions {
  int precision = 10;  // significant digits
  int threads = 0;     // 0 means hardware concurrency
};

struct ExperimentOutput {
  std::string csv;
  bool nonconverged = false;
  bool engine_error = false;

  // 0 ok, 2 engine error, 3 finished but some run did not converge
  int exit_code() const { return engine_error ? 2 : nonconverged ? 3 : 0; }
};

// Optimizer runs for every variant of the scenario at its own loss.
ExperimentOutput run_optimize(const ScenarioSpec& spec, uint64_t seed, const CsvOptions& opt = {});

// Simulator runs for every scheme, seeds seed..seed+n-1, plus a mean row.
ExperimentOutput run_simulate(const ScenarioSpec& spec, uint64_t seed, const CsvOptions& opt = {});

// schemes are variant names for optimize scenarios and scheme names for
// simulate ones; empty means the scenario's own list.
ExperimentOutput run_sweep(const ScenarioSpec& spec, const std::vector<double>& rates,
                           const std::vector<std::string>& schemes, uint64_t seed,
                           const CsvOptions& opt = {});

// Per-iteration trajectory of every variant, with a trailer row for runs that
// did not converge.
ExperimentOutput run_convergence(const ScenarioSpec& spec, const CsvOptions& opt = {});

}  // namespace nclab
