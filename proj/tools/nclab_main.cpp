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
// nclab: optimizer and simulator runs driven by scenario files, CSV out.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "nclab/experiments.hpp"

namespace {

// "0,0.1,0.2" or "0:0.5:0.1" (inclusive); empty gives an empty axis.
std::vector<double> parse_rates(const std::string& s) {
  std::vector<double> out;
  if (s.find(':') != std::string::npos) {
    double a, b, step;
    char c1, c2;
    std::istringstream in(s);
    if (!(in >> a >> c1 >> b >> c2 >> step) || c1 != ':' || c2 != ':' || step <= 0 || !in.eof())
      throw nclab::UsageError("rates range must be start:stop:step");
    long n = static_cast<long>(std::floor((b - a) / step + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(a + static_cast<double>(i) * step);
    return out;
  }
  std::string t = s;
  for (char& c : t)
    if (c == ',') c = ' ';
  std::istringstream in(t);
  std::string w;
  while (in >> w) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(w, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != w.size()) throw nclab::UsageError("bad rate '" + w + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::string t = s;
  for (char& c : t)
    if (c == ',') c = ' ';
  std::istringstream in(t);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Network coding rate optimizer and packet simulator"};
  app.require_subcommand(1);

  std::string scenario, out_path, rates, schemes;
  uint64_t seed = 1;
  nclab::CsvOptions csv;

  auto common = [&](CLI::App* sub) {
    sub->add_option("scenario", scenario, "scenario file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "base seed")->capture_default_str();
    sub->add_option("--out", out_path, "write CSV here instead of stdout");
    sub->add_option("--csv-precision", csv.precision, "significant digits")
        ->check(CLI::Range(1, 17))
        ->capture_default_str();
  };
  auto* opt = app.add_subcommand("optimize", "solve the rate problem for each variant");
  auto* sim = app.add_subcommand("simulate", "packet simulation for each scheme and seed");
  auto* sweep = app.add_subcommand("sweep", "loss-rate sweep");
  auto* conv = app.add_subcommand("convergence", "optimizer trajectories");
  for (auto* s : {opt, sim, sweep, conv}) common(s);
  sweep->add_option("--rates", rates, "comma list or start:stop:step")->required();
  sweep->add_option("--schemes", schemes, "comma list; default from the scenario");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  nclab::ExperimentOutput res;
  try {
    nclab::ScenarioSpec spec = nclab::load_scenario(scenario);
    if (opt->parsed()) {
      res = nclab::run_optimize(spec, seed, csv);
    } else if (sim->parsed()) {
      res = nclab::run_simulate(spec, seed, csv);
    } else if (sweep->parsed()) {
      res = nclab::run_sweep(spec, parse_rates(rates), split(schemes), seed, csv);
    } else {
      res = nclab::run_convergence(spec, csv);
    }
  } catch (const nclab::ScenarioError& e) {
    std::cerr << scenario << ":" << e.what() << "\n";
    return 1;
  } catch (const nclab::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  if (out_path.empty()) {
    std::cout << res.csv;
  } else {
    std::ofstream f(out_path, std::ios::binary);
    f << res.csv;
    if (!f) {
      std::cerr << "error: cannot write " << out_path << "\n";
      return 2;
    }
  }
  if (res.engine_error) std::cerr << "warning: some runs failed, see the error column\n";
  if (res.nonconverged) std::cerr << "warning: some runs did not converge\n";
  return res.exit_code();
}
