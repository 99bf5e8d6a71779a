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
#include "nclab/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <optional>
#include <thread>

namespace nclab {

namespace {

std::string num(double v, int precision) {
  if (v == 0.0) v = 0.0;  // no "-0"
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

std::string quoted(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

struct Cell {
  std::string scheme;
  std::optional<double> rate;
  uint64_t seed = 0;
  bool optimize = true;
  Variant variant = Variant::state;
  Scheme sim_scheme = Scheme::nonc;
};

struct Row {
  std::string scheme;
  std::optional<double> rate;
  std::string seed;
  std::vector<double> x;
  double total = 0;
  std::optional<double> total_std;
  std::optional<bool> converged;
  std::optional<long> iterations;
  std::string error;
};

template <class F>
void parallel_for(std::size_t n, int threads, F&& f) {
  unsigned t = threads > 0 ? static_cast<unsigned>(threads) : std::max(1u, std::thread::hardware_concurrency());
  t = static_cast<unsigned>(std::min<std::size_t>(t, n));
  if (t <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned j = 0; j < t; ++j)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) f(i);
    });
  for (auto& th : pool) th.join();
}

Row run_cell(const ScenarioSpec& spec, const Cell& c) {
  Row r;
  r.scheme = c.scheme;
  r.rate = c.rate;
  r.seed = std::to_string(c.seed);
  const std::size_t F = spec.scenario.flows.size();
  try {
    LossMatrix loss = spec.loss(c.rate);
    if (c.optimize) {
      OptimizerConfig cfg = spec.opt;
      cfg.variant = c.variant;
      cfg.record_states = false;
      Trajectory tr = solve(spec.scenario, loss, cfg);
      r.x = tr.x.back();
      r.converged = tr.converged;
      r.iterations = tr.iterations;
    } else {
      SimConfig cfg = spec.sim;
      cfg.scheme = c.sim_scheme;
      SimResult res = run_simulation(spec.scenario, loss, cfg, c.seed);
      r.x = res.throughput;
    }
    for (double v : r.x) r.total += v;
  } catch (const std::exception& ex) {
    r.x.assign(F, std::nan(""));
    r.total = std::nan("");
    r.error = ex.what();
  }
  return r;
}

std::string header(const Scenario& sc) {
  std::string h = "scheme,loss_rate,seed";
  for (const auto& f : sc.flows) h += ",x_" + f.name;
  return h + ",total,total_std,converged,iterations,error\n";
}

std::string line(const Row& r, int p) {
  std::string s = r.scheme + "," + (r.rate ? num(*r.rate, p) : "") + "," + r.seed;
  for (double v : r.x) s += "," + num(v, p);
  s += "," + num(r.total, p);
  s += "," + (r.total_std ? num(*r.total_std, p) : "");
  s += "," + (r.converged ? std::string(*r.converged ? "1" : "0") : "");
  s += "," + (r.iterations ? std::to_string(*r.iterations) : "");
  return s + "," + quoted(r.error) + "\n";
}

// Mean of the per-seed rows; total_std is the sample deviation of totals.
Row aggregate(const std::vector<Row>& rows) {
  Row a;
  a.scheme = rows.front().scheme;
  a.rate = rows.front().rate;
  a.seed = "mean";
  std::vector<const Row*> ok;
  for (const auto& r : rows)
    if (r.error.empty()) ok.push_back(&r);
  const std::size_t F = rows.front().x.size();
  a.x.assign(F, 0.0);
  if (ok.empty()) {
    a.x.assign(F, std::nan(""));
    a.total = std::nan("");
    a.error = "no successful runs";
    return a;
  }
  for (const Row* r : ok)
    for (std::size_t f = 0; f < F; ++f) a.x[f] += r->x[f] / static_cast<double>(ok.size());
  for (double v : a.x) a.total += v;
  if (ok.size() > 1) {
    double m = 0, ss = 0;
    for (const Row* r : ok) m += r->total / static_cast<double>(ok.size());
    for (const Row* r : ok) ss += (r->total - m) * (r->total - m);
    a.total_std = std::sqrt(ss / static_cast<double>(ok.size() - 1));
  }
  if (ok.size() != rows.size()) a.error = std::to_string(rows.size() - ok.size()) + " runs failed";
  return a;
}

// Cells in output order; simulate cells come in groups of `seeds`.
ExperimentOutput run_cells(const ScenarioSpec& spec, const std::vector<Cell>& cells, int seeds,
                           const CsvOptions& opt) {
  std::vector<Row> rows(cells.size());
  parallel_for(cells.size(), opt.threads, [&](std::size_t i) { rows[i] = run_cell(spec, cells[i]); });
  ExperimentOutput out;
  out.csv = header(spec.scenario);
  for (std::size_t i = 0; i < rows.size();) {
    std::size_t n = cells[i].optimize ? 1 : static_cast<std::size_t>(seeds);
    std::vector<Row> group(rows.begin() + i, rows.begin() + i + n);
    for (const auto& r : group) {
      out.csv += line(r, opt.precision);
      if (!r.error.empty()) out.engine_error = true;
      if (r.converged && !*r.converged) out.nonconverged = true;
    }
    if (!cells[i].optimize) out.csv += line(aggregate(group), opt.precision);
    i += n;
  }
  return out;
}

void add_optimize(std::vector<Cell>& cells, const std::vector<Variant>& vs, std::optional<double> rate,
                  uint64_t seed) {
  for (Variant v : vs) {
    Cell c;
    c.scheme = to_string(v);
    c.rate = rate;
    c.seed = seed;
    c.variant = v;
    cells.push_back(c);
  }
}

void add_simulate(std::vector<Cell>& cells, const std::vector<Scheme>& ss, std::optional<double> rate,
                  uint64_t seed, int seeds) {
  for (Scheme s : ss)
    for (int j = 0; j < seeds; ++j) {
      Cell c;
      c.scheme = to_string(s);
      c.rate = rate;
      c.seed = seed + static_cast<uint64_t>(j);
      c.optimize = false;
      c.sim_scheme = s;
      cells.push_back(c);
    }
}

}  // namespace

ExperimentOutput run_optimize(const ScenarioSpec& spec, uint64_t seed, const CsvOptions& opt) {
  std::vector<Cell> cells;
  add_optimize(cells, spec.variants, spec.rate, seed);
  return run_cells(spec, cells, 1, opt);
}

ExperimentOutput run_simulate(const ScenarioSpec& spec, uint64_t seed, const CsvOptions& opt) {
  if (spec.sim.seeds < 1) throw UsageError("seeds must be at least 1");
  std::vector<Cell> cells;
  add_simulate(cells, spec.schemes, spec.rate, seed, spec.sim.seeds);
  return run_cells(spec, cells, spec.sim.seeds, opt);
}

ExperimentOutput run_sweep(const ScenarioSpec& spec, const std::vector<double>& rates,
                           const std::vector<std::string>& schemes, uint64_t seed, const CsvOptions& opt) {
  for (double r : rates)
    if (!(r >= 0.0 && r < 1.0)) throw UsageError("sweep rate " + num(r, 6) + " outside [0,1)");
  std::vector<Cell> cells;
  if (spec.engine == Engine::optimize) {
    std::vector<Variant> vs = spec.variants;
    if (!schemes.empty()) {
      vs.clear();
      for (const auto& s : schemes) {
        try {
          vs.push_back(parse_variant(s));
        } catch (const std::exception& ex) {
          throw UsageError(ex.what());
        }
      }
    }
    for (const auto& v : vs)
      for (double r : rates) add_optimize(cells, {v}, r, seed);
    return run_cells(spec, cells, 1, opt);
  }
  if (spec.sim.seeds < 1) throw UsageError("seeds must be at least 1");
  std::vector<Scheme> ss = spec.schemes;
  if (!schemes.empty()) {
    ss.clear();
    for (const auto& s : schemes) {
      try {
        ss.push_back(parse_scheme(s));
      } catch (const std::exception& ex) {
        throw UsageError(ex.what());
      }
    }
  }
  for (Scheme s : ss)
    for (double r : rates) add_simulate(cells, {s}, r, seed, spec.sim.seeds);
  return run_cells(spec, cells, spec.sim.seeds, opt);
}

ExperimentOutput run_convergence(const ScenarioSpec& spec, const CsvOptions& opt) {
  if (spec.engine != Engine::optimize) throw UsageError("convergence needs mode = optimize");
  const int p = opt.precision;
  std::vector<Trajectory> trs(spec.variants.size());
  std::vector<ConvergenceReport> reps(spec.variants.size());
  std::vector<std::string> errs(spec.variants.size());
  LossMatrix loss = spec.loss();
  parallel_for(spec.variants.size(), opt.threads, [&](std::size_t i) {
    try {
      OptimizerConfig cfg = spec.opt;
      cfg.variant = spec.variants[i];
      cfg.record_states = true;
      Problem prob(spec.scenario, loss, cfg.variant, cfg.gamma ? *cfg.gamma : -1.0);
      trs[i] = solve(prob, cfg);
      reps[i] = convergence_report(trs[i], prob);
    } catch (const std::exception& ex) {
      errs[i] = ex.what();
    }
  });

  ExperimentOutput out;
  out.csv = "variant,iter";
  for (const auto& f : spec.scenario.flows) out.csv += ",x_" + f.name;
  out.csv += ",total,residual,lyapunov_proxy\n";
  const std::size_t F = spec.scenario.flows.size();
  for (std::size_t i = 0; i < spec.variants.size(); ++i) {
    const std::string v = to_string(spec.variants[i]);
    auto trailer = [&](const std::string& what) {
      out.csv += v + "," + what + std::string(F + 3, ',') + "\n";
    };
    if (!errs[i].empty()) {
      out.engine_error = true;
      trailer(quoted("error: " + errs[i]));
      continue;
    }
    const Trajectory& tr = trs[i];
    const ConvergenceReport& rep = reps[i];
    for (std::size_t t = 0; t < tr.x.size(); ++t) {
      std::string s = v + "," + std::to_string(t);
      for (double x : tr.x[t]) s += "," + num(x, p);
      s += "," + num(tr.total(t), p) + "," + num(tr.residual[t], p) + ",";
      if (t < rep.lyapunov.size()) s += num(rep.lyapunov[t], p);
      out.csv += s + "\n";
    }
    if (!tr.converged) {
      out.nonconverged = true;
      trailer("nonconverged after " + std::to_string(tr.iterations) + " iterations");
    }
  }
  return out;
}

}  // namespace nclab
