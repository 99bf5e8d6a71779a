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
#include "nclab/topology.hpp"

namespace nclab {

enum class Variant { state, stateless, nonc };
enum class StepSchedule { constant, diminishing };

Variant parse_variant(const std::string& s);
std::string to_string(Variant v);

struct InfeasibleHyperarc : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OptimizerConfig {
  Variant variant = Variant::state;
  double step_q = 0.1;
  double step_alpha = 0.2;
  double step_tau = 0.2;
  StepSchedule schedule = StepSchedule::diminishing;
  double schedule_T = 5000.0;  // c0 / (1 + t/T)
  // Prices fed to the rate, split and schedule steps are q + damping * dq/dt.
  // 0 gives the undamped dynamics, whose (q, tau) modes orbit forever.
  double damping = 1.0;
  long max_iters = 100000;
  double tol = 1e-6;
  int window = 100;
  std::optional<double> gamma;  // defaults to the scenario's
  double x_cap = 0.0;           // <= 0 means 10 * max R_h
  bool record_states = false;   // keep (q, alpha, tau) per iteration
};

// Per (h,k,s) entry of the problem, with the loss terms folded in.
struct Option {
  int code = 0;
  int hyperarc = 0;
  FlowId flow = 0;
  NodeId node = 0;
  double R = 1.0;
  double rho = 0.0;  // rho_h^s
  // inflow = self_in * alpha x + sum cross_in[j].second * (alpha x)_j
  double self_in = 1.0;
  std::vector<std::pair<int, double>> cross_in;
  // Q_hks = self_q * q + sum cross_q[j].second * q_j
  double self_q = 1.0;
  std::vector<std::pair<int, double>> cross_q;
};

struct OptimizerState {
  std::vector<double> q;      // per option
  std::vector<double> alpha;  // per option
  std::vector<double> tau;    // per code
  std::vector<double> x;      // per flow
  long iter = 0;
};

// Scenario + loss + variant compiled into flat arrays.
class Problem {
 public:
  Problem(const Scenario& sc, const LossMatrix& loss, Variant variant, double gamma = -1.0);

  const Scenario& scenario() const { return sc_; }
  Variant variant() const { return variant_; }
  double gamma() const { return gamma_; }
  int num_options() const { return static_cast<int>(options_.size()); }
  int num_codes() const { return static_cast<int>(sc_.codebook.codes.size()); }
  int num_flows() const { return static_cast<int>(sc_.flows.size()); }
  const std::vector<Option>& options() const { return options_; }
  // -1 if s is not in code k
  int option_index(int code, FlowId s) const;
  // option ids for flow s at node i
  const std::vector<int>& row(NodeId i, FlowId s) const;
  // (node, flow) pairs that carry an alpha row
  const std::vector<std::pair<NodeId, FlowId>>& rows() const { return row_keys_; }
  // code ids touched by clique c
  const std::vector<int>& clique_codes(int c) const { return clique_codes_.at(c); }
  int num_cliques() const { return static_cast<int>(clique_codes_.size()); }
  double max_capacity() const;

  OptimizerState initial_state(double x_cap) const;

  double compute_Q_hks(const OptimizerState& st, int option) const;
  double compute_Q_is(const OptimizerState& st, NodeId i, FlowId s) const;
  double compute_Q_is(const OptimizerState& st, NodeId i, FlowId s,
                      const std::vector<double>& Q) const;
  double rate_control(const OptimizerState& st, FlowId s, const std::vector<double>& Q,
                      double x_cap) const;
  double inflow(const OptimizerState& st, int option) const;
  double queue_update(OptimizerState& st, int option, double c) const;
  void traffic_split_step(OptimizerState& st, NodeId i, FlowId s, const std::vector<double>& Q,
                          double c) const;
  void schedule_step(OptimizerState& st, int clique, double c) const;
  // R_h * sum_s q_{h,k}^s
  double code_weight(const OptimizerState& st, int code) const;
  // max over options of [inflow - R tau]^+
  double residual(const OptimizerState& st) const;

 private:
  Scenario sc_;
  Variant variant_;
  double gamma_;
  std::vector<Option> options_;
  std::vector<std::vector<int>> code_options_;
  std::map<std::pair<NodeId, FlowId>, std::vector<int>> rows_;
  std::vector<std::pair<NodeId, FlowId>> row_keys_;
  std::vector<std::vector<int>> clique_codes_;
};

struct Trajectory {
  std::vector<std::vector<double>> x;  // row 0 is the initial point
  std::vector<double> residual;        // per row
  std::vector<std::vector<double>> states;  // flattened (q, alpha, tau) per row if recorded
  OptimizerState final_state;
  bool converged = false;
  long iterations = 0;
  double step_q = 0, step_alpha = 0, step_tau = 0;

  double total(std::size_t row) const;
  double final_total() const { return total(x.size() - 1); }
};

// One full iteration: queues, Q, rates, splits, schedule. Returns Q values.
std::vector<double> iterate(const Problem& p, OptimizerState& st, const OptimizerConfig& cfg,
                            double x_cap);

Trajectory solve(const Scenario& sc, const LossMatrix& loss, const OptimizerConfig& cfg);
Trajectory solve(const Problem& p, const OptimizerConfig& cfg);

struct ConvergenceReport {
  std::vector<double> residuals;
  std::vector<double> lyapunov;
  std::vector<double> objective_gap;  // |U_t - U_final|
  double tail_residual = 0;          // max residual over the final window
  double final_residual = 0;
  double monotone_fraction = 1.0;    // proxy non-increasing share over the last half
  double max_simplex_error = 0;
  double max_clique_excess = 0;
};

// Needs a trajectory solved with record_states.
ConvergenceReport convergence_report(const Trajectory& tr, const Problem& p);

}  // namespace nclab
