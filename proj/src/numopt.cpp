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
#include "nclab/numopt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nclab {

Variant parse_variant(const std::string& s) {
  if (s == "state") return Variant::state;
  if (s == "stateless") return Variant::stateless;
  if (s == "nonc") return Variant::nonc;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::state: return "state";
    case Variant::stateless: return "stateless";
    case Variant::nonc: return "nonc";
  }
  return "?";
}

Problem::Problem(const Scenario& sc, const LossMatrix& loss, Variant variant, double gamma)
    : sc_(variant == Variant::nonc ? singletons_only(sc) : sc), variant_(variant) {
  gamma_ = gamma > 0 ? gamma : sc_.conflicts.gamma;
  if (!(gamma_ > 0 && gamma_ <= 1)) throw std::invalid_argument("gamma must lie in (0,1]");
  const bool stateless = variant == Variant::stateless;
  code_options_.resize(sc_.codebook.codes.size());
  for (const auto& c : sc_.codebook.codes) {
    const auto& h = sc_.hyperarc(c.hyperarc);
    for (FlowId s : c.flows) {
      Option o;
      o.code = c.id;
      o.hyperarc = c.hyperarc;
      o.flow = s;
      o.node = h.transmitter;
      o.R = h.capacity;
      o.rho = direct_loss(sc_, loss, c.hyperarc, s);
      if (o.rho >= 1.0)
        throw InfeasibleHyperarc("flow " + sc_.flows[s].name + " cannot be served from " +
                                 sc_.topo.node_name(h.transmitter));
      o.self_in = 1.0 / (1.0 - o.rho);
      o.self_q = o.self_in;
      code_options_[c.id].push_back(static_cast<int>(options_.size()));
      rows_[{o.node, s}].push_back(static_cast<int>(options_.size()));
      options_.push_back(o);
    }
  }
  for (auto& o : options_) {
    for (int j : code_options_[o.code]) {
      const Option& p = options_[j];
      if (p.flow == o.flow) continue;
      double in = antidote_loss(sc_, loss, o.code, o.flow, p.flow);
      double qq = antidote_loss(sc_, loss, o.code, p.flow, o.flow);
      if (stateless) {
        in /= 1.0 - o.rho;
        qq /= 1.0 - p.rho;
      }
      if (in > 0) o.cross_in.emplace_back(j, in);
      if (qq > 0) o.cross_q.emplace_back(j, qq);
    }
  }
  for (const auto& f : sc_.flows)
    for (std::size_t i = 0; i + 1 < f.path.size(); ++i)
      if (!rows_.count({f.path[i], f.id}))
        throw InfeasibleHyperarc("flow " + f.name + " has no option at " +
                                 sc_.topo.node_name(f.path[i]));
  for (const auto& [key, v] : rows_) row_keys_.push_back(key);
  for (const auto& clique : sc_.conflicts.cliques) {
    std::vector<int> codes;
    for (int h : clique)
      for (int k : sc_.codebook.by_hyperarc.at(h)) codes.push_back(k);
    std::sort(codes.begin(), codes.end());
    clique_codes_.push_back(codes);
  }
}

int Problem::option_index(int code, FlowId s) const {
  for (int j : code_options_.at(code))
    if (options_[j].flow == s) return j;
  return -1;
}

const std::vector<int>& Problem::row(NodeId i, FlowId s) const {
  auto it = rows_.find({i, s});
  if (it == rows_.end()) throw std::invalid_argument("no options for flow at node");
  return it->second;
}

double Problem::max_capacity() const {
  double m = 0;
  for (const auto& h : sc_.hyperarcs) m = std::max(m, h.capacity);
  return m;
}

OptimizerState Problem::initial_state(double x_cap) const {
  OptimizerState st;
  st.q.assign(options_.size(), 0.0);
  st.alpha.assign(options_.size(), 0.0);
  for (const auto& [key, r] : rows_)
    for (int j : r) st.alpha[j] = 1.0 / static_cast<double>(r.size());
  st.tau.assign(num_codes(), gamma_);
  for (const auto& codes : clique_codes_)
    for (int k : codes)
      st.tau[k] = std::min(st.tau[k], gamma_ / static_cast<double>(codes.size()));
  st.x.assign(sc_.flows.size(), x_cap);
  return st;
}

double Problem::compute_Q_hks(const OptimizerState& st, int option) const {
  const Option& o = options_.at(option);
  double v = o.self_q * st.q[option];
  for (const auto& [j, c] : o.cross_q) v += c * st.q[j];
  return v;
}

double Problem::compute_Q_is(const OptimizerState& st, NodeId i, FlowId s) const {
  double v = 0;
  for (int j : row(i, s)) v += st.alpha[j] * compute_Q_hks(st, j);
  return v;
}

double Problem::compute_Q_is(const OptimizerState& st, NodeId i, FlowId s,
                             const std::vector<double>& Q) const {
  double v = 0;
  for (int j : row(i, s)) v += st.alpha[j] * Q[j];
  return v;
}

double Problem::rate_control(const OptimizerState& st, FlowId s, const std::vector<double>& Q,
                             double x_cap) const {
  const Flow& f = sc_.flows.at(s);
  double sum = 0;
  for (std::size_t i = 0; i + 1 < f.path.size(); ++i) sum += compute_Q_is(st, f.path[i], s, Q);
  if (sum <= 0) return x_cap;
  return std::min(x_cap, 1.0 / sum);
}

double Problem::inflow(const OptimizerState& st, int option) const {
  const Option& o = options_[option];
  double v = o.self_in * st.alpha[option] * st.x[o.flow];
  for (const auto& [j, c] : o.cross_in) v += c * st.alpha[j] * st.x[options_[j].flow];
  return v;
}

double Problem::queue_update(OptimizerState& st, int option, double c) const {
  const Option& o = options_[option];
  double v = st.q[option] + c * (inflow(st, option) - o.R * st.tau[o.code]);
  st.q[option] = std::max(0.0, v);
  return st.q[option];
}

void Problem::traffic_split_step(OptimizerState& st, NodeId i, FlowId s,
                                 const std::vector<double>& Q, double c) const {
  const auto& r = row(i, s);
  if (r.empty()) throw std::invalid_argument("empty option set");
  if (r.size() == 1) {
    st.alpha[r[0]] = 1.0;
    return;
  }
  // Active set: positive splits plus zero splits whose Q does not exceed the mean.
  std::vector<char> active(r.size(), 0);
  std::vector<std::size_t> idle;
  double sum = 0;
  int n = 0;
  for (std::size_t a = 0; a < r.size(); ++a) {
    if (st.alpha[r[a]] > 0) {
      active[a] = 1;
      sum += Q[r[a]];
      ++n;
    } else {
      idle.push_back(a);
    }
  }
  std::stable_sort(idle.begin(), idle.end(),
                   [&](std::size_t a, std::size_t b) { return Q[r[a]] < Q[r[b]]; });
  for (std::size_t a : idle) {
    if (n > 0 && Q[r[a]] > sum / n) break;
    active[a] = 1;
    sum += Q[r[a]];
    ++n;
  }
  const double mean = sum / n;
  double total = 0;
  for (std::size_t a = 0; a < r.size(); ++a) {
    double& al = st.alpha[r[a]];
    if (active[a]) al = std::max(0.0, al + c * (mean - Q[r[a]]));
    total += al;
  }
  if (total <= 0) {
    // every active split hit zero at once; fall back to the lowest-Q option
    std::size_t best = 0;
    for (std::size_t a = 1; a < r.size(); ++a)
      if (Q[r[a]] < Q[r[best]]) best = a;
    for (std::size_t a = 0; a < r.size(); ++a) st.alpha[r[a]] = a == best ? 1.0 : 0.0;
    return;
  }
  for (int j : r) st.alpha[j] /= total;
}

double Problem::code_weight(const OptimizerState& st, int code) const {
  double v = 0;
  for (int j : code_options_[code]) v += st.q[j];
  return sc_.hyperarc(sc_.code(code).hyperarc).capacity * v;
}

void Problem::schedule_step(OptimizerState& st, int clique, double c) const {
  const auto& codes = clique_codes_.at(clique);
  if (codes.empty()) return;
  std::vector<double> w(codes.size());
  bool any = false;
  for (std::size_t a = 0; a < codes.size(); ++a) {
    w[a] = code_weight(st, codes[a]);
    any = any || w[a] > 0;
  }
  if (!any) return;
  std::vector<char> active(codes.size(), 0);
  std::vector<std::size_t> idle;
  double sum = 0;
  int n = 0;
  for (std::size_t a = 0; a < codes.size(); ++a) {
    if (st.tau[codes[a]] > 0) {
      active[a] = 1;
      sum += w[a];
      ++n;
    } else {
      idle.push_back(a);
    }
  }
  std::stable_sort(idle.begin(), idle.end(), [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
  for (std::size_t a : idle) {
    if (n > 0 && w[a] < sum / n) break;
    active[a] = 1;
    sum += w[a];
    ++n;
  }
  const double mean = sum / n;
  double total = 0;
  for (std::size_t a = 0; a < codes.size(); ++a) {
    double& t = st.tau[codes[a]];
    if (active[a]) t = std::max(0.0, t + c * (w[a] - mean));
    total += t;
  }
  if (total <= 0) {
    std::size_t best = 0;
    for (std::size_t a = 1; a < codes.size(); ++a)
      if (w[a] > w[best]) best = a;
    st.tau[codes[best]] = gamma_;
    return;
  }
  for (int k : codes) st.tau[k] *= gamma_ / total;
}

double Problem::residual(const OptimizerState& st) const {
  double r = 0;
  for (int j = 0; j < num_options(); ++j)
    r = std::max(r, inflow(st, j) - options_[j].R * st.tau[options_[j].code]);
  return r;
}

std::vector<double> iterate(const Problem& p, OptimizerState& st, const OptimizerConfig& cfg,
                            double x_cap) {
  const double f = cfg.schedule == StepSchedule::diminishing
                       ? 1.0 / (1.0 + static_cast<double>(st.iter) / cfg.schedule_T)
                       : 1.0;
  const double cq = cfg.step_q * f;
  std::vector<double> q_old = st.q;
  for (int j = 0; j < p.num_options(); ++j) p.queue_update(st, j, cq);
  // Prices seen by the rate, split and schedule steps: q plus a damping term
  // on its latest drift.
  OptimizerState view = st;
  for (int j = 0; j < p.num_options(); ++j)
    view.q[j] = std::max(0.0, st.q[j] + cfg.damping * (st.q[j] - q_old[j]) / cq);
  std::vector<double> Q(p.num_options());
  for (int j = 0; j < p.num_options(); ++j) Q[j] = p.compute_Q_hks(view, j);
  for (FlowId s = 0; s < p.num_flows(); ++s) st.x[s] = p.rate_control(st, s, Q, x_cap);
  for (const auto& [i, s] : p.rows()) p.traffic_split_step(st, i, s, Q, cfg.step_alpha * f);
  view.alpha = st.alpha;
  view.tau = st.tau;
  for (int c = 0; c < p.num_cliques(); ++c) p.schedule_step(view, c, cfg.step_tau * f);
  st.tau = view.tau;
  // overlapping cliques: scale down any clique pushed above gamma by a neighbour
  for (int c = 0; c < p.num_cliques(); ++c) {
    double sum = 0;
    for (int k : p.clique_codes(c)) sum += st.tau[k];
    if (sum > p.gamma())
      for (int k : p.clique_codes(c)) st.tau[k] *= p.gamma() / sum;
  }
  ++st.iter;
  return Q;
}

double Trajectory::total(std::size_t row) const {
  const auto& r = x.at(row);
  return std::accumulate(r.begin(), r.end(), 0.0);
}

namespace {

std::vector<double> flatten(const OptimizerState& st) {
  std::vector<double> v;
  v.reserve(st.q.size() * 2 + st.tau.size());
  v.insert(v.end(), st.q.begin(), st.q.end());
  v.insert(v.end(), st.alpha.begin(), st.alpha.end());
  v.insert(v.end(), st.tau.begin(), st.tau.end());
  return v;
}

bool window_settled(const std::vector<std::vector<double>>& x, int window, double tol) {
  if (window < 1 || x.size() < static_cast<std::size_t>(window) + 1) return false;
  const std::size_t n = x.front().size();
  for (std::size_t s = 0; s < n; ++s) {
    double lo = x.back()[s], hi = lo;
    for (std::size_t t = x.size() - window - 1; t < x.size(); ++t) {
      lo = std::min(lo, x[t][s]);
      hi = std::max(hi, x[t][s]);
    }
    if (hi - lo >= tol) return false;
  }
  return true;
}

}  // namespace

Trajectory solve(const Problem& p, const OptimizerConfig& cfg) {
  if (!(cfg.step_q > 0 && cfg.step_alpha > 0 && cfg.step_tau > 0))
    throw std::invalid_argument("step sizes must be positive");
  if (!(cfg.tol > 0)) throw std::invalid_argument("tol must be positive");
  const double x_cap = cfg.x_cap > 0 ? cfg.x_cap : 10.0 * p.max_capacity();
  Trajectory tr;
  tr.step_q = cfg.step_q;
  tr.step_alpha = cfg.step_alpha;
  tr.step_tau = cfg.step_tau;
  OptimizerState st = p.initial_state(x_cap);
  tr.x.push_back(st.x);
  tr.residual.push_back(p.residual(st));
  if (cfg.record_states) tr.states.push_back(flatten(st));
  while (st.iter < cfg.max_iters) {
    iterate(p, st, cfg, x_cap);
    tr.x.push_back(st.x);
    tr.residual.push_back(p.residual(st));
    if (cfg.record_states) tr.states.push_back(flatten(st));
    if (window_settled(tr.x, cfg.window, cfg.tol)) {
      tr.converged = true;
      break;
    }
  }
  tr.iterations = st.iter;
  tr.final_state = st;
  return tr;
}

Trajectory solve(const Scenario& sc, const LossMatrix& loss, const OptimizerConfig& cfg) {
  Problem p(sc, loss, cfg.variant, cfg.gamma.value_or(-1.0));
  return solve(p, cfg);
}

ConvergenceReport convergence_report(const Trajectory& tr, const Problem& p) {
  ConvergenceReport rep;
  if (tr.x.empty()) throw std::invalid_argument("empty trajectory");
  rep.residuals = tr.residual;
  const std::size_t n = tr.x.size();
  auto utility = [&](std::size_t t) {
    double u = 0;
    for (double v : tr.x[t]) u += std::log(std::max(v, 1e-300));
    return u;
  };
  const double u_final = utility(n - 1);
  for (std::size_t t = 0; t < n; ++t) rep.objective_gap.push_back(std::abs(utility(t) - u_final));
  rep.final_residual = tr.residual.back();
  const std::size_t w = std::min<std::size_t>(n, 100);
  for (std::size_t t = n - w; t < n; ++t) rep.tail_residual = std::max(rep.tail_residual, tr.residual[t]);

  const int no = p.num_options();
  auto check_feasible = [&](const std::vector<double>& alpha, const std::vector<double>& tau) {
    for (const auto& [i, s] : p.rows()) {
      double sum = 0;
      for (int j : p.row(i, s)) sum += alpha[j];
      rep.max_simplex_error = std::max(rep.max_simplex_error, std::abs(sum - 1.0));
    }
    for (int c = 0; c < p.num_cliques(); ++c) {
      double sum = 0;
      for (int k : p.clique_codes(c)) sum += tau[k];
      rep.max_clique_excess = std::max(rep.max_clique_excess, sum - p.gamma());
    }
  };
  check_feasible(tr.final_state.alpha, tr.final_state.tau);
  if (tr.states.size() != n) return rep;

  // Distance to the final iterate, weighted like the Lyapunov function.
  const auto& ref = tr.states.back();
  const auto& xs = tr.final_state.x;
  rep.lyapunov.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    const auto& v = tr.states[t];
    double V = 0;
    for (int j = 0; j < no; ++j) {
      double dq = v[j] - ref[j];
      double da = v[no + j] - ref[no + j];
      V += dq * dq / (2 * tr.step_q);
      V += xs[p.options()[j].flow] * da * da / (2 * tr.step_alpha);
    }
    for (std::size_t k = 2 * no; k < v.size(); ++k) {
      double dt = v[k] - ref[k];
      V += dt * dt / (2 * tr.step_tau);
    }
    rep.lyapunov[t] = V;
    std::vector<double> alpha(v.begin() + no, v.begin() + 2 * no);
    std::vector<double> tau(v.begin() + 2 * no, v.end());
    check_feasible(alpha, tau);
  }
  const std::size_t start = n / 2;
  std::size_t steps = 0, ok = 0;
  for (std::size_t t = start; t + 1 < n; ++t) {
    ++steps;
    if (rep.lyapunov[t + 1] <= rep.lyapunov[t] + 1e-12) ++ok;
  }
  rep.monotone_fraction = steps ? static_cast<double>(ok) / steps : 1.0;
  return rep;
}

}  // namespace nclab
