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
#include <doctest.h>

#include <cmath>

#include "nclab/numopt.hpp"

using namespace nclab;

namespace {

struct XFixture {
  Scenario sc = build_canonical(CanonicalKind::x);
  NodeId n(const char* s) const { return sc.topo.node_id(s); }
  // relay options in the X problem
  static constexpr int kS1Single = 2, kS2Single = 3, kS1Pair = 4, kS2Pair = 5;
};

double total(const std::vector<double>& x) {
  double t = 0;
  for (double v : x) t += v;
  return t;
}

}  // namespace

TEST_CASE_FIXTURE(XFixture, "relay option layout") {
  Problem p(sc, LossMatrix::uniform(sc.topo, 0.0), Variant::state);
  REQUIRE(p.num_options() == 6);
  CHECK(p.options()[kS1Pair].code == 4);
  CHECK(p.options()[kS1Pair].flow == 0);
  CHECK(p.options()[kS2Pair].flow == 1);
  CHECK(p.option_index(4, 1) == kS2Pair);
  CHECK(p.option_index(2, 1) == -1);
  CHECK(p.row(n("I"), 0) == std::vector<int>{kS1Single, kS1Pair});
}

TEST_CASE_FIXTURE(XFixture, "Q of an option") {
  LossMatrix m = LossMatrix::uniform(sc.topo, 0.0);
  m.set(n("I"), n("A2"), 0.5);   // direct loss of S1
  m.set(n("A1"), n("B2"), 0.25); // B2 misses S1's antidote
  m.set(n("I"), n("B2"), 0.2);   // direct loss of the partner
  {
    Problem p(sc, m, Variant::state);
    OptimizerState st = p.initial_state(1.0);
    for (auto& q : st.q) q = 1.0;
    CHECK(p.compute_Q_hks(st, kS1Pair) == doctest::Approx(2.25));
  }
  {
    Problem p(sc, m, Variant::stateless);
    OptimizerState st = p.initial_state(1.0);
    for (auto& q : st.q) q = 1.0;
    CHECK(p.compute_Q_hks(st, kS1Pair) == doctest::Approx(2.3125));
  }
  Problem lossless(sc, LossMatrix::uniform(sc.topo, 0.0), Variant::stateless);
  OptimizerState st = lossless.initial_state(1.0);
  for (auto& q : st.q) q = 0.0;
  st.q[kS1Single] = 2.0;
  CHECK(lossless.compute_Q_hks(st, kS1Single) == doctest::Approx(2.0));
}

TEST_CASE_FIXTURE(XFixture, "Q of a node is the alpha mix") {
  Problem p(sc, LossMatrix::uniform(sc.topo, 0.0), Variant::state);
  OptimizerState st = p.initial_state(1.0);
  std::vector<double> Q(p.num_options(), 0.0);
  Q[kS1Single] = 2.0;
  Q[kS1Pair] = 4.0;
  st.alpha[kS1Single] = 0.5;
  st.alpha[kS1Pair] = 0.5;
  CHECK(p.compute_Q_is(st, n("I"), 0, Q) == doctest::Approx(3.0));
  Q[0] = 3.0;
  CHECK(p.compute_Q_is(st, n("A1"), 0, Q) == doctest::Approx(3.0));
}

TEST_CASE_FIXTURE(XFixture, "rate control inverts the path price") {
  Problem p(sc, LossMatrix::uniform(sc.topo, 0.0), Variant::state);
  OptimizerState st = p.initial_state(5.0);
  std::vector<double> Q(p.num_options(), 0.0);
  CHECK(p.rate_control(st, 0, Q, 5.0) == 5.0);
  Q[0] = 1.0;  // at A1
  st.alpha[kS1Single] = 1.0;
  st.alpha[kS1Pair] = 0.0;
  Q[kS1Single] = 3.0;
  CHECK(p.rate_control(st, 0, Q, 5.0) == doctest::Approx(0.25));
}

TEST_CASE_FIXTURE(XFixture, "queue update") {
  Problem p(sc, LossMatrix::uniform(sc.topo, 0.0), Variant::state);
  OptimizerState st = p.initial_state(1.0);
  st.x = {2.0, 0.0};
  st.alpha[0] = 1.0;
  st.tau.assign(p.num_codes(), 0.0);
  st.tau[0] = 1.0;
  st.q[0] = 1.0;
  CHECK(p.queue_update(st, 0, 0.1) == doctest::Approx(1.1));
  st.x = {0.5, 0.0};
  st.q[0] = 0.0;
  CHECK(p.queue_update(st, 0, 0.1) == 0.0);
}

TEST_CASE_FIXTURE(XFixture, "stateless scales the cross inflow") {
  LossMatrix m = LossMatrix::uniform(sc.topo, 0.0);
  m.set(n("I"), n("B2"), 0.5);
  m.set(n("A1"), n("B2"), 0.3);
  m.set(n("B1"), n("A2"), 0.3);
  double in[2];
  int j = 0;
  for (auto v : {Variant::state, Variant::stateless}) {
    Problem p(sc, m, v);
    OptimizerState st = p.initial_state(1.0);
    st.x = {1.0, 0.0};
    st.alpha[kS1Single] = 0.0;
    st.alpha[kS1Pair] = 1.0;
    in[j++] = p.inflow(st, kS2Pair);
  }
  CHECK(in[0] == doctest::Approx(0.3));
  CHECK(in[1] == doctest::Approx(0.6));
}

TEST_CASE_FIXTURE(XFixture, "split moves toward the cheaper option") {
  Problem p(sc, LossMatrix::uniform(sc.topo, 0.0), Variant::state);
  OptimizerState st = p.initial_state(1.0);
  std::vector<double> Q(p.num_options(), 0.0);
  Q[kS1Single] = 5.0;
  Q[kS1Pair] = 10.0;
  st.alpha[kS1Single] = st.alpha[kS1Pair] = 0.5;
  for (int i = 0; i < 200; ++i) p.traffic_split_step(st, n("I"), 0, Q, 0.2);
  CHECK(st.alpha[kS1Single] == doctest::Approx(1.0));
  CHECK(st.alpha[kS1Pair] == doctest::Approx(0.0));

  st.alpha[kS1Single] = st.alpha[kS1Pair] = 0.5;
  Q[kS1Pair] = 5.0;
  p.traffic_split_step(st, n("I"), 0, Q, 0.2);
  CHECK(st.alpha[kS1Single] == doctest::Approx(0.5));

  p.traffic_split_step(st, n("A1"), 0, Q, 0.2);
  CHECK(st.alpha[0] == 1.0);
}

TEST_CASE_FIXTURE(XFixture, "schedule moves toward the heavier code") {
  Problem p(sc, LossMatrix::uniform(sc.topo, 0.0), Variant::state);
  OptimizerState st = p.initial_state(1.0);
  for (auto& q : st.q) q = 0.0;
  std::vector<double> before = st.tau;
  p.schedule_step(st, 0, 0.2);
  CHECK(st.tau == before);  // all weights zero

  st.q[0] = 3.0;  // code 0
  st.q[1] = 1.0;  // code 1
  for (int i = 0; i < 500; ++i) p.schedule_step(st, 0, 0.2);
  CHECK(st.tau[0] == doctest::Approx(p.gamma()).epsilon(1e-6));
  CHECK(st.tau[1] == doctest::Approx(0.0).epsilon(1e-6));
  double sum = 0;
  for (int k : p.clique_codes(0)) sum += st.tau[k];
  CHECK(sum <= p.gamma() + 1e-9);
}

TEST_CASE_FIXTURE(XFixture, "lossless optimum") {
  LossMatrix m = LossMatrix::uniform(sc.topo, 0.0);
  OptimizerConfig c;
  for (auto v : {Variant::state, Variant::stateless}) {
    c.variant = v;
    Trajectory tr = solve(sc, m, c);
    CHECK(tr.converged);
    CHECK(tr.x.back()[0] == doctest::Approx(1.0 / 3).epsilon(0.01));
    CHECK(tr.x.back()[1] == doctest::Approx(1.0 / 3).epsilon(0.01));
  }
  c.variant = Variant::nonc;
  Trajectory tr = solve(sc, m, c);
  CHECK(tr.final_total() == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE_FIXTURE(XFixture, "trajectory bookkeeping") {
  OptimizerConfig c;
  c.max_iters = 0;
  Trajectory tr = solve(sc, LossMatrix::uniform(sc.topo, 0.0), c);
  CHECK(tr.x.size() == 1);
  CHECK_FALSE(tr.converged);

  c.max_iters = 100000;
  c.record_states = true;
  LossMatrix m = pattern_loss(sc, LossPattern::both, 0.3);
  Problem p(sc, m, Variant::state);
  tr = solve(p, c);
  REQUIRE(tr.converged);
  CHECK(tr.states.size() == tr.x.size());
  for (std::size_t t = 0; t < tr.x.size(); ++t) CHECK(tr.total(t) == doctest::Approx(total(tr.x[t])));
  ConvergenceReport rep = convergence_report(tr, p);
  CHECK(rep.lyapunov.back() == doctest::Approx(0.0));
  CHECK(rep.tail_residual <= 1e-3);
  CHECK(rep.max_simplex_error < 1e-9);
  CHECK(rep.max_clique_excess < 1e-9);
}

TEST_CASE_FIXTURE(XFixture, "dead direct link is infeasible") {
  LossMatrix m = LossMatrix::uniform(sc.topo, 0.0);
  m.set(n("I"), n("A2"), 1.0);
  CHECK_THROWS_AS(Problem(sc, m, Variant::state), InfeasibleHyperarc);
}

TEST_CASE("variant names") {
  for (auto v : {Variant::state, Variant::stateless, Variant::nonc}) CHECK(parse_variant(to_string(v)) == v);
  CHECK_THROWS(parse_variant("cope"));
}
