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

#include <algorithm>

#include "nclab/topology.hpp"

using namespace nclab;

namespace {

int count_codes_at(const Scenario& sc, const std::string& tx) {
  NodeId n = sc.topo.node_id(tx);
  int c = 0;
  for (const auto& k : sc.codebook.codes)
    if (sc.hyperarc(k.hyperarc).transmitter == n) ++c;
  return c;
}

}  // namespace

TEST_CASE("x topology shape") {
  Scenario sc = build_canonical(CanonicalKind::x);
  CHECK(sc.topo.num_nodes() == 5);
  REQUIRE(sc.flows.size() == 2);
  CHECK(sc.flows[0].name == "S1");
  CHECK(sc.flows[0].path == std::vector<NodeId>{sc.topo.node_id("A1"), sc.topo.node_id("I"), sc.topo.node_id("A2")});
  CHECK(sc.hyperarcs.size() == 3);
  // relay: two singletons and the pair
  CHECK(count_codes_at(sc, "I") == 3);
  CHECK(count_codes_at(sc, "A1") == 1);
  CHECK(sc.conflicts.cliques.size() == 1);
  CHECK(sc.conflicts.cliques[0].size() == 3);
}

TEST_CASE("overhearing links make the pair code valid") {
  Scenario sc = build_canonical(CanonicalKind::x);
  const Hyperarc& relay = sc.hyperarc(2);
  CHECK(relay.transmitter == sc.topo.node_id("I"));
  CHECK(antidote_available(sc.topo, relay, sc.flows[0], sc.flows[1]));
  CHECK(antidote_available(sc.topo, relay, sc.flows[1], sc.flows[0]));

  // without B1 -> A2 the pair cannot be decoded at A2
  Topology t;
  for (auto n : {"A1", "B1", "I", "A2", "B2"}) t.add_node(n);
  t.add_link("A1", "I");
  t.add_link("B1", "I");
  t.add_link("I", "A2");
  t.add_link("I", "B2");
  t.add_link("A1", "B2");
  Scenario s2;
  s2.topo = t;
  s2.flows.push_back(make_flow(t, 0, "S1", {"A1", "I", "A2"}, 15));
  s2.flows.push_back(make_flow(t, 1, "S2", {"B1", "I", "B2"}, 15));
  finalize_scenario(s2, Interference::single_clique);
  CHECK(count_codes_at(s2, "I") == 2);
}

TEST_CASE("cross relay enumerates every subset of four flows") {
  Scenario sc = build_canonical(CanonicalKind::cross);
  CHECK(sc.flows.size() == 4);
  CHECK(count_codes_at(sc, "I") == 15);
  auto it = std::find_if(sc.codebook.codes.begin(), sc.codebook.codes.end(),
                         [](const Code& c) { return c.flows.size() == 4; });
  CHECK(it != sc.codebook.codes.end());
}

TEST_CASE("max code size caps the relay codes") {
  CanonicalParams p;
  p.max_code_size = 2;
  Scenario sc = build_canonical(CanonicalKind::cross, p);
  CHECK(count_codes_at(sc, "I") == 4 + 6);
}

TEST_CASE("flow hops") {
  Scenario sc = build_canonical(CanonicalKind::multihop_chain);
  const Flow& f = sc.flows[0];
  NodeId I = sc.topo.node_id("I");
  CHECK(f.next_hop(f.source) == I);
  CHECK(f.prev_hop(I) == f.source);
  CHECK(f.next_hop(f.destination) == -1);
  CHECK(f.prev_hop(f.source) == -1);
  CHECK(f.next_hop(sc.topo.node_id("B1")) == -1);
  CHECK(f.visits(I));
}

TEST_CASE("chain has spatial reuse") {
  Scenario sc = build_canonical(CanonicalKind::multihop_chain);
  CHECK(sc.conflicts.cliques.size() > 1);
  for (const auto& c : sc.conflicts.cliques) CHECK(c.size() < sc.hyperarcs.size());
}

TEST_CASE("every code flow crosses its hyperarc") {
  for (auto k : {CanonicalKind::x, CanonicalKind::cross, CanonicalKind::wheel, CanonicalKind::multihop_chain}) {
    Scenario sc = build_canonical(k);
    for (const auto& c : sc.codebook.codes) {
      auto crossing = flows_crossing(sc.hyperarc(c.hyperarc), sc.flows);
      for (FlowId f : c.flows) CHECK(std::find(crossing.begin(), crossing.end(), f) != crossing.end());
      CHECK(std::is_sorted(c.flows.begin(), c.flows.end()));
      CHECK(sc.codebook.H(c.id, c.flows.front()));
    }
  }
}

TEST_CASE("bad topologies are rejected") {
  Topology t;
  t.add_node("A");
  t.add_node("B");
  t.add_link("A", "B");
  CHECK(t.add_node("A") == 0);  // re-adding returns the existing id
  CHECK_THROWS_AS(t.add_link("A", "A"), TopologyError);
  CHECK_THROWS_AS(t.node_id("C"), TopologyError);
  CHECK_THROWS_AS(make_flow(t, 0, "F", {"B", "A"}, 4), TopologyError);
  CHECK_THROWS_AS(make_flow(t, 0, "F", {"A"}, 4), TopologyError);
  CHECK_THROWS(parse_canonical_kind("ring"));
}

TEST_CASE("singletons_only keeps one code per flow per hyperarc") {
  Scenario sc = singletons_only(build_canonical(CanonicalKind::cross));
  for (const auto& c : sc.codebook.codes) CHECK(c.flows.size() == 1);
  CHECK(count_codes_at(sc, "I") == 4);
}
