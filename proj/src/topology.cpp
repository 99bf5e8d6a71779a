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
#include "nclab/topology.hpp"

#include <algorithm>
#include <functional>
#include <set>

namespace nclab {

NodeId Topology::add_node(const std::string& name) {
  auto it = index_.find(name);
  if (it != index_.end()) return it->second;
  NodeId id = static_cast<NodeId>(names_.size());
  names_.push_back(name);
  index_[name] = id;
  return id;
}

void Topology::add_link(NodeId from, NodeId to, double capacity) {
  if (from < 0 || to < 0 || from >= num_nodes() || to >= num_nodes())
    throw TopologyError("link references unknown node");
  if (from == to) throw TopologyError("self link on " + names_[from]);
  if (capacity <= 0) throw TopologyError("link capacity must be positive");
  auto key = std::make_pair(from, to);
  auto it = link_index_.find(key);
  if (it != link_index_.end()) {
    links_[it->second].capacity = capacity;
    return;
  }
  link_index_[key] = links_.size();
  links_.push_back({from, to, capacity});
}

void Topology::add_link(const std::string& from, const std::string& to, double capacity) {
  add_link(node_id(from), node_id(to), capacity);
}

NodeId Topology::node_id(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw TopologyError("unknown node '" + name + "'");
  return it->second;
}

bool Topology::has_link(NodeId from, NodeId to) const {
  return link_index_.count({from, to}) != 0;
}

double Topology::link_capacity(NodeId from, NodeId to) const {
  auto it = link_index_.find({from, to});
  if (it == link_index_.end()) return 0.0;
  return links_[it->second].capacity;
}

NodeId Flow::next_hop(NodeId n) const {
  for (std::size_t i = 0; i + 1 < path.size(); ++i)
    if (path[i] == n) return path[i + 1];
  return -1;
}

NodeId Flow::prev_hop(NodeId n) const {
  for (std::size_t i = 1; i < path.size(); ++i)
    if (path[i] == n) return path[i - 1];
  return -1;
}

bool Flow::visits(NodeId n) const {
  return std::find(path.begin(), path.end(), n) != path.end();
}

bool CodeBook::H(int code, FlowId s) const {
  const auto& f = codes.at(code).flows;
  return std::binary_search(f.begin(), f.end(), s);
}

CanonicalKind parse_canonical_kind(const std::string& s) {
  if (s == "x") return CanonicalKind::x;
  if (s == "cross") return CanonicalKind::cross;
  if (s == "wheel") return CanonicalKind::wheel;
  if (s == "multihop_chain") return CanonicalKind::multihop_chain;
  throw TopologyError("unknown topology kind '" + s + "'");
}

Flow make_flow(const Topology& topo, FlowId id, const std::string& name,
               const std::vector<std::string>& path, int generation_size) {
  if (path.size() < 2) throw TopologyError("flow " + name + ": path needs at least 2 nodes");
  if (generation_size < 1) throw TopologyError("flow " + name + ": generation size must be >= 1");
  Flow f;
  f.id = id;
  f.name = name;
  f.generation_size = generation_size;
  std::set<NodeId> seen;
  for (const auto& n : path) {
    NodeId v = topo.node_id(n);
    if (!seen.insert(v).second) throw TopologyError("flow " + name + ": repeated node " + n);
    f.path.push_back(v);
  }
  for (std::size_t i = 0; i + 1 < f.path.size(); ++i)
    if (!topo.has_link(f.path[i], f.path[i + 1]))
      throw TopologyError("flow " + name + ": no link " + path[i] + "->" + path[i + 1]);
  f.source = f.path.front();
  f.destination = f.path.back();
  return f;
}

std::vector<Hyperarc> build_hyperarcs(const Topology& topo, const std::vector<Flow>& flows) {
  std::map<NodeId, std::set<NodeId>> out;
  for (const auto& f : flows)
    for (std::size_t i = 0; i + 1 < f.path.size(); ++i) out[f.path[i]].insert(f.path[i + 1]);
  std::vector<Hyperarc> arcs;
  for (const auto& [tx, rx] : out) {
    Hyperarc h;
    h.id = static_cast<int>(arcs.size());
    h.transmitter = tx;
    h.receivers.assign(rx.begin(), rx.end());
    h.capacity = 1e300;
    for (NodeId j : rx) h.capacity = std::min(h.capacity, topo.link_capacity(tx, j));
    arcs.push_back(h);
  }
  return arcs;
}

std::vector<FlowId> flows_crossing(const Hyperarc& h, const std::vector<Flow>& flows) {
  std::vector<FlowId> out;
  for (const auto& f : flows) {
    NodeId nh = f.next_hop(h.transmitter);
    if (nh >= 0 && std::binary_search(h.receivers.begin(), h.receivers.end(), nh))
      out.push_back(f.id);
  }
  return out;
}

bool antidote_available(const Topology& topo, const Hyperarc& h, const Flow& s, const Flow& sp) {
  NodeId nh = s.next_hop(h.transmitter);
  NodeId origin = sp.prev_hop(h.transmitter);
  if (nh < 0 || origin < 0) return false;
  return nh == origin || topo.has_link(origin, nh);
}

std::vector<std::vector<FlowId>> enumerate_codes(const Topology& topo, const Hyperarc& h,
                                                 const std::vector<Flow>& flows,
                                                 int max_code_size) {
  std::vector<FlowId> cand = flows_crossing(h, flows);
  std::vector<std::vector<FlowId>> codes;
  for (FlowId s : cand) codes.push_back({s});
  const int n = static_cast<int>(cand.size());
  if (n > 20) throw TopologyError("too many flows on one hyperarc for code enumeration");
  std::vector<std::vector<FlowId>> multi;
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    int size = __builtin_popcount(mask);
    if (size < 2 || size > max_code_size) continue;
    std::vector<FlowId> k;
    for (int i = 0; i < n; ++i)
      if (mask & (1u << i)) k.push_back(cand[i]);
    bool ok = true;
    std::set<NodeId> hops;
    for (FlowId s : k)
      if (!hops.insert(flows[s].next_hop(h.transmitter)).second) ok = false;
    for (std::size_t a = 0; ok && a < k.size(); ++a)
      for (std::size_t b = 0; ok && b < k.size(); ++b)
        if (a != b && !antidote_available(topo, h, flows[k[a]], flows[k[b]])) ok = false;
    if (ok) multi.push_back(k);
  }
  std::sort(multi.begin(), multi.end(), [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  });
  codes.insert(codes.end(), multi.begin(), multi.end());
  return codes;
}

CodeBook build_codebook(const Topology& topo, const std::vector<Hyperarc>& arcs,
                        const std::vector<Flow>& flows, int max_code_size) {
  CodeBook cb;
  cb.by_hyperarc.resize(arcs.size());
  for (const auto& h : arcs) {
    for (auto& k : enumerate_codes(topo, h, flows, max_code_size)) {
      Code c;
      c.id = static_cast<int>(cb.codes.size());
      c.hyperarc = h.id;
      c.flows = std::move(k);
      cb.by_hyperarc[h.id].push_back(c.id);
      cb.codes.push_back(std::move(c));
    }
  }
  return cb;
}

bool hyperarcs_interfere(const Topology& topo, const Hyperarc& a, const Hyperarc& b) {
  std::set<NodeId> na(a.receivers.begin(), a.receivers.end());
  na.insert(a.transmitter);
  if (na.count(b.transmitter)) return true;
  for (NodeId r : b.receivers)
    if (na.count(r)) return true;
  for (NodeId r : b.receivers)
    if (topo.has_link(a.transmitter, r)) return true;
  for (NodeId r : a.receivers)
    if (topo.has_link(b.transmitter, r)) return true;
  return false;
}

namespace {

// Bron-Kerbosch with pivoting.
void bron_kerbosch(const std::vector<std::vector<bool>>& adj, std::vector<int>& r,
                   std::vector<int> p, std::vector<int> x,
                   std::vector<std::vector<int>>& out) {
  if (p.empty() && x.empty()) {
    auto c = r;
    std::sort(c.begin(), c.end());
    out.push_back(c);
    return;
  }
  int pivot = !p.empty() ? p.front() : x.front();
  std::size_t best = 0;
  for (int u : p) {
    std::size_t cnt = 0;
    for (int v : p) cnt += adj[u][v];
    if (cnt > best) best = cnt, pivot = u;
  }
  std::vector<int> cand;
  for (int v : p)
    if (!adj[pivot][v]) cand.push_back(v);
  for (int v : cand) {
    std::vector<int> np, nx;
    for (int w : p)
      if (adj[v][w]) np.push_back(w);
    for (int w : x)
      if (adj[v][w]) nx.push_back(w);
    r.push_back(v);
    bron_kerbosch(adj, r, np, nx, out);
    r.pop_back();
    p.erase(std::find(p.begin(), p.end(), v));
    x.push_back(v);
  }
}

}  // namespace

ConflictStructure conflict_cliques(const Scenario& sc, Interference mode, double gamma) {
  if (!(gamma > 0 && gamma <= 1)) throw TopologyError("gamma must lie in (0,1]");
  ConflictStructure cs;
  cs.gamma = gamma;
  const int n = static_cast<int>(sc.hyperarcs.size());
  if (n == 0) return cs;
  if (mode == Interference::single_clique) {
    std::vector<int> all(n);
    for (int i = 0; i < n; ++i) all[i] = i;
    cs.cliques.push_back(all);
    return cs;
  }
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      adj[i][j] = adj[j][i] = hyperarcs_interfere(sc.topo, sc.hyperarcs[i], sc.hyperarcs[j]);
  std::vector<int> r, p(n);
  for (int i = 0; i < n; ++i) p[i] = i;
  bron_kerbosch(adj, r, p, {}, cs.cliques);
  std::sort(cs.cliques.begin(), cs.cliques.end());
  return cs;
}

void finalize_scenario(Scenario& sc, Interference mode, double gamma, int max_code_size) {
  for (std::size_t i = 0; i < sc.flows.size(); ++i)
    if (sc.flows[i].id != static_cast<FlowId>(i)) throw TopologyError("flow ids must be 0..n-1");
  sc.hyperarcs = build_hyperarcs(sc.topo, sc.flows);
  sc.codebook = build_codebook(sc.topo, sc.hyperarcs, sc.flows, max_code_size);
  sc.conflicts = conflict_cliques(sc, mode, gamma);
}

Scenario singletons_only(const Scenario& sc) {
  Scenario out = sc;
  CodeBook cb;
  cb.by_hyperarc.resize(sc.hyperarcs.size());
  for (const auto& c : sc.codebook.codes) {
    if (c.flows.size() != 1) continue;
    Code k = c;
    k.id = static_cast<int>(cb.codes.size());
    cb.by_hyperarc[k.hyperarc].push_back(k.id);
    cb.codes.push_back(k);
  }
  out.codebook = std::move(cb);
  return out;
}

namespace {

Scenario build_x(const CanonicalParams& p) {
  Scenario sc;
  sc.kind = "x";
  auto& t = sc.topo;
  for (auto n : {"A1", "B1", "I", "A2", "B2"}) t.add_node(n);
  for (auto [a, b] : {std::pair{"A1", "I"}, {"B1", "I"}, {"I", "A2"}, {"I", "B2"},
                      {"A1", "B2"}, {"B1", "A2"}})
    t.add_link(a, b, p.capacity);
  sc.flows.push_back(make_flow(t, 0, "S1", {"A1", "I", "A2"}, p.generation_size));
  sc.flows.push_back(make_flow(t, 1, "S2", {"B1", "I", "B2"}, p.generation_size));
  finalize_scenario(sc, Interference::single_clique, p.gamma, p.max_code_size);
  return sc;
}

// End nodes sit on a circle in the order A1 B1 A2 B2; neighbours on the
// circle hear each other, opposite nodes do not.
Scenario build_cross(const CanonicalParams& p) {
  Scenario sc;
  sc.kind = "cross";
  auto& t = sc.topo;
  for (auto n : {"A1", "B1", "I", "A2", "B2"}) t.add_node(n);
  for (auto n : {"A1", "B1", "A2", "B2"}) {
    t.add_link(n, "I", p.capacity);
    t.add_link("I", n, p.capacity);
  }
  const char* ring[] = {"A1", "B1", "A2", "B2"};
  for (int i = 0; i < 4; ++i) {
    t.add_link(ring[i], ring[(i + 1) % 4], p.capacity);
    t.add_link(ring[(i + 1) % 4], ring[i], p.capacity);
  }
  sc.flows.push_back(make_flow(t, 0, "S1", {"A1", "I", "A2"}, p.generation_size));
  sc.flows.push_back(make_flow(t, 1, "S2", {"A2", "I", "A1"}, p.generation_size));
  sc.flows.push_back(make_flow(t, 2, "S3", {"B1", "I", "B2"}, p.generation_size));
  sc.flows.push_back(make_flow(t, 3, "S4", {"B2", "I", "B1"}, p.generation_size));
  finalize_scenario(sc, Interference::single_clique, p.gamma, p.max_code_size);
  return sc;
}

// Source S_j overhears towards every receiver R_i except its own.
Scenario build_wheel(const CanonicalParams& p) {
  if (p.wheel_flows < 2) throw TopologyError("wheel needs at least 2 flows");
  const int n = p.wheel_flows;
  Scenario sc;
  sc.kind = "wheel";
  auto& t = sc.topo;
  for (int i = 1; i <= n; ++i) t.add_node("S" + std::to_string(i));
  t.add_node("I");
  for (int i = 1; i <= n; ++i) t.add_node("R" + std::to_string(i));
  for (int i = 1; i <= n; ++i) {
    t.add_link("S" + std::to_string(i), "I", p.capacity);
    t.add_link("I", "R" + std::to_string(i), p.capacity);
  }
  for (int j = 1; j <= n; ++j)
    for (int i = 1; i <= n; ++i)
      if (i != j) t.add_link("S" + std::to_string(j), "R" + std::to_string(i), p.capacity);
  for (int i = 1; i <= n; ++i) {
    auto si = std::to_string(i);
    sc.flows.push_back(make_flow(t, i - 1, "S" + si, {"S" + si, "I", "R" + si}, p.generation_size));
  }
  finalize_scenario(sc, Interference::single_clique, p.gamma, p.max_code_size);
  return sc;
}

// Two X neighbourhoods in series: relay I feeds A2,B2, which feed relay J.
Scenario build_chain(const CanonicalParams& p) {
  Scenario sc;
  sc.kind = "multihop_chain";
  auto& t = sc.topo;
  for (auto n : {"A1", "B1", "I", "A2", "B2", "J", "A3", "B3"}) t.add_node(n);
  for (auto [a, b] : {std::pair{"A1", "I"}, {"B1", "I"}, {"I", "A2"}, {"I", "B2"},
                      {"A1", "B2"}, {"B1", "A2"}, {"A2", "J"}, {"B2", "J"},
                      {"J", "A3"}, {"J", "B3"}, {"A2", "B3"}, {"B2", "A3"}})
    t.add_link(a, b, p.capacity);
  sc.flows.push_back(make_flow(t, 0, "S1", {"A1", "I", "A2", "J", "A3"}, p.generation_size));
  sc.flows.push_back(make_flow(t, 1, "S2", {"B1", "I", "B2", "J", "B3"}, p.generation_size));
  finalize_scenario(sc, Interference::all_in_range, p.gamma, p.max_code_size);
  return sc;
}

}  // namespace

Scenario build_canonical(CanonicalKind kind, const CanonicalParams& params) {
  switch (kind) {
    case CanonicalKind::x: return build_x(params);
    case CanonicalKind::cross: return build_cross(params);
    case CanonicalKind::wheel: return build_wheel(params);
    case CanonicalKind::multihop_chain: return build_chain(params);
  }
  throw TopologyError("unknown topology kind");
}

}  // namespace nclab
