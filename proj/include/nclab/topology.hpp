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

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nclab {

using NodeId = int;
using FlowId = int;

struct TopologyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Link {
  NodeId from = -1;
  NodeId to = -1;
  double capacity = 1.0;
};

// Node names plus directed links. A link (a,b) means b can hear a.
class Topology {
 public:
  NodeId add_node(const std::string& name);
  void add_link(NodeId from, NodeId to, double capacity = 1.0);
  void add_link(const std::string& from, const std::string& to, double capacity = 1.0);

  NodeId node_id(const std::string& name) const;  // throws if unknown
  bool has_node(const std::string& name) const { return index_.count(name) != 0; }
  const std::string& node_name(NodeId n) const { return names_.at(n); }
  int num_nodes() const { return static_cast<int>(names_.size()); }

  bool has_link(NodeId from, NodeId to) const;
  double link_capacity(NodeId from, NodeId to) const;
  const std::vector<Link>& links() const { return links_; }

 private:
  std::vector<std::string> names_;
  std::map<std::string, NodeId> index_;
  std::vector<Link> links_;
  std::map<std::pair<NodeId, NodeId>, std::size_t> link_index_;
};

struct Flow {
  FlowId id = 0;
  std::string name;
  NodeId source = -1;
  NodeId destination = -1;
  std::vector<NodeId> path;
  int generation_size = 15;

  // -1 when n is not on the path or is the destination
  NodeId next_hop(NodeId n) const;
  // -1 when n is not on the path or is the source
  NodeId prev_hop(NodeId n) const;
  bool visits(NodeId n) const;
};

struct Hyperarc {
  int id = 0;
  NodeId transmitter = -1;
  std::vector<NodeId> receivers;  // sorted
  double capacity = 1.0;
};

// One (h,k) pair. Codes are numbered globally across hyperarcs.
struct Code {
  int id = 0;
  int hyperarc = 0;
  std::vector<FlowId> flows;  // sorted
};

struct CodeBook {
  std::vector<Code> codes;
  std::vector<std::vector<int>> by_hyperarc;

  // H_{h,k}^s
  bool H(int code, FlowId s) const;
};

struct ConflictStructure {
  std::vector<std::vector<int>> cliques;  // hyperarc ids
  double gamma = 1.0;
};

enum class Interference { single_clique, all_in_range };

struct Scenario {
  Topology topo;
  std::vector<Flow> flows;
  std::vector<Hyperarc> hyperarcs;
  CodeBook codebook;
  ConflictStructure conflicts;
  std::string kind = "explicit";

  const Hyperarc& hyperarc(int h) const { return hyperarcs.at(h); }
  const Code& code(int k) const { return codebook.codes.at(k); }
};

enum class CanonicalKind { x, cross, wheel, multihop_chain };

struct CanonicalParams {
  int wheel_flows = 2;
  double capacity = 1.0;
  int generation_size = 15;
  int max_code_size = 4;
  double gamma = 1.0;
};

CanonicalKind parse_canonical_kind(const std::string& s);

Scenario build_canonical(CanonicalKind kind, const CanonicalParams& params = {});

// Adds flows by node path. Validates path shape and link existence.
Flow make_flow(const Topology& topo, FlowId id, const std::string& name,
               const std::vector<std::string>& path, int generation_size);

// One broadcast hyperarc per forwarding node, covering the next hops of all
// flows that leave that node.
std::vector<Hyperarc> build_hyperarcs(const Topology& topo, const std::vector<Flow>& flows);

// Flows whose next hop at h(i) lies in h(J).
std::vector<FlowId> flows_crossing(const Hyperarc& h, const std::vector<Flow>& flows);

// Can next hop of s recover the packet of s' sent to h(i)?
bool antidote_available(const Topology& topo, const Hyperarc& h, const Flow& s, const Flow& sp);

std::vector<std::vector<FlowId>> enumerate_codes(const Topology& topo, const Hyperarc& h,
                                                 const std::vector<Flow>& flows,
                                                 int max_code_size = 4);

CodeBook build_codebook(const Topology& topo, const std::vector<Hyperarc>& arcs,
                        const std::vector<Flow>& flows, int max_code_size = 4);

bool hyperarcs_interfere(const Topology& topo, const Hyperarc& a, const Hyperarc& b);

ConflictStructure conflict_cliques(const Scenario& sc, Interference mode, double gamma = 1.0);

// Fills hyperarcs, codebook and conflicts from topo and flows.
void finalize_scenario(Scenario& sc, Interference mode, double gamma = 1.0,
                       int max_code_size = 4);

// Same scenario with every multi-flow code removed.
Scenario singletons_only(const Scenario& sc);

}  // namespace nclab
