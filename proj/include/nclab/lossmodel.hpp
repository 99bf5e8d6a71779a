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
#include <deque>
#include <map>
#include <random>
#include <string>
#include <utility>

#include "nclab/topology.hpp"

namespace nclab {

using Rng = std::mt19937_64;

// Uniform double in [0,1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Directed per-link loss probabilities. Links not present are never received.
class LossMatrix {
 public:
  LossMatrix() = default;
  // Every link of topo present with loss rho.
  static LossMatrix uniform(const Topology& topo, double rho = 0.0);

  void set(NodeId from, NodeId to, double rho);
  double get(NodeId from, NodeId to) const;
  bool contains(NodeId from, NodeId to) const { return rho_.count({from, to}) != 0; }
  const std::map<std::pair<NodeId, NodeId>, double>& entries() const { return rho_; }

 private:
  std::map<std::pair<NodeId, NodeId>, double> rho_;
};

// rho_h^s: loss from h(i) to the next hop of s.
double direct_loss(const Scenario& sc, const LossMatrix& loss, int hyperarc, FlowId s);

// rho_{h,k}^{s,s'}: probability that the next hop of s lacks the antidote of s'.
double antidote_loss(const Scenario& sc, const LossMatrix& loss, int code, FlowId s, FlowId sp);

enum class LossPattern { overhearing_only, direct_only, both, all_links };

LossPattern parse_loss_pattern(const std::string& s);
std::string to_string(LossPattern p);

struct PatternLinks {
  std::pair<NodeId, NodeId> direct;
  std::pair<NodeId, NodeId> overhearing;
};

// The reference direct/overhearing pair used by the named patterns. Flow 0 is
// the reference partner; the target is the first other flow at the same relay
// whose next hop overhears flow 0's previous hop. For X and cross this is
// direct I->B2 and overhearing A1->B2.
PatternLinks pattern_links(const Scenario& sc);

LossMatrix pattern_loss(const Scenario& sc, LossPattern pattern, double rate);

// Weighted window of per-generation loss samples. The n-th newest sample gets
// weight 1/n, normalised by the partial harmonic sum.
class LossEstimator {
 public:
  static constexpr std::size_t kWindow = 10;

  double add_sample(double sample);
  double estimate() const;  // 0 when empty
  std::size_t size() const { return samples_.size(); }
  const std::deque<double>& samples() const { return samples_; }  // newest first

 private:
  std::deque<double> samples_;
};

double generation_loss_sample(int received, int G);

double record_generation(LossEstimator& est, int sent_total, int received, int G);

// true when the transmission on (from,to) is delivered.
bool draw(Rng& rng, const LossMatrix& loss, NodeId from, NodeId to);

}  // namespace nclab
