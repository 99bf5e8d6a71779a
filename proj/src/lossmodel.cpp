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
#include "nclab/lossmodel.hpp"

#include <algorithm>
#include <stdexcept>

namespace nclab {

LossMatrix LossMatrix::uniform(const Topology& topo, double rho) {
  LossMatrix m;
  for (const auto& l : topo.links()) m.set(l.from, l.to, rho);
  return m;
}

void LossMatrix::set(NodeId from, NodeId to, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::out_of_range("loss probability outside [0,1]");
  rho_[{from, to}] = rho;
}

double LossMatrix::get(NodeId from, NodeId to) const {
  auto it = rho_.find({from, to});
  return it == rho_.end() ? 1.0 : it->second;
}

double direct_loss(const Scenario& sc, const LossMatrix& loss, int hyperarc, FlowId s) {
  const auto& h = sc.hyperarc(hyperarc);
  NodeId nh = sc.flows.at(s).next_hop(h.transmitter);
  if (nh < 0 || !std::binary_search(h.receivers.begin(), h.receivers.end(), nh))
    throw std::invalid_argument("flow " + sc.flows[s].name + " does not cross hyperarc");
  return loss.get(h.transmitter, nh);
}

double antidote_loss(const Scenario& sc, const LossMatrix& loss, int code, FlowId s, FlowId sp) {
  if (!sc.codebook.H(code, s) || !sc.codebook.H(code, sp))
    throw std::invalid_argument("flow not in code");
  if (s == sp) return 0.0;
  NodeId tx = sc.hyperarc(sc.code(code).hyperarc).transmitter;
  NodeId nh = sc.flows[s].next_hop(tx);
  NodeId origin = sc.flows[sp].prev_hop(tx);
  if (nh == origin) return 0.0;
  return loss.get(origin, nh);
}

LossPattern parse_loss_pattern(const std::string& s) {
  if (s == "overhearing_only") return LossPattern::overhearing_only;
  if (s == "direct_only") return LossPattern::direct_only;
  if (s == "both") return LossPattern::both;
  if (s == "all_links") return LossPattern::all_links;
  throw std::invalid_argument("unknown loss pattern '" + s + "'");
}

std::string to_string(LossPattern p) {
  switch (p) {
    case LossPattern::overhearing_only: return "overhearing_only";
    case LossPattern::direct_only: return "direct_only";
    case LossPattern::both: return "both";
    case LossPattern::all_links: return "all_links";
  }
  return "?";
}

PatternLinks pattern_links(const Scenario& sc) {
  if (sc.flows.size() < 2) throw std::invalid_argument("loss pattern needs two flows");
  const Flow& ref = sc.flows[0];
  for (std::size_t i = 1; i + 1 < ref.path.size(); ++i) {
    NodeId relay = ref.path[i];
    NodeId origin = ref.prev_hop(relay);
    for (std::size_t t = 1; t < sc.flows.size(); ++t) {
      NodeId nh = sc.flows[t].next_hop(relay);
      if (nh < 0 || nh == origin || !sc.topo.has_link(origin, nh)) continue;
      return {{relay, nh}, {origin, nh}};
    }
  }
  throw std::invalid_argument("no overhearing pair for loss pattern");
}

LossMatrix pattern_loss(const Scenario& sc, LossPattern pattern, double rate) {
  if (pattern == LossPattern::all_links) return LossMatrix::uniform(sc.topo, rate);
  LossMatrix m = LossMatrix::uniform(sc.topo, 0.0);
  PatternLinks pl = pattern_links(sc);
  if (pattern != LossPattern::overhearing_only) m.set(pl.direct.first, pl.direct.second, rate);
  if (pattern != LossPattern::direct_only)
    m.set(pl.overhearing.first, pl.overhearing.second, rate);
  return m;
}

double LossEstimator::add_sample(double sample) {
  samples_.push_front(std::clamp(sample, 0.0, 1.0));
  if (samples_.size() > kWindow) samples_.pop_back();
  return estimate();
}

double LossEstimator::estimate() const {
  double num = 0.0, den = 0.0;
  for (std::size_t n = 0; n < samples_.size(); ++n) {
    double w = 1.0 / static_cast<double>(n + 1);
    num += w * samples_[n];
    den += w;
  }
  return den > 0 ? num / den : 0.0;
}

double generation_loss_sample(int received, int G) {
  if (G <= 0) throw std::invalid_argument("generation size must be positive");
  if (received >= G) return 0.0;
  return static_cast<double>(G - std::max(received, 0)) / G;
}

double record_generation(LossEstimator& est, int sent_total, int received, int G) {
  if (received < 0 || received > sent_total)
    throw std::invalid_argument("received count outside [0, sent]");
  return est.add_sample(generation_loss_sample(received, G));
}

bool draw(Rng& rng, const LossMatrix& loss, NodeId from, NodeId to) {
  double rho = loss.get(from, to);
  if (rho <= 0.0) return true;
  if (rho >= 1.0) return false;
  return uniform01(rng) >= rho;
}

}  // namespace nclab
