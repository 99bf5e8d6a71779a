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
#include "nclab/nodesim.hpp"

#include "nclab/gf256.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace nclab {

Scheme parse_scheme(const std::string& s) {
  if (s == "i2nc_state") return Scheme::i2nc_state;
  if (s == "i2nc_stateless") return Scheme::i2nc_stateless;
  if (s == "cope") return Scheme::cope;
  if (s == "nonc") return Scheme::nonc;
  throw std::invalid_argument("unknown scheme '" + s + "'");
}

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::i2nc_state: return "i2nc_state";
    case Scheme::i2nc_stateless: return "i2nc_stateless";
    case Scheme::cope: return "cope";
    case Scheme::nonc: return "nonc";
  }
  return "?";
}

Traffic parse_traffic(const std::string& s) {
  if (s == "cbr") return Traffic::cbr;
  if (s == "window") return Traffic::window;
  throw std::invalid_argument("unknown traffic '" + s + "'");
}

std::string to_string(Traffic t) { return t == Traffic::cbr ? "cbr" : "window"; }

SchedulerKind parse_scheduler(const std::string& s) {
  if (s == "idealized_backpressure") return SchedulerKind::idealized_backpressure;
  if (s == "random_access") return SchedulerKind::random_access;
  throw std::invalid_argument("unknown scheduler '" + s + "'");
}

std::string to_string(SchedulerKind k) {
  return k == SchedulerKind::idealized_backpressure ? "idealized_backpressure" : "random_access";
}

void SimConfig::validate() const {
  auto unit = [](double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string(what) + " must lie in [0,1]");
  };
  unit(cope_threshold, "cope_threshold");
  unit(decodability_threshold, "decodability_threshold");
  if (!(duration >= 0.0)) throw std::invalid_argument("duration must be >= 0");
  if (seeds < 1) throw std::invalid_argument("seeds must be >= 1");
  if (!(cbr_interval > 0.0)) throw std::invalid_argument("cbr_interval must be > 0");
  if (!(slot > 0.0)) throw std::invalid_argument("slot must be > 0");
  if (generation_size < 0 || generation_size > 255)
    throw std::invalid_argument("generation_size must be in [0,255]");
  if (queue_capacity < 1) throw std::invalid_argument("queue_capacity must be >= 1");
  if (payload_bytes < 1) throw std::invalid_argument("payload_bytes must be >= 1");
  if (!(report_slots >= 0.0)) throw std::invalid_argument("report_slots must be >= 0");
  if (window_init < 1 || window_max < window_init || window_max > 255)
    throw std::invalid_argument("window bounds must satisfy 1 <= init <= max <= 255");
  if (window_rto < 1) throw std::invalid_argument("window_rto must be >= 1");
  if (!(warmup >= 0.0)) throw std::invalid_argument("warmup must be >= 0");
}

double SimResult::total() const { return std::accumulate(throughput.begin(), throughput.end(), 0.0); }

int choose_label(const std::vector<double>& Q, Rng& rng) {
  if (Q.empty()) throw std::invalid_argument("no labeling option");
  double best = *std::min_element(Q.begin(), Q.end());
  std::vector<int> ties;
  for (std::size_t i = 0; i < Q.size(); ++i)
    if (Q[i] == best) ties.push_back(static_cast<int>(i));
  if (ties.size() == 1) return ties[0];
  return ties[rng() % ties.size()];
}

double decodability(const std::vector<double>& antidote_probs) {
  double p = 1.0;
  for (double v : antidote_probs) p *= v;
  return p;
}

DropDecision drop_policy(std::size_t queue_len, std::size_t capacity,
                         const std::map<FlowId, double>& Qi, FlowId arriving) {
  DropDecision d;
  if (queue_len < capacity) return d;
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& [s, v] : Qi) top = std::max(top, v);
  int at_top = 0;
  FlowId victim = -1;
  for (const auto& [s, v] : Qi)
    if (v == top) {
      ++at_top;
      victim = s;
    }
  auto it = Qi.find(arriving);
  if (at_top != 1 || (it != Qi.end() && it->second == top) || victim < 0) {
    d.action = DropAction::drop_arriving;
    d.flow = arriving;
  } else {
    d.action = DropAction::drop_queued;
    d.flow = victim;
  }
  return d;
}

WindowSource::WindowSource(int init, int max) : window_(init), max_(max) {
  if (init < 1 || max < init) throw std::invalid_argument("bad window bounds");
}

WindowSource::Injection WindowSource::inject() {
  if (open_ == 0 || gens_[open_].closed ||
      static_cast<int>(gens_[open_].originals.size()) >= gens_[open_].G) {
    if (open_ != 0) gens_[open_].closed = true;
    open_ = next_gen_++;
    gens_[open_].G = window_;
  }
  Gen& g = gens_[open_];
  uint64_t orig;
  if (!resend_.empty()) {
    orig = resend_.front();
    resend_.pop_front();
  } else {
    orig = next_original_++;
  }
  g.originals.push_back(orig);
  ++outstanding_;
  Injection in{open_, static_cast<int>(g.originals.size()) - 1, g.G, orig};
  if (static_cast<int>(g.originals.size()) >= g.G) g.closed = true;
  return in;
}

bool WindowSource::is_delivered(uint64_t original) const {
  return original < done_.size() && done_[original];
}

int WindowSource::on_ack(uint64_t generation, int eta) {
  auto it = gens_.find(generation);
  if (it == gens_.end()) return 0;
  Gen& g = it->second;
  int upto = std::min<int>(eta, static_cast<int>(g.originals.size()));
  int fresh = 0;
  for (int i = g.acked; i < upto; ++i) {
    uint64_t o = g.originals[i];
    if (done_.size() <= o) done_.resize(o + 1, 0);
    if (done_[o]) continue;
    done_[o] = 1;
    ++fresh;
  }
  g.acked = std::max(g.acked, upto);
  delivered_ += fresh;
  outstanding_ -= fresh;
  credit_ += fresh;
  while (credit_ >= window_) {
    credit_ -= window_;
    window_ = std::min(max_, window_ + 1);
    if (window_ == max_) credit_ = 0;
  }
  if (g.acked >= static_cast<int>(g.originals.size()) && g.closed) gens_.erase(it);
  return fresh;
}

void WindowSource::on_timeout() {
  window_ = std::max(1, window_ / 2);
  credit_ = 0;
  for (auto& [id, g] : gens_) {
    for (std::size_t i = g.acked; i < g.originals.size(); ++i) {
      uint64_t o = g.originals[i];
      if (is_delivered(o)) continue;
      resend_.push_back(o);
      --outstanding_;
    }
    g.closed = true;
  }
  gens_.clear();
  open_ = 0;
}

namespace {

using Key = uint64_t;
Key block_key(FlowId f, uint64_t g) { return (static_cast<uint64_t>(f) << 48) | g; }

constexpr uint64_t kKeepGenerations = 64;
constexpr std::size_t kMaxPending = 64;
constexpr double kMaxRho = 0.95;  // keeps 1/(1-rho) finite while estimates settle
constexpr double kAlphaGain = 0.05;  // EWMA gain of the per-option label shares

struct Pkt {
  FlowId flow = -1;
  uint64_t gen = 0;
  uint32_t id = 0;
  int G = 0;
  Bytes coeffs;
  int code = -1;
  FlowId label = -1;
  NodeId from = -1;  // upstream transmitter, -1 when created here
  NodeId hop = -1;   // next hop of the label flow, set on transmission
  long arrived = 0;
  bool parity = false;
  // a coded send of this packet went unconfirmed, so the next one goes alone
  bool alone = false;
  std::vector<std::pair<FlowId, double>> contrib;  // share of q(code, .) while queued
};

struct Block {
  RankTracker tr;
  long full_at = -1;
  std::unordered_map<uint32_t, long> ids;  // packets held verbatim
  int arrivals = 0;
  std::map<int, int> alloc;  // code -> G_{h,k}^s
  int metered = 0;
};

struct Retx {
  Pkt p;
  long due = 0;
};

struct Frame {
  NodeId from = -1;
  std::vector<Pkt> parts;
};

struct Node {
  std::deque<Pkt> queue;
  std::vector<Retx> retx;
  std::unordered_map<Key, Block> blocks;
  std::map<FlowId, uint64_t> newest;
  long last_report = -1;
  double latency = 1.0;
  uint32_t parity_seq = 0;
};

struct Check {
  long due = 0;
  NodeId u = -1;
  FlowId flow = -1;
  uint64_t gen = 0;
  NodeId v = -1;
};

struct Counter {
  uint64_t gen = 0;
  int G = 0;
  int sent = 0;
  int recv = 0;
};

struct Source {
  uint64_t gen = 1;
  int idx = 0;
  std::unique_ptr<WindowSource> win;
  long last_progress = 0;
};

struct CliqueState {
  std::vector<NodeId> nodes;
  double credit = 0.0;
  uint64_t last_gen = 0;
};

uint32_t link_key(NodeId u, NodeId v, FlowId s) {
  return (static_cast<uint32_t>(u) << 20) | (static_cast<uint32_t>(v) << 10) | static_cast<uint32_t>(s);
}

}  // namespace

struct Simulator::Impl {
  Scenario sc;
  LossMatrix loss;
  SimConfig cfg;
  Rng rng;
  long t = 0;
  int F = 0;
  Variant var = Variant::stateless;

  std::vector<Node> nodes;
  std::vector<int> arc_of;                   // node -> hyperarc, -1 if none
  std::vector<std::vector<NodeId>> out;      // node -> neighbours it reaches
  std::vector<std::vector<int>> node_cliques;
  std::vector<CliqueState> cliques;
  std::vector<std::vector<int>> flow_cliques;
  std::map<std::pair<int, std::vector<FlowId>>, int> code_of;
  std::vector<double> qv;  // code * F + flow
  std::vector<double> av;  // labeling shares alpha, same indexing
  std::vector<Source> src;
  std::vector<Check> checks;
  std::set<std::pair<NodeId, Key>> checking;
  std::unordered_map<uint32_t, LossEstimator> est;
  std::unordered_map<uint32_t, double> pinned;
  std::unordered_map<uint32_t, Counter> counters;
  SimResult res;

  Impl(const Scenario& s, const LossMatrix& l, const SimConfig& c, uint64_t seed)
      : sc(s), loss(l), cfg(c), rng(seed) {
    cfg.validate();
    F = static_cast<int>(sc.flows.size());
    var = cfg.scheme == Scheme::i2nc_stateless ? Variant::stateless : Variant::state;
    int N = sc.topo.num_nodes();
    nodes.resize(N);
    arc_of.assign(N, -1);
    out.resize(N);
    node_cliques.resize(N);
    for (const auto& h : sc.hyperarcs) arc_of[h.transmitter] = h.id;
    for (const auto& l2 : sc.topo.links()) out[l2.from].push_back(l2.to);
    for (auto& o : out) std::sort(o.begin(), o.end());
    for (std::size_t c2 = 0; c2 < sc.conflicts.cliques.size(); ++c2) {
      CliqueState cs;
      for (int h : sc.conflicts.cliques[c2]) {
        NodeId n = sc.hyperarc(h).transmitter;
        cs.nodes.push_back(n);
        node_cliques[n].push_back(static_cast<int>(c2));
      }
      cliques.push_back(cs);
    }
    flow_cliques.resize(F);
    for (const auto& f : sc.flows)
      for (std::size_t c2 = 0; c2 < cliques.size(); ++c2)
        for (NodeId n : cliques[c2].nodes)
          if (f.next_hop(n) >= 0) {
            flow_cliques[f.id].push_back(static_cast<int>(c2));
            break;
          }
    for (const auto& k : sc.codebook.codes) code_of[{k.hyperarc, k.flows}] = k.id;
    qv.assign(sc.codebook.codes.size() * F, 0.0);
    av.assign(qv.size(), 0.0);
    for (std::size_t i = 0; i < nodes.size(); ++i)
      for (FlowId s2 = 0; s2 < F; ++s2) {
        auto o = options(static_cast<NodeId>(i), s2);
        for (int k : o) av[static_cast<std::size_t>(k) * F + s2] = 1.0 / static_cast<double>(o.size());
      }
    src.resize(F);
    for (auto& s2 : src)
      if (cfg.traffic == Traffic::window)
        s2.win = std::make_unique<WindowSource>(cfg.window_init, cfg.window_max);
    res.throughput.assign(F, 0.0);
    res.delivered.assign(F, 0);
    res.injected.assign(F, 0);
    res.metered.assign(F, 0);
    res.node_broadcasts.assign(N, 0);
  }

  const Flow& flow(FlowId s) const { return sc.flows.at(s); }
  bool i2nc() const { return cfg.scheme == Scheme::i2nc_state || cfg.scheme == Scheme::i2nc_stateless; }
  bool arq() const { return cfg.scheme != Scheme::i2nc_stateless; }
  int G_of(FlowId s) const { return cfg.generation_size > 0 ? cfg.generation_size : flow(s).generation_size; }
  double& q(int code, FlowId s) { return qv[static_cast<std::size_t>(code) * F + s]; }

  double est_of(NodeId u, NodeId v, FlowId s) const {
    uint32_t k = link_key(u, v, s);
    auto p = pinned.find(k);
    if (p != pinned.end()) return p->second;
    auto e = est.find(k);
    return e == est.end() ? 0.0 : e->second.estimate();
  }
  double rho(NodeId u, NodeId v, FlowId s) const { return std::min(kMaxRho, est_of(u, v, s)); }

  double rho_direct(NodeId i, FlowId s) const { return rho(i, flow(s).next_hop(i), s); }

  // rho^{t,s}: the next hop of t misses the packet of s
  double rho_anti(NodeId i, FlowId t2, FlowId s) const {
    if (t2 == s) return 0.0;
    NodeId nt = flow(t2).next_hop(i), ps = flow(s).prev_hop(i);
    if (nt == ps) return 0.0;
    if (ps < 0 || !sc.topo.has_link(ps, nt)) return 1.0;
    return rho(ps, nt, s);
  }

  double Q_hks(NodeId i, int code, FlowId s) {
    const Code& k = sc.code(code);
    double v = q(code, s) / (1.0 - rho_direct(i, s));
    for (FlowId t2 : k.flows) {
      if (t2 == s) continue;
      double c = rho_anti(i, t2, s);
      if (var == Variant::stateless) c /= 1.0 - rho_direct(i, t2);
      v += q(code, t2) * c;
    }
    return v;
  }

  std::vector<int> options(NodeId i, FlowId s) const {
    std::vector<int> o;
    int h = arc_of[i];
    if (h < 0) return o;
    for (int k : sc.codebook.by_hyperarc[h]) {
      const Code& c = sc.code(k);
      if (!sc.codebook.H(k, s)) continue;
      if (!i2nc() && c.flows.size() > 1) continue;
      o.push_back(k);
    }
    return o;
  }

  // Q_i^s with alpha taken from recent labeling decisions.
  double Q_i(NodeId i, FlowId s) {
    double v = 0.0;
    for (int k : options(i, s)) v += av[static_cast<std::size_t>(k) * F + s] * Q_hks(i, k, s);
    return v;
  }

  Block& block(NodeId v, FlowId f, uint64_t gen, int G) {
    Node& n = nodes[v];
    Key key = block_key(f, gen);
    auto it = n.blocks.find(key);
    if (it != n.blocks.end()) return it->second;
    uint64_t& newest = n.newest[f];
    if (gen > newest) {
      newest = gen;
      for (auto b = n.blocks.begin(); b != n.blocks.end();) {
        FlowId bf = static_cast<FlowId>(b->first >> 48);
        uint64_t bg = b->first & ((uint64_t{1} << 48) - 1);
        if (bf == f && bg + kKeepGenerations < newest)
          b = n.blocks.erase(b);
        else
          ++b;
      }
    }
    Block& b = n.blocks[key];
    b.tr = RankTracker(G);
    return b;
  }

  Block* find_block(NodeId v, FlowId f, uint64_t gen) {
    auto& bl = nodes[v].blocks;
    auto it = bl.find(block_key(f, gen));
    return it == bl.end() ? nullptr : &it->second;
  }

  // Label, drop if needed, update q, count towards the generation.
  bool enqueue(NodeId i, Pkt p, bool arrival, bool front = false) {
    Node& n = nodes[i];
    if (p.label < 0) p.label = p.flow;
    if (p.code < 0) {
      auto opts = options(i, p.label);
      if (opts.empty()) return false;
      std::vector<double> Q;
      for (int k : opts) Q.push_back(Q_hks(i, k, p.label));
      p.code = opts[choose_label(Q, rng)];
      for (int k : opts) {
        double& a = av[static_cast<std::size_t>(k) * F + p.label];
        a = (1.0 - kAlphaGain) * a + (k == p.code ? kAlphaGain : 0.0);
      }
    }
    if (static_cast<int>(n.queue.size()) >= cfg.queue_capacity) {
      std::map<FlowId, double> Qi;
      for (const auto& e : n.queue) Qi.emplace(e.label, 0.0);
      Qi.emplace(p.label, 0.0);
      for (auto& [s, v] : Qi) v = Q_i(i, s);
      DropDecision d = drop_policy(n.queue.size(), cfg.queue_capacity, Qi, p.label);
      ++res.drops;
      if (d.action == DropAction::drop_arriving) return false;
      for (auto it = n.queue.rbegin(); it != n.queue.rend(); ++it)
        if (it->label == d.flow) {
          unqueue(*it);
          n.queue.erase(std::next(it).base());
          break;
        }
    }
    // q(k,.) is the loss-weighted backlog: inflow per the queue update,
    // removed again when the packet leaves
    const Code& k = sc.code(p.code);
    p.contrib.clear();
    p.contrib.push_back({p.label, 1.0 / (1.0 - rho_direct(i, p.label))});
    for (FlowId t2 : k.flows) {
      if (t2 == p.label) continue;
      double c = rho_anti(i, t2, p.label);
      if (var == Variant::stateless) c /= 1.0 - rho_direct(i, t2);
      if (c > 0.0) p.contrib.push_back({t2, c});
    }
    for (const auto& [f2, c] : p.contrib) q(p.code, f2) += c;
    p.arrived = t;
    FlowId f = p.flow;
    uint64_t g = p.gen;
    int code = p.code;
    if (front)
      n.queue.push_front(std::move(p));
    else
      n.queue.push_back(std::move(p));
    if (arrival) {
      Block* b = find_block(i, f, g);
      if (b) {
        b->alloc[code]++;
        if (++b->arrivals == b->tr.G() && i2nc()) make_parities(i, f, g);
      }
    }
    return true;
  }

  void unqueue(const Pkt& p) {
    for (const auto& [f2, c] : p.contrib) {
      double& v = q(p.code, f2);
      v = std::max(0.0, v - c);
    }
  }

  Pkt fresh_parity(NodeId i, Block& b, FlowId f, uint64_t gen) {
    Pkt p;
    p.flow = f;
    p.gen = gen;
    p.G = b.tr.G();
    p.id = (static_cast<uint32_t>(i + 1) << 20) | (nodes[i].parity_seq++ & 0xfffff);
    p.coeffs = b.tr.combination(rng);
    p.parity = true;
    return p;
  }

  void make_parities(NodeId i, FlowId s, uint64_t gen) {
    Block* b = find_block(i, s, gen);
    if (!b) return;
    std::map<int, int> alloc = b->alloc;
    for (const auto& [code, n] : alloc) {
      if (n <= 0) continue;
      std::map<FlowId, double> anti, partner;
      for (FlowId t2 : sc.code(code).flows) {
        if (t2 == s) continue;
        anti[t2] = rho_anti(i, t2, s);
        partner[t2] = rho_direct(i, t2);
      }
      ParityCounts pc = parity_counts(n, rho_direct(i, s), anti, partner, var);
      for (int j = 0; j < pc.self; ++j) {
        Pkt p = fresh_parity(i, *b, s, gen);
        p.code = code;
        p.label = s;
        ++res.parities;
        enqueue(i, std::move(p), false);
      }
      for (const auto& [t2, cnt] : pc.cross)
        for (int j = 0; j < cnt; ++j) {
          Pkt p = fresh_parity(i, *b, s, gen);
          p.code = code;
          p.label = t2;
          ++res.parities;
          enqueue(i, std::move(p), false);
        }
    }
  }

  long warmup_slots() const {
    double w = cfg.duration >= 2.0 * cfg.warmup ? cfg.warmup : 0.0;
    return static_cast<long>(std::floor(w / cfg.slot + 1e-9));
  }

  void credit(FlowId f, long n) {
    res.delivered[f] += n;
    if (t >= warmup_slots()) res.metered[f] += n;
  }

  void meter(NodeId v, FlowId f, uint64_t gen, Block& b) {
    int d = b.tr.decoded();
    if (d <= b.metered) return;
    if (cfg.traffic == Traffic::window) {
      Source& s = src[f];
      int fresh = s.win->on_ack(gen, d);
      credit(f, fresh);
      if (fresh > 0) s.last_progress = t;
    } else {
      credit(f, d - b.metered);
    }
    b.metered = d;
    (void)v;
  }

  // New coded vector of (f, gen) at v. fwd: it may be passed on along f.
  void apply(NodeId v, NodeId from, FlowId f, uint64_t gen, int G, const Bytes& vec, bool fwd,
             const Pkt* single) {
    Block& b = block(v, f, gen, G);
    if (single) b.ids.emplace(single->id, t);
    if (!b.tr.add(vec)) return;
    if (b.tr.full() && b.full_at < 0) b.full_at = t;
    touched.push_back(block_key(f, gen));
    const Flow& fl = flow(f);
    if (fl.destination == v) {
      meter(v, f, gen, b);
      return;
    }
    if (!fwd || fl.next_hop(v) < 0) return;
    Pkt np;
    np.flow = f;
    np.gen = gen;
    np.G = G;
    np.id = single ? single->id : (static_cast<uint32_t>(v + 1) << 20) | (nodes[v].parity_seq++ & 0xfffff);
    np.coeffs = vec;
    np.from = from;
    enqueue(v, std::move(np), true);
  }

  // Joint elimination over the addressed coded frames a node could not
  // split yet. Rows are kept reduced against the per-generation trackers and
  // against each other, and a row left with a single generation is moved
  // into that generation's tracker.
  struct JRow {
    std::map<Key, Bytes> parts;
    std::set<Key> fwd;  // generations this row may be forwarded for
    NodeId from = -1;
    long stamp = 0;
    Key pkey = 0;
    int pcol = -1;
  };

  static bool zero(const Bytes& b) {
    return std::all_of(b.begin(), b.end(), [](uint8_t c) { return c == 0; });
  }

  static void add_scaled(JRow& dst, const JRow& src, uint8_t c) {
    for (const auto& [k, v] : src.parts) {
      auto it = dst.parts.find(k);
      if (it == dst.parts.end()) it = dst.parts.emplace(k, Bytes(v.size(), 0)).first;
      gf256::mul_add(it->second.data(), v.data(), c, v.size());
      if (zero(it->second)) dst.parts.erase(it);
    }
  }

  std::unordered_map<NodeId, std::vector<JRow>> joint;
  std::vector<Key> touched;

  void reduce_by_trackers(NodeId v, JRow& r) {
    for (auto it = r.parts.begin(); it != r.parts.end();) {
      Block* b = find_block(v, static_cast<FlowId>(it->first >> 48), it->first & ((uint64_t{1} << 48) - 1));
      if (b) b->tr.reduce(it->second);
      if (zero(it->second))
        it = r.parts.erase(it);
      else
        ++it;
    }
  }

  void joint_insert(NodeId v, JRow r) {
    std::vector<JRow>& M = joint[v];
    std::deque<JRow> work;
    work.push_back(std::move(r));
    while (!work.empty()) {
      JRow x = std::move(work.front());
      work.pop_front();
      reduce_by_trackers(v, x);
      for (const auto& m : M) {
        auto it = x.parts.find(m.pkey);
        if (it == x.parts.end() || it->second[m.pcol] == 0) continue;
        uint8_t c = it->second[m.pcol];
        add_scaled(x, m, c);
        x.fwd.insert(m.fwd.begin(), m.fwd.end());
      }
      if (x.parts.empty()) continue;
      if (x.parts.size() == 1) {
        touched.clear();
        const auto& [k, vec] = *x.parts.begin();
        FlowId f = static_cast<FlowId>(k >> 48);
        uint64_t g = k & ((uint64_t{1} << 48) - 1);
        apply(v, x.from, f, g, static_cast<int>(vec.size()), vec, x.fwd.count(k) != 0, nullptr);
        requeue_touched(v, M, work);
        continue;
      }
      const auto& [pk, pv] = *x.parts.begin();
      int pc = 0;
      while (pv[pc] == 0) ++pc;
      x.pkey = pk;
      x.pcol = pc;
      uint8_t inv = gf256::inv(pv[pc]);
      for (auto& [k, vec] : x.parts) gf256::scale(vec.data(), inv, vec.size());
      for (std::size_t j = 0; j < M.size();) {
        auto it = M[j].parts.find(pk);
        if (it != M[j].parts.end() && it->second[pc] != 0) {
          add_scaled(M[j], x, it->second[pc]);
          M[j].fwd.insert(x.fwd.begin(), x.fwd.end());
          // a row that lost its pivot or collapsed goes round again
          if (M[j].parts.size() <= 1) {
            work.push_back(std::move(M[j]));
            M.erase(M.begin() + static_cast<long>(j));
            continue;
          }
        }
        ++j;
      }
      M.push_back(std::move(x));
      if (M.size() > kMaxPending) {
        auto oldest = std::min_element(M.begin(), M.end(),
                                       [](const JRow& a, const JRow& b) { return a.stamp < b.stamp; });
        M.erase(oldest);
      }
    }
  }

  // Rows touching generations whose trackers grew are reduced again.
  void requeue_touched(NodeId v, std::vector<JRow>& M, std::deque<JRow>& work) {
    if (touched.empty()) return;
    std::vector<Key> keys = touched;
    touched.clear();
    for (std::size_t j = 0; j < M.size();) {
      bool hit = std::any_of(keys.begin(), keys.end(), [&](Key k) { return M[j].parts.count(k) != 0; });
      if (hit) {
        work.push_back(std::move(M[j]));
        M.erase(M.begin() + static_cast<long>(j));
      } else {
        ++j;
      }
    }
    (void)v;
  }

  void receive(NodeId v, const Frame& fr) {
    bool addressed = std::any_of(fr.parts.begin(), fr.parts.end(), [&](const Pkt& p) { return p.hop == v; });
    // overheard coded packets are not kept
    if (!addressed && fr.parts.size() > 1) return;
    JRow r;
    r.from = fr.from;
    r.stamp = t;
    for (const auto& p : fr.parts) {
      Key k = block_key(p.flow, p.gen);
      auto it = r.parts.find(k);
      if (it == r.parts.end()) it = r.parts.emplace(k, Bytes(p.G, 0)).first;
      for (int j = 0; j < p.G; ++j) it->second[j] ^= p.coeffs[j];
      if (p.label == p.flow && p.hop == v) r.fwd.insert(k);
    }
    for (auto it = r.parts.begin(); it != r.parts.end();)
      it = zero(it->second) ? r.parts.erase(it) : std::next(it);
    if (fr.parts.size() == 1) {
      const Pkt& p = fr.parts[0];
      touched.clear();
      if (!r.parts.empty()) apply(v, fr.from, p.flow, p.gen, p.G, p.coeffs, r.fwd.count(block_key(p.flow, p.gen)) != 0, &p);
      if (!touched.empty() && joint.count(v) && !joint[v].empty()) {
        std::deque<JRow> work;
        requeue_touched(v, joint[v], work);
        for (auto& w : work) joint_insert(v, std::move(w));
      }
      return;
    }
    // verbatim constituents the receiver already holds
    for (const auto& p : fr.parts) {
      Block* b = find_block(v, p.flow, p.gen);
      if (b && b->tr.contains(p.coeffs)) b->ids.emplace(p.id, t);
    }
    joint_insert(v, std::move(r));
  }

  // Probability that n can cancel p, from the last report of n and loss
  // estimates for what came after it.
  double prob_has(NodeId n, const Pkt& p) {
    if (p.from == n || flow(p.flow).source == n) return 1.0;
    const Node& nn = nodes[n];
    if (Block* b = find_block(n, p.flow, p.gen)) {
      if (b->full_at >= 0 && b->full_at <= nn.last_report) return 1.0;
      auto it = b->ids.find(p.id);
      if (it != b->ids.end() && it->second <= nn.last_report) return 1.0;
    }
    if (p.from < 0 || !sc.topo.has_link(p.from, n)) return 0.0;
    if (p.arrived > nn.last_report) return 1.0 - est_of(p.from, n, p.flow);
    return 0.0;
  }

  // Antidote probabilities needed if cand joins xi.
  std::vector<double> antidote_probs(const std::vector<Pkt>& xi, const Pkt& cand) {
    std::vector<double> pr;
    for (const auto& m : xi) {
      if (m.flow == cand.flow && m.gen == cand.gen) continue;
      pr.push_back(prob_has(m.hop, cand));
      pr.push_back(prob_has(cand.hop, m));
    }
    return pr;
  }

  // Largest overhearing-link estimate involved if cand joins xi.
  double worst_overhearing(const std::vector<Pkt>& xi, const Pkt& cand) {
    double w = 0.0;
    auto link = [&](const Pkt& p, NodeId n) {
      if (p.from >= 0 && p.from != n && sc.topo.has_link(p.from, n)) w = std::max(w, est_of(p.from, n, p.flow));
    };
    for (const auto& m : xi) {
      link(cand, m.hop);
      link(m, cand.hop);
    }
    return w;
  }

  void count_frame(NodeId u, NodeId v, const std::vector<Pkt>& parts, bool ok) {
    std::map<FlowId, std::pair<uint64_t, int>> by_flow;
    for (const auto& p : parts) {
      auto& e = by_flow[p.flow];
      if (p.gen >= e.first) e = {p.gen, p.G};
    }
    for (const auto& [f, gg] : by_flow) {
      Counter& c = counters[link_key(u, v, f)];
      if (gg.first > c.gen) {
        // packets never sent on this link are not losses
        if (c.sent > 0)
          est[link_key(u, v, f)].add_sample(generation_loss_sample(c.recv + std::max(0, c.G - c.sent), c.G));
        c = Counter{gg.first, gg.second, 0, 0};
      }
      if (gg.first != c.gen) continue;
      ++c.sent;
      c.recv += ok ? 1 : 0;
    }
  }

  long rtt(NodeId i) const { return std::max<long>(2, static_cast<long>(std::ceil(2.0 * nodes[i].latency))); }

  bool confirmed(const Pkt& p) {
    Block* b = find_block(p.hop, p.flow, p.gen);
    if (b) return b->tr.full() || b->tr.contains(p.coeffs);
    auto it = nodes[p.hop].newest.find(p.flow);
    return it != nodes[p.hop].newest.end() && p.gen + kKeepGenerations < it->second;
  }

  TxRecord transmit(NodeId i) {
    TxRecord rec;
    rec.node = i;
    Node& n = nodes[i];
    int h = arc_of[i];
    if (h < 0 || n.queue.empty()) return rec;
    for (auto& p : n.queue) p.hop = flow(p.label).next_hop(i);
    if (arq()) {
      // ACK state: drop data packets whose generation the next hop already holds
      for (auto it = n.queue.begin(); it != n.queue.end();) {
        Block* b = it->label == it->flow ? find_block(it->hop, it->flow, it->gen) : nullptr;
        if (b && b->tr.full()) {
          unqueue(*it);
          it = n.queue.erase(it);
        } else {
          ++it;
        }
      }
      if (n.queue.empty()) return rec;
    }
    std::vector<int> present;
    for (const auto& p : n.queue)
      if (std::find(present.begin(), present.end(), p.code) == present.end()) present.push_back(p.code);
    std::sort(present.begin(), present.end());
    const double R = sc.hyperarc(h).capacity;
    int best = -1;
    double bw = -1.0;
    uint64_t bkey = 0;
    for (int k : present) {
      double w = 0.0;
      for (FlowId s : sc.code(k).flows) w += q(k, s);
      w *= R;
      uint64_t key = rng();
      if (best < 0 || w > bw || (w == bw && key < bkey)) {
        best = k;
        bw = w;
        bkey = key;
      }
    }
    rec.code = best;

    std::vector<std::size_t> pick;
    std::vector<Pkt> xi;
    std::set<FlowId> labels;
    std::set<NodeId> hops;
    for (std::size_t j = 0; j < n.queue.size(); ++j) {
      const Pkt& p = n.queue[j];
      if (xi.empty()) {
        if (p.code != best) continue;
      } else if (cfg.scheme == Scheme::nonc || xi.front().alone) {
        break;
      } else if (p.alone) {
        continue;
      } else if (i2nc()) {
        if (p.code != best || labels.count(p.label)) continue;
        if (cfg.scheme == Scheme::i2nc_state &&
            decodability(antidote_probs(xi, p)) < cfg.decodability_threshold)
          continue;
      } else {  // cope
        if (labels.count(p.label) || hops.count(p.hop)) continue;
        std::vector<FlowId> fl(labels.begin(), labels.end());
        fl.push_back(p.label);
        std::sort(fl.begin(), fl.end());
        if (!code_of.count({h, fl})) continue;
        if (worst_overhearing(xi, p) > cfg.cope_threshold) continue;
        if (decodability(antidote_probs(xi, p)) < cfg.decodability_threshold) continue;
      }
      pick.push_back(j);
      xi.push_back(p);
      labels.insert(p.label);
      hops.insert(p.hop);
    }
    if (xi.empty()) return rec;

    if (i2nc())
      for (FlowId s : sc.code(best).flows) {
        if (labels.count(s)) continue;
        bool waiting = std::any_of(n.queue.begin(), n.queue.end(),
                                   [&](const Pkt& p) { return p.code == best && p.label == s; });
        if (waiting) ++res.partial_codes;
      }
    if (cfg.scheme == Scheme::cope && xi.size() > 1) {
      for (std::size_t a = 0; a < xi.size(); ++a) {
        std::vector<Pkt> rest;
        for (std::size_t b = 0; b < xi.size(); ++b)
          if (b != a) rest.push_back(xi[b]);
        if (worst_overhearing(rest, xi[a]) > cfg.cope_threshold) {
          ++res.cope_violations;
          break;
        }
      }
    }
    for (auto it = pick.rbegin(); it != pick.rend(); ++it) {
      unqueue(n.queue[*it]);
      n.queue.erase(n.queue.begin() + static_cast<long>(*it));
    }
    for (const auto& p : xi) n.latency = 0.875 * n.latency + 0.125 * static_cast<double>(t - p.arrived + 1);

    ++res.broadcasts;
    ++res.node_broadcasts[i];
    if (xi.size() > 1) ++res.coded_broadcasts;
    res.max_xi = std::max<int>(res.max_xi, static_cast<int>(xi.size()));
    for (const auto& p : xi) rec.xi.push_back({p.flow, p.label, p.code, p.gen, p.id, p.parity});

    Frame fr;
    fr.from = i;
    fr.parts = xi;
    for (NodeId v : out[i]) {
      bool ok = draw(rng, loss, i, v);
      count_frame(i, v, fr.parts, ok);
      if (ok) receive(v, fr);
    }

    for (const auto& p : xi) {
      if (p.label != p.flow) continue;
      if (arq()) {
        Pkt r = p;
        r.alone = xi.size() > 1;
        n.retx.push_back({std::move(r), t + rtt(i)});
        continue;
      }
      Key key = block_key(p.flow, p.gen);
      bool more = std::any_of(n.queue.begin(), n.queue.end(), [&](const Pkt& e) {
        return e.flow == p.flow && e.gen == p.gen && e.label == p.flow;
      });
      if (!more && checking.insert({i, key}).second) checks.push_back({t + rtt(i), i, p.flow, p.gen, p.hop});
    }
    return rec;
  }

  void due_retransmissions(NodeId i) {
    Node& n = nodes[i];
    if (std::none_of(n.retx.begin(), n.retx.end(), [&](const Retx& e) { return e.due <= t; })) return;
    std::vector<Retx> keep;
    std::vector<Pkt> again;
    for (auto& e : n.retx) {
      if (e.due > t) {
        keep.push_back(std::move(e));
      } else if (!confirmed(e.p)) {
        again.push_back(std::move(e.p));
      }
    }
    n.retx = std::move(keep);
    // oldest first ends up at the head
    for (auto it = again.rbegin(); it != again.rend(); ++it) {
      if (static_cast<int>(n.queue.size()) >= cfg.queue_capacity) {
        n.retx.push_back({*it, t + 1});
        continue;
      }
      ++res.retransmissions;
      enqueue(i, *it, false, true);
    }
  }

  void due_checks() {
    std::vector<Check> keep, fire, later;
    for (auto& c : checks) (c.due <= t ? fire : keep).push_back(c);
    checks = std::move(keep);
    for (const auto& c : fire) {
      Key key = block_key(c.flow, c.gen);
      checking.erase({c.u, key});
      Node& U = nodes[c.u];
      Block* bu = find_block(c.u, c.flow, c.gen);
      if (!bu) continue;
      Block* bv = find_block(c.v, c.flow, c.gen);
      int G = bu->tr.G();
      int r = bv ? bv->tr.rank() : 0;
      if (r >= G) {
        for (auto it = U.queue.begin(); it != U.queue.end();) {
          if (it->flow == c.flow && it->gen == c.gen && it->label == c.flow) {
            unqueue(*it);
            it = U.queue.erase(it);
          } else {
            ++it;
          }
        }
        continue;
      }
      int queued = static_cast<int>(std::count_if(U.queue.begin(), U.queue.end(), [&](const Pkt& e) {
        return e.flow == c.flow && e.gen == c.gen && e.label == c.flow;
      }));
      int deficit = std::min(G, bu->tr.rank()) - r - queued;
      for (int j = 0; j < deficit; ++j) {
        Pkt p = fresh_parity(c.u, *bu, c.flow, c.gen);
        ++res.parities;
        ++res.retransmissions;
        enqueue(c.u, std::move(p), false);
      }
      // parities lost to a full queue never trigger a check on their own
      if (r < std::min(G, bu->tr.rank()) && checking.insert({c.u, key}).second)
        later.push_back({t + rtt(c.u) + static_cast<long>(U.queue.size()), c.u, c.flow, c.gen, c.v});
    }
    for (auto& c : later) checks.push_back(c);
  }

  void generation_done(FlowId s, uint64_t gen) {
    if (cfg.scheme == Scheme::nonc) return;
    for (int c : flow_cliques[s]) {
      CliqueState& cs = cliques[c];
      if (gen <= cs.last_gen) continue;
      cs.last_gen = gen;
      if (cfg.scheme == Scheme::cope) {
        // COPE reception reports ride in data headers
        for (NodeId n : cs.nodes) nodes[n].last_report = t;
      } else {
        cs.credit += cfg.report_slots;
      }
    }
  }

  bool admit(FlowId s) {
    const Flow& f = flow(s);
    Node& n = nodes[f.source];
    Source& so = src[s];
    // new originals leave one generation of headroom for parities and
    // retransmissions
    int G0 = cfg.traffic == Traffic::window ? so.win->window() : G_of(s);
    if (static_cast<int>(n.queue.size()) + G0 >= cfg.queue_capacity) return false;
    uint64_t gen;
    int idx, G;
    if (cfg.traffic == Traffic::window) {
      if (!so.win->can_inject()) return false;
      auto in = so.win->inject();
      gen = in.generation;
      idx = in.index;
      G = in.G;
    } else {
      gen = so.gen;
      idx = so.idx;
      G = G_of(s);
    }
    Pkt p;
    p.flow = s;
    p.gen = gen;
    p.G = G;
    p.id = static_cast<uint32_t>(idx);
    p.coeffs.assign(G, 0);
    // incremental additive coding for i2nc, natives otherwise
    if (i2nc())
      std::fill(p.coeffs.begin(), p.coeffs.begin() + idx + 1, 1);
    else
      p.coeffs[idx] = 1;
    Block& b = block(f.source, s, gen, G);
    b.tr.add(p.coeffs);
    b.ids.emplace(p.id, t);
    ++res.injected[s];
    enqueue(f.source, std::move(p), true);
    if (idx + 1 == G) generation_done(s, gen);
    if (cfg.traffic == Traffic::cbr && ++so.idx == G) {
      so.idx = 0;
      ++so.gen;
    }
    return true;
  }

  void sources() {
    for (FlowId s = 0; s < F; ++s) {
      if (cfg.traffic == Traffic::window) {
        Source& so = src[s];
        if (so.win->outstanding() > 0 && t - so.last_progress > cfg.window_rto) {
          so.win->on_timeout();
          so.last_progress = t;
        }
        while (admit(s)) {
        }
        continue;
      }
      const double r = cfg.slot / cfg.cbr_interval;
      long offered = static_cast<long>(std::floor((t + 1) * r + 1e-9)) - static_cast<long>(std::floor(t * r + 1e-9));
      for (long j = 0; j < offered; ++j)
        if (!admit(s)) break;
    }
  }

  // Price of s one hop further, 0 at the destination.
  double downstream(NodeId i, FlowId s) {
    NodeId nh = flow(s).next_hop(i);
    if (nh < 0 || nh == flow(s).destination) return 0.0;
    return Q_i(nh, s);
  }

  // Some queued packet goes to a destination or to a relay with buffer space.
  // Relays keep a generation of headroom for their own parities.
  bool has_room_downstream(NodeId i) {
    for (const auto& p : nodes[i].queue) {
      const Flow& f = flow(p.label);
      NodeId nh = f.next_hop(i);
      if (nh == f.destination || static_cast<int>(nodes[nh].queue.size()) + G_of(p.flow) < cfg.queue_capacity)
        return true;
    }
    return false;
  }

  void step() {
    if (arq())
      for (std::size_t i = 0; i < nodes.size(); ++i) due_retransmissions(static_cast<NodeId>(i));
    else
      due_checks();
    sources();

    std::vector<char> used(cliques.size(), 0);
    for (std::size_t c = 0; c < cliques.size(); ++c) {
      if (cliques[c].credit < 1.0) continue;
      cliques[c].credit -= 1.0;
      used[c] = 1;
      ++res.report_slots;
      for (NodeId n : cliques[c].nodes) nodes[n].last_report = t;
    }
    struct Cand {
      NodeId n;
      double w;
      uint64_t key;
    };
    std::vector<Cand> cand;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      int h = arc_of[i];
      if (h < 0 || nodes[i].queue.empty()) continue;
      if (cfg.scheduler == SchedulerKind::idealized_backpressure && !has_room_downstream(static_cast<NodeId>(i)))
        continue;
      double w = 0.0;
      std::vector<int> seen;
      for (const auto& p : nodes[i].queue) {
        if (std::find(seen.begin(), seen.end(), p.code) != seen.end()) continue;
        seen.push_back(p.code);
        double s = 0.0;
        for (FlowId f : sc.code(p.code).flows) s += std::max(0.0, q(p.code, f) - downstream(static_cast<NodeId>(i), f));
        w = std::max(w, sc.hyperarc(h).capacity * s);
      }
      cand.push_back({static_cast<NodeId>(i), w, rng()});
    }
    if (cfg.scheduler == SchedulerKind::idealized_backpressure)
      std::sort(cand.begin(), cand.end(), [](const Cand& a, const Cand& b) {
        return a.w != b.w ? a.w > b.w : a.key < b.key;
      });
    else
      std::sort(cand.begin(), cand.end(), [](const Cand& a, const Cand& b) { return a.key < b.key; });
    for (const auto& c : cand) {
      bool free = true;
      for (int cl : node_cliques[c.n]) free = free && !used[cl];
      if (!free) continue;
      for (int cl : node_cliques[c.n]) used[cl] = 1;
      transmit(c.n);
    }
    ++t;
    res.slots = t;
  }

  SimResult result() const {
    SimResult r = res;
    double span = cfg.duration - static_cast<double>(warmup_slots()) * cfg.slot;
    for (int s = 0; s < F; ++s)
      r.throughput[s] = span > 0.0 ? static_cast<double>(r.metered[s]) * cfg.payload_bytes * 8.0 / span : 0.0;
    return r;
  }
};

Simulator::Simulator(const Scenario& sc, const LossMatrix& loss, const SimConfig& cfg, uint64_t seed)
    : impl_(std::make_unique<Impl>(sc, loss, cfg, seed)) {}

Simulator::~Simulator() = default;

SimResult Simulator::run() {
  long n = static_cast<long>(std::floor(impl_->cfg.duration / impl_->cfg.slot + 1e-9));
  while (impl_->t < n) impl_->step();
  return impl_->result();
}

void Simulator::step() { impl_->step(); }
long Simulator::now() const { return impl_->t; }
bool Simulator::admit(FlowId s) { return impl_->admit(s); }
TxRecord Simulator::transmit(NodeId n) { return impl_->transmit(n); }

std::vector<QueuedView> Simulator::queue(NodeId n) const {
  std::vector<QueuedView> v;
  for (const auto& p : impl_->nodes.at(n).queue) v.push_back({p.flow, p.label, p.code, p.gen, p.id, p.parity});
  return v;
}

double Simulator::q(NodeId n, int code, FlowId s) const {
  (void)n;
  return impl_->qv.at(static_cast<std::size_t>(code) * impl_->F + s);
}

void Simulator::set_estimate(NodeId from, NodeId to, FlowId s, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::out_of_range("loss estimate outside [0,1]");
  impl_->pinned[link_key(from, to, s)] = rho;
}

double Simulator::estimate(NodeId from, NodeId to, FlowId s) const { return impl_->est_of(from, to, s); }

int Simulator::rank(NodeId n, FlowId s, uint64_t generation) const {
  Block* b = impl_->find_block(n, s, generation);
  return b ? b->tr.rank() : 0;
}

SimResult Simulator::result() const { return impl_->result(); }

SimResult run_simulation(const Scenario& sc, const LossMatrix& loss, const SimConfig& cfg, uint64_t seed) {
  Simulator sim(sc, loss, cfg, seed);
  return sim.run();
}

}  // namespace nclab
