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
#include <memory>
#include <string>
#include <vector>

#include "nclab/coding.hpp"
#include "nclab/lossmodel.hpp"
#include "nclab/topology.hpp"

namespace nclab {

enum class Scheme { i2nc_state, i2nc_stateless, cope, nonc };
enum class Traffic { cbr, window };
enum class SchedulerKind { idealized_backpressure, random_access };

Scheme parse_scheme(const std::string& s);
std::string to_string(Scheme s);
Traffic parse_traffic(const std::string& s);
std::string to_string(Traffic t);
SchedulerKind parse_scheduler(const std::string& s);
std::string to_string(SchedulerKind k);

struct SimConfig {
  Scheme scheme = Scheme::i2nc_stateless;
  double duration = 60.0;  // seconds
  int seeds = 10;
  Traffic traffic = Traffic::cbr;
  double cbr_interval = 1e-4;  // seconds between packets of one flow
  // 0 takes each flow's own generation_size
  int generation_size = 15;
  double cope_threshold = 0.20;
  double decodability_threshold = 0.20;
  SchedulerKind scheduler = SchedulerKind::idealized_backpressure;
  int queue_capacity = 100;
  // One slot carries one broadcast. 500 bytes at the 2 Mb/s basic rate.
  double slot = 2e-3;
  int payload_bytes = 500;
  // control slots charged per generation in every clique a flow crosses
  double report_slots = 1.0;
  int window_init = 2;
  int window_max = 64;
  int window_rto = 500;  // slots without ACK progress
  // Deliveries before this time are not metered, so the packets standing in
  // queues at the start and at the end of the window cancel out. Ignored
  // when the run is shorter than twice the warm-up.
  double warmup = 1.0;

  void validate() const;  // throws std::invalid_argument
};

struct SimResult {
  std::vector<double> throughput;  // bits/s per flow
  std::vector<long> delivered;     // decoded originals per flow
  std::vector<long> metered;       // the part of delivered after warm-up
  std::vector<long> injected;      // originals admitted per flow
  long slots = 0;
  long broadcasts = 0;
  long coded_broadcasts = 0;  // |xi| >= 2
  long report_slots = 0;
  long drops = 0;
  long retransmissions = 0;
  long parities = 0;
  // i2nc broadcasts that left out a distinct flow holding a packet with the
  // chosen label
  long partial_codes = 0;
  // cope broadcasts with |xi| >= 2 while a relevant loss estimate exceeded
  // the threshold
  long cope_violations = 0;
  int max_xi = 0;
  std::vector<long> node_broadcasts;

  double total() const;
};

// Index of the smallest value, ties broken uniformly with rng.
int choose_label(const std::vector<double>& Q, Rng& rng);

// Product of independent antidote probabilities.
double decodability(const std::vector<double>& antidote_probs);

enum class DropAction { none, drop_arriving, drop_queued };
struct DropDecision {
  DropAction action = DropAction::none;
  FlowId flow = -1;  // flow whose last queued packet goes, for drop_queued
};

// Qi holds Q_i^s for the flows present in the queue and the arriving one.
DropDecision drop_policy(std::size_t queue_len, std::size_t capacity,
                         const std::map<FlowId, double>& Qi, FlowId arriving);

// Minimal AIMD window source. The generation size follows the window at the
// time a generation opens and ACKs carry (generation, decoded count).
class WindowSource {
 public:
  struct Injection {
    uint64_t generation = 0;
    int index = 0;  // position inside the generation
    int G = 0;
    uint64_t original = 0;
  };

  explicit WindowSource(int init = 2, int max = 64);

  int window() const { return window_; }
  long outstanding() const { return outstanding_; }
  bool can_inject() const { return outstanding_ < window_; }
  Injection inject();
  // returns the originals newly confirmed
  int on_ack(uint64_t generation, int eta);
  void on_timeout();
  long delivered() const { return delivered_; }
  bool is_delivered(uint64_t original) const;

 private:
  struct Gen {
    int G = 0;
    std::vector<uint64_t> originals;
    int acked = 0;
    bool closed = false;
  };
  int window_;
  int max_;
  int credit_ = 0;
  long outstanding_ = 0;
  long delivered_ = 0;
  uint64_t next_original_ = 1;
  uint64_t next_gen_ = 1;
  uint64_t open_ = 0;  // 0: none
  std::map<uint64_t, Gen> gens_;
  std::deque<uint64_t> resend_;
  std::vector<char> done_;
};

// Queue entry as seen from outside the engine.
struct QueuedView {
  FlowId flow = -1;   // flow whose generation the packet belongs to
  FlowId label = -1;  // label flow s of (h,k,s)
  int code = -1;
  uint64_t generation = 0;
  uint32_t packet_id = 0;
  bool parity = false;  // generated at this node
};

struct TxRecord {
  NodeId node = -1;
  int code = -1;
  std::vector<QueuedView> xi;
};

class Simulator {
 public:
  Simulator(const Scenario& sc, const LossMatrix& loss, const SimConfig& cfg, uint64_t seed);
  ~Simulator();
  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  // Runs the configured duration and returns the metered result.
  SimResult run();

  // Stepwise hooks used by tests.
  void step();
  long now() const;
  // Admit one application packet at the source of s. false if the queue is full.
  bool admit(FlowId s);
  // One broadcast decision at node n as if it won the medium this slot.
  TxRecord transmit(NodeId n);
  std::vector<QueuedView> queue(NodeId n) const;
  double q(NodeId n, int code, FlowId s) const;
  // Pins the loss estimate of (from -> to) for packets of flow s.
  void set_estimate(NodeId from, NodeId to, FlowId s, double rho);
  double estimate(NodeId from, NodeId to, FlowId s) const;
  int rank(NodeId n, FlowId s, uint64_t generation) const;
  SimResult result() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

SimResult run_simulation(const Scenario& sc, const LossMatrix& loss, const SimConfig& cfg,
                         uint64_t seed);

}  // namespace nclab
