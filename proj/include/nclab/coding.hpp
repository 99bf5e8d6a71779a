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
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "nclab/lossmodel.hpp"
#include "nclab/numopt.hpp"

namespace nclab {

using Bytes = std::vector<uint8_t>;

struct CodingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Label {
  int hyperarc = -1;
  int code = -1;
  FlowId flow = -1;  // the s of (h,k,s); may differ from the packet's own flow for parities
};

struct CodedPacket {
  FlowId flow = 0;
  uint64_t generation = 0;
  uint32_t packet_id = 0;
  Bytes coeffs;   // length = generation size
  Bytes payload;
  Label label;
};

// Incremental additive source coding: a_l = p_1 + ... + p_l.
class IncrementalEncoder {
 public:
  IncrementalEncoder(FlowId flow, uint64_t generation, int G);
  // Emits a_l for the l-th packet pushed. Throws past G or on length mismatch.
  CodedPacket push(const Bytes& p);
  int size() const { return count_; }
  bool complete() const { return count_ == G_; }

 private:
  FlowId flow_;
  uint64_t generation_;
  int G_;
  int count_ = 0;
  Bytes sum_;
};

std::vector<CodedPacket> incremental_encode(const std::vector<Bytes>& packets, FlowId flow = 0,
                                            uint64_t generation = 0);

struct ParityCounts {
  int self = 0;                 // P^{s,s}
  std::map<FlowId, int> cross;  // s' -> P^{s',s}
};

// rho_antidote[s'] = rho^{s',s}; rho_direct_partner[s'] = rho_h^{s'}.
ParityCounts parity_counts(int G_alloc, double rho_direct,
                           const std::map<FlowId, double>& rho_antidote,
                           const std::map<FlowId, double>& rho_direct_partner, Variant variant);

// Ceiling that ignores floating noise below 1e-9.
int ceil_count(double v);

// n random combinations of the buffered packets; coefficient vectors never all zero.
std::vector<CodedPacket> rlnc_parities(const std::vector<CodedPacket>& buffer, int n, Rng& rng,
                                       uint32_t first_id = 0);

struct DecodeResult {
  bool decoded = false;
  int rank = 0;
  std::vector<Bytes> packets;  // originals when decoded
};

DecodeResult intra_decode(const std::vector<CodedPacket>& received, int G);

// Generic elimination over GF(2^8): rows of n coefficients with payloads.
DecodeResult solve_linear(const std::vector<Bytes>& coeffs, const std::vector<Bytes>& payloads,
                          int n);

// Rank tracker for one generation; keeps coefficient rows only.
class RankTracker {
 public:
  explicit RankTracker(int G = 0) : G_(G) {}
  // true if the vector raised the rank
  bool add(const Bytes& coeffs);
  int rank() const { return static_cast<int>(rows_.size()); }
  int G() const { return G_; }
  bool full() const { return rank() >= G_; }
  // coeffs lies in the span of what was added so far
  bool contains(const Bytes& coeffs) const;
  // Clears the pivot columns of v against the rows. Returns true if v changed.
  bool reduce(Bytes& v) const;
  // originals fully determined by the rows, e.g. p1..pl after a1..al of an
  // incremental stream
  int decoded() const;
  // random nonzero combination of the rows, empty when rank is 0
  Bytes combination(Rng& rng) const;

 private:
  int G_;
  std::vector<Bytes> rows_;  // reduced, pivot = first nonzero
  std::vector<int> pivots_;
};

struct Constituent {
  FlowId flow = 0;
  uint64_t generation = 0;
  uint32_t packet_id = 0;
  uint16_t block_size = 0;
  NodeId next_hop = -1;
};

struct InterCodedPacket {
  std::vector<Constituent> header;  // not coded
  Bytes xor_coeffs;                 // coefficient vectors XORed, zero padded
  Bytes xor_payload;
  std::vector<Label> labels;

  int count() const { return static_cast<int>(header.size()); }
};

InterCodedPacket inter_encode(const std::vector<CodedPacket>& xi,
                              const std::vector<NodeId>& next_hops);

struct InterDecodeResult {
  bool decoded = false;
  int unknown = 0;  // constituents not in known
  CodedPacket packet;
};

// known packets are matched by (flow, generation, packet_id)
InterDecodeResult inter_decode(const InterCodedPacket& coded,
                               const std::vector<CodedPacket>& known);

// Little-endian header layouts.
//   intra: u64 block id | u32 packet id | u16 block size | coeffs[block size]
//   inter: u8 count | count x (u32 flow | u64 block id | u32 packet id |
//          u16 block size | u32 next hop)
Bytes write_intra_header(const CodedPacket& p);
CodedPacket read_intra_header(const Bytes& b);
Bytes write_inter_header(const InterCodedPacket& p);
std::vector<Constituent> read_inter_header(const Bytes& b);

}  // namespace nclab
